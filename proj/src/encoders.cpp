#include "fusioncell/encoders.hpp"

#include <cmath>
#include <stdexcept>

namespace fc {

LinearLayer LinearLayer::create(ParamStore& ps, const std::string& name, int in, int out,
                                InitRng& rng) {
  LinearLayer l;
  l.in = in;
  l.out = out;
  l.w = ps.add(name + ".w", {in, out}, fan_in_uniform({in, out}, in, rng));
  l.b = ps.add(name + ".b", {1, out}, std::vector<double>(out, 0.0));
  return l;
}

Tensor LinearLayer::apply(Tape& tp, ParamStore& ps, const Tensor& x) const {
  if (x.cols() != in) throw std::invalid_argument("linear: input width mismatch");
  return add(matmul(x, tp.leaf(ps.at(w))), tp.leaf(ps.at(b)));
}

LayerNormAffine LayerNormAffine::create(ParamStore& ps, const std::string& name, int d) {
  LayerNormAffine ln;
  ln.gamma = ps.add(name + ".gamma", {1, d}, std::vector<double>(d, 1.0));
  ln.beta = ps.add(name + ".beta", {1, d}, std::vector<double>(d, 0.0));
  return ln;
}

Tensor LayerNormAffine::apply(Tape& tp, ParamStore& ps, const Tensor& x) const {
  return add(mul(layer_norm_rows(x), tp.leaf(ps.at(gamma))), tp.leaf(ps.at(beta)));
}

MhaParams MhaParams::create(ParamStore& ps, const std::string& name, int d, int heads,
                            double dropout_p, InitRng& rng) {
  if (d % heads) throw std::invalid_argument("mha: d must be divisible by heads");
  MhaParams p;
  p.heads = heads;
  p.dropout_p = dropout_p;
  p.wq = LinearLayer::create(ps, name + ".wq", d, d, rng);
  p.wk = LinearLayer::create(ps, name + ".wk", d, d, rng);
  p.wv = LinearLayer::create(ps, name + ".wv", d, d, rng);
  p.wo = LinearLayer::create(ps, name + ".wo", d, d, rng);
  return p;
}

Tensor multihead_attention(Tape& tp, ParamStore& ps, const MhaParams& p, const Tensor& q_in,
                           const Tensor& kv_in, const std::function<Tensor(int)>& head_bias,
                           DropoutState& drop, AttnRecord* rec, const std::string& stage,
                           int layer_idx) {
  const int d = p.wq.out;
  const int dh = d / p.heads;
  const Tensor q = p.wq.apply(tp, ps, q_in);
  const Tensor k = p.wk.apply(tp, ps, kv_in);
  const Tensor v = p.wv.apply(tp, ps, kv_in);
  std::vector<Tensor> head_outs;
  head_outs.reserve(p.heads);
  for (int h = 0; h < p.heads; ++h) {
    const Tensor qh = slice_cols(q, h * dh, (h + 1) * dh);
    const Tensor kh = slice_cols(k, h * dh, (h + 1) * dh);
    const Tensor vh = slice_cols(v, h * dh, (h + 1) * dh);
    Tensor logits = scale(matmul(qh, transpose(kh)), 1.0 / std::sqrt(static_cast<double>(dh)));
    if (head_bias) logits = add(logits, head_bias(h));
    Tensor probs = softmax_rows(logits);
    if (rec)
      rec->push_back({stage, layer_idx, h, probs.rows(), probs.cols(), probs.values()});
    probs = drop.apply(probs, p.dropout_p);
    head_outs.push_back(matmul(probs, vh));
  }
  return p.wo.apply(tp, ps, concat(head_outs, 1));
}

TransformerBlock TransformerBlock::create(ParamStore& ps, const std::string& name, int d,
                                          int heads, int ffn_mult, double dropout_p, InitRng& rng,
                                          int num_edge_types) {
  TransformerBlock b;
  b.dropout_p = dropout_p;
  b.mha = MhaParams::create(ps, name + ".mha", d, heads, dropout_p, rng);
  b.ffn1 = LinearLayer::create(ps, name + ".ffn1", d, d * ffn_mult, rng);
  b.ffn2 = LinearLayer::create(ps, name + ".ffn2", d * ffn_mult, d, rng);
  b.ln1 = LayerNormAffine::create(ps, name + ".ln1", d);
  b.ln2 = LayerNormAffine::create(ps, name + ".ln2", d);
  for (int h = 0; h < (num_edge_types ? heads : 0); ++h)
    b.edge_bias.push_back(ps.add(name + ".edge_bias.h" + std::to_string(h), {1, num_edge_types},
                                 std::vector<double>(num_edge_types, 0.0)));
  return b;
}

Tensor TransformerBlock::apply(Tape& tp, ParamStore& ps, const Tensor& x,
                               const AdjacencyMask* mask, DropoutState& drop, AttnRecord* rec,
                               const std::string& stage, int layer_idx) const {
  std::function<Tensor(int)> bias;
  if (mask) {
    if (mask->n != x.rows()) throw std::invalid_argument("graph block: mask size mismatch");
    bias = [&](int h) {
      return edge_bias_matrix(tp.leaf(ps.at(edge_bias[h])), mask->edge_type, mask->n);
    };
  }
  const Tensor normed = ln1.apply(tp, ps, x);
  Tensor h = add(x, drop.apply(multihead_attention(tp, ps, mha, normed, normed, bias, drop, rec,
                                                   stage, layer_idx),
                               dropout_p));
  Tensor f = ffn2.apply(tp, ps, drop.apply(gelu(ffn1.apply(tp, ps, ln2.apply(tp, ps, h))),
                                           dropout_p));
  return add(h, drop.apply(f, dropout_p));
}

LayoutEncoder LayoutEncoder::create(ParamStore& ps, const LayoutEncoderConfig& cfg, InitRng& rng,
                                    const std::string& prefix) {
  if (cfg.d % cfg.heads) throw std::invalid_argument("layout encoder: d not divisible by heads");
  if (cfg.canvas_h % cfg.patch_size || cfg.canvas_w % cfg.patch_size)
    throw std::invalid_argument("layout encoder: canvas not divisible by patch size");
  LayoutEncoder e;
  e.cfg_ = cfg;
  const int patch_dim = 3 * cfg.patch_size * cfg.patch_size;
  e.patch_proj_ = LinearLayer::create(ps, prefix + ".patch_proj", patch_dim, cfg.d, rng);
  e.cls_ = ps.add(prefix + ".cls", {1, cfg.d}, rng.uniform_vec(cfg.d, -0.02, 0.02));
  e.dist_ = ps.add(prefix + ".dist", {1, cfg.d}, rng.uniform_vec(cfg.d, -0.02, 0.02));
  const int seq = cfg.num_patches() + 2;
  e.pos_ = ps.add(prefix + ".pos", {seq, cfg.d},
                  rng.uniform_vec(static_cast<int64_t>(seq) * cfg.d, -0.02, 0.02));
  for (int l = 0; l < cfg.layers; ++l)
    e.blocks_.push_back(TransformerBlock::create(ps, prefix + ".block" + std::to_string(l), cfg.d,
                                                 cfg.heads, cfg.ffn_mult, cfg.dropout, rng));
  return e;
}

Tensor LayoutEncoder::encode(Tape& tp, ParamStore& ps, const LayoutTensor& t,
                             DropoutState& drop) const {
  if (t.height != cfg_.canvas_h || t.width != cfg_.canvas_w)
    throw std::invalid_argument("layout encoder: tensor canvas mismatch");
  const auto patches = patchify(t, cfg_.patch_size);
  const int pd = 3 * cfg_.patch_size * cfg_.patch_size;
  std::vector<double> flat;
  flat.reserve(patches.size() * pd);
  for (const auto& p : patches) flat.insert(flat.end(), p.begin(), p.end());
  Tensor px = tp.constant({static_cast<int>(patches.size()), pd}, std::move(flat));
  Tensor emb = patch_proj_.apply(tp, ps, px);
  Tensor x = concat({tp.leaf(ps.at(cls_)), tp.leaf(ps.at(dist_)), emb}, 0);
  x = drop.apply(add(x, tp.leaf(ps.at(pos_))), cfg_.dropout);
  for (size_t l = 0; l < blocks_.size(); ++l)
    x = blocks_[l].apply(tp, ps, x, nullptr, drop, nullptr, "layout", static_cast<int>(l));
  return x;
}

GraphEncoder GraphEncoder::create(ParamStore& ps, const GraphEncoderConfig& cfg, InitRng& rng,
                                  const std::string& prefix) {
  if (cfg.d % cfg.heads) throw std::invalid_argument("graph encoder: d not divisible by heads");
  GraphEncoder e;
  e.cfg_ = cfg;
  e.in_proj_ = LinearLayer::create(ps, prefix + ".in_proj", kNodeFeatureDim, cfg.d, rng);
  for (int l = 0; l < cfg.layers; ++l)
    e.blocks_.push_back(TransformerBlock::create(ps, prefix + ".block" + std::to_string(l), cfg.d,
                                                 cfg.heads, cfg.ffn_mult, cfg.dropout, rng,
                                                 cfg.num_edge_types));
  return e;
}

Tensor GraphEncoder::encode(Tape& tp, ParamStore& ps, const CellGraph& g,
                            const AdjacencyMask& mask, DropoutState& drop,
                            AttnRecord* rec) const {
  const int n = g.num_nodes();
  if (mask.n != n) throw std::invalid_argument("graph encoder: mask size mismatch");
  std::vector<double> flat;
  flat.reserve(static_cast<size_t>(n) * kNodeFeatureDim);
  for (const auto& row : g.node_features) {
    if (static_cast<int>(row.size()) != kNodeFeatureDim)
      throw std::invalid_argument("graph encoder: feature width mismatch");
    flat.insert(flat.end(), row.begin(), row.end());
  }
  Tensor x = in_proj_.apply(tp, ps, tp.constant({n, kNodeFeatureDim}, std::move(flat)));
  for (size_t l = 0; l < blocks_.size(); ++l)
    x = blocks_[l].apply(tp, ps, x, &mask, drop, rec, "graph", static_cast<int>(l));
  return x;
}

}  // namespace fc
