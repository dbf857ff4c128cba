#include "fusioncell/fusion.hpp"

#include <stdexcept>

namespace fc {

const std::array<std::string, 6>& TargetVector::names() {
  static const std::array<std::string, 6> n = {"rise_delay", "fall_delay", "rise_trans",
                                               "fall_trans", "rise_power", "fall_power"};
  return n;
}

std::string variant_name(Variant v) {
  switch (v) {
    case Variant::fusioncell: return "fusioncell";
    case Variant::fusioncell_no_corr: return "fusioncell_no_corr";
    case Variant::vision_only: return "vision_only";
    case Variant::late_fusion: return "late_fusion";
    case Variant::symmetrical: return "symmetrical";
  }
  throw std::logic_error("variant_name");
}

Variant variant_from_name(const std::string& name) {
  for (Variant v : {Variant::fusioncell, Variant::fusioncell_no_corr, Variant::vision_only,
                    Variant::late_fusion, Variant::symmetrical})
    if (variant_name(v) == name) return v;
  throw std::invalid_argument("unknown model variant '" + name + "'");
}

bool variant_uses_graph(Variant v) { return v != Variant::vision_only; }

bool variant_has_cross_attention(Variant v) {
  return v == Variant::fusioncell || v == Variant::fusioncell_no_corr || v == Variant::symmetrical;
}

nlohmann::json ModelConfig::to_json() const {
  return {{"variant", variant_name(variant)},
          {"d", d},
          {"heads", heads},
          {"layout_layers", layout_layers},
          {"graph_layers", graph_layers},
          {"ffn_mult", ffn_mult},
          {"patch_size", patch_size},
          {"canvas_h", canvas_h},
          {"canvas_w", canvas_w},
          {"dropout", dropout},
          {"head_hidden", head_hidden}};
}

ModelConfig ModelConfig::from_json(const nlohmann::json& j) {
  ModelConfig c;
  c.variant = variant_from_name(j.at("variant"));
  c.d = j.at("d");
  c.heads = j.at("heads");
  c.layout_layers = j.at("layout_layers");
  c.graph_layers = j.at("graph_layers");
  c.ffn_mult = j.at("ffn_mult");
  c.patch_size = j.at("patch_size");
  c.canvas_h = j.at("canvas_h");
  c.canvas_w = j.at("canvas_w");
  c.dropout = j.at("dropout");
  c.head_hidden = j.at("head_hidden");
  return c;
}

RegressionHead RegressionHead::create(ParamStore& ps, const std::string& name, int in, int hidden,
                                      double dropout_p, InitRng& rng) {
  RegressionHead h;
  h.dropout_p = dropout_p;
  h.ln = LayerNormAffine::create(ps, name + ".ln", in);
  h.fc1 = LinearLayer::create(ps, name + ".fc1", in, hidden, rng);
  h.fc2 = LinearLayer::create(ps, name + ".fc2", hidden, kNumTargets, rng);
  return h;
}

Tensor RegressionHead::apply(Tape& tp, ParamStore& ps, const Tensor& z, DropoutState& drop) const {
  return fc2.apply(tp, ps, drop.apply(gelu(fc1.apply(tp, ps, ln.apply(tp, ps, z))), dropout_p));
}

Tensor pool_tokens(Tape& tp, const Tensor& tokens) {
  const int n = tokens.rows();
  if (n < 1) throw std::invalid_argument("pool_tokens: no valid rows");
  Tensor w = tp.constant({1, n}, std::vector<double>(n, 1.0 / n));
  return matmul(w, tokens);
}

FusionModel FusionModel::create(const ModelConfig& cfg, uint64_t seed) {
  FusionModel m;
  m.cfg_ = cfg;
  InitRng rng(seed);
  LayoutEncoderConfig lc;
  lc.d = cfg.d;
  lc.heads = cfg.heads;
  lc.layers = cfg.layout_layers;
  lc.ffn_mult = cfg.ffn_mult;
  lc.patch_size = cfg.patch_size;
  lc.canvas_h = cfg.canvas_h;
  lc.canvas_w = cfg.canvas_w;
  lc.dropout = cfg.dropout;
  m.layout_enc_ = LayoutEncoder::create(m.params_, lc, rng);

  if (variant_uses_graph(cfg.variant)) {
    GraphEncoderConfig gc;
    gc.d = cfg.d;
    gc.heads = cfg.heads;
    gc.layers = cfg.graph_layers;
    gc.ffn_mult = cfg.ffn_mult;
    gc.dropout = cfg.dropout;
    m.graph_enc_ = GraphEncoder::create(m.params_, gc, rng);
  }
  if (variant_has_cross_attention(cfg.variant)) {
    m.cross_ = MhaParams::create(m.params_, "cross", cfg.d, cfg.heads, cfg.dropout, rng);
    m.cross_ln_ = LayerNormAffine::create(m.params_, "cross.ln", cfg.d);
  }
  if (cfg.variant == Variant::symmetrical) {
    m.cross_rev_ = MhaParams::create(m.params_, "cross_rev", cfg.d, cfg.heads, cfg.dropout, rng);
    m.cross_rev_ln_ = LayerNormAffine::create(m.params_, "cross_rev.ln", cfg.d);
  }
  const int head_in =
      (cfg.variant == Variant::late_fusion || cfg.variant == Variant::symmetrical) ? 2 * cfg.d
                                                                                   : cfg.d;
  m.head_ = RegressionHead::create(m.params_, "head", head_in, cfg.head_hidden_dim(), cfg.dropout,
                                   rng);
  return m;
}

Tensor FusionModel::forward(Tape& tp, const LayoutTensor* layout, const CellGraph* graph,
                            const AdjacencyMask* mask, DropoutState& drop, AttnRecord* rec) {
  if (!layout) throw std::invalid_argument("forward: layout tensor is mandatory");
  const Tensor zl = layout_enc_->encode(tp, params_, *layout, drop);

  if (cfg_.variant == Variant::vision_only) {
    return head_->apply(tp, params_, pool_tokens(tp, zl), drop);
  }

  if (!graph || !mask) throw std::invalid_argument("forward: netlist graph is mandatory");
  const Tensor zg = graph_enc_->encode(tp, params_, *graph, *mask, drop, rec);

  switch (cfg_.variant) {
    case Variant::fusioncell:
    case Variant::fusioncell_no_corr: {
      Tensor att = multihead_attention(tp, params_, *cross_, zg, zl, nullptr, drop, rec, "cross", 0);
      Tensor fused = cross_ln_->apply(tp, params_, add(zg, drop.apply(att, cfg_.dropout)));
      return head_->apply(tp, params_, pool_tokens(tp, fused), drop);
    }
    case Variant::late_fusion: {
      Tensor z = concat({pool_tokens(tp, zl), pool_tokens(tp, zg)}, 1);
      return head_->apply(tp, params_, z, drop);
    }
    case Variant::symmetrical: {
      Tensor g2l = multihead_attention(tp, params_, *cross_, zg, zl, nullptr, drop, rec, "cross", 0);
      Tensor l2g = multihead_attention(tp, params_, *cross_rev_, zl, zg, nullptr, drop, rec,
                                       "cross_rev", 0);
      Tensor sg = cross_ln_->apply(tp, params_, add(zg, drop.apply(g2l, cfg_.dropout)));
      Tensor sl = cross_rev_ln_->apply(tp, params_, add(zl, drop.apply(l2g, cfg_.dropout)));
      Tensor z = concat({pool_tokens(tp, sl), pool_tokens(tp, sg)}, 1);
      return head_->apply(tp, params_, z, drop);
    }
    default:
      throw std::logic_error("forward: unhandled variant");
  }
}

std::array<double, kNumTargets> FusionModel::predict(const LayoutTensor* layout,
                                                     const CellGraph* graph,
                                                     const AdjacencyMask* mask, AttnRecord* rec) {
  Tape tp;
  DropoutState drop;  // eval mode
  const Tensor out = forward(tp, layout, graph, mask, drop, rec);
  std::array<double, kNumTargets> r;
  for (int i = 0; i < kNumTargets; ++i) r[i] = (*out.data)[i];
  return r;
}

nlohmann::json attention_dump_json(const CellGraph& g, const AttnRecord& rec, int patch_rows,
                                   int patch_cols) {
  // Average the graph->layout cross-attention over heads.
  int n = 0, cols = 0, heads = 0;
  std::vector<double> avg;
  for (const AttnMatrix& m : rec) {
    if (m.stage != "cross") continue;
    if (avg.empty()) {
      n = m.rows;
      cols = m.cols;
      avg.assign(m.weights.size(), 0.0);
    }
    for (size_t i = 0; i < m.weights.size(); ++i) avg[i] += m.weights[i];
    ++heads;
  }
  if (!heads) throw std::invalid_argument("attention dump: no cross-attention was recorded");
  for (double& x : avg) x /= heads;
  if (cols != patch_rows * patch_cols + 2)
    throw std::invalid_argument("attention dump: token count mismatch");
  if (n != g.num_nodes()) throw std::invalid_argument("attention dump: node count mismatch");

  std::vector<std::string> labels;
  labels.reserve(cols);
  labels.push_back("cls");
  labels.push_back("dist");
  for (int r = 0; r < patch_rows; ++r)
    for (int c = 0; c < patch_cols; ++c)
      labels.push_back("p_" + std::to_string(r) + "_" + std::to_string(c));

  std::vector<std::string> node_names;
  for (const Device& d : g.devices) node_names.push_back(d.name);
  for (const Net& net : g.nets) node_names.push_back(net.name);

  nlohmann::json out = nlohmann::json::object();
  for (int i = 0; i < n; ++i) {
    nlohmann::json row = nlohmann::json::array();
    for (int j = 0; j < cols; ++j)
      row.push_back({labels[j], avg[static_cast<size_t>(i) * cols + j]});
    out[node_names[i]] = row;
  }
  return out;
}

}  // namespace fc
