#pragma once

#include <functional>
#include <string>
#include <vector>

#include "fusioncell/geometry.hpp"
#include "fusioncell/netlist.hpp"
#include "fusioncell/optim.hpp"
#include "fusioncell/tensor.hpp"

namespace fc {

struct LayoutEncoderConfig {
  int d = 64;
  int heads = 4;
  int layers = 2;
  int ffn_mult = 4;
  int patch_size = 8;
  int canvas_h = 64, canvas_w = 64;
  double dropout = 0.1;

  int num_patches() const { return (canvas_h / patch_size) * (canvas_w / patch_size); }
};

struct GraphEncoderConfig {
  int d = 64;
  int heads = 4;
  int layers = 2;
  int ffn_mult = 4;
  double dropout = 0.1;
  int num_edge_types = kNumEdgeTypes;
};

// Deterministic counter-based dropout stream; reseed per forward pass.
struct DropoutState {
  uint64_t seed = 0;
  uint64_t counter = 0;
  bool train = false;

  Tensor apply(const Tensor& x, double p) {
    return dropout(x, p, train, seed, counter++);
  }
};

// Attention probabilities captured during a forward pass.
struct AttnMatrix {
  std::string stage;  // "graph", "cross", "cross_rev"
  int layer = 0, head = 0;
  int rows = 0, cols = 0;
  std::vector<double> weights;  // row-stochastic
};
using AttnRecord = std::vector<AttnMatrix>;

struct LinearLayer {
  int w = -1, b = -1;
  int in = 0, out = 0;
  static LinearLayer create(ParamStore& ps, const std::string& name, int in, int out, InitRng& rng);
  Tensor apply(Tape& tp, ParamStore& ps, const Tensor& x) const;
};

struct LayerNormAffine {
  int gamma = -1, beta = -1;
  static LayerNormAffine create(ParamStore& ps, const std::string& name, int d);
  Tensor apply(Tape& tp, ParamStore& ps, const Tensor& x) const;
};

struct MhaParams {
  LinearLayer wq, wk, wv, wo;
  int heads = 1;
  double dropout_p = 0.0;
  static MhaParams create(ParamStore& ps, const std::string& name, int d, int heads,
                          double dropout_p, InitRng& rng);
};

// Multi-head attention of q_in over kv_in. head_bias, when set, returns a
// logit-bias matrix for the given head (shared across heads is fine too).
Tensor multihead_attention(Tape& tp, ParamStore& ps, const MhaParams& p, const Tensor& q_in,
                           const Tensor& kv_in, const std::function<Tensor(int)>& head_bias,
                           DropoutState& drop, AttnRecord* rec, const std::string& stage,
                           int layer_idx);

// Pre-norm block: x += drop(MSA(LN(x))); x += drop(FFN(LN(x))).
struct TransformerBlock {
  MhaParams mha;
  LinearLayer ffn1, ffn2;
  LayerNormAffine ln1, ln2;
  double dropout_p = 0.0;
  // Graph blocks own one bias embedding row per head (shape 1 x num_edge_types).
  std::vector<int> edge_bias;

  static TransformerBlock create(ParamStore& ps, const std::string& name, int d, int heads,
                                 int ffn_mult, double dropout_p, InitRng& rng,
                                 int num_edge_types = 0);
  Tensor apply(Tape& tp, ParamStore& ps, const Tensor& x, const AdjacencyMask* mask,
               DropoutState& drop, AttnRecord* rec, const std::string& stage,
               int layer_idx) const;
};

// DeiT-style layout encoder: patch projection, class + distillation tokens,
// learned positional embeddings, pre-norm transformer stack.
class LayoutEncoder {
 public:
  static LayoutEncoder create(ParamStore& ps, const LayoutEncoderConfig& cfg, InitRng& rng,
                              const std::string& prefix = "layout");
  // Tokens ordered [cls, dist, patch_1..patch_P]; (P+2) x d.
  Tensor encode(Tape& tp, ParamStore& ps, const LayoutTensor& t, DropoutState& drop) const;
  const LayoutEncoderConfig& config() const { return cfg_; }

 private:
  LayoutEncoderConfig cfg_;
  LinearLayer patch_proj_;
  int cls_ = -1, dist_ = -1, pos_ = -1;
  std::vector<TransformerBlock> blocks_;
};

// Connectivity-masked graph transformer with learnable per-(layer, head,
// edge-type) logit biases.
class GraphEncoder {
 public:
  static GraphEncoder create(ParamStore& ps, const GraphEncoderConfig& cfg, InitRng& rng,
                             const std::string& prefix = "graph");
  Tensor encode(Tape& tp, ParamStore& ps, const CellGraph& g, const AdjacencyMask& mask,
                DropoutState& drop, AttnRecord* rec = nullptr) const;
  const GraphEncoderConfig& config() const { return cfg_; }

 private:
  GraphEncoderConfig cfg_;
  LinearLayer in_proj_;
  std::vector<TransformerBlock> blocks_;
};

}  // namespace fc
