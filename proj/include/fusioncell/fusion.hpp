#pragma once

#include <array>
#include <memory>
#include <optional>
#include <string>

#include "fusioncell/encoders.hpp"

#include <json.hpp>

namespace fc {

// Six regression targets; raw units are ps (delays, transitions) and fJ
// (powers). Standardized during training.
struct TargetVector {
  double rise_delay = 0, fall_delay = 0;
  double rise_trans = 0, fall_trans = 0;
  double rise_power = 0, fall_power = 0;

  std::array<double, 6> as_array() const {
    return {rise_delay, fall_delay, rise_trans, fall_trans, rise_power, fall_power};
  }
  static TargetVector from_array(const std::array<double, 6>& a) {
    return {a[0], a[1], a[2], a[3], a[4], a[5]};
  }
  static const std::array<std::string, 6>& names();
};

inline constexpr int kNumTargets = 6;

enum class Variant { fusioncell, fusioncell_no_corr, vision_only, late_fusion, symmetrical };

std::string variant_name(Variant v);
Variant variant_from_name(const std::string& name);
// Variants that read the netlist graph at all.
bool variant_uses_graph(Variant v);
bool variant_has_cross_attention(Variant v);

struct ModelConfig {
  Variant variant = Variant::fusioncell;
  int d = 64;
  int heads = 4;
  int layout_layers = 2;
  int graph_layers = 2;
  int ffn_mult = 4;
  int patch_size = 8;
  int canvas_h = 64, canvas_w = 64;
  double dropout = 0.1;
  int head_hidden = 0;  // 0 -> d

  int head_hidden_dim() const { return head_hidden > 0 ? head_hidden : d; }
  nlohmann::json to_json() const;
  static ModelConfig from_json(const nlohmann::json& j);
};

// Regression head: LayerNorm -> Linear -> GeLU -> dropout -> Linear(6).
struct RegressionHead {
  LayerNormAffine ln;
  LinearLayer fc1, fc2;
  double dropout_p = 0.0;
  static RegressionHead create(ParamStore& ps, const std::string& name, int in, int hidden,
                               double dropout_p, InitRng& rng);
  Tensor apply(Tape& tp, ParamStore& ps, const Tensor& z, DropoutState& drop) const;
};

// The full dual-modality model plus the ablation baselines; which pieces
// exist depends on the variant.
class FusionModel {
 public:
  static FusionModel create(const ModelConfig& cfg, uint64_t seed);

  // Standardized 1x6 prediction on the given tape. layout is always
  // required; graph/mask only for variants that consume the netlist.
  Tensor forward(Tape& tp, const LayoutTensor* layout, const CellGraph* graph,
                 const AdjacencyMask* mask, DropoutState& drop, AttnRecord* rec = nullptr);

  // Convenience eval-mode call returning plain values.
  std::array<double, kNumTargets> predict(const LayoutTensor* layout, const CellGraph* graph,
                                          const AdjacencyMask* mask, AttnRecord* rec = nullptr);

  const ModelConfig& config() const { return cfg_; }
  ParamStore& params() { return params_; }
  const ParamStore& params() const { return params_; }

 private:
  ModelConfig cfg_;
  ParamStore params_;
  std::optional<LayoutEncoder> layout_enc_;
  std::optional<GraphEncoder> graph_enc_;
  std::optional<MhaParams> cross_;          // graph-query, layout-key
  std::optional<LayerNormAffine> cross_ln_;
  std::optional<MhaParams> cross_rev_;      // layout-query, graph-key (symmetrical only)
  std::optional<LayerNormAffine> cross_rev_ln_;
  std::optional<RegressionHead> head_;
};

// Mean over the valid token rows (all rows valid here; padded batching would
// zero the weights of padded rows).
Tensor pool_tokens(Tape& tp, const Tensor& tokens);

// Fig-style attention dump: graph node name -> [(token label, weight)], the
// cross-attention weights averaged over heads. Labels are "cls", "dist" and
// "p_<row>_<col>".
nlohmann::json attention_dump_json(const CellGraph& g, const AttnRecord& rec, int patch_rows,
                                   int patch_cols);

}  // namespace fc
