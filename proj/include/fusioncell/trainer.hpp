#pragma once

#include <iosfwd>
#include <string>
#include <vector>

#include "fusioncell/fusion.hpp"
#include "fusioncell/synth.hpp"

namespace fc {

struct Sample {
  std::string id, cell_type;
  std::vector<Device> devices;
  std::vector<PinDecl> pins;
  LayoutDesign layout;
  TargetVector labels;
};

struct Dataset {
  std::vector<Sample> samples;
  // Reads manifest.json plus the referenced netlist/layout files.
  static Dataset load(const std::string& dir);
};

// Model-ready views: raster at the model's canvas, graph with or without
// correlation edges depending on the variant.
struct PreparedSample {
  LayoutTensor raster;
  CellGraph graph;
  AdjacencyMask mask;
};
std::vector<PreparedSample> prepare_samples(const Dataset& ds, const ModelConfig& cfg);

struct SplitIndices {
  std::vector<int> train, val;
};
// Per-cell-type split so every type appears on both sides; throws when a type
// has fewer than 2 samples.
SplitIndices stratified_split(const Dataset& ds, double val_ratio, uint64_t seed);

// Per-target z-score fitted on the training rows only.
struct Standardizer {
  std::array<double, kNumTargets> mean{}, stdev{};
  static Standardizer fit(const Dataset& ds, const std::vector<int>& train_idx);
  std::array<double, kNumTargets> apply(const TargetVector& y) const;
  TargetVector invert(const std::array<double, kNumTargets>& z) const;
  nlohmann::json to_json() const;
  static Standardizer from_json(const nlohmann::json& j);
};

struct TrainConfig {
  int epochs = 50;
  int batch_size = 8;
  uint64_t seed = 1;
  double val_ratio = 0.2;
  double grad_clip_norm = 0;  // 0 disables clipping
  AdamWConfig opt;
};

struct TrainResult {
  std::vector<double> train_loss, val_loss;  // mean squared error per epoch
  double best_val = 0;
  int best_epoch = -1;
  std::string checkpoint_path;
};

// Minibatch AdamW training; writes history.csv and the best-validation
// checkpoint under out_dir. Aborts on a non-finite loss. log may be null.
TrainResult train_model(FusionModel& model, const Dataset& ds,
                        const std::vector<PreparedSample>& prep, const SplitIndices& split,
                        const Standardizer& std_, const TrainConfig& cfg,
                        const std::string& out_dir, std::ostream* log);

// Eval-mode predictions in raw label units.
std::vector<std::array<double, kNumTargets>> predict_all(FusionModel& model,
                                                         const std::vector<PreparedSample>& prep,
                                                         const std::vector<int>& indices,
                                                         const Standardizer& std_);

// Rebuilds a model (architecture from checkpoint meta) and loads weights.
FusionModel load_model_checkpoint(const std::string& path, Standardizer* std_out = nullptr);

}  // namespace fc
