#include "fusioncell/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <limits>
#include <map>
#include <numeric>
#include <ostream>
#include <sstream>
#include <stdexcept>

namespace fc {

namespace {

struct ShuffleRng {
  uint64_t state;
  explicit ShuffleRng(uint64_t seed) : state(seed) {}
  uint64_t next() {
    uint64_t z = (state += 0x9e3779b97f4a7c15ULL);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
  }
  void shuffle(std::vector<int>& v) {
    for (int i = static_cast<int>(v.size()) - 1; i > 0; --i)
      std::swap(v[i], v[next() % static_cast<uint64_t>(i + 1)]);
  }
};

std::string read_file(const std::filesystem::path& p) {
  std::ifstream f(p, std::ios::binary);
  if (!f) throw std::runtime_error("cannot open " + p.string());
  std::ostringstream ss;
  ss << f.rdbuf();
  return ss.str();
}

}  // namespace

Dataset Dataset::load(const std::string& dir) {
  namespace fs = std::filesystem;
  const fs::path root(dir);
  nlohmann::json manifest = nlohmann::json::parse(read_file(root / "manifest.json"));
  Dataset ds;
  for (const auto& e : manifest.at("entries")) {
    Sample s;
    s.id = e.at("id");
    s.cell_type = e.at("cell_type");
    auto parsed = parse_netlist(read_file(root / e.at("netlist").get<std::string>()));
    s.devices = std::move(parsed.first);
    s.pins = std::move(parsed.second);
    s.layout = load_layout_json((root / e.at("layout").get<std::string>()).string());
    std::array<double, kNumTargets> y{};
    for (int i = 0; i < kNumTargets; ++i) y[i] = e.at("labels").at(TargetVector::names()[i]);
    s.labels = TargetVector::from_array(y);
    ds.samples.push_back(std::move(s));
  }
  if (ds.samples.empty()) throw std::runtime_error("dataset manifest has no entries");
  return ds;
}

std::vector<PreparedSample> prepare_samples(const Dataset& ds, const ModelConfig& cfg) {
  RasterConfig rc;
  rc.height = cfg.canvas_h;
  rc.width = cfg.canvas_w;
  rc.patch_size = cfg.patch_size;
  GraphOptions go;
  go.correlation_edges = cfg.variant != Variant::fusioncell_no_corr;

  std::vector<PreparedSample> out;
  out.reserve(ds.samples.size());
  for (const Sample& s : ds.samples) {
    PreparedSample p;
    p.raster = rasterize(s.layout, rc);
    p.graph = build_graph(s.devices, s.pins, s.cell_type, go);
    p.mask = build_mask(p.graph);
    out.push_back(std::move(p));
  }
  return out;
}

SplitIndices stratified_split(const Dataset& ds, double val_ratio, uint64_t seed) {
  if (val_ratio <= 0 || val_ratio >= 1)
    throw std::invalid_argument("stratified_split: val_ratio must be in (0,1)");
  std::map<std::string, std::vector<int>> by_type;
  for (size_t i = 0; i < ds.samples.size(); ++i)
    by_type[ds.samples[i].cell_type].push_back(static_cast<int>(i));

  SplitIndices out;
  ShuffleRng rng(seed);
  for (auto& [type, idx] : by_type) {
    if (idx.size() < 2)
      throw std::invalid_argument("stratified_split: cell type " + type +
                                  " has fewer than 2 samples");
    rng.shuffle(idx);
    int n_val = std::max(1, static_cast<int>(std::lround(val_ratio * idx.size())));
    if (n_val >= static_cast<int>(idx.size())) n_val = static_cast<int>(idx.size()) - 1;
    for (size_t i = 0; i < idx.size(); ++i)
      (static_cast<int>(i) < n_val ? out.val : out.train).push_back(idx[i]);
  }
  std::sort(out.train.begin(), out.train.end());
  std::sort(out.val.begin(), out.val.end());
  return out;
}

Standardizer Standardizer::fit(const Dataset& ds, const std::vector<int>& train_idx) {
  if (train_idx.empty()) throw std::invalid_argument("standardizer: empty training set");
  Standardizer st;
  for (int i : train_idx) {
    const auto y = ds.samples[i].labels.as_array();
    for (int t = 0; t < kNumTargets; ++t) st.mean[t] += y[t];
  }
  for (double& m : st.mean) m /= train_idx.size();
  for (int i : train_idx) {
    const auto y = ds.samples[i].labels.as_array();
    for (int t = 0; t < kNumTargets; ++t)
      st.stdev[t] += (y[t] - st.mean[t]) * (y[t] - st.mean[t]);
  }
  for (int t = 0; t < kNumTargets; ++t) {
    st.stdev[t] = std::sqrt(st.stdev[t] / train_idx.size());
    if (!(st.stdev[t] > 0))
      throw std::invalid_argument("standardizer: target " + TargetVector::names()[t] +
                                  " is constant on the training set");
  }
  return st;
}

std::array<double, kNumTargets> Standardizer::apply(const TargetVector& y) const {
  auto a = y.as_array();
  for (int t = 0; t < kNumTargets; ++t) a[t] = (a[t] - mean[t]) / stdev[t];
  return a;
}

TargetVector Standardizer::invert(const std::array<double, kNumTargets>& z) const {
  std::array<double, kNumTargets> a{};
  for (int t = 0; t < kNumTargets; ++t) a[t] = z[t] * stdev[t] + mean[t];
  return TargetVector::from_array(a);
}

nlohmann::json Standardizer::to_json() const {
  return {{"mean", mean}, {"stdev", stdev}};
}

Standardizer Standardizer::from_json(const nlohmann::json& j) {
  Standardizer st;
  for (int t = 0; t < kNumTargets; ++t) {
    st.mean[t] = j.at("mean")[t];
    st.stdev[t] = j.at("stdev")[t];
  }
  return st;
}

namespace {

// Squared-error loss for one sample on its own tape; returns the loss tensor.
Tensor sample_loss(Tape& tp, FusionModel& model, const PreparedSample& p,
                   const std::array<double, kNumTargets>& target, DropoutState& drop) {
  const bool graph = variant_uses_graph(model.config().variant);
  Tensor out = model.forward(tp, &p.raster, graph ? &p.graph : nullptr,
                             graph ? &p.mask : nullptr, drop);
  Tensor y = tp.constant({1, kNumTargets}, std::vector<double>(target.begin(), target.end()));
  Tensor d = sub(out, y);
  return sum_all(mul(d, d));
}

double eval_mse(FusionModel& model, const std::vector<PreparedSample>& prep,
                const Dataset& ds, const std::vector<int>& idx, const Standardizer& st) {
  double total = 0;
  for (int i : idx) {
    Tape tp;
    DropoutState drop;  // eval mode
    Tensor loss = sample_loss(tp, model, prep[i], st.apply(ds.samples[i].labels), drop);
    total += (*loss.data)[0];
  }
  return total / idx.size();
}

void clip_gradients(ParamStore& ps, double max_norm) {
  double sq = 0;
  for (size_t i = 0; i < ps.count(); ++i)
    for (double g : ps.at(static_cast<int>(i)).grad) sq += g * g;
  const double norm = std::sqrt(sq);
  if (norm <= max_norm || norm == 0) return;
  const double s = max_norm / norm;
  for (size_t i = 0; i < ps.count(); ++i)
    for (double& g : ps.at(static_cast<int>(i)).grad) g *= s;
}

}  // namespace

TrainResult train_model(FusionModel& model, const Dataset& ds,
                        const std::vector<PreparedSample>& prep, const SplitIndices& split,
                        const Standardizer& st, const TrainConfig& cfg,
                        const std::string& out_dir, std::ostream* log) {
  namespace fs = std::filesystem;
  if (prep.size() != ds.samples.size())
    throw std::invalid_argument("train: prepared sample count mismatch");
  fs::create_directories(out_dir);

  AdamW opt(cfg.opt);
  TrainResult res;
  res.checkpoint_path = (fs::path(out_dir) / "model.ckpt").string();
  std::ofstream hist(fs::path(out_dir) / "history.csv");
  hist << "epoch,train_mse,val_mse\n";

  DropoutState drop;
  drop.train = true;
  drop.seed = cfg.seed ^ 0xd1b54a32d192ed03ULL;

  std::vector<int> order = split.train;
  ShuffleRng shuffler(cfg.seed);
  res.best_val = std::numeric_limits<double>::infinity();

  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    shuffler.shuffle(order);
    double epoch_loss = 0;
    for (size_t b0 = 0; b0 < order.size(); b0 += cfg.batch_size) {
      const size_t b1 = std::min(order.size(), b0 + cfg.batch_size);
      const double inv_b = 1.0 / static_cast<double>(b1 - b0);
      model.params().zero_grad();
      for (size_t k = b0; k < b1; ++k) {
        const int i = order[k];
        Tape tp;
        Tensor loss = sample_loss(tp, model, prep[i], st.apply(ds.samples[i].labels), drop);
        const double lv = (*loss.data)[0];
        if (!std::isfinite(lv)) throw std::runtime_error("train: loss diverged (non-finite)");
        epoch_loss += lv;
        tp.backward(scale(loss, inv_b));
      }
      if (cfg.grad_clip_norm > 0) clip_gradients(model.params(), cfg.grad_clip_norm);
      opt.step(model.params());
    }
    const double train_mse = epoch_loss / order.size();
    const double val_mse = eval_mse(model, prep, ds, split.val, st);
    res.train_loss.push_back(train_mse);
    res.val_loss.push_back(val_mse);
    hist << epoch << "," << train_mse << "," << val_mse << "\n";
    hist.flush();
    if (log)
      *log << "epoch " << epoch << " train_mse " << train_mse << " val_mse " << val_mse << "\n";

    if (val_mse < res.best_val) {
      res.best_val = val_mse;
      res.best_epoch = epoch;
      nlohmann::json meta = {{"model", model.config().to_json()},
                             {"standardizer", st.to_json()},
                             {"train_seed", cfg.seed},
                             {"epoch", epoch},
                             {"val_mse", val_mse}};
      save_checkpoint(res.checkpoint_path, model.params(), meta);
    }
  }
  return res;
}

std::vector<std::array<double, kNumTargets>> predict_all(FusionModel& model,
                                                         const std::vector<PreparedSample>& prep,
                                                         const std::vector<int>& indices,
                                                         const Standardizer& st) {
  std::vector<std::array<double, kNumTargets>> out;
  out.reserve(indices.size());
  const bool graph = variant_uses_graph(model.config().variant);
  for (int i : indices) {
    auto z = model.predict(&prep[i].raster, graph ? &prep[i].graph : nullptr,
                           graph ? &prep[i].mask : nullptr);
    out.push_back(st.invert(z).as_array());
  }
  return out;
}

FusionModel load_model_checkpoint(const std::string& path, Standardizer* std_out) {
  nlohmann::json meta = read_checkpoint_meta(path);
  FusionModel model = FusionModel::create(ModelConfig::from_json(meta.at("model")), 0);
  load_checkpoint(path, model.params());
  if (std_out) *std_out = Standardizer::from_json(meta.at("standardizer"));
  return model;
}

}  // namespace fc
