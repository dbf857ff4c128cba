#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <set>
#include <sstream>

#include "fusioncell/trainer.hpp"

using namespace fc;
namespace fs = std::filesystem;

namespace {

struct TempDataset {
  fs::path dir;
  Dataset ds;

  explicit TempDataset(const std::string& name, int variants = 4) {
    SynthConfig cfg;
    cfg.families = {{"INV", {1}}, {"NAND2", {1}}};
    cfg.variants_per_type = variants;
    dir = fs::temp_directory_path() / name;
    fs::remove_all(dir);
    build_dataset(cfg, dir.string());
    ds = Dataset::load(dir.string());
  }
  ~TempDataset() { fs::remove_all(dir); }
};

ModelConfig tiny_model(Variant v = Variant::fusioncell) {
  ModelConfig mc;
  mc.variant = v;
  mc.d = 16;
  mc.heads = 2;
  mc.layout_layers = 1;
  mc.graph_layers = 1;
  mc.ffn_mult = 2;
  mc.patch_size = 8;
  mc.canvas_h = 16;
  mc.canvas_w = 16;
  return mc;
}

}  // namespace

TEST_CASE("dataset loads every manifest entry with labels") {
  TempDataset td("fc_tr_load");
  CHECK(td.ds.samples.size() == 8);
  std::set<std::string> types;
  for (const auto& s : td.ds.samples) {
    types.insert(s.cell_type);
    CHECK_FALSE(s.devices.empty());
    CHECK(s.labels.rise_delay > 0);
    CHECK_NOTHROW(s.layout.validate());
  }
  CHECK(types == std::set<std::string>{"INVD1", "NAND2D1"});
}

TEST_CASE("prepare_samples honors the variant's graph options") {
  TempDataset td("fc_tr_prep");
  auto with = prepare_samples(td.ds, tiny_model(Variant::fusioncell));
  auto without = prepare_samples(td.ds, tiny_model(Variant::fusioncell_no_corr));
  REQUIRE(with.size() == td.ds.samples.size());
  CHECK_FALSE(with[0].graph.corr_edges.empty());
  CHECK(without[0].graph.corr_edges.empty());
  CHECK(with[0].raster.height == 16);
  CHECK(with[0].mask.n == with[0].graph.num_nodes());
}

TEST_CASE("stratified split covers every type on both sides") {
  TempDataset td("fc_tr_split", 5);
  SplitIndices sp = stratified_split(td.ds, 0.2, 7);
  CHECK(sp.train.size() + sp.val.size() == td.ds.samples.size());
  std::set<std::string> train_types, val_types;
  for (int i : sp.train) train_types.insert(td.ds.samples[i].cell_type);
  for (int i : sp.val) val_types.insert(td.ds.samples[i].cell_type);
  CHECK(train_types.size() == 2);
  CHECK(val_types.size() == 2);
  CHECK(sp.val.size() == 2);  // max(1, round(0.2*5)) per type

  // Deterministic per seed, different across seeds (usually).
  SplitIndices sp2 = stratified_split(td.ds, 0.2, 7);
  CHECK(sp.val == sp2.val);
  CHECK_THROWS(stratified_split(td.ds, 0.0, 1));
}

TEST_CASE("standardizer zero-means the training rows and round-trips") {
  TempDataset td("fc_tr_std");
  std::vector<int> all(td.ds.samples.size());
  for (size_t i = 0; i < all.size(); ++i) all[i] = static_cast<int>(i);
  Standardizer st = Standardizer::fit(td.ds, all);

  std::array<double, kNumTargets> sum{};
  for (int i : all) {
    auto z = st.apply(td.ds.samples[i].labels);
    for (int t = 0; t < kNumTargets; ++t) sum[t] += z[t];
  }
  for (int t = 0; t < kNumTargets; ++t) CHECK(sum[t] == doctest::Approx(0.0).scale(1.0));

  auto z = st.apply(td.ds.samples[0].labels);
  TargetVector back = st.invert(z);
  for (int t = 0; t < kNumTargets; ++t)
    CHECK(back.as_array()[t] == doctest::Approx(td.ds.samples[0].labels.as_array()[t]));

  Standardizer rt = Standardizer::from_json(st.to_json());
  CHECK(rt.mean == st.mean);
  CHECK(rt.stdev == st.stdev);
}

TEST_CASE("training reduces loss and checkpoints the best epoch") {
  TempDataset td("fc_tr_train");
  ModelConfig mc = tiny_model();
  auto prep = prepare_samples(td.ds, mc);
  SplitIndices sp = stratified_split(td.ds, 0.25, 3);
  Standardizer st = Standardizer::fit(td.ds, sp.train);

  TrainConfig tc;
  tc.epochs = 12;
  tc.batch_size = 3;
  tc.seed = 5;
  tc.opt.lr = 3e-3;

  FusionModel model = FusionModel::create(mc, 5);
  const fs::path out = fs::temp_directory_path() / "fc_tr_out";
  fs::remove_all(out);
  TrainResult res = train_model(model, td.ds, prep, sp, st, tc, out.string(), nullptr);

  REQUIRE(res.train_loss.size() == 12);
  REQUIRE(res.val_loss.size() == 12);
  CHECK(res.train_loss.back() < res.train_loss.front());
  CHECK(res.best_epoch >= 0);
  CHECK(res.best_val == *std::min_element(res.val_loss.begin(), res.val_loss.end()));
  CHECK(fs::exists(res.checkpoint_path));
  CHECK(fs::exists(out / "history.csv"));

  // Reload reproduces predictions from the best epoch exactly.
  Standardizer st2;
  FusionModel loaded = load_model_checkpoint(res.checkpoint_path, &st2);
  CHECK(st2.mean == st.mean);
  std::vector<int> idx = {sp.val[0], sp.val[1]};
  // The live model holds last-epoch weights; the checkpoint holds best-epoch
  // weights. Compare loaded-vs-loaded for exactness.
  FusionModel loaded2 = load_model_checkpoint(res.checkpoint_path);
  auto p1 = predict_all(loaded, prep, idx, st2);
  auto p2 = predict_all(loaded2, prep, idx, st2);
  REQUIRE(p1.size() == 2);
  for (size_t i = 0; i < p1.size(); ++i)
    for (int t = 0; t < kNumTargets; ++t) {
      CHECK(p1[i][t] == p2[i][t]);
      CHECK(std::isfinite(p1[i][t]));
    }
  fs::remove_all(out);
}

TEST_CASE("training is deterministic for a fixed seed") {
  TempDataset td("fc_tr_det");
  ModelConfig mc = tiny_model(Variant::vision_only);
  auto prep = prepare_samples(td.ds, mc);
  SplitIndices sp = stratified_split(td.ds, 0.25, 1);
  Standardizer st = Standardizer::fit(td.ds, sp.train);

  TrainConfig tc;
  tc.epochs = 3;
  tc.batch_size = 4;
  tc.seed = 9;
  tc.opt.lr = 1e-3;

  auto run = [&](const std::string& tag) {
    FusionModel m = FusionModel::create(mc, 9);
    const fs::path out = fs::temp_directory_path() / tag;
    fs::remove_all(out);
    TrainResult r = train_model(m, td.ds, prep, sp, st, tc, out.string(), nullptr);
    fs::remove_all(out);
    return r;
  };
  TrainResult a = run("fc_tr_det_a");
  TrainResult b = run("fc_tr_det_b");
  CHECK(a.train_loss == b.train_loss);
  CHECK(a.val_loss == b.val_loss);
}
