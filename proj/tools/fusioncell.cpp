#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include <CLI11.hpp>
#include <json.hpp>

#include "fusioncell/metrics.hpp"
#include "fusioncell/synth.hpp"
#include "fusioncell/trainer.hpp"

namespace {

nlohmann::json load_json_file(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw std::runtime_error("cannot open " + path);
  return nlohmann::json::parse(f);
}

void write_text(const std::string& path, const std::string& text) {
  std::ofstream f(path);
  if (!f) throw std::runtime_error("cannot write " + path);
  f << text;
}

uint64_t resolve_seed(uint64_t cli_seed, bool seed_given) {
  if (seed_given) return cli_seed;
  if (const char* env = std::getenv("FUSIONCELL_SEED")) return std::stoull(env);
  return cli_seed;
}

int run_gen(const std::string& config_path, const std::string& out_dir, bool print_config) {
  fc::SynthConfig cfg;
  if (!config_path.empty()) cfg = fc::synth_config_from_json(load_json_file(config_path));
  if (print_config) {
    std::cout << fc::synth_config_to_json(cfg).dump(2) << "\n";
    return 0;
  }
  std::cerr << "generating " << cfg.num_cells() << " cells into " << out_dir << "\n";
  fc::build_dataset(cfg, out_dir);
  return 0;
}

int run_train(const std::string& data_dir, const std::string& variant, const std::string& out_dir,
              int epochs, int batch, double lr, uint64_t seed, bool seed_given, double val_ratio,
              double grad_clip, int d, int heads, int layers, int patch, int canvas,
              bool print_config) {
  fc::ModelConfig mc;
  mc.variant = fc::variant_from_name(variant);
  mc.d = d;
  mc.heads = heads;
  mc.layout_layers = layers;
  mc.graph_layers = layers;
  mc.patch_size = patch;
  mc.canvas_h = canvas;
  mc.canvas_w = canvas;

  fc::TrainConfig tc;
  tc.epochs = epochs;
  tc.batch_size = batch;
  tc.seed = resolve_seed(seed, seed_given);
  tc.val_ratio = val_ratio;
  tc.grad_clip_norm = grad_clip;
  tc.opt.lr = lr;

  if (print_config) {
    nlohmann::json j = {{"model", mc.to_json()},
                        {"epochs", tc.epochs},
                        {"batch_size", tc.batch_size},
                        {"seed", tc.seed},
                        {"val_ratio", tc.val_ratio},
                        {"grad_clip_norm", tc.grad_clip_norm},
                        {"lr", tc.opt.lr}};
    std::cout << j.dump(2) << "\n";
    return 0;
  }

  std::cerr << "loading dataset from " << data_dir << "\n";
  fc::Dataset ds = fc::Dataset::load(data_dir);
  auto prep = fc::prepare_samples(ds, mc);
  auto split = fc::stratified_split(ds, tc.val_ratio, tc.seed);
  auto st = fc::Standardizer::fit(ds, split.train);

  std::filesystem::create_directories(out_dir);
  nlohmann::json run = {{"command", "train"},
                        {"data", data_dir},
                        {"model", mc.to_json()},
                        {"epochs", tc.epochs},
                        {"batch_size", tc.batch_size},
                        {"seed", tc.seed},
                        {"lr", tc.opt.lr},
                        {"train_samples", split.train.size()},
                        {"val_samples", split.val.size()}};
  write_text((std::filesystem::path(out_dir) / "run.json").string(), run.dump(2) + "\n");

  fc::FusionModel model = fc::FusionModel::create(mc, tc.seed);
  std::cerr << "training " << variant << " (" << model.params().total_elems() << " weights, "
            << split.train.size() << " train / " << split.val.size() << " val)\n";
  auto res = fc::train_model(model, ds, prep, split, st, tc, out_dir, &std::cerr);
  std::cout << "best_val_mse " << res.best_val << " at epoch " << res.best_epoch << "\n"
            << "checkpoint " << res.checkpoint_path << "\n";
  return 0;
}

int run_eval(const std::string& data_dir, const std::string& ckpt, const std::string& report) {
  fc::Standardizer st;
  fc::FusionModel model = fc::load_model_checkpoint(ckpt, &st);
  fc::Dataset ds = fc::Dataset::load(data_dir);
  auto prep = fc::prepare_samples(ds, model.config());

  std::vector<int> idx(ds.samples.size());
  for (size_t i = 0; i < idx.size(); ++i) idx[i] = static_cast<int>(i);
  auto preds = fc::predict_all(model, prep, idx, st);

  std::vector<std::array<double, fc::kNumTargets>> truths;
  std::vector<std::string> types;
  for (const auto& s : ds.samples) {
    truths.push_back(s.labels.as_array());
    types.push_back(s.cell_type);
  }
  fc::MetricsReport rep = fc::evaluate_predictions(preds, truths, types);
  std::cout << rep.to_table();
  if (!report.empty()) write_text(report, rep.to_json().dump(2) + "\n");
  return 0;
}

int run_attn(const std::string& ckpt, const std::string& layout_path,
             const std::string& netlist_path, const std::string& out_path) {
  fc::Standardizer st;
  fc::FusionModel model = fc::load_model_checkpoint(ckpt, &st);
  if (!fc::variant_has_cross_attention(model.config().variant))
    throw std::runtime_error("variant " + fc::variant_name(model.config().variant) +
                             " has no cross-attention to dump");

  const fc::ModelConfig& mc = model.config();
  fc::RasterConfig rc;
  rc.height = mc.canvas_h;
  rc.width = mc.canvas_w;
  rc.patch_size = mc.patch_size;
  fc::GraphOptions go;
  go.correlation_edges = mc.variant != fc::Variant::fusioncell_no_corr;

  fc::LayoutTensor raster = fc::rasterize(fc::load_layout_json(layout_path), rc);
  std::ifstream nf(netlist_path);
  if (!nf) throw std::runtime_error("cannot open " + netlist_path);
  std::stringstream ss;
  ss << nf.rdbuf();
  auto [devices, pins] = fc::parse_netlist(ss.str());
  fc::CellGraph graph = fc::build_graph(devices, pins, "", go);
  fc::AdjacencyMask mask = fc::build_mask(graph);

  fc::AttnRecord rec;
  model.predict(&raster, &graph, &mask, &rec);
  nlohmann::json dump = fc::attention_dump_json(graph, rec, mc.canvas_h / mc.patch_size,
                                                mc.canvas_w / mc.patch_size);
  write_text(out_path, dump.dump(2) + "\n");
  std::cerr << "attention map written to " << out_path << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"layout + netlist cell timing/power prediction"};
  app.require_subcommand(1);

  std::string config_path, out_dir, data_dir, variant = "fusioncell", ckpt, report;
  std::string layout_path, netlist_path, attn_out;
  int epochs = 50, batch = 8, d = 64, heads = 4, layers = 2, patch = 8, canvas = 64;
  double lr = 5e-5, val_ratio = 0.2, grad_clip = 0;
  uint64_t seed = 1;
  bool print_config = false;

  auto* gen = app.add_subcommand("gen", "generate a synthetic cell dataset");
  gen->add_option("--config", config_path, "synthesis config JSON");
  gen->add_option("--out", out_dir, "output directory")->required();
  gen->add_flag("--print-config", print_config, "print the effective config and exit");

  auto* train = app.add_subcommand("train", "train a model");
  train->add_option("--data", data_dir, "dataset directory")->required();
  train->add_option("--variant", variant,
                    "fusioncell|fusioncell_no_corr|vision_only|late_fusion|symmetrical");
  train->add_option("--out", out_dir, "output directory")->required();
  train->add_option("--epochs", epochs);
  train->add_option("--batch", batch);
  train->add_option("--lr", lr);
  auto* seed_opt = train->add_option("--seed", seed, "falls back to $FUSIONCELL_SEED");
  train->add_option("--val-ratio", val_ratio);
  train->add_option("--grad-clip", grad_clip, "max gradient norm, 0 disables");
  train->add_option("--d", d, "model width");
  train->add_option("--heads", heads);
  train->add_option("--layers", layers, "encoder depth (both encoders)");
  train->add_option("--patch", patch);
  train->add_option("--canvas", canvas, "raster height and width in pixels");
  train->add_flag("--print-config", print_config, "print the effective config and exit");

  auto* eval = app.add_subcommand("eval", "evaluate a checkpoint on a dataset");
  eval->add_option("--data", data_dir, "dataset directory")->required();
  eval->add_option("--ckpt", ckpt, "checkpoint path")->required();
  eval->add_option("--report", report, "write the JSON report here");

  auto* attn = app.add_subcommand("attn", "dump cross-attention for one cell");
  attn->add_option("--ckpt", ckpt, "checkpoint path")->required();
  attn->add_option("--layout", layout_path, "layout JSON")->required();
  attn->add_option("--netlist", netlist_path, "netlist file")->required();
  attn->add_option("--out", attn_out, "output JSON path")->required();

  CLI11_PARSE(app, argc, argv);

  try {
    if (gen->parsed()) return run_gen(config_path, out_dir, print_config);
    if (train->parsed())
      return run_train(data_dir, variant, out_dir, epochs, batch, lr, seed, !seed_opt->empty(),
                       val_ratio, grad_clip, d, heads, layers, patch, canvas, print_config);
    if (eval->parsed()) return run_eval(data_dir, ckpt, report);
    if (attn->parsed()) return run_attn(ckpt, layout_path, netlist_path, attn_out);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 1;
}
