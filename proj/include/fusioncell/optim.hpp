#pragma once

#include <cstdint>
#include <memory>
#include <random>
#include <string>
#include <vector>

#include "fusioncell/tensor.hpp"

#include <json.hpp>

namespace fc {

// Owns all trainable parameters of a model. Pointers into the store stay
// stable across add() calls.
class ParamStore {
 public:
  int add(std::string name, Shape shape, std::vector<double> init);
  Param& at(int idx) { return *params_[idx]; }
  const Param& at(int idx) const { return *params_[idx]; }
  Param* find(const std::string& name);
  size_t count() const { return params_.size(); }
  int64_t total_elems() const;
  void zero_grad();

 private:
  std::vector<std::unique_ptr<Param>> params_;
};

struct AdamWConfig {
  double lr = 5e-5;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 0.01;
};

// Decoupled weight decay with bias-corrected moments.
class AdamW {
 public:
  explicit AdamW(AdamWConfig cfg) : cfg_(cfg) {}
  void step(ParamStore& params);
  int64_t steps_taken() const { return step_; }

 private:
  AdamWConfig cfg_;
  int64_t step_ = 0;
};

// Deterministic init RNG; avoids std::uniform_real_distribution so streams
// are pinned by the engine alone.
class InitRng {
 public:
  explicit InitRng(uint64_t seed) : eng_(seed) {}
  double uniform(double lo, double hi);
  std::vector<double> uniform_vec(int64_t n, double lo, double hi);

 private:
  std::mt19937_64 eng_;
};

// U(-1/sqrt(fan_in), 1/sqrt(fan_in)) for linear weights.
std::vector<double> fan_in_uniform(Shape shape, int fan_in, InitRng& rng);

// Flat binary checkpoint: 8-byte little-endian header length, JSON header
// (meta + per-parameter name/shape/offset), then raw float64 data.
void save_checkpoint(const std::string& path, const ParamStore& params,
                     const nlohmann::json& meta);
nlohmann::json read_checkpoint_meta(const std::string& path);
void load_checkpoint(const std::string& path, ParamStore& params);

}  // namespace fc
