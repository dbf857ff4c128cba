#include "fusioncell/optim.hpp"

#include <cmath>
#include <cstring>
#include <fstream>
#include <stdexcept>

namespace fc {

int ParamStore::add(std::string name, Shape shape, std::vector<double> init) {
  if (shape.numel() != static_cast<int64_t>(init.size()))
    throw std::invalid_argument("ParamStore::add: init size mismatch for " + name);
  if (find(name)) throw std::invalid_argument("ParamStore::add: duplicate name " + name);
  auto p = std::make_unique<Param>();
  p->name = std::move(name);
  p->shape = shape;
  p->value = std::move(init);
  p->grad.assign(shape.numel(), 0.0);
  params_.push_back(std::move(p));
  return static_cast<int>(params_.size()) - 1;
}

Param* ParamStore::find(const std::string& name) {
  for (auto& p : params_)
    if (p->name == name) return p.get();
  return nullptr;
}

int64_t ParamStore::total_elems() const {
  int64_t n = 0;
  for (const auto& p : params_) n += p->shape.numel();
  return n;
}

void ParamStore::zero_grad() {
  for (auto& p : params_) std::fill(p->grad.begin(), p->grad.end(), 0.0);
}

void AdamW::step(ParamStore& params) {
  ++step_;
  const double bc1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(step_));
  const double bc2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(step_));
  for (size_t i = 0; i < params.count(); ++i) {
    Param& p = params.at(i);
    if (p.m.empty()) {
      p.m.assign(p.value.size(), 0.0);
      p.v.assign(p.value.size(), 0.0);
    }
    for (size_t j = 0; j < p.value.size(); ++j) {
      const double g = p.grad[j];
      p.m[j] = cfg_.beta1 * p.m[j] + (1.0 - cfg_.beta1) * g;
      p.v[j] = cfg_.beta2 * p.v[j] + (1.0 - cfg_.beta2) * g * g;
      const double mhat = p.m[j] / bc1;
      const double vhat = p.v[j] / bc2;
      p.value[j] -= cfg_.lr * (mhat / (std::sqrt(vhat) + cfg_.eps) + cfg_.weight_decay * p.value[j]);
    }
  }
}

double InitRng::uniform(double lo, double hi) {
  const double u = static_cast<double>(eng_() >> 11) * 0x1.0p-53;
  return lo + (hi - lo) * u;
}

std::vector<double> InitRng::uniform_vec(int64_t n, double lo, double hi) {
  std::vector<double> v(n);
  for (auto& x : v) x = uniform(lo, hi);
  return v;
}

std::vector<double> fan_in_uniform(Shape shape, int fan_in, InitRng& rng) {
  const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
  return rng.uniform_vec(shape.numel(), -bound, bound);
}

void save_checkpoint(const std::string& path, const ParamStore& params,
                     const nlohmann::json& meta) {
  nlohmann::json header;
  header["format"] = "fusioncell-ckpt-v1";
  header["meta"] = meta;
  int64_t offset = 0;
  nlohmann::json plist = nlohmann::json::array();
  for (size_t i = 0; i < params.count(); ++i) {
    const Param& p = params.at(i);
    plist.push_back({{"name", p.name},
                     {"shape", {p.shape.rows, p.shape.cols}},
                     {"offset", offset}});
    offset += p.shape.numel();
  }
  header["params"] = plist;
  const std::string hs = header.dump();

  std::ofstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("save_checkpoint: cannot open " + path);
  uint64_t hlen = hs.size();
  char lenbuf[8];
  for (int i = 0; i < 8; ++i) lenbuf[i] = static_cast<char>((hlen >> (8 * i)) & 0xff);
  f.write(lenbuf, 8);
  f.write(hs.data(), static_cast<std::streamsize>(hs.size()));
  for (size_t i = 0; i < params.count(); ++i) {
    const Param& p = params.at(i);
    f.write(reinterpret_cast<const char*>(p.value.data()),
            static_cast<std::streamsize>(p.value.size() * sizeof(double)));
  }
  if (!f) throw std::runtime_error("save_checkpoint: write failed for " + path);
}

namespace {

nlohmann::json read_header(std::ifstream& f, const std::string& path) {
  char lenbuf[8];
  f.read(lenbuf, 8);
  if (!f) throw std::runtime_error("checkpoint: truncated header in " + path);
  uint64_t hlen = 0;
  for (int i = 0; i < 8; ++i) hlen |= static_cast<uint64_t>(static_cast<unsigned char>(lenbuf[i])) << (8 * i);
  std::string hs(hlen, '\0');
  f.read(hs.data(), static_cast<std::streamsize>(hlen));
  if (!f) throw std::runtime_error("checkpoint: truncated header in " + path);
  nlohmann::json header = nlohmann::json::parse(hs);
  if (header.value("format", "") != "fusioncell-ckpt-v1")
    throw std::runtime_error("checkpoint: unknown format in " + path);
  return header;
}

}  // namespace

nlohmann::json read_checkpoint_meta(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("checkpoint: cannot open " + path);
  return read_header(f, path)["meta"];
}

void load_checkpoint(const std::string& path, ParamStore& params) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("checkpoint: cannot open " + path);
  nlohmann::json header = read_header(f, path);
  const std::streampos data_start = f.tellg();
  for (const auto& entry : header["params"]) {
    const std::string name = entry["name"];
    Param* p = params.find(name);
    if (!p) throw std::runtime_error("checkpoint: unexpected parameter " + name);
    Shape s{entry["shape"][0], entry["shape"][1]};
    if (!(s == p->shape)) throw std::runtime_error("checkpoint: shape mismatch for " + name);
    const int64_t offset = entry["offset"];
    f.seekg(data_start + static_cast<std::streamoff>(offset * sizeof(double)));
    f.read(reinterpret_cast<char*>(p->value.data()),
           static_cast<std::streamsize>(p->value.size() * sizeof(double)));
    if (!f) throw std::runtime_error("checkpoint: truncated data for " + name);
  }
}

}  // namespace fc
