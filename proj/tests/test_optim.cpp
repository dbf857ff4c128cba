#include <doctest.h>

#include <cmath>
#include <cstdio>
#include <filesystem>

#include "fusioncell/optim.hpp"

using namespace fc;

TEST_CASE("param store rejects duplicates and finds by name") {
  ParamStore ps;
  int a = ps.add("w", {2, 2}, {1, 2, 3, 4});
  CHECK(a == 0);
  CHECK_THROWS(ps.add("w", {2, 2}, {0, 0, 0, 0}));
  CHECK_THROWS(ps.add("v", {2, 2}, {0, 0, 0}));  // size mismatch
  CHECK(ps.find("w") != nullptr);
  CHECK(ps.find("missing") == nullptr);
  CHECK(ps.total_elems() == 4);
}

TEST_CASE("adamw first step matches the closed form") {
  // With zero init moments, step 1 gives update lr * g/(|g| + eps) modulo
  // bias correction, plus decoupled decay on the original value.
  ParamStore ps;
  ps.add("w", {1, 2}, {1.0, -2.0});
  Param& p = ps.at(0);
  p.grad = {0.5, -0.25};

  AdamWConfig cfg;
  cfg.lr = 0.1;
  cfg.weight_decay = 0.01;
  AdamW opt(cfg);
  opt.step(ps);

  for (int i = 0; i < 2; ++i) {
    const double g = (i == 0) ? 0.5 : -0.25;
    const double w0 = (i == 0) ? 1.0 : -2.0;
    const double m_hat = (1 - cfg.beta1) * g / (1 - cfg.beta1);
    const double v_hat = (1 - cfg.beta2) * g * g / (1 - cfg.beta2);
    const double expected = w0 - cfg.lr * (m_hat / (std::sqrt(v_hat) + cfg.eps)) -
                            cfg.lr * cfg.weight_decay * w0;
    CHECK(p.value[i] == doctest::Approx(expected).epsilon(1e-12));
  }
}

TEST_CASE("adamw minimizes a simple quadratic") {
  ParamStore ps;
  ps.add("x", {1, 1}, {5.0});
  AdamWConfig cfg;
  cfg.lr = 0.05;
  cfg.weight_decay = 0;
  AdamW opt(cfg);
  for (int i = 0; i < 2000; ++i) {
    Param& p = ps.at(0);
    p.grad = {2 * (p.value[0] - 3.0)};
    opt.step(ps);
  }
  CHECK(ps.at(0).value[0] == doctest::Approx(3.0).epsilon(1e-3));
}

TEST_CASE("init rng is deterministic and bounded") {
  InitRng a(42), b(42), c(43);
  for (int i = 0; i < 100; ++i) {
    const double x = a.uniform(-1, 1);
    CHECK(x == b.uniform(-1, 1));
    CHECK(x >= -1);
    CHECK(x < 1);
  }
  CHECK(a.uniform(0, 1) != c.uniform(0, 1));

  InitRng r(7);
  auto v = fan_in_uniform({16, 4}, 16, r);
  CHECK(v.size() == 64);
  const double bound = 1.0 / 4.0;
  for (double x : v) {
    CHECK(x >= -bound);
    CHECK(x < bound);
  }
}

TEST_CASE("checkpoint round trip preserves values and meta") {
  const std::string path = (std::filesystem::temp_directory_path() / "fc_ckpt_test.bin").string();
  ParamStore src;
  src.add("a", {2, 3}, {1, 2, 3, 4, 5, 6});
  src.add("b", {1, 2}, {-0.5, 0.25});
  save_checkpoint(path, src, {{"note", "hello"}, {"x", 3}});

  nlohmann::json meta = read_checkpoint_meta(path);
  CHECK(meta.at("note") == "hello");
  CHECK(meta.at("x") == 3);

  ParamStore dst;
  dst.add("a", {2, 3}, std::vector<double>(6, 0.0));
  dst.add("b", {1, 2}, std::vector<double>(2, 0.0));
  load_checkpoint(path, dst);
  CHECK(dst.at(0).value == std::vector<double>{1, 2, 3, 4, 5, 6});
  CHECK(dst.at(1).value == std::vector<double>{-0.5, 0.25});

  ParamStore bad;
  bad.add("a", {3, 2}, std::vector<double>(6, 0.0));
  bad.add("b", {1, 2}, std::vector<double>(2, 0.0));
  CHECK_THROWS(load_checkpoint(path, bad));
  std::filesystem::remove(path);
}
