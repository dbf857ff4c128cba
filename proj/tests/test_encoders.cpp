#include <doctest.h>

#include <cmath>

#include "fusioncell/encoders.hpp"

using namespace fc;

namespace {

CellGraph inv_graph() {
  auto [devices, pins] = parse_netlist(
      ".SUBCKT INVD1 A Y VDD VSS\n"
      "MP1 Y A VDD VDD pmos W=80n L=20n\n"
      "MN1 Y A VSS VSS nmos W=40n L=20n\n"
      ".ENDS\n");
  return build_graph(devices, pins, "INVD1");
}

LayoutTensor small_raster() {
  LayoutTensor t;
  t.height = 16;
  t.width = 16;
  t.data.assign(3 * 16 * 16, 0.0);
  for (int y = 4; y < 12; ++y)
    for (int x = 2; x < 14; ++x) t.at(1, y, x) = 0.5;
  return t;
}

}  // namespace

TEST_CASE("layout encoder output shape and determinism") {
  LayoutEncoderConfig cfg;
  cfg.d = 16;
  cfg.heads = 2;
  cfg.layers = 1;
  cfg.patch_size = 8;
  cfg.canvas_h = 16;
  cfg.canvas_w = 16;

  ParamStore ps1, ps2;
  InitRng r1(5), r2(5);
  auto e1 = LayoutEncoder::create(ps1, cfg, r1);
  auto e2 = LayoutEncoder::create(ps2, cfg, r2);
  LayoutTensor t = small_raster();

  Tape tp1, tp2;
  DropoutState d1, d2;
  Tensor z1 = e1.encode(tp1, ps1, t, d1);
  Tensor z2 = e2.encode(tp2, ps2, t, d2);
  CHECK(z1.rows() == cfg.num_patches() + 2);
  CHECK(z1.cols() == cfg.d);
  for (size_t i = 0; i < z1.data->size(); ++i) CHECK((*z1.data)[i] == (*z2.data)[i]);
  for (double v : *z1.data) CHECK(std::isfinite(v));
}

TEST_CASE("layout encoder rejects a mismatched canvas") {
  LayoutEncoderConfig cfg;
  cfg.canvas_h = 64;
  cfg.canvas_w = 64;
  ParamStore ps;
  InitRng rng(1);
  auto enc = LayoutEncoder::create(ps, cfg, rng);
  LayoutTensor t = small_raster();  // 16x16
  Tape tp;
  DropoutState drop;
  CHECK_THROWS(enc.encode(tp, ps, t, drop));
}

TEST_CASE("train-mode dropout changes the encoding, eval mode does not") {
  LayoutEncoderConfig cfg;
  cfg.d = 16;
  cfg.heads = 2;
  cfg.layers = 1;
  cfg.canvas_h = 16;
  cfg.canvas_w = 16;
  ParamStore ps;
  InitRng rng(9);
  auto enc = LayoutEncoder::create(ps, cfg, rng);
  LayoutTensor t = small_raster();

  Tape tp1, tp2, tp3;
  DropoutState ev1, ev2;
  DropoutState tr;
  tr.train = true;
  tr.seed = 77;
  Tensor a = enc.encode(tp1, ps, t, ev1);
  Tensor b = enc.encode(tp2, ps, t, ev2);
  Tensor c = enc.encode(tp3, ps, t, tr);
  CHECK(*a.data == *b.data);
  bool differs = false;
  for (size_t i = 0; i < a.data->size(); ++i)
    if ((*a.data)[i] != (*c.data)[i]) differs = true;
  CHECK(differs);
}

TEST_CASE("graph encoder masks attention to the adjacency structure") {
  CellGraph g = inv_graph();
  AdjacencyMask mask = build_mask(g);
  GraphEncoderConfig cfg;
  cfg.d = 16;
  cfg.heads = 2;
  cfg.layers = 2;
  ParamStore ps;
  InitRng rng(3);
  auto enc = GraphEncoder::create(ps, cfg, rng);

  Tape tp;
  DropoutState drop;
  AttnRecord rec;
  Tensor z = enc.encode(tp, ps, g, mask, drop, &rec);
  CHECK(z.rows() == g.num_nodes());
  CHECK(z.cols() == cfg.d);
  REQUIRE(rec.size() == static_cast<size_t>(cfg.layers * cfg.heads));

  for (const AttnMatrix& m : rec) {
    CHECK(m.stage == "graph");
    REQUIRE(m.rows == mask.n);
    for (int i = 0; i < m.rows; ++i) {
      double row_sum = 0;
      for (int j = 0; j < m.cols; ++j) {
        const double w = m.weights[static_cast<size_t>(i) * m.cols + j];
        row_sum += w;
        if (!mask.is_allowed(i, j)) CHECK(w < 1e-8);
      }
      CHECK(row_sum == doctest::Approx(1.0).epsilon(1e-9));
    }
  }
}

TEST_CASE("edge-type biases shift attention after an optimizer-style update") {
  CellGraph g = inv_graph();
  AdjacencyMask mask = build_mask(g);
  GraphEncoderConfig cfg;
  cfg.d = 16;
  cfg.heads = 2;
  cfg.layers = 1;
  ParamStore ps;
  InitRng rng(3);
  auto enc = GraphEncoder::create(ps, cfg, rng);

  auto run = [&] {
    Tape tp;
    DropoutState drop;
    AttnRecord rec;
    enc.encode(tp, ps, g, mask, drop, &rec);
    return rec;
  };
  AttnRecord before = run();
  Param* bias = ps.find("graph.block0.edge_bias.h0");
  REQUIRE(bias != nullptr);
  CHECK(bias->value == std::vector<double>{0, 0, 0, 0});  // zero-init
  bias->value[3] = 4.0;  // favor self loops on head 0
  AttnRecord after = run();

  // Head 0 self-attention grows, head 1 untouched.
  const AttnMatrix& b0 = before[0];
  const AttnMatrix& a0 = after[0];
  for (int i = 0; i < b0.rows; ++i)
    CHECK(a0.weights[static_cast<size_t>(i) * b0.cols + i] >
          b0.weights[static_cast<size_t>(i) * b0.cols + i]);
  CHECK(before[1].weights == after[1].weights);
}

TEST_CASE("cross attention attends queries over a different key set") {
  ParamStore ps;
  InitRng rng(4);
  MhaParams p = MhaParams::create(ps, "x", 8, 2, 0.0, rng);
  Tape tp;
  Tensor q = tp.constant({3, 8}, 0.25);
  Tensor kv = tp.constant({5, 8}, -0.5);
  DropoutState drop;
  AttnRecord rec;
  Tensor out = multihead_attention(tp, ps, p, q, kv, nullptr, drop, &rec, "cross", 0);
  CHECK(out.rows() == 3);
  CHECK(out.cols() == 8);
  REQUIRE(rec.size() == 2);
  CHECK(rec[0].rows == 3);
  CHECK(rec[0].cols == 5);
}

TEST_CASE("graph encoder is equivariant under node permutations") {
  auto [devices, pins] = parse_netlist(
      ".SUBCKT NAND2D1 A B Y VDD VSS\n"
      "MP1 Y A VDD VDD pmos W=80n L=20n\n"
      "MP2 Y B VDD VDD pmos W=80n L=20n\n"
      "MN1 Y A n1 VSS nmos W=80n L=20n\n"
      "MN2 n1 B VSS VSS nmos W=80n L=20n\n"
      ".ENDS\n");
  CellGraph g = build_graph(devices, pins);

  // Swap the two PMOS devices and two nets; remap all edge references.
  CellGraph p = g;
  std::swap(p.devices[0], p.devices[1]);
  std::swap(p.nets[0], p.nets[1]);
  auto dev_map = [](int d) { return d == 0 ? 1 : d == 1 ? 0 : d; };
  auto net_map = [](int n) { return n == 0 ? 1 : n == 1 ? 0 : n; };
  for (auto& e : p.conn_edges) {
    e.device_idx = dev_map(e.device_idx);
    e.net_idx = net_map(e.net_idx);
  }
  for (auto& [a, b] : p.corr_edges) {
    a = net_map(a);
    b = net_map(b);
    if (a > b) std::swap(a, b);
  }
  p.node_features = encode_features(p);

  GraphEncoderConfig cfg;
  cfg.d = 16;
  cfg.heads = 2;
  cfg.layers = 2;
  ParamStore ps;
  InitRng rng(6);
  auto enc = GraphEncoder::create(ps, cfg, rng);

  Tape tg, tp2;
  DropoutState d1, d2;
  Tensor zg = enc.encode(tg, ps, g, build_mask(g), d1);
  Tensor zp = enc.encode(tp2, ps, p, build_mask(p), d2);

  auto row = [&](const Tensor& z, int r, int c) { return z.at(r, c); };
  for (int c = 0; c < cfg.d; ++c) {
    CHECK(row(zg, 0, c) == doctest::Approx(row(zp, 1, c)).epsilon(1e-12));
    CHECK(row(zg, 1, c) == doctest::Approx(row(zp, 0, c)).epsilon(1e-12));
    CHECK(row(zg, 2, c) == doctest::Approx(row(zp, 2, c)).epsilon(1e-12));
    // Net nodes start at |devices| = 4; nets 0 and 1 swapped.
    CHECK(row(zg, 4, c) == doctest::Approx(row(zp, 5, c)).epsilon(1e-12));
    CHECK(row(zg, 6, c) == doctest::Approx(row(zp, 6, c)).epsilon(1e-12));
  }
}
