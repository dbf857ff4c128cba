#include <doctest.h>

#include <cmath>

#include "fusioncell/fusion.hpp"

using namespace fc;

namespace {

ModelConfig tiny_config(Variant v) {
  ModelConfig c;
  c.variant = v;
  c.d = 16;
  c.heads = 2;
  c.layout_layers = 1;
  c.graph_layers = 1;
  c.ffn_mult = 2;
  c.patch_size = 8;
  c.canvas_h = 16;
  c.canvas_w = 16;
  c.dropout = 0.1;
  return c;
}

CellGraph inv_graph() {
  auto [devices, pins] = parse_netlist(
      ".SUBCKT INVD1 A Y VDD VSS\n"
      "MP1 Y A VDD VDD pmos W=80n L=20n\n"
      "MN1 Y A VSS VSS nmos W=40n L=20n\n"
      ".ENDS\n");
  return build_graph(devices, pins, "INVD1");
}

LayoutTensor raster16() {
  LayoutTensor t;
  t.height = 16;
  t.width = 16;
  t.data.assign(3 * 16 * 16, 0.0);
  for (int y = 0; y < 16; ++y)
    for (int x = 0; x < 16; ++x) t.at(0, y, x) = ((x + y) % 3) * 0.25;
  return t;
}

}  // namespace

TEST_CASE("every variant predicts six finite values") {
  LayoutTensor t = raster16();
  CellGraph g = inv_graph();
  AdjacencyMask m = build_mask(g);
  for (Variant v : {Variant::fusioncell, Variant::fusioncell_no_corr, Variant::vision_only,
                    Variant::late_fusion, Variant::symmetrical}) {
    FusionModel model = FusionModel::create(tiny_config(v), 11);
    auto y = model.predict(&t, variant_uses_graph(v) ? &g : nullptr,
                           variant_uses_graph(v) ? &m : nullptr);
    for (double x : y) CHECK(std::isfinite(x));
  }
}

TEST_CASE("variant helper flags") {
  CHECK(variant_uses_graph(Variant::fusioncell));
  CHECK_FALSE(variant_uses_graph(Variant::vision_only));
  CHECK(variant_has_cross_attention(Variant::symmetrical));
  CHECK_FALSE(variant_has_cross_attention(Variant::late_fusion));
  CHECK(variant_from_name("fusioncell_no_corr") == Variant::fusioncell_no_corr);
  CHECK_THROWS(variant_from_name("nope"));
  for (Variant v : {Variant::fusioncell, Variant::late_fusion})
    CHECK(variant_from_name(variant_name(v)) == v);
}

TEST_CASE("graph-consuming variants reject a missing graph") {
  LayoutTensor t = raster16();
  FusionModel model = FusionModel::create(tiny_config(Variant::fusioncell), 1);
  CHECK_THROWS(model.predict(&t, nullptr, nullptr));
  FusionModel vis = FusionModel::create(tiny_config(Variant::vision_only), 1);
  CHECK_NOTHROW(vis.predict(&t, nullptr, nullptr));
}

TEST_CASE("model config json round trip") {
  ModelConfig c = tiny_config(Variant::late_fusion);
  c.head_hidden = 24;
  ModelConfig back = ModelConfig::from_json(c.to_json());
  CHECK(back.variant == c.variant);
  CHECK(back.d == c.d);
  CHECK(back.patch_size == c.patch_size);
  CHECK(back.head_hidden == 24);
  CHECK(back.head_hidden_dim() == 24);
  CHECK(tiny_config(Variant::fusioncell).head_hidden_dim() == 16);
}

TEST_CASE("training loss reaches every parameter group of the full variant") {
  LayoutTensor t = raster16();
  CellGraph g = inv_graph();
  AdjacencyMask m = build_mask(g);
  FusionModel model = FusionModel::create(tiny_config(Variant::fusioncell), 2);

  Tape tp;
  DropoutState drop;  // eval mode keeps the check deterministic
  Tensor out = model.forward(tp, &t, &g, &m, drop);
  Tensor target = tp.constant({1, kNumTargets}, 1.0);
  Tensor diff = sub(out, target);
  tp.backward(sum_all(mul(diff, diff)));

  ParamStore& ps = model.params();
  int touched = 0;
  for (size_t i = 0; i < ps.count(); ++i) {
    const Param& p = ps.at(static_cast<int>(i));
    double norm = 0;
    for (double gv : p.grad) norm += std::abs(gv);
    if (norm > 0) ++touched;
  }
  // Everything except the unused distillation-token pathway should get
  // gradient; allow a small number of dead params but not whole subsystems.
  CHECK(touched >= static_cast<int>(ps.count()) - 2);
  CHECK(ps.find("layout.patch_proj.w") != nullptr);
  CHECK(ps.find("graph.in_proj.w") != nullptr);
  CHECK(ps.find("cross.wq.w") != nullptr);
  CHECK(ps.find("head.fc2.w") != nullptr);
}

TEST_CASE("attention dump names nodes and tokens") {
  LayoutTensor t = raster16();
  CellGraph g = inv_graph();
  AdjacencyMask m = build_mask(g);
  FusionModel model = FusionModel::create(tiny_config(Variant::fusioncell), 3);
  AttnRecord rec;
  model.predict(&t, &g, &m, &rec);
  nlohmann::json j = attention_dump_json(g, rec, 2, 2);

  REQUIRE(j.contains("MP1"));
  REQUIRE(j.contains("Y"));
  const auto& row = j.at("MP1");
  REQUIRE(row.size() == 6);  // cls + dist + 4 patches
  CHECK(row[0][0] == "cls");
  CHECK(row[1][0] == "dist");
  CHECK(row[2][0] == "p_0_0");
  double sum = 0;
  for (const auto& e : row) sum += e[1].get<double>();
  CHECK(sum == doctest::Approx(1.0).epsilon(1e-9));
}

TEST_CASE("attention dump requires a cross-attention variant") {
  LayoutTensor t = raster16();
  CellGraph g = inv_graph();
  AdjacencyMask m = build_mask(g);
  FusionModel model = FusionModel::create(tiny_config(Variant::late_fusion), 3);
  AttnRecord rec;
  model.predict(&t, &g, &m, &rec);
  CHECK_THROWS(attention_dump_json(g, rec, 2, 2));
}

TEST_CASE("pool_tokens averages rows") {
  Tape tp;
  Tensor x = tp.constant({3, 2}, {1, 2, 3, 4, 5, 6});
  Tensor p = pool_tokens(tp, x);
  CHECK(p.rows() == 1);
  CHECK(p.at(0, 0) == doctest::Approx(3.0));
  CHECK(p.at(0, 1) == doctest::Approx(4.0));
}
