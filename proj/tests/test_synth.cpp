#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "fusioncell/synth.hpp"

using namespace fc;

namespace {

std::string slurp(const std::filesystem::path& p) {
  std::ifstream f(p, std::ios::binary);
  REQUIRE(f.good());
  std::ostringstream ss;
  ss << f.rdbuf();
  return ss.str();
}

}  // namespace

TEST_CASE("generate_cell is deterministic per seed and varies across seeds") {
  SynthConfig cfg;
  GeneratedCell a = generate_cell("NAND2", 1, 42, cfg);
  GeneratedCell b = generate_cell("NAND2", 1, 42, cfg);
  GeneratedCell c = generate_cell("NAND2", 1, 43, cfg);
  CHECK(a.netlist_text == b.netlist_text);
  CHECK(layout_to_json_text(a.layout) == layout_to_json_text(b.layout));
  CHECK(a.netlist_text == c.netlist_text);  // netlist depends on family/drive only
  CHECK(layout_to_json_text(a.layout) != layout_to_json_text(c.layout));
  CHECK(a.cell_type == "NAND2D1");
}

TEST_CASE("generated cells parse, validate and rasterize") {
  SynthConfig cfg;
  for (const char* fam : {"INV", "NAND2", "NOR2", "AOI21"})
    for (int drive : {1, 2}) {
      GeneratedCell cell = generate_cell(fam, drive, 7, cfg);
      auto [devices, pins] = parse_netlist(cell.netlist_text);
      CellGraph g = build_graph(devices, pins, cell.cell_type);
      int outputs = 0;
      for (const Net& n : g.nets) outputs += n.is_output;
      CHECK(outputs == 1);
      CHECK_NOTHROW(cell.layout.validate());
      LayoutTensor t = rasterize(cell.layout, RasterConfig{});
      double occupied = 0;
      for (double v : t.data) occupied += v != 0;
      CHECK(occupied > 100);  // sanity: the cell is actually drawn
    }
  CHECK_THROWS(generate_cell("XOR9", 1, 1, SynthConfig{}));
}

TEST_CASE("extract_rc matches hand-computed wire parasitics") {
  SynthConfig cfg;
  LayoutDesign d;
  d.cell_name = "rc";
  d.width = 640;
  d.height = 320;
  d.net_names = {{0, "A"}, {1, "B"}};
  d.rects.push_back({Layer::M1, 100, 100, 200, 120, 0});  // 100x20
  d.rects.push_back({Layer::M1, 120, 130, 170, 150, 1});  // parallel below, gap 10

  auto rc = extract_rc(d, cfg);
  REQUIRE(rc.size() == 2);
  const RcNet& a = rc[0];
  CHECK(a.name == "A");
  // R = 10 ohm/sq * (100/20) squares.
  CHECK(a.resistance_ohm == doctest::Approx(50.0));
  // C = (0.04 aF/nm^2 * 2000 nm^2 + 0.05 aF/nm * 240 nm) / 1000.
  CHECK(a.ground_cap_ff == doctest::Approx((0.04 * 2000 + 0.05 * 240) / 1000.0));
  // Coupling: 50 nm parallel overlap at 10 nm spacing.
  REQUIRE(a.coupling_cap_ff.count("B"));
  CHECK(a.coupling_cap_ff.at("B") == doctest::Approx(2.0 * 50 / 10 / 1000.0));
  CHECK(rc[1].coupling_cap_ff.at("A") == doctest::Approx(a.coupling_cap_ff.at("B")));
}

TEST_CASE("label_cell matches a hand-built Elmore calculation for the inverter") {
  SynthConfig cfg;
  auto [devices, pins] = parse_netlist(
      ".SUBCKT INVD1 A Y VDD VSS\n"
      "MP1 Y A VDD VDD pmos W=80n L=20n\n"
      "MN1 Y A VSS VSS nmos W=40n L=20n\n"
      ".ENDS\n");
  CellGraph g = build_graph(devices, pins, "INVD1");

  std::vector<RcNet> rc(1);
  rc[0].name = "Y";
  rc[0].resistance_ohm = 100;
  rc[0].ground_cap_ff = 0.2;

  TargetVector y = label_cell(g, rc, cfg);

  // Device drain caps on Y: 0.4 aF/nm * (80 + 40) nm = 0.048 fF.
  const double cdev = 0.4 * (80 + 40) / 1000.0;
  const double rp = 40000.0 * 20 / 80;   // 10 kOhm pull-up
  const double rn = 40000.0 * 20 / 40;   // 20 kOhm pull-down
  auto elmore_ps = [&](double rdev) {
    const double near = rdev * (0.2 / 2 + cdev);
    const double far = (rdev + 100) * (0.2 / 2 + cfg.load_cap_ff);
    return (near + far) / 1000.0;  // ohm*fF -> ps
  };
  CHECK(y.rise_delay == doctest::Approx(std::log(2.0) * elmore_ps(rp)).epsilon(1e-12));
  CHECK(y.fall_delay == doctest::Approx(std::log(2.0) * elmore_ps(rn)).epsilon(1e-12));
  CHECK(y.rise_trans == doctest::Approx(std::log(9.0) * elmore_ps(rp)).epsilon(1e-12));
  CHECK(y.fall_trans == doctest::Approx(std::log(9.0) * elmore_ps(rn)).epsilon(1e-12));

  const double csw = 0.2 + cdev + cfg.load_cap_ff;
  CHECK(y.rise_power == doctest::Approx(0.5 * csw * 0.7 * 0.7).epsilon(1e-12));
  CHECK(y.fall_power == doctest::Approx(y.rise_power).epsilon(1e-12));
}

TEST_CASE("label_cell walks series stacks and takes the worst path") {
  SynthConfig cfg;
  auto [devices, pins] = parse_netlist(
      ".SUBCKT NAND2D1 A B Y VDD VSS\n"
      "MP1 Y A VDD VDD pmos W=80n L=20n\n"
      "MP2 Y B VDD VDD pmos W=80n L=20n\n"
      "MN1 Y A n1 VSS nmos W=80n L=20n\n"
      "MN2 n1 B VSS VSS nmos W=80n L=20n\n"
      ".ENDS\n");
  CellGraph g = build_graph(devices, pins, "NAND2D1");

  std::vector<RcNet> rc(2);
  rc[0].name = "Y";
  rc[0].resistance_ohm = 50;
  rc[0].ground_cap_ff = 0.1;
  rc[1].name = "n1";
  rc[1].resistance_ohm = 20;
  rc[1].ground_cap_ff = 0.05;

  TargetVector y = label_cell(g, rc, cfg);

  const double rdev = 40000.0 * 20 / 80;  // every device is W=80
  // Fall: series MN1+MN2 through n1. Caps: n1 wire + source(MN1) + drain(MN2).
  const double c_n1 = 0.05 + 2 * 0.4 * 80 / 1000.0;
  const double c_y_near = 0.1 / 2 + 3 * 0.4 * 80 / 1000.0;  // 3 drains on Y
  const double c_y_far = 0.1 / 2 + cfg.load_cap_ff;
  const double e_fall = rdev * c_n1 + 2 * rdev * c_y_near + (2 * rdev + 50) * c_y_far;
  CHECK(y.fall_delay == doctest::Approx(std::log(2.0) * e_fall / 1000.0).epsilon(1e-12));

  // Rise: two parallel single-PMOS paths, both identical; worst = either.
  const double e_rise = rdev * c_y_near + (rdev + 50) * c_y_far;
  CHECK(y.rise_delay == doctest::Approx(std::log(2.0) * e_rise / 1000.0).epsilon(1e-12));

  // Fall switches n1 too, so it burns more energy than rise.
  CHECK(y.fall_power > y.rise_power);
  CHECK(y.fall_power - y.rise_power ==
        doctest::Approx(0.5 * c_n1 * 0.49).epsilon(1e-9));
}

TEST_CASE("label_cell error handling") {
  SynthConfig cfg;
  auto [devices, pins] = parse_netlist(
      ".SUBCKT INVD1 A Y VDD VSS\n"
      "MP1 Y A VDD VDD pmos W=80n L=20n\n"
      "MN1 Y A VSS VSS nmos W=40n L=20n\n"
      ".ENDS\n");
  CellGraph g = build_graph(devices, pins);
  CHECK_THROWS_WITH_AS(label_cell(g, {}, cfg), doctest::Contains("missing rc entry"),
                       std::invalid_argument);
}

TEST_CASE("full generated cells produce positive, ordered labels") {
  SynthConfig cfg;
  for (uint64_t seed : {1ULL, 2ULL, 3ULL}) {
    GeneratedCell cell = generate_cell("AOI21", 2, seed, cfg);
    auto [devices, pins] = parse_netlist(cell.netlist_text);
    CellGraph g = build_graph(devices, pins, cell.cell_type);
    TargetVector y = label_cell(g, extract_rc(cell.layout, cfg), cfg);
    for (double v : y.as_array()) CHECK(v > 0);
    // Transition = ln9/ln2 * delay by construction.
    CHECK(y.rise_trans / y.rise_delay == doctest::Approx(std::log(9.0) / std::log(2.0)));
  }
}

TEST_CASE("build_dataset writes a deterministic, loadable corpus") {
  namespace fs = std::filesystem;
  SynthConfig cfg;
  cfg.variants_per_type = 2;
  cfg.families = {{"INV", {1, 2}}, {"NOR2", {1}}};

  const fs::path dir1 = fs::temp_directory_path() / "fc_ds_a";
  const fs::path dir2 = fs::temp_directory_path() / "fc_ds_b";
  fs::remove_all(dir1);
  fs::remove_all(dir2);
  build_dataset(cfg, dir1.string());
  build_dataset(cfg, dir2.string());

  for (const char* f : {"manifest.json", "labels.csv"})
    CHECK(slurp(dir1 / f) == slurp(dir2 / f));

  nlohmann::json manifest = nlohmann::json::parse(slurp(dir1 / "manifest.json"));
  REQUIRE(manifest.at("entries").size() == static_cast<size_t>(cfg.num_cells()));
  for (const auto& e : manifest.at("entries")) {
    CHECK(fs::exists(dir1 / e.at("netlist").get<std::string>()));
    CHECK(fs::exists(dir1 / e.at("layout").get<std::string>()));
    CHECK(e.at("labels").at("rise_delay").get<double>() > 0);
  }

  std::istringstream csv(slurp(dir1 / "labels.csv"));
  std::string line;
  std::getline(csv, line);
  CHECK(line ==
        "id,rise_delay_ps,fall_delay_ps,rise_trans_ps,fall_trans_ps,rise_power_fj,fall_power_fj");
  int rows = 0;
  while (std::getline(csv, line))
    if (!line.empty()) ++rows;
  CHECK(rows == cfg.num_cells());

  fs::remove_all(dir1);
  fs::remove_all(dir2);
}

TEST_CASE("synth config json round trip") {
  SynthConfig cfg;
  cfg.seed = 99;
  cfg.variants_per_type = 5;
  cfg.families = {{"INV", {1, 4}}};
  cfg.load_cap_ff = 2.5;
  SynthConfig back = synth_config_from_json(synth_config_to_json(cfg));
  CHECK(back.seed == 99);
  CHECK(back.variants_per_type == 5);
  REQUIRE(back.families.size() == 1);
  CHECK(back.families[0].function == "INV");
  CHECK(back.families[0].drives == std::vector<int>{1, 4});
  CHECK(back.load_cap_ff == 2.5);
  CHECK(synth_config_from_json(nlohmann::json::object()).seed == SynthConfig{}.seed);
}
