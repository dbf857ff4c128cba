#include "fusioncell/synth.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>
#include <stdexcept>

namespace fc {

namespace {

constexpr double kLn2 = 0.6931471805599453;
constexpr double kLn9 = 2.1972245773362196;

// Deterministic small PRNG; std::shuffle is avoided so streams do not depend
// on the standard library's distribution internals.
struct Rng {
  uint64_t state;
  explicit Rng(uint64_t seed) : state(seed) {}
  uint64_t next() {
    uint64_t z = (state += 0x9e3779b97f4a7c15ULL);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
  }
  int below(int n) { return static_cast<int>(next() % static_cast<uint64_t>(n)); }
  template <class T>
  void shuffle(std::vector<T>& v) {
    for (int i = static_cast<int>(v.size()) - 1; i > 0; --i) std::swap(v[i], v[below(i + 1)]);
  }
};

uint64_t derive_seed(uint64_t base, uint64_t salt) {
  Rng r(base ^ (salt * 0x2545f4914f6cdd1dULL + 0x9e3779b97f4a7c15ULL));
  return r.next();
}

struct DeviceLine {
  std::string name, d, g, s, b, model;
  int w_nm;
};

// Canonical transistor topologies. Widths are in units of the base width and
// scale linearly with the drive code.
void family_topology(const std::string& family, int wbase, std::vector<DeviceLine>& devs,
                     std::vector<std::string>& pins) {
  const int w = wbase, w2 = 2 * wbase, w4 = 4 * wbase;
  if (family == "INV") {
    pins = {"A", "Y", "VDD", "VSS"};
    devs = {{"MP1", "Y", "A", "VDD", "VDD", "pmos", w2}, {"MN1", "Y", "A", "VSS", "VSS", "nmos", w}};
  } else if (family == "NAND2") {
    pins = {"A", "B", "Y", "VDD", "VSS"};
    devs = {{"MP1", "Y", "A", "VDD", "VDD", "pmos", w2},
            {"MP2", "Y", "B", "VDD", "VDD", "pmos", w2},
            {"MN1", "Y", "A", "n1", "VSS", "nmos", w2},
            {"MN2", "n1", "B", "VSS", "VSS", "nmos", w2}};
  } else if (family == "NOR2") {
    pins = {"A", "B", "Y", "VDD", "VSS"};
    devs = {{"MP1", "n1", "A", "VDD", "VDD", "pmos", w4},
            {"MP2", "Y", "B", "n1", "VDD", "pmos", w4},
            {"MN1", "Y", "A", "VSS", "VSS", "nmos", w},
            {"MN2", "Y", "B", "VSS", "VSS", "nmos", w}};
  } else if (family == "AOI21") {
    pins = {"A1", "A2", "B", "Y", "VDD", "VSS"};
    devs = {{"MP1", "Y", "A1", "n2", "VDD", "pmos", w4},
            {"MP2", "Y", "A2", "n2", "VDD", "pmos", w4},
            {"MP3", "n2", "B", "VDD", "VDD", "pmos", w2},
            {"MN1", "Y", "A1", "n1", "VSS", "nmos", w2},
            {"MN2", "n1", "A2", "VSS", "VSS", "nmos", w2},
            {"MN3", "Y", "B", "VSS", "VSS", "nmos", w}};
  } else {
    throw std::invalid_argument("generate_cell: unsupported family " + family);
  }
}

}  // namespace

GeneratedCell generate_cell(const std::string& family, int drive, uint64_t variant_seed,
                            const SynthConfig& cfg) {
  if (drive < 1) throw std::invalid_argument("generate_cell: drive code must be >= 1");
  const int wbase = 40 * drive;
  std::vector<DeviceLine> devs;
  std::vector<std::string> pins;
  family_topology(family, wbase, devs, pins);
  const std::string cell_type = family + "D" + std::to_string(drive);

  std::ostringstream sp;
  sp << "* " << cell_type << " synthetic cell\n.SUBCKT " << cell_type;
  for (const auto& p : pins) sp << " " << p;
  sp << "\n";
  for (const auto& d : devs)
    sp << d.name << " " << d.d << " " << d.g << " " << d.s << " " << d.b << " " << d.model
       << " W=" << d.w_nm << "n L=20n\n";
  sp << ".ENDS\n";

  // Net order for the layout: signal pins, internal nets, then VDD/VSS with
  // the two highest ids so rail values stay stable across variants.
  std::vector<std::string> nets;
  for (const auto& p : pins)
    if (p != "VDD" && p != "VSS") nets.push_back(p);
  for (const auto& d : devs)
    for (const std::string* t : {&d.d, &d.g, &d.s, &d.b})
      if (std::find(nets.begin(), nets.end(), *t) == nets.end() && *t != "VDD" && *t != "VSS")
        nets.push_back(*t);
  nets.push_back("VDD");
  nets.push_back("VSS");

  LayoutDesign layout;
  layout.cell_name = cell_type;
  layout.width = cfg.canvas_w_nm;
  layout.height = cfg.canvas_h_nm;
  for (size_t i = 0; i < nets.size(); ++i) layout.net_names[static_cast<int>(i)] = nets[i];

  const double hw = cfg.wire_width_nm / 2.0;
  const int num_nets = static_cast<int>(nets.size());

  // Disjoint M1 tracks and M2 columns per net keep layers short-free.
  std::vector<double> tracks, cols;
  for (double y = 30; y + hw <= cfg.canvas_h_nm - 10; y += 36) tracks.push_back(y);
  for (double x = 30; x + hw <= cfg.canvas_w_nm - 10; x += 40) cols.push_back(x);
  std::vector<double> device_x;
  for (size_t i = 0; i < devs.size(); ++i) device_x.push_back(60 + 70.0 * static_cast<double>(i));
  if (static_cast<int>(tracks.size()) < num_nets || static_cast<int>(cols.size()) < num_nets ||
      device_x.back() + 15 > cfg.canvas_w_nm ||
      20 + 24.0 * (num_nets - 1) + 8 > cfg.canvas_h_nm)
    throw std::invalid_argument("generate_cell: routing canvas too small");

  // Tracks and columns are assigned by net order so the wiring plan is fixed
  // per cell type; variants differ only in the randomized wire lengths below.
  Rng rng(variant_seed);
  std::vector<int> track_of(num_nets), col_of(num_nets);
  for (int i = 0; i < num_nets; ++i) track_of[i] = col_of[i] = i;

  auto net_id = [&](const std::string& name) {
    return static_cast<int>(std::find(nets.begin(), nets.end(), name) - nets.begin());
  };

  for (int ni = 0; ni < num_nets; ++ni) {
    const std::string& net = nets[ni];
    const double m0_y = 20 + 24.0 * ni;
    const double trunk_y = tracks[track_of[ni]];
    const double col_x = cols[col_of[ni]];

    std::vector<double> touch_x = {col_x};
    for (size_t di = 0; di < devs.size(); ++di) {
      const DeviceLine& d = devs[di];
      int hits = 0;
      for (const std::string* t : {&d.d, &d.g, &d.s, &d.b})
        if (*t == net) ++hits;
      if (!hits) continue;
      const double xd = device_x[di];
      layout.rects.push_back({Layer::M0, xd - 15, m0_y - 8, xd + 15, m0_y + 8, ni});
      const double jitter = (rng.below(9) - 4);
      layout.vias.push_back({Layer::M0, xd + jitter, m0_y, 12, ni});
      touch_x.push_back(xd);
    }

    // M1 trunk with randomized detour extensions; this is the geometry the
    // variants differ in.
    const double det_l = 10.0 * rng.below(16);
    const double det_r = 10.0 * rng.below(16);
    double xlo = *std::min_element(touch_x.begin(), touch_x.end()) - 20 - det_l;
    double xhi = *std::max_element(touch_x.begin(), touch_x.end()) + 20 + det_r;
    xlo = std::max(xlo, 10.0);
    xhi = std::min(xhi, cfg.canvas_w_nm - 10);
    layout.rects.push_back({Layer::M1, xlo, trunk_y - hw, xhi, trunk_y + hw, ni});

    // M2 riser between the M0 row and the trunk, with a random stub.
    const double ext = 10.0 * rng.below(11);
    double ylo = std::min(m0_y, trunk_y) - 10;
    double yhi = std::max(m0_y, trunk_y) + 10 + ext;
    ylo = std::max(ylo, 10.0);
    yhi = std::min(yhi, cfg.canvas_h_nm - 10);
    layout.rects.push_back({Layer::M2, col_x - hw, ylo, col_x + hw, yhi, ni});
    layout.vias.push_back({Layer::M1, col_x, trunk_y, 12, ni});
  }

  layout.validate();
  return {sp.str(), layout, cell_type};
}

std::vector<RcNet> extract_rc(const LayoutDesign& design, const SynthConfig& cfg) {
  design.validate();
  std::map<int, RcNet> by_id;
  for (const auto& [id, name] : design.net_names) by_id[id].name = name;

  for (const Rect& r : design.rects) {
    const double dx = r.x1 - r.x0, dy = r.y1 - r.y0;
    const double len = std::max(dx, dy), wid = std::min(dx, dy);
    RcNet& n = by_id[r.net_id];
    n.resistance_ohm += cfg.sheet_res_ohm_sq * len / wid;
    n.ground_cap_ff +=
        (cfg.area_cap_af_nm2 * dx * dy + cfg.fringe_cap_af_nm * 2 * (dx + dy)) / 1000.0;
  }

  // Coupling from parallel runs on the same layer.
  for (size_t i = 0; i < design.rects.size(); ++i)
    for (size_t j = i + 1; j < design.rects.size(); ++j) {
      const Rect& a = design.rects[i];
      const Rect& b = design.rects[j];
      if (a.layer != b.layer || a.net_id == b.net_id) continue;
      const double xov = std::min(a.x1, b.x1) - std::max(a.x0, b.x0);
      const double yov = std::min(a.y1, b.y1) - std::max(a.y0, b.y0);
      double cc = 0;
      if (xov > 0 && yov <= 0) {
        const double spacing = std::max(a.y0 - b.y1, b.y0 - a.y1);
        if (spacing > 0) cc = cfg.coupling_cap_af_nm * xov / spacing / 1000.0;
      } else if (yov > 0 && xov <= 0) {
        const double spacing = std::max(a.x0 - b.x1, b.x0 - a.x1);
        if (spacing > 0) cc = cfg.coupling_cap_af_nm * yov / spacing / 1000.0;
      }
      if (cc > 0) {
        by_id[a.net_id].coupling_cap_ff[by_id[b.net_id].name] += cc;
        by_id[b.net_id].coupling_cap_ff[by_id[a.net_id].name] += cc;
      }
    }

  std::vector<RcNet> out;
  for (auto& [id, n] : by_id) out.push_back(std::move(n));
  return out;
}

namespace {

struct ElmoreNets {
  std::map<std::string, double> wire_r, wire_c, dev_c;
};

// Simple paths from the output net to the given rail through one device kind,
// walking drain/source terminals.
void find_paths(const CellGraph& g, DeviceKind kind, int net, int rail,
                std::vector<bool>& dev_used, std::vector<int>& devs_on_path,
                std::vector<int>& nets_on_path, std::vector<std::vector<int>>& out_devs,
                std::vector<std::vector<int>>& out_nets) {
  for (size_t di = 0; di < g.devices.size(); ++di) {
    if (dev_used[di] || g.devices[di].kind != kind) continue;
    const Device& d = g.devices[di];
    // drain/source indices as net ids
    auto idx_of = [&](const std::string& name) {
      for (size_t ni = 0; ni < g.nets.size(); ++ni)
        if (g.nets[ni].name == name) return static_cast<int>(ni);
      return -1;
    };
    const int dn = idx_of(d.terminals[static_cast<int>(TerminalRole::drain)]);
    const int sn = idx_of(d.terminals[static_cast<int>(TerminalRole::source)]);
    int next = -1;
    if (dn == net) next = sn;
    else if (sn == net) next = dn;
    if (next < 0) continue;
    if (next == rail) {
      out_devs.push_back(devs_on_path);
      out_devs.back().push_back(static_cast<int>(di));
      out_nets.push_back(nets_on_path);
      continue;
    }
    const Net& nn = g.nets[next];
    if (nn.is_power || nn.is_ground || nn.is_input || nn.is_output) continue;
    if (std::find(nets_on_path.begin(), nets_on_path.end(), next) != nets_on_path.end()) continue;
    dev_used[di] = true;
    devs_on_path.push_back(static_cast<int>(di));
    nets_on_path.push_back(next);
    find_paths(g, kind, next, rail, dev_used, devs_on_path, nets_on_path, out_devs, out_nets);
    nets_on_path.pop_back();
    devs_on_path.pop_back();
    dev_used[di] = false;
  }
}

}  // namespace

TargetVector label_cell(const CellGraph& g, const std::vector<RcNet>& rc, const SynthConfig& cfg) {
  std::map<std::string, const RcNet*> rc_of;
  for (const RcNet& n : rc) rc_of[n.name] = &n;

  auto wire_r = [&](const std::string& net) {
    auto it = rc_of.find(net);
    if (it == rc_of.end()) throw std::invalid_argument("label_cell: missing rc entry for " + net);
    return it->second->resistance_ohm;
  };
  // Coupling folded into ground capacitance (Miller factor 1).
  auto wire_c = [&](const std::string& net) {
    auto it = rc_of.find(net);
    if (it == rc_of.end()) throw std::invalid_argument("label_cell: missing rc entry for " + net);
    double c = it->second->ground_cap_ff;
    for (const auto& [other, cc] : it->second->coupling_cap_ff) c += cc;
    return c;
  };

  // Device contributions per net (drain/source/gate terminals).
  std::map<std::string, double> dev_c;
  for (const Device& d : g.devices)
    for (TerminalRole t : {TerminalRole::drain, TerminalRole::gate, TerminalRole::source})
      dev_c[d.terminals[static_cast<int>(t)]] += cfg.device_cap_af_nm * d.width_nm / 1000.0;

  int out_net = -1, vdd_net = -1, vss_net = -1;
  for (size_t i = 0; i < g.nets.size(); ++i) {
    if (g.nets[i].is_output) out_net = static_cast<int>(i);
    if (g.nets[i].is_power) vdd_net = static_cast<int>(i);
    if (g.nets[i].is_ground) vss_net = static_cast<int>(i);
  }
  if (out_net < 0 || vdd_net < 0 || vss_net < 0)
    throw std::invalid_argument("label_cell: cell must have output, power and ground nets");

  const std::string& out_name = g.nets[out_net].name;
  const double c_out_wire = wire_c(out_name);
  const double r_out_wire = wire_r(out_name);
  const double c_out_node = c_out_wire / 2.0 + dev_c[out_name];
  const double c_out_far = c_out_wire / 2.0 + cfg.load_cap_ff;

  auto edge_delay = [&](DeviceKind kind, int rail, double& internal_cap_sum) {
    std::vector<std::vector<int>> path_devs, path_nets;
    std::vector<bool> used(g.devices.size(), false);
    std::vector<int> dstack, nstack;
    find_paths(g, kind, out_net, rail, used, dstack, nstack, path_devs, path_nets);
    if (path_devs.empty())
      throw std::invalid_argument("label_cell: no conducting path from output to rail");

    double worst = 0;
    std::set<int> internal_union;
    for (size_t p = 0; p < path_devs.size(); ++p) {
      // Devices listed output-side first; walk from the rail end.
      const auto& devs = path_devs[p];
      const auto& nets = path_nets[p];
      double r_cum = 0, e = 0;
      for (int i = static_cast<int>(devs.size()) - 1; i >= 0; --i) {
        const Device& d = g.devices[devs[i]];
        r_cum += cfg.device_res_ohm_sq * d.length_nm / d.width_nm;
        if (i > 0) {
          // Internal node between this device and the next one toward the output.
          const std::string& net = g.nets[nets[i - 1]].name;
          e += r_cum * (wire_c(net) + dev_c[net]);
        }
      }
      e += r_cum * c_out_node;
      e += (r_cum + r_out_wire) * c_out_far;
      worst = std::max(worst, e);
      for (int ni : nets) internal_union.insert(ni);
    }
    internal_cap_sum = 0;
    for (int ni : internal_union) {
      const std::string& net = g.nets[ni].name;
      internal_cap_sum += wire_c(net) + dev_c[net];
    }
    return worst;  // ohm * fF = fs
  };

  double pu_internal = 0, pd_internal = 0;
  const double e_rise = edge_delay(DeviceKind::PMOS, vdd_net, pu_internal);
  const double e_fall = edge_delay(DeviceKind::NMOS, vss_net, pd_internal);

  const double c_switched = c_out_wire + dev_c[out_name] + cfg.load_cap_ff;
  const double v2 = cfg.vdd * cfg.vdd;

  TargetVector y;
  y.rise_delay = kLn2 * e_rise / 1000.0;  // fs -> ps
  y.fall_delay = kLn2 * e_fall / 1000.0;
  y.rise_trans = kLn9 * e_rise / 1000.0;
  y.fall_trans = kLn9 * e_fall / 1000.0;
  y.rise_power = 0.5 * (c_switched + pu_internal) * v2;  // fF * V^2 = fJ
  y.fall_power = 0.5 * (c_switched + pd_internal) * v2;
  return y;
}

namespace {

std::string fmt_double(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.9g", v);
  return buf;
}

}  // namespace

void build_dataset(const SynthConfig& cfg, const std::string& out_dir) {
  namespace fs = std::filesystem;
  fs::create_directories(fs::path(out_dir) / "netlists");
  fs::create_directories(fs::path(out_dir) / "layouts");

  nlohmann::json manifest;
  manifest["seed"] = cfg.seed;
  manifest["config"] = synth_config_to_json(cfg);
  manifest["entries"] = nlohmann::json::array();

  std::ofstream csv(fs::path(out_dir) / "labels.csv");
  csv << "id,rise_delay_ps,fall_delay_ps,rise_trans_ps,fall_trans_ps,rise_power_fj,fall_power_fj\n";

  int type_idx = 0;
  for (const FamilySpec& fam : cfg.families) {
    for (int drive : fam.drives) {
      for (int v = 0; v < cfg.variants_per_type; ++v) {
        const uint64_t vseed = derive_seed(cfg.seed, static_cast<uint64_t>(type_idx) * 100003 + v);
        GeneratedCell cell = generate_cell(fam.function, drive, vseed, cfg);
        const std::string id = cell.cell_type + "_v" + std::to_string(v);

        const std::string sp_rel = "netlists/" + id + ".sp";
        const std::string ly_rel = "layouts/" + id + ".json";
        {
          std::ofstream f(fs::path(out_dir) / sp_rel);
          f << cell.netlist_text;
        }
        save_layout_json(cell.layout, (fs::path(out_dir) / ly_rel).string());

        auto [devices, pins] = parse_netlist(cell.netlist_text);
        CellGraph graph = build_graph(devices, pins, cell.cell_type);
        TargetVector y = label_cell(graph, extract_rc(cell.layout, cfg), cfg);

        csv << id;
        for (double val : y.as_array()) csv << "," << fmt_double(val);
        csv << "\n";

        nlohmann::json labels;
        const auto arr = y.as_array();
        for (int i = 0; i < kNumTargets; ++i) labels[TargetVector::names()[i]] = arr[i];
        manifest["entries"].push_back({{"id", id},
                                       {"cell_type", cell.cell_type},
                                       {"netlist", sp_rel},
                                       {"layout", ly_rel},
                                       {"labels", labels}});
      }
      ++type_idx;
    }
  }

  std::ofstream mf(fs::path(out_dir) / "manifest.json");
  mf << manifest.dump(2) << "\n";
}

nlohmann::json synth_config_to_json(const SynthConfig& c) {
  nlohmann::json fams = nlohmann::json::array();
  for (const auto& f : c.families) fams.push_back({{"function", f.function}, {"drives", f.drives}});
  return {{"seed", c.seed},
          {"families", fams},
          {"variants_per_type", c.variants_per_type},
          {"canvas_w_nm", c.canvas_w_nm},
          {"canvas_h_nm", c.canvas_h_nm},
          {"wire_width_nm", c.wire_width_nm},
          {"sheet_res_ohm_sq", c.sheet_res_ohm_sq},
          {"area_cap_af_nm2", c.area_cap_af_nm2},
          {"fringe_cap_af_nm", c.fringe_cap_af_nm},
          {"coupling_cap_af_nm", c.coupling_cap_af_nm},
          {"device_res_ohm_sq", c.device_res_ohm_sq},
          {"device_cap_af_nm", c.device_cap_af_nm},
          {"load_cap_ff", c.load_cap_ff},
          {"input_slew_ps", c.input_slew_ps},
          {"vdd", c.vdd}};
}

SynthConfig synth_config_from_json(const nlohmann::json& j) {
  SynthConfig c;
  if (j.contains("seed")) c.seed = j["seed"];
  if (j.contains("families")) {
    c.families.clear();
    for (const auto& f : j["families"])
      c.families.push_back({f.at("function"), f.at("drives").get<std::vector<int>>()});
  }
  if (j.contains("variants_per_type")) c.variants_per_type = j["variants_per_type"];
  if (j.contains("canvas_w_nm")) c.canvas_w_nm = j["canvas_w_nm"];
  if (j.contains("canvas_h_nm")) c.canvas_h_nm = j["canvas_h_nm"];
  if (j.contains("wire_width_nm")) c.wire_width_nm = j["wire_width_nm"];
  if (j.contains("sheet_res_ohm_sq")) c.sheet_res_ohm_sq = j["sheet_res_ohm_sq"];
  if (j.contains("area_cap_af_nm2")) c.area_cap_af_nm2 = j["area_cap_af_nm2"];
  if (j.contains("fringe_cap_af_nm")) c.fringe_cap_af_nm = j["fringe_cap_af_nm"];
  if (j.contains("coupling_cap_af_nm")) c.coupling_cap_af_nm = j["coupling_cap_af_nm"];
  if (j.contains("device_res_ohm_sq")) c.device_res_ohm_sq = j["device_res_ohm_sq"];
  if (j.contains("device_cap_af_nm")) c.device_cap_af_nm = j["device_cap_af_nm"];
  if (j.contains("load_cap_ff")) c.load_cap_ff = j["load_cap_ff"];
  if (j.contains("input_slew_ps")) c.input_slew_ps = j["input_slew_ps"];
  if (j.contains("vdd")) c.vdd = j["vdd"];
  return c;
}

}  // namespace fc
