#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "fusioncell/fusion.hpp"
#include "fusioncell/geometry.hpp"
#include "fusioncell/netlist.hpp"

namespace fc {

struct FamilySpec {
  std::string function;      // INV, NAND2, NOR2, AOI21
  std::vector<int> drives;   // drive codes; device widths scale linearly
};

struct SynthConfig {
  uint64_t seed = 12345;
  std::vector<FamilySpec> families = {
      {"INV", {1, 2}}, {"NAND2", {1, 2}}, {"NOR2", {1, 2}}, {"AOI21", {1, 2}}};
  int variants_per_type = 10;

  double canvas_w_nm = 640, canvas_h_nm = 320;
  double wire_width_nm = 20;

  // Process constants for the analytic RC oracle.
  double sheet_res_ohm_sq = 10.0;     // wire sheet resistance
  double area_cap_af_nm2 = 0.04;      // wire area capacitance
  double fringe_cap_af_nm = 0.05;     // wire fringe capacitance per edge length
  double coupling_cap_af_nm = 2.0;    // aF per nm overlap at 1 nm spacing
  double device_res_ohm_sq = 40000.0; // on-resistance = this * L/W
  double device_cap_af_nm = 0.4;      // terminal capacitance per nm of width
  double load_cap_ff = 1.0;
  double input_slew_ps = 10.0;        // recorded with the dataset; first-order
                                      // Elmore labels do not depend on it
  double vdd = 0.7;

  int num_cell_types() const {
    int n = 0;
    for (const auto& f : families) n += static_cast<int>(f.drives.size());
    return n;
  }
  int num_cells() const { return num_cell_types() * variants_per_type; }
};

// Per-net parasitics produced by the extraction stand-in.
struct RcNet {
  std::string name;
  double resistance_ohm = 0;
  double ground_cap_ff = 0;
  std::map<std::string, double> coupling_cap_ff;  // per neighbor net
};

struct GeneratedCell {
  std::string netlist_text;
  LayoutDesign layout;
  std::string cell_type;
};

// Canonical transistor topology for the family, W scaled by the drive code;
// layout routing (detours, track choices, via jitter) is randomized by
// variant_seed so variants share a netlist but differ in geometry.
GeneratedCell generate_cell(const std::string& family, int drive, uint64_t variant_seed,
                            const SynthConfig& cfg);

std::vector<RcNet> extract_rc(const LayoutDesign& design, const SynthConfig& cfg);

// Elmore-based labels, raw units (ps / fJ). Throws if a signal net carries no
// rc entry.
TargetVector label_cell(const CellGraph& graph, const std::vector<RcNet>& rc,
                        const SynthConfig& cfg);

// Writes netlists, layout JSONs, labels.csv and manifest.json under out_dir.
// Deterministic: the same config produces byte-identical files.
void build_dataset(const SynthConfig& cfg, const std::string& out_dir);

SynthConfig synth_config_from_json(const nlohmann::json& j);
nlohmann::json synth_config_to_json(const SynthConfig& cfg);

}  // namespace fc
