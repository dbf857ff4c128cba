#pragma once

#include <array>
#include <cstdint>
#include <map>
#include <stdexcept>
#include <string>
#include <vector>

namespace fc {

enum class DeviceKind { NMOS, PMOS };
enum class TerminalRole { drain = 0, gate = 1, source = 2, bulk = 3 };

inline const char* terminal_name(TerminalRole t) {
  constexpr const char* names[] = {"drain", "gate", "source", "bulk"};
  return names[static_cast<int>(t)];
}

struct Device {
  std::string name;
  DeviceKind kind = DeviceKind::NMOS;
  double width_nm = 0, length_nm = 0;
  std::array<std::string, 4> terminals;  // indexed by TerminalRole
};

struct PinDecl {
  std::string name;
  bool is_power = false;   // VDD
  bool is_ground = false;  // VSS/GND
};

struct Net {
  std::string name;
  int degree = 0;  // connectivity-edge incidences
  bool is_input = false, is_output = false, is_power = false, is_ground = false;
};

struct ConnEdge {
  int device_idx;
  int net_idx;
  TerminalRole terminal;
};

enum class NodeType { device, net };

// Node order: devices first, then nets. N = |devices| + |nets|.
struct CellGraph {
  std::string cell_type;
  std::vector<Device> devices;
  std::vector<Net> nets;
  std::vector<ConnEdge> conn_edges;
  std::vector<std::pair<int, int>> corr_edges;  // net_idx pairs, i < j
  std::vector<std::vector<double>> node_features;  // N x F
  std::vector<NodeType> node_type_mask;

  int num_nodes() const { return static_cast<int>(devices.size() + nets.size()); }
  int net_node(int net_idx) const { return static_cast<int>(devices.size()) + net_idx; }
};

// Feature layout: device rows [onehot(kind), W/100, L/100, 0...];
// net rows [0,0,0,0, degree/max_degree, in, out, power, ground]. F = 9.
inline constexpr int kNodeFeatureDim = 9;

// Edge types: 0 none, 1 connectivity, 2 correlation, 3 self.
inline constexpr int kNumEdgeTypes = 4;

struct AdjacencyMask {
  int n = 0;
  std::vector<uint8_t> allowed;  // n x n
  std::vector<int> edge_type;    // n x n

  bool is_allowed(int i, int j) const { return allowed[static_cast<size_t>(i) * n + j]; }
  int type(int i, int j) const { return edge_type[static_cast<size_t>(i) * n + j]; }
};

struct ParseError : std::runtime_error {
  int line;
  ParseError(int line_, const std::string& msg)
      : std::runtime_error("line " + std::to_string(line_) + ": " + msg), line(line_) {}
};

// SPICE subset: .SUBCKT name pins... / M<name> d g s b <model> W=<v> L=<v> /
// .ENDS. Case-insensitive keywords; unit suffixes n (nm) and u (um).
std::pair<std::vector<Device>, std::vector<PinDecl>> parse_netlist(const std::string& text);

struct GraphOptions {
  bool correlation_edges = true;  // the no-corr ablation drops these
};

CellGraph build_graph(const std::vector<Device>& devices, const std::vector<PinDecl>& pins,
                      const std::string& cell_type = "", GraphOptions opts = {});

std::vector<std::vector<double>> encode_features(const CellGraph& g);

AdjacencyMask build_mask(const CellGraph& g);

CellGraph load_netlist_file(const std::string& path, const std::string& cell_type = "",
                            GraphOptions opts = {});

}  // namespace fc
