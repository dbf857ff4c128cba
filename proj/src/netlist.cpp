#include "fusioncell/netlist.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <set>
#include <sstream>
#include <stdexcept>

namespace fc {

namespace {

std::string lower(std::string s) {
  std::transform(s.begin(), s.end(), s.begin(), [](unsigned char c) { return std::tolower(c); });
  return s;
}

std::string upper(std::string s) {
  std::transform(s.begin(), s.end(), s.begin(), [](unsigned char c) { return std::toupper(c); });
  return s;
}

std::vector<std::string> tokenize(const std::string& line) {
  std::vector<std::string> toks;
  std::istringstream ss(line);
  std::string t;
  while (ss >> t) toks.push_back(t);
  return toks;
}

// "81n" -> 81 nm, "0.5u" -> 500 nm, bare numbers are nm.
double parse_dimension(const std::string& tok, int line) {
  std::string s = lower(tok);
  double mult = 1.0;
  if (!s.empty() && (s.back() == 'n' || s.back() == 'u')) {
    mult = s.back() == 'u' ? 1000.0 : 1.0;
    s.pop_back();
  }
  size_t pos = 0;
  double v;
  try {
    v = std::stod(s, &pos);
  } catch (const std::exception&) {
    throw ParseError(line, "bad dimension value '" + tok + "'");
  }
  if (pos != s.size()) throw ParseError(line, "bad dimension value '" + tok + "'");
  if (!(v > 0)) throw ParseError(line, "dimension must be positive: '" + tok + "'");
  return v * mult;
}

}  // namespace

std::pair<std::vector<Device>, std::vector<PinDecl>> parse_netlist(const std::string& text) {
  std::vector<Device> devices;
  std::vector<PinDecl> pins;
  bool in_subckt = false, ended = false;

  std::istringstream ss(text);
  std::string line;
  int lineno = 0;
  while (std::getline(ss, line)) {
    ++lineno;
    const auto toks = tokenize(line);
    if (toks.empty() || toks[0][0] == '*' || toks[0][0] == ';') continue;
    const std::string head = lower(toks[0]);

    if (head == ".subckt") {
      if (in_subckt || ended) throw ParseError(lineno, "unexpected .SUBCKT");
      if (toks.size() < 2) throw ParseError(lineno, ".SUBCKT needs a name");
      for (size_t i = 2; i < toks.size(); ++i) {
        PinDecl p;
        p.name = toks[i];
        const std::string u = upper(toks[i]);
        p.is_power = u == "VDD";
        p.is_ground = u == "VSS" || u == "GND";
        pins.push_back(p);
      }
      in_subckt = true;
    } else if (head == ".ends") {
      if (!in_subckt) throw ParseError(lineno, ".ENDS without .SUBCKT");
      in_subckt = false;
      ended = true;
    } else if (head[0] == 'm') {
      if (!in_subckt) throw ParseError(lineno, "device line outside .SUBCKT");
      if (toks.size() != 8)
        throw ParseError(lineno, "device line needs: M<name> d g s b <model> W=<v> L=<v>");
      Device d;
      d.name = toks[0];
      for (int i = 0; i < 4; ++i) d.terminals[i] = toks[1 + i];
      const std::string model = lower(toks[5]);
      if (model.find('p') != std::string::npos)
        d.kind = DeviceKind::PMOS;
      else if (model.find('n') != std::string::npos)
        d.kind = DeviceKind::NMOS;
      else
        throw ParseError(lineno, "unknown model '" + toks[5] + "'");
      for (int i = 6; i < 8; ++i) {
        const std::string t = lower(toks[i]);
        if (t.rfind("w=", 0) == 0)
          d.width_nm = parse_dimension(toks[i].substr(2), lineno);
        else if (t.rfind("l=", 0) == 0)
          d.length_nm = parse_dimension(toks[i].substr(2), lineno);
        else
          throw ParseError(lineno, "expected W=/L= parameter, got '" + toks[i] + "'");
      }
      if (d.width_nm <= 0 || d.length_nm <= 0) throw ParseError(lineno, "device needs W= and L=");
      devices.push_back(std::move(d));
    } else {
      throw ParseError(lineno, "unrecognized line '" + toks[0] + "'");
    }
  }
  if (in_subckt) throw ParseError(lineno, "missing .ENDS");
  if (!ended) throw ParseError(lineno, "missing .SUBCKT");
  return {devices, pins};
}

CellGraph build_graph(const std::vector<Device>& devices, const std::vector<PinDecl>& pins,
                      const std::string& cell_type, GraphOptions opts) {
  if (devices.empty()) throw std::invalid_argument("build_graph: cell has no devices");

  CellGraph g;
  g.cell_type = cell_type;
  g.devices = devices;

  // Net order: pins first, then internal nets by first appearance.
  std::map<std::string, int> net_index;
  for (const PinDecl& p : pins) {
    Net n;
    n.name = p.name;
    n.is_power = p.is_power;
    n.is_ground = p.is_ground;
    net_index[p.name] = static_cast<int>(g.nets.size());
    g.nets.push_back(n);
  }
  for (const Device& d : devices)
    for (const auto& t : d.terminals)
      if (!net_index.count(t)) {
        net_index[t] = static_cast<int>(g.nets.size());
        g.nets.push_back({t});
      }

  std::vector<std::set<int>> nets_of_device(devices.size());
  std::vector<bool> has_gate(g.nets.size(), false), has_ds(g.nets.size(), false);
  for (size_t di = 0; di < devices.size(); ++di)
    for (int ti = 0; ti < 4; ++ti) {
      const int ni = net_index.at(devices[di].terminals[ti]);
      g.conn_edges.push_back({static_cast<int>(di), ni, static_cast<TerminalRole>(ti)});
      g.nets[ni].degree += 1;
      nets_of_device[di].insert(ni);
      const auto role = static_cast<TerminalRole>(ti);
      if (role == TerminalRole::gate) has_gate[ni] = true;
      if (role == TerminalRole::drain || role == TerminalRole::source) has_ds[ni] = true;
    }

  // Pins driven only through drains/sources are outputs; gate-connected pins
  // are inputs.
  for (const PinDecl& p : pins) {
    Net& n = g.nets[net_index.at(p.name)];
    if (n.is_power || n.is_ground) continue;
    n.is_input = has_gate[net_index.at(p.name)];
    n.is_output = !n.is_input && has_ds[net_index.at(p.name)];
  }

  if (opts.correlation_edges) {
    std::set<std::pair<int, int>> corr;
    for (const auto& nets : nets_of_device)
      for (int a : nets)
        for (int b : nets) {
          if (a >= b) continue;
          if (g.nets[a].is_power || g.nets[a].is_ground) continue;
          if (g.nets[b].is_power || g.nets[b].is_ground) continue;
          corr.insert({a, b});
        }
    g.corr_edges.assign(corr.begin(), corr.end());
  }

  g.node_type_mask.assign(g.devices.size(), NodeType::device);
  g.node_type_mask.insert(g.node_type_mask.end(), g.nets.size(), NodeType::net);
  g.node_features = encode_features(g);
  return g;
}

std::vector<std::vector<double>> encode_features(const CellGraph& g) {
  int max_degree = 1;
  for (const Net& n : g.nets) max_degree = std::max(max_degree, n.degree);

  std::vector<std::vector<double>> feats;
  feats.reserve(g.num_nodes());
  for (const Device& d : g.devices) {
    std::vector<double> f(kNodeFeatureDim, 0.0);
    f[d.kind == DeviceKind::NMOS ? 0 : 1] = 1.0;
    f[2] = d.width_nm / 100.0;
    f[3] = d.length_nm / 100.0;
    feats.push_back(std::move(f));
  }
  for (const Net& n : g.nets) {
    std::vector<double> f(kNodeFeatureDim, 0.0);
    f[4] = static_cast<double>(n.degree) / max_degree;
    f[5] = n.is_input ? 1.0 : 0.0;
    f[6] = n.is_output ? 1.0 : 0.0;
    f[7] = n.is_power ? 1.0 : 0.0;
    f[8] = n.is_ground ? 1.0 : 0.0;
    feats.push_back(std::move(f));
  }
  return feats;
}

AdjacencyMask build_mask(const CellGraph& g) {
  const int n = g.num_nodes();
  AdjacencyMask m;
  m.n = n;
  m.allowed.assign(static_cast<size_t>(n) * n, 0);
  m.edge_type.assign(static_cast<size_t>(n) * n, 0);
  auto set_edge = [&](int i, int j, int ty) {
    m.allowed[static_cast<size_t>(i) * n + j] = 1;
    m.edge_type[static_cast<size_t>(i) * n + j] = ty;
  };
  for (int i = 0; i < n; ++i) set_edge(i, i, 3);
  for (const ConnEdge& e : g.conn_edges) {
    set_edge(e.device_idx, g.net_node(e.net_idx), 1);
    set_edge(g.net_node(e.net_idx), e.device_idx, 1);
  }
  for (const auto& [a, b] : g.corr_edges) {
    set_edge(g.net_node(a), g.net_node(b), 2);
    set_edge(g.net_node(b), g.net_node(a), 2);
  }
  return m;
}

CellGraph load_netlist_file(const std::string& path, const std::string& cell_type,
                            GraphOptions opts) {
  std::ifstream f(path);
  if (!f) throw std::runtime_error("netlist: cannot open " + path);
  std::stringstream ss;
  ss << f.rdbuf();
  auto [devices, pins] = parse_netlist(ss.str());
  return build_graph(devices, pins, cell_type, opts);
}

}  // namespace fc
