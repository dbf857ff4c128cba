#include "fusioncell/geometry.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include <json.hpp>

namespace fc {

namespace {

const char* layer_name(Layer l) {
  switch (l) {
    case Layer::M0: return "M0";
    case Layer::M1: return "M1";
    case Layer::M2: return "M2";
  }
  return "?";
}

Layer layer_from_name(const std::string& s) {
  if (s == "M0") return Layer::M0;
  if (s == "M1") return Layer::M1;
  if (s == "M2") return Layer::M2;
  throw std::invalid_argument("layout: unknown layer " + s);
}

}  // namespace

void LayoutDesign::validate() const {
  if (!(width > 0) || !(height > 0))
    throw std::invalid_argument("layout " + cell_name + ": zero-area design");
  auto check_net = [&](int id) {
    if (!net_names.count(id))
      throw std::invalid_argument("layout " + cell_name + ": net id " + std::to_string(id) +
                                  " missing from net_names");
  };
  for (const Rect& r : rects) {
    if (!(std::isfinite(r.x0) && std::isfinite(r.y0) && std::isfinite(r.x1) && std::isfinite(r.y1)))
      throw std::invalid_argument("layout " + cell_name + ": non-finite rect");
    if (!(r.x0 < r.x1 && r.y0 < r.y1))
      throw std::invalid_argument("layout " + cell_name + ": degenerate rect");
    if (r.x0 < 0 || r.y0 < 0 || r.x1 > width || r.y1 > height)
      throw std::invalid_argument("layout " + cell_name + ": rect outside canvas");
    check_net(r.net_id);
  }
  for (const Via& v : vias) {
    if (!(v.size > 0)) throw std::invalid_argument("layout " + cell_name + ": via size must be > 0");
    if (v.lower_layer == Layer::M2)
      throw std::invalid_argument("layout " + cell_name + ": via lower layer has no upper neighbor");
    if (v.cx - v.size / 2 < 0 || v.cy - v.size / 2 < 0 || v.cx + v.size / 2 > width ||
        v.cy + v.size / 2 > height)
      throw std::invalid_argument("layout " + cell_name + ": via outside canvas");
    check_net(v.net_id);
  }
}

double normalize_net_id(int net_id, int num_nets, NetIdScheme scheme, const std::string& net_name) {
  if (num_nets <= 0) throw std::invalid_argument("normalize_net_id: num_nets must be >= 1");
  if (net_id < 0 || net_id >= num_nets) throw std::invalid_argument("normalize_net_id: id out of range");
  if (scheme == NetIdScheme::index_fraction)
    return static_cast<double>(net_id + 1) / static_cast<double>(num_nets + 1);
  // hashed_fraction: FNV-1a on the net name, folded into (0,1].
  uint64_t h = 1469598103934665603ULL;
  for (unsigned char c : net_name) {
    h ^= c;
    h *= 1099511628211ULL;
  }
  const uint64_t buckets = 1ULL << 20;
  return static_cast<double>(h % buckets + 1) / static_cast<double>(buckets + 1);
}

LayoutDesign rotate90(const LayoutDesign& d) {
  LayoutDesign out = d;
  out.width = d.height;
  out.height = d.width;
  out.rects.clear();
  out.vias.clear();
  for (const Rect& r : d.rects)
    out.rects.push_back({r.layer, d.height - r.y1, r.x0, d.height - r.y0, r.x1, r.net_id});
  for (const Via& v : d.vias)
    out.vias.push_back({v.lower_layer, d.height - v.cy, v.cx, v.size, v.net_id});
  return out;
}

namespace {

LayoutDesign rotate90_cw(const LayoutDesign& d) {
  LayoutDesign out = d;
  out.width = d.height;
  out.height = d.width;
  out.rects.clear();
  out.vias.clear();
  for (const Rect& r : d.rects)
    out.rects.push_back({r.layer, r.y0, d.width - r.x1, r.y1, d.width - r.x0, r.net_id});
  for (const Via& v : d.vias)
    out.vias.push_back({v.lower_layer, v.cy, d.width - v.cx, v.size, v.net_id});
  return out;
}

struct PixelBox {
  int x0, y0, x1, y1;  // half-open pixel index ranges, clamped
};

// Pixels whose centers fall inside [x0,x1) x [y0,y1) in pixel coordinates.
PixelBox cover(double x0, double y0, double x1, double y1, int w, int h) {
  PixelBox b;
  b.x0 = std::max(0, static_cast<int>(std::ceil(x0 - 0.5)));
  b.y0 = std::max(0, static_cast<int>(std::ceil(y0 - 0.5)));
  b.x1 = std::min(w, static_cast<int>(std::ceil(x1 - 0.5)));
  b.y1 = std::min(h, static_cast<int>(std::ceil(y1 - 0.5)));
  return b;
}

}  // namespace

LayoutTensor rasterize(const LayoutDesign& design_in, const RasterConfig& cfg) {
  design_in.validate();
  const LayoutDesign design =
      design_in.height > design_in.width ? rotate90_cw(design_in) : design_in;

  const int W = cfg.width, H = cfg.height;
  if (W % cfg.patch_size || H % cfg.patch_size)
    throw std::invalid_argument("rasterize: canvas not divisible by patch size");

  LayoutTensor t;
  t.height = H;
  t.width = W;
  t.cell_name = design.cell_name;
  t.data.assign(static_cast<size_t>(3) * H * W, 0.0);

  const double s = std::min(W / design.width, H / design.height);
  const double ox = (W - design.width * s) / 2.0;
  const double oy = (H - design.height * s) / 2.0;
  const int num_nets = static_cast<int>(design.net_names.size());

  auto net_value = [&](int id) {
    return normalize_net_id(id, num_nets, cfg.scheme, design.net_names.at(id));
  };

  for (const Rect& r : design.rects) {
    const double v = net_value(r.net_id);
    const int ch = static_cast<int>(r.layer);
    const PixelBox b = cover(ox + r.x0 * s, oy + r.y0 * s, ox + r.x1 * s, oy + r.y1 * s, W, H);
    for (int y = b.y0; y < b.y1; ++y)
      for (int x = b.x0; x < b.x1; ++x) {
        double& px = t.at(ch, y, x);
        if (px != 0.0 && px != v)
          throw std::invalid_argument("rasterize: nets " + design.net_names.at(r.net_id) +
                                      " and another net overlap on layer " +
                                      layer_name(r.layer));
        px = v;
      }
  }

  // Vias stamp into both adjacent channels, grown by the spill radius.
  // Occupied pixels are never overwritten.
  for (const Via& v : design.vias) {
    const double val = net_value(v.net_id);
    PixelBox b = cover(ox + (v.cx - v.size / 2) * s, oy + (v.cy - v.size / 2) * s,
                       ox + (v.cx + v.size / 2) * s, oy + (v.cy + v.size / 2) * s, W, H);
    b.x0 = std::max(0, b.x0 - cfg.via_spill_radius);
    b.y0 = std::max(0, b.y0 - cfg.via_spill_radius);
    b.x1 = std::min(W, b.x1 + cfg.via_spill_radius);
    b.y1 = std::min(H, b.y1 + cfg.via_spill_radius);
    for (int ch : {static_cast<int>(v.lower_layer), static_cast<int>(v.lower_layer) + 1})
      for (int y = b.y0; y < b.y1; ++y)
        for (int x = b.x0; x < b.x1; ++x) {
          double& px = t.at(ch, y, x);
          if (px == 0.0) px = val;
        }
  }

  // Target-centric dilation: each background pixel takes the first occupied
  // value found in a row-major scan of its neighborhood.
  if (cfg.dilation_radius > 0) {
    const int r = cfg.dilation_radius;
    for (int ch = 0; ch < 3; ++ch) {
      std::vector<double> src(t.data.begin() + static_cast<size_t>(ch) * H * W,
                              t.data.begin() + static_cast<size_t>(ch + 1) * H * W);
      for (int y = 0; y < H; ++y)
        for (int x = 0; x < W; ++x) {
          if (src[static_cast<size_t>(y) * W + x] != 0.0) continue;
          for (int yy = std::max(0, y - r); yy <= std::min(H - 1, y + r); ++yy) {
            for (int xx = std::max(0, x - r); xx <= std::min(W - 1, x + r); ++xx) {
              const double sv = src[static_cast<size_t>(yy) * W + xx];
              if (sv != 0.0) {
                t.at(ch, y, x) = sv;
                goto next_pixel;
              }
            }
          }
        next_pixel:;
        }
    }
  }
  return t;
}

std::vector<std::vector<double>> patchify(const LayoutTensor& t, int patch_size) {
  if (t.height % patch_size || t.width % patch_size)
    throw std::invalid_argument("patchify: dimensions not divisible by patch size");
  const int pr = t.height / patch_size, pc = t.width / patch_size;
  std::vector<std::vector<double>> patches;
  patches.reserve(static_cast<size_t>(pr) * pc);
  for (int py = 0; py < pr; ++py)
    for (int px = 0; px < pc; ++px) {
      std::vector<double> v;
      v.reserve(static_cast<size_t>(3) * patch_size * patch_size);
      for (int ch = 0; ch < 3; ++ch)
        for (int y = 0; y < patch_size; ++y)
          for (int x = 0; x < patch_size; ++x)
            v.push_back(t.at(ch, py * patch_size + y, px * patch_size + x));
      patches.push_back(std::move(v));
    }
  return patches;
}

LayoutTensor unpatchify(const std::vector<std::vector<double>>& patches, int height, int width,
                        int patch_size) {
  const int pr = height / patch_size, pc = width / patch_size;
  if (static_cast<int>(patches.size()) != pr * pc)
    throw std::invalid_argument("unpatchify: patch count mismatch");
  LayoutTensor t;
  t.height = height;
  t.width = width;
  t.data.assign(static_cast<size_t>(3) * height * width, 0.0);
  for (int py = 0; py < pr; ++py)
    for (int px = 0; px < pc; ++px) {
      const auto& v = patches[static_cast<size_t>(py) * pc + px];
      size_t i = 0;
      for (int ch = 0; ch < 3; ++ch)
        for (int y = 0; y < patch_size; ++y)
          for (int x = 0; x < patch_size; ++x)
            t.at(ch, py * patch_size + y, px * patch_size + x) = v[i++];
    }
  return t;
}

std::string layout_to_json_text(const LayoutDesign& d) {
  nlohmann::json j;
  j["cell"] = d.cell_name;
  j["width_nm"] = d.width;
  j["height_nm"] = d.height;
  std::vector<std::string> nets(d.net_names.size());
  for (const auto& [id, name] : d.net_names) {
    if (id < 0 || id >= static_cast<int>(nets.size()))
      throw std::invalid_argument("layout: net ids must be dense 0..n-1 for serialization");
    nets[id] = name;
  }
  j["nets"] = nets;
  j["rects"] = nlohmann::json::array();
  for (const Rect& r : d.rects)
    j["rects"].push_back({{"layer", layer_name(r.layer)},
                          {"x0", r.x0},
                          {"y0", r.y0},
                          {"x1", r.x1},
                          {"y1", r.y1},
                          {"net", r.net_id}});
  j["vias"] = nlohmann::json::array();
  for (const Via& v : d.vias)
    j["vias"].push_back({{"lower_layer", layer_name(v.lower_layer)},
                         {"cx", v.cx},
                         {"cy", v.cy},
                         {"size", v.size},
                         {"net", v.net_id}});
  return j.dump(2);
}

LayoutDesign layout_from_json_text(const std::string& text) {
  nlohmann::json j = nlohmann::json::parse(text);
  LayoutDesign d;
  d.cell_name = j.at("cell");
  d.width = j.at("width_nm");
  d.height = j.at("height_nm");
  const auto& nets = j.at("nets");
  for (size_t i = 0; i < nets.size(); ++i) d.net_names[static_cast<int>(i)] = nets[i];
  for (const auto& r : j.at("rects"))
    d.rects.push_back({layer_from_name(r.at("layer")), r.at("x0"), r.at("y0"), r.at("x1"),
                       r.at("y1"), r.at("net")});
  for (const auto& v : j.at("vias"))
    d.vias.push_back({layer_from_name(v.at("lower_layer")), v.at("cx"), v.at("cy"), v.at("size"),
                      v.at("net")});
  d.validate();
  return d;
}

LayoutDesign load_layout_json(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw std::runtime_error("layout: cannot open " + path);
  std::stringstream ss;
  ss << f.rdbuf();
  return layout_from_json_text(ss.str());
}

void save_layout_json(const LayoutDesign& design, const std::string& path) {
  std::ofstream f(path);
  if (!f) throw std::runtime_error("layout: cannot open " + path);
  f << layout_to_json_text(design) << "\n";
}

}  // namespace fc
