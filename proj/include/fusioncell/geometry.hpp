#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

namespace fc {

enum class Layer { M0 = 0, M1 = 1, M2 = 2 };

struct Rect {
  Layer layer = Layer::M0;
  double x0 = 0, y0 = 0, x1 = 0, y1 = 0;  // nm
  int net_id = 0;
};

struct Via {
  Layer lower_layer = Layer::M0;  // M0 or M1; stamps into lower and lower+1
  double cx = 0, cy = 0;          // nm
  double size = 0;                // nm, square footprint
  int net_id = 0;
};

struct LayoutDesign {
  std::string cell_name;
  double width = 0, height = 0;  // nm
  std::vector<Rect> rects;
  std::vector<Via> vias;
  std::map<int, std::string> net_names;

  void validate() const;  // throws on invariant violations
};

enum class NetIdScheme { index_fraction, hashed_fraction };

struct RasterConfig {
  int height = 64, width = 64;  // pixels
  int patch_size = 8;
  int via_spill_radius = 1;
  int dilation_radius = 1;
  NetIdScheme scheme = NetIdScheme::index_fraction;
};

// 3 x H x W image; channel order M0, M1, M2; background 0, occupied pixels
// carry the normalized net-ID of the covering geometry.
struct LayoutTensor {
  int height = 0, width = 0;
  std::vector<double> data;  // channel-major
  std::string cell_name;

  double at(int ch, int y, int x) const {
    return data[(static_cast<size_t>(ch) * height + y) * width + x];
  }
  double& at(int ch, int y, int x) {
    return data[(static_cast<size_t>(ch) * height + y) * width + x];
  }
};

// Value in (0,1] for a net; same net always maps to the same value.
double normalize_net_id(int net_id, int num_nets, NetIdScheme scheme,
                        const std::string& net_name = "");

// Long-edge alignment (rotate when height > width), aspect-preserving scale,
// centering, per-layer fill, via stamping into both adjacent channels, then
// morphological dilation. Different nets meeting on one layer pixel is an
// error.
LayoutTensor rasterize(const LayoutDesign& design, const RasterConfig& cfg);

// Counter-clockwise quarter turn; used by the rotation-contract tests.
LayoutDesign rotate90(const LayoutDesign& design);

// Row-major patch order, channel-major within a patch; each vector has
// length 3*patch^2.
std::vector<std::vector<double>> patchify(const LayoutTensor& t, int patch_size);
LayoutTensor unpatchify(const std::vector<std::vector<double>>& patches,
                        int height, int width, int patch_size);

// JSON layout file I/O (schema documented in the README).
LayoutDesign load_layout_json(const std::string& path);
void save_layout_json(const LayoutDesign& design, const std::string& path);
LayoutDesign layout_from_json_text(const std::string& text);
std::string layout_to_json_text(const LayoutDesign& design);

}  // namespace fc
