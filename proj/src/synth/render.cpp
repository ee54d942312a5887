#include "matxfer/synth/render.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numbers>

#include "matxfer/common/errors.hpp"
#include "matxfer/learning/rng.hpp"

namespace matxfer {

SegmentedImage render_pair(const ToyShape& shape, const PartMaterialAssignment& assignment,
                           const std::vector<Material>& library, int view, double shading_amplitude,
                           std::uint64_t seed) {
  require(shading_amplitude >= 0.0, "shading amplitude must be >= 0");
  require(assignment.covers(shape.labels()), "assignment does not cover every part of shape " + std::to_string(shape.id));
  SegmentedImage out;
  out.labels = rasterize_labels(shape, view);
  const int h = out.labels.height(), w = out.labels.width();
  out.color = ColorImage(h, w, kBackgroundLab);

  Rng rng(seed);
  struct Shade {
    double cx, cy;
  };
  std::map<int, Shade> shade;
  for (int l : shape.labels()) {
    const double phi = rng.uniform(0.0, 2.0 * std::numbers::pi);
    shade[l] = {std::cos(phi) / std::numbers::sqrt2, std::sin(phi) / std::numbers::sqrt2};
  }
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      const int l = out.labels.at(y, x);
      if (l == 0) continue;
      const auto& entry = assignment.parts.at(l);
      require(entry.material >= 0 && entry.material < static_cast<int>(library.size()), "material id out of range");
      const ColorImage& patch = library[entry.material].patch;
      const double nx = (x + 0.5) / w * 2.0 - 1.0, ny = (y + 0.5) / h * 2.0 - 1.0;
      const double ramp = shade[l].cx * nx + shade[l].cy * ny;  // in [-1, 1]
      const double noise = rng.uniform(-1.0, 1.0);
      const double dl = shading_amplitude * (0.6 * ramp + 0.4 * noise);
      const int py = y % patch.height(), px = x % patch.width();
      out.color.at(y, x, 0) = std::clamp(patch.at(py, px, 0) + dl, 0.0, 100.0);
      out.color.at(y, x, 1) = patch.at(py, px, 1);
      out.color.at(y, x, 2) = patch.at(py, px, 2);
    }
  return out;
}

}  // namespace matxfer
