#include "matxfer/synth/shapes.hpp"

#include <algorithm>
#include <array>
#include <cmath>

#include "matxfer/common/errors.hpp"
#include "matxfer/learning/rng.hpp"

namespace matxfer {
namespace {

constexpr std::array<std::string_view, kMaxVocabulary + 1> kPartNames{
    "background", "back", "seat", "legs", "arms", "headrest", "base", "cushion", "stretcher"};

// Paint rank per label; higher ranks are drawn later and cover lower ones.
constexpr std::array<int, kMaxVocabulary + 1> kPaintRank{0, 0, 1, 4, 5, 6, 2, 7, 3};

std::vector<Primitive> part_template(int label) {
  switch (label) {
    case 1: return {{false, 0.0, -0.45, 0.5, 0.35}};
    case 2: return {{false, 0.0, 0.12, 0.55, 0.12}};
    case 3: return {{false, -0.45, 0.6, 0.07, 0.3}, {false, 0.45, 0.6, 0.07, 0.3}};
    case 4: return {{false, -0.62, -0.05, 0.1, 0.2}, {false, 0.62, -0.05, 0.1, 0.2}};
    case 5: return {{true, 0.0, -0.85, 0.3, 0.1}};
    case 6: return {{false, 0.0, 0.82, 0.4, 0.08}};
    case 7: return {{true, 0.0, 0.06, 0.42, 0.08}};
    case 8: return {{false, 0.0, 0.6, 0.45, 0.04}};
  }
  throw ValidationError("part label out of vocabulary: " + std::to_string(label));
}

struct ViewTransform {
  double squash;  // horizontal foreshortening
  double shear;   // horizontal offset growing toward the bottom
};

constexpr double kFrame = 0.85;

ViewTransform view_transform(int view, int view_count) {
  const double yaw = view_count <= 1 ? 0.0 : -1.0 + 2.0 * view / (view_count - 1);
  return {std::cos(yaw), 0.25 * std::sin(yaw)};
}

bool inside(const Primitive& p, double u, double w) {
  const double du = (u - p.cx) / p.hw, dw = (w - p.cy) / p.hh;
  return p.ellipse ? du * du + dw * dw <= 1.0 : std::abs(du) <= 1.0 && std::abs(dw) <= 1.0;
}

std::vector<ShapePart> jittered_parts(const std::vector<int>& labels, double jitter, Rng& rng) {
  std::vector<ShapePart> parts;
  for (int l : labels) {
    ShapePart part{l, part_template(l)};
    for (auto& p : part.primitives) {
      p.cx += 0.5 * jitter * rng.uniform(-1.0, 1.0);
      p.cy += 0.5 * jitter * rng.uniform(-1.0, 1.0);
      p.hw *= 1.0 + jitter * rng.uniform(-1.0, 1.0);
      p.hh *= 1.0 + jitter * rng.uniform(-1.0, 1.0);
    }
    parts.push_back(std::move(part));
  }
  std::stable_sort(parts.begin(), parts.end(),
                   [](const ShapePart& a, const ShapePart& b) { return kPaintRank[a.label] < kPaintRank[b.label]; });
  return parts;
}

bool visible_enough(const ToyShape& shape, int min_pixels) {
  for (int v : shape.views) {
    const LabelImage img = rasterize_labels(shape, v);
    for (const auto& part : shape.parts)
      if (static_cast<int>(std::count(img.data().begin(), img.data().end(), part.label)) < min_pixels) return false;
  }
  return true;
}

}  // namespace

std::string_view part_name(int label) {
  require(label >= 0 && label <= kMaxVocabulary, "part label out of range");
  return kPartNames[label];
}

std::vector<int> ToyShape::labels() const {
  std::vector<int> out;
  for (const auto& p : parts) out.push_back(p.label);
  std::sort(out.begin(), out.end());
  return out;
}

bool ToyShape::has_view(int view) const { return std::find(views.begin(), views.end(), view) != views.end(); }

void ShapeSpec::validate() const {
  require(count >= 0, "shape count must be >= 0");
  require(vocabulary >= 1 && vocabulary <= kMaxVocabulary,
          "vocabulary must be in [1, " + std::to_string(kMaxVocabulary) + "]");
  require(min_parts >= 1 && min_parts <= max_parts, "part-count range must satisfy 1 <= min <= max");
  require(max_parts <= vocabulary, "part count exceeds the vocabulary");
  require(views >= 1, "views must be >= 1");
  require(resolution >= 4, "resolution must be >= 4");
  require(jitter >= 0.0 && jitter < 0.5, "jitter must be in [0, 0.5)");
  require(min_part_pixels >= 1 && max_attempts >= 1, "min_part_pixels and max_attempts must be >= 1");
  require(count == 0 || static_cast<long>(count) * max_parts >= vocabulary,
          "too few shapes and parts to cover the vocabulary");
}

int view_preset(std::string_view furniture) {
  if (furniture == "chair") return 5;
  if (furniture == "table") return 4;
  if (furniture == "bed") return 40;
  throw ValidationError("unknown furniture preset '" + std::string(furniture) + "'");
}

std::vector<ToyShape> generate_shapes(const ShapeSpec& spec, std::uint64_t seed) {
  spec.validate();
  Rng rng(seed);
  std::vector<ToyShape> shapes;
  // Round-robin over the vocabulary guarantees every label appears once the
  // forced labels are spread across enough shapes; remaining slots are random.
  int next_forced = 0;
  for (int i = 0; i < spec.count; ++i) {
    const int remaining_shapes = spec.count - i;
    const int uncovered = std::max(0, spec.vocabulary - next_forced);
    int k = spec.min_parts + static_cast<int>(rng.index(static_cast<std::size_t>(spec.max_parts - spec.min_parts + 1)));
    // Raise k when needed so the uncovered labels still fit in the remaining shapes.
    while (k < spec.max_parts && static_cast<long>(remaining_shapes - 1) * spec.max_parts + k < uncovered) ++k;

    std::vector<int> labels;
    for (int f = 0; f < std::min(k, uncovered); ++f) labels.push_back(++next_forced);
    std::vector<int> pool;
    for (int l = 1; l <= spec.vocabulary; ++l)
      if (std::find(labels.begin(), labels.end(), l) == labels.end()) pool.push_back(l);
    rng.shuffle(pool);
    for (std::size_t j = 0; static_cast<int>(labels.size()) < k; ++j) labels.push_back(pool[j]);

    ToyShape shape;
    shape.id = i;
    shape.resolution = spec.resolution;
    for (int v = 0; v < spec.views; ++v) shape.views.push_back(v);
    bool ok = false;
    for (int attempt = 0; attempt < spec.max_attempts && !ok; ++attempt) {
      shape.parts = jittered_parts(labels, attempt == spec.max_attempts - 1 ? 0.0 : spec.jitter, rng);
      ok = visible_enough(shape, spec.min_part_pixels);
    }
    if (!ok)
      throw ValidationError("shape " + std::to_string(i) + ": parts not visible at resolution " +
                            std::to_string(spec.resolution));
    shapes.push_back(std::move(shape));
  }
  return shapes;
}

LabelImage rasterize_labels(const ToyShape& shape, int view) {
  require(shape.has_view(view), "view " + std::to_string(view) + " not in shape " + std::to_string(shape.id));
  const int r = shape.resolution;
  const ViewTransform t = view_transform(view, static_cast<int>(shape.views.size()));
  LabelImage img(r, r, 0);
  for (int py = 0; py < r; ++py)
    for (int px = 0; px < r; ++px) {
      const double x = (px + 0.5) / r * 2.0 - 1.0;
      const double y = (py + 0.5) / r * 2.0 - 1.0;
      const double w = y / kFrame;
      const double u = (x / kFrame - t.shear * (w + 1.0) * 0.5) / t.squash;
      for (const auto& part : shape.parts)
        for (const auto& p : part.primitives)
          if (inside(p, u, w)) img.at(py, px) = part.label;
    }
  return img;
}

}  // namespace matxfer
