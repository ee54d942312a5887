#include "matxfer/material/library.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numbers>
#include <sstream>

#include "matxfer/common/errors.hpp"
#include "matxfer/common/raster_io.hpp"
#include "matxfer/learning/rng.hpp"

namespace matxfer {
namespace {

constexpr std::array<std::string_view, kCategoryCount> kCategoryNames{"leathers", "fabrics", "woods", "metals",
                                                                      "plastics"};

// D65 reference white.
constexpr double kXn = 0.95047, kYn = 1.0, kZn = 1.08883;
constexpr double kDelta = 6.0 / 29.0;

double srgb_to_linear(double c) { return c <= 0.04045 ? c / 12.92 : std::pow((c + 0.055) / 1.055, 2.4); }
double linear_to_srgb(double c) { return c <= 0.0031308 ? 12.92 * c : 1.055 * std::pow(c, 1.0 / 2.4) - 0.055; }

double lab_f(double t) {
  return t > kDelta * kDelta * kDelta ? std::cbrt(t) : t / (3.0 * kDelta * kDelta) + 4.0 / 29.0;
}
double lab_f_inv(double t) { return t > kDelta ? t * t * t : 3.0 * kDelta * kDelta * (t - 4.0 / 29.0); }

struct Region {
  std::array<double, 3> center;
  std::array<double, 3> half;
};

// Rough appearance regions per category: dark warm leathers, cool fabrics,
// yellow-brown woods, near-neutral metals, saturated plastics.
constexpr std::array<Region, kCategoryCount> kRegions{{
    {{38, 20, 25}, {10, 10, 10}},
    {{62, -20, -25}, {15, 20, 20}},
    {{55, 12, 40}, {10, 8, 10}},
    {{70, 0, 0}, {15, 4, 6}},
    {{60, 45, -10}, {15, 20, 25}},
}};

ColorImage synth_patch(const Region& region, const SyntheticLibrarySpec& spec, Rng& rng) {
  std::array<double, 3> base{};
  for (int c = 0; c < 3; ++c)
    base[c] = region.center[c] + spec.spread * region.half[c] * rng.uniform(-1.0, 1.0);
  const double theta = rng.uniform(0.0, std::numbers::pi);
  const double freq = 1.0 + static_cast<double>(rng.index(2));
  const double phase = rng.uniform(0.0, 2.0 * std::numbers::pi);
  const int p = spec.patch_size;
  ColorImage patch(p, p);
  for (int y = 0; y < p; ++y)
    for (int x = 0; x < p; ++x) {
      const double s = (x * std::cos(theta) + y * std::sin(theta)) / p;
      const double stripe = std::sin(2.0 * std::numbers::pi * freq * s + phase);
      const double noise = rng.uniform(-0.5, 0.5);
      patch.at(y, x, 0) = std::clamp(base[0] + spec.texture_amplitude * (stripe + noise), 0.0, 100.0);
      patch.at(y, x, 1) = std::clamp(base[1] + 0.5 * spec.texture_amplitude * noise, -128.0, 127.0);
      patch.at(y, x, 2) = std::clamp(base[2] + 0.5 * spec.texture_amplitude * stripe, -128.0, 127.0);
    }
  return patch;
}

std::string fmt9(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.9g", v);
  return buf;
}

}  // namespace

std::string_view to_string(Category c) { return kCategoryNames.at(index_of(c)); }

Category parse_category(std::string_view name) {
  for (std::size_t i = 0; i < kCategoryCount; ++i)
    if (kCategoryNames[i] == name) return static_cast<Category>(i);
  throw ValidationError("unknown material category '" + std::string(name) + "'");
}

Category category_from_index(std::size_t i) {
  require(i < kCategoryCount, "category index out of range");
  return static_cast<Category>(i);
}

void validate_materials(const std::vector<Material>& materials) {
  for (std::size_t i = 0; i < materials.size(); ++i) {
    require(materials[i].id == static_cast<int>(i), "material ids must be dense and ordered");
    require(same_size(materials[i].patch, materials[0].patch), "material patches must share one size");
    require(!materials[i].patch.empty(), "material patch is empty");
  }
}

std::array<double, 3> srgb_to_lab(const std::array<double, 3>& rgb) {
  for (double c : rgb)
    if (!(c >= 0.0 && c <= 1.0)) throw ValidationError("sRGB channel outside [0,1]");
  const double r = srgb_to_linear(rgb[0]), g = srgb_to_linear(rgb[1]), b = srgb_to_linear(rgb[2]);
  const double x = 0.4124564 * r + 0.3575761 * g + 0.1804375 * b;
  const double y = 0.2126729 * r + 0.7151522 * g + 0.0721750 * b;
  const double z = 0.0193339 * r + 0.1191920 * g + 0.9503041 * b;
  const double fx = lab_f(x / kXn), fy = lab_f(y / kYn), fz = lab_f(z / kZn);
  return {116.0 * fy - 16.0, 500.0 * (fx - fy), 200.0 * (fy - fz)};
}

std::array<double, 3> lab_to_srgb(const std::array<double, 3>& lab) {
  const double fy = (lab[0] + 16.0) / 116.0;
  const double fx = fy + lab[1] / 500.0;
  const double fz = fy - lab[2] / 200.0;
  const double x = kXn * lab_f_inv(fx), y = kYn * lab_f_inv(fy), z = kZn * lab_f_inv(fz);
  // Exact inverse of the forward matrix, so lab -> rgb -> lab round-trips.
  const double r = 3.2404548360214087 * x - 1.5371388501025751 * y - 0.498531546868481 * z;
  const double g = -0.9692663898756538 * x + 1.876010928842491 * y + 0.041556082346673545 * z;
  const double b = 0.05564341960421367 * x - 0.20402585426769818 * y + 1.057225162457929 * z;
  auto out = [](double c) { return std::clamp(linear_to_srgb(std::clamp(c, 0.0, 1.0)), 0.0, 1.0); };
  return {out(r), out(g), out(b)};
}

ColorImage rgb_to_lab(const ColorImage& rgb) {
  ColorImage lab(rgb.height(), rgb.width());
  for (std::size_t i = 0; i < rgb.pixel_count(); ++i) lab.set_pixel(i, srgb_to_lab(rgb.pixel(i)));
  return lab;
}

ColorImage lab_to_rgb(const ColorImage& lab) {
  ColorImage rgb(lab.height(), lab.width());
  for (std::size_t i = 0; i < lab.pixel_count(); ++i) rgb.set_pixel(i, lab_to_srgb(lab.pixel(i)));
  return rgb;
}

double lab_distance(const ColorImage& a, const ColorImage& b) {
  require(same_size(a, b), "lab_distance: patch dimensions differ");
  require(!a.empty(), "lab_distance: empty patch");
  double sum = 0.0;
  const auto& da = a.data();
  const auto& db = b.data();
  for (std::size_t i = 0; i < da.size(); ++i) {
    const double d = da[i] - db[i];
    sum += d * d;
  }
  return std::sqrt(sum / static_cast<double>(a.pixel_count()));
}

DistanceMatrix::DistanceMatrix(std::size_t size, std::vector<double> v) : n(size), values(std::move(v)) {
  require(values.size() == n * n, "distance matrix needs n*n values");
}

std::vector<double> DistanceMatrix::column(std::size_t j) const {
  require(j < n, "distance matrix column out of range");
  std::vector<double> c(n);
  for (std::size_t i = 0; i < n; ++i) c[i] = (*this)(i, j);
  return c;
}

DistanceMatrix build_distance_matrix(const std::vector<Material>& materials) {
  require(materials.size() >= 2, "distance matrix needs at least two materials");
  for (const auto& m : materials)
    require(same_size(m.patch, materials[0].patch), "material patches must share one size");
  DistanceMatrix d(materials.size());
  for (std::size_t i = 0; i < d.n; ++i)
    for (std::size_t j = i + 1; j < d.n; ++j) d(i, j) = d(j, i) = lab_distance(materials[i].patch, materials[j].patch);
  return d;
}

void validate_distance_matrix(const DistanceMatrix& d) {
  require(d.values.size() == d.n * d.n, "distance matrix size mismatch");
  for (std::size_t i = 0; i < d.n; ++i) {
    require(d(i, i) == 0.0, "distance matrix diagonal must be zero");
    for (std::size_t j = 0; j < d.n; ++j) {
      require(std::isfinite(d(i, j)) && d(i, j) >= 0.0, "distance matrix entries must be finite and nonnegative");
      require(d(i, j) == d(j, i), "distance matrix must be symmetric");
    }
  }
}

DiversityReport diversity_stats(const std::vector<Material>& materials, const DistanceMatrix& d) {
  validate_distance_matrix(d);
  require(materials.size() == d.n, "diversity_stats: library and matrix sizes differ");
  std::array<double, kCategoryCount> intra_sum{};
  std::array<std::size_t, kCategoryCount> intra_count{};
  double inter_sum = 0.0;
  std::size_t inter_count = 0;
  for (std::size_t i = 0; i < d.n; ++i)
    for (std::size_t j = i + 1; j < d.n; ++j) {
      if (materials[i].category == materials[j].category) {
        intra_sum[index_of(materials[i].category)] += d(i, j);
        ++intra_count[index_of(materials[i].category)];
      } else {
        inter_sum += d(i, j);
        ++inter_count;
      }
    }
  DiversityReport r;
  for (std::size_t c = 0; c < kCategoryCount; ++c)
    if (intra_count[c] > 0) r.intra[c] = intra_sum[c] / static_cast<double>(intra_count[c]);
  if (inter_count > 0) r.inter = inter_sum / static_cast<double>(inter_count);
  return r;
}

void SyntheticLibrarySpec::validate() const {
  require(patch_size >= 1, "patch_size must be >= 1");
  require(spread >= 0.0 && texture_amplitude >= 0.0 && min_distance >= 0.0, "library spec values must be >= 0");
  int total = 0;
  for (int c : per_category) {
    require(c >= 0, "per-category counts must be >= 0");
    total += c;
  }
  require(total >= 2, "library needs at least two materials");
  require(max_attempts >= 1, "max_attempts must be >= 1");
}

std::vector<Material> generate_library(const SyntheticLibrarySpec& spec, std::uint64_t seed) {
  spec.validate();
  Rng rng(seed);
  std::vector<Material> out;
  for (std::size_t c = 0; c < kCategoryCount; ++c) {
    for (int k = 0; k < spec.per_category[c]; ++k) {
      bool placed = false;
      for (int attempt = 0; attempt < spec.max_attempts && !placed; ++attempt) {
        ColorImage patch = synth_patch(kRegions[c], spec, rng);
        const bool far = std::all_of(out.begin(), out.end(), [&](const Material& m) {
          return lab_distance(m.patch, patch) >= spec.min_distance;
        });
        if (!far) continue;
        char label[48];
        std::snprintf(label, sizeof label, "%s_%02d", kCategoryNames[c].data(), k);
        out.push_back({static_cast<int>(out.size()), label, static_cast<Category>(c), std::move(patch)});
        placed = true;
      }
      if (!placed)
        throw ValidationError("cannot place " + std::string(kCategoryNames[c]) +
                              " material with min_distance " + fmt9(spec.min_distance));
    }
  }
  return out;
}

std::vector<Material> curate(const std::vector<Material>& materials, double threshold) {
  std::vector<Material> kept;
  for (const auto& m : materials) {
    const bool far = std::all_of(kept.begin(), kept.end(),
                                 [&](const Material& k) { return lab_distance(k.patch, m.patch) >= threshold; });
    if (!far) continue;
    kept.push_back(m);
    kept.back().id = static_cast<int>(kept.size()) - 1;
  }
  return kept;
}

std::vector<int> members_of(const std::vector<Material>& materials, Category c) {
  std::vector<int> ids;
  for (const auto& m : materials)
    if (m.category == c) ids.push_back(m.id);
  return ids;
}

void save_library(const std::filesystem::path& dir, const std::vector<Material>& materials) {
  validate_materials(materials);
  std::ostringstream manifest;
  for (const auto& m : materials) {
    require(m.label.find_first_of(" \t\n") == std::string::npos, "material labels must not contain whitespace");
    char name[32];
    std::snprintf(name, sizeof name, "patches/mat_%04d.lab", m.id);
    io::write_color(dir / name, m.patch);
    manifest << m.id << ' ' << m.label << ' ' << to_string(m.category) << ' ' << name << '\n';
  }
  io::write_text(dir / "manifest.txt", manifest.str());
}

std::vector<Material> load_library(const std::filesystem::path& dir) {
  std::istringstream in(io::read_text(dir / "manifest.txt"));
  std::vector<Material> out;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::istringstream ls(line);
    Material m;
    std::string cat, path;
    if (!(ls >> m.id >> m.label >> cat >> path)) throw ValidationError("malformed library manifest line: " + line);
    m.category = parse_category(cat);
    m.patch = io::read_color(dir / path);
    out.push_back(std::move(m));
  }
  validate_materials(out);
  return out;
}

std::string format_distance_matrix(const DistanceMatrix& d) {
  std::string s = std::to_string(d.n) + "\n";
  for (std::size_t i = 0; i < d.n; ++i) {
    for (std::size_t j = 0; j < d.n; ++j) s += (j ? " " : "") + fmt9(d(i, j));
    s += "\n";
  }
  return s;
}

DistanceMatrix parse_distance_matrix(const std::string& text) {
  std::istringstream in(text);
  std::size_t n = 0;
  if (!(in >> n)) throw ValidationError("malformed distance matrix header");
  std::vector<double> v(n * n);
  for (double& x : v)
    if (!(in >> x)) throw ValidationError("truncated distance matrix");
  return DistanceMatrix(n, std::move(v));
}

}  // namespace matxfer
