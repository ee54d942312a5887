#include "matxfer/common/raster_io.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

namespace matxfer::io {
namespace {

std::ofstream open_out(const std::filesystem::path& path, bool binary = false) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, binary ? std::ios::binary : std::ios::out);
  if (!out) throw std::runtime_error("cannot open for writing: " + path.string());
  return out;
}

std::ifstream open_in(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ValidationError("cannot open: " + path.string());
  return in;
}

}  // namespace

void write_color(const std::filesystem::path& path, const ColorImage& image) {
  auto out = open_out(path);
  out << "LABRASTER 1\n" << image.height() << ' ' << image.width() << '\n';
  char buf[96];
  for (std::size_t i = 0; i < image.pixel_count(); ++i) {
    const auto p = image.pixel(i);
    std::snprintf(buf, sizeof buf, "%.17g %.17g %.17g\n", p[0], p[1], p[2]);
    out << buf;
  }
}

ColorImage read_color(const std::filesystem::path& path) {
  auto in = open_in(path);
  std::string tag;
  int version = 0, h = 0, w = 0;
  in >> tag >> version >> h >> w;
  if (!in || tag != "LABRASTER" || version != 1 || h < 0 || w < 0)
    throw ValidationError("malformed color raster: " + path.string());
  ColorImage image(h, w);
  for (double& v : image.data())
    if (!(in >> v)) throw ValidationError("truncated color raster: " + path.string());
  return image;
}

void write_labels(const std::filesystem::path& path, const LabelImage& labels) {
  auto out = open_out(path);
  int maxval = 1;
  for (int v : labels.data()) maxval = std::max(maxval, v);
  out << "P2\n" << labels.width() << ' ' << labels.height() << '\n' << maxval << '\n';
  for (int y = 0; y < labels.height(); ++y) {
    for (int x = 0; x < labels.width(); ++x) out << (x ? " " : "") << labels.at(y, x);
    out << '\n';
  }
}

LabelImage read_labels(const std::filesystem::path& path) {
  auto in = open_in(path);
  std::string magic;
  int w = 0, h = 0, maxval = 0;
  in >> magic >> w >> h >> maxval;
  if (!in || magic != "P2" || w < 0 || h < 0) throw ValidationError("malformed label raster: " + path.string());
  LabelImage labels(h, w);
  for (int& v : labels.data()) {
    if (!(in >> v)) throw ValidationError("truncated label raster: " + path.string());
    if (v < 0 || v > maxval) throw ValidationError("label out of range in " + path.string());
  }
  return labels;
}

void write_ppm(const std::filesystem::path& path, const ColorImage& srgb) {
  auto out = open_out(path, true);
  out << "P6\n" << srgb.width() << ' ' << srgb.height() << "\n255\n";
  for (double v : srgb.data()) {
    const double c = std::clamp(v, 0.0, 1.0);
    out.put(static_cast<char>(static_cast<unsigned char>(std::lround(c * 255.0))));
  }
}

std::string read_text(const std::filesystem::path& path) {
  auto in = open_in(path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_text(const std::filesystem::path& path, const std::string& text) {
  auto out = open_out(path);
  out << text;
}

}  // namespace matxfer::io
