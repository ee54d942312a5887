#pragma once

#include <filesystem>
#include <string>

#include "matxfer/common/image.hpp"

namespace matxfer::io {

// Color rasters use a small text format:
//   LABRASTER 1
//   <height> <width>
//   one "c0 c1 c2" line per pixel, row-major, 17 significant digits.
void write_color(const std::filesystem::path& path, const ColorImage& image);
ColorImage read_color(const std::filesystem::path& path);

// Label rasters are ASCII PGM (P2).
void write_labels(const std::filesystem::path& path, const LabelImage& labels);
LabelImage read_labels(const std::filesystem::path& path);

/// Binary PPM (P6) from an sRGB image with channels in [0,1]; values are clamped.
void write_ppm(const std::filesystem::path& path, const ColorImage& srgb);

std::string read_text(const std::filesystem::path& path);
void write_text(const std::filesystem::path& path, const std::string& text);

}  // namespace matxfer::io
