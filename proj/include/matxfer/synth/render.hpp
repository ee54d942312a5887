#pragma once

#include <array>
#include <cstdint>
#include <vector>

#include "matxfer/common/image.hpp"
#include "matxfer/material/assignment.hpp"
#include "matxfer/material/library.hpp"
#include "matxfer/synth/shapes.hpp"

namespace matxfer {

inline constexpr std::array<double, 3> kBackgroundLab{100.0, 0.0, 0.0};

/// Flat toy renderer: each part is filled with its material patch tiled from
/// the image origin, then a per-part shading term (linear ramp plus noise)
/// is added to L. The shading change at any pixel is at most
/// `shading_amplitude`. Background is white.
SegmentedImage render_pair(const ToyShape& shape, const PartMaterialAssignment& assignment,
                           const std::vector<Material>& library, int view, double shading_amplitude,
                           std::uint64_t seed);

}  // namespace matxfer
