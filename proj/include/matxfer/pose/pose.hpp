#pragma once

#include <array>
#include <optional>
#include <vector>

#include "matxfer/common/image.hpp"
#include "matxfer/learning/autodiff.hpp"
#include "matxfer/synth/shapes.hpp"

namespace matxfer {

/// Rigid camera pose x -> R x + t. R is row-major.
struct Pose {
  std::array<double, 9> R{1, 0, 0, 0, 1, 0, 0, 0, 1};
  std::array<double, 3> t{0, 0, 0};

  /// Orthonormality and det R = 1, both to 1e-9.
  void validate() const;
  std::array<double, 3> apply(const std::array<double, 3>& p) const;
  /// (this * other)(x) = this(other(x)).
  Pose compose(const Pose& other) const;
  static Pose from_axis_angle(const std::array<double, 3>& w, const std::array<double, 3>& t = {0, 0, 0});
};

/// World points [N, 3] and optional camera-space truth [N, 3].
struct PointSet {
  Tensor world;
  std::optional<Tensor> truth;

  void validate() const;
};

/// mean_i ||p_G,i - (R p_w,i + t)||^2
double camera_loss(const PointSet& points, const Pose& pose);

/// Rotation [3, 3] from an axis-angle vector [3] (Rodrigues). Series form
/// below 1e-6 rad; the chart is singular at pi.
ad::Var axis_angle_rotation(const ad::Var& w);
/// Differentiable form: R is [3, 3], t is [3].
ad::Var camera_loss(const PointSet& points, const ad::Var& R, const ad::Var& t);

/// Intersection over union of two foreground masks of equal size.
double silhouette_iou(const std::vector<unsigned char>& a, const std::vector<unsigned char>& b);

/// Candidate view whose silhouette best overlaps the exemplar's foreground
/// (labels != 0); ties go to the lowest view id.
int select_pose(const SegmentedImage& exemplar, const ToyShape& shape, const std::vector<int>& candidates);

/// Part-label raster O_s of `shape` seen from `view`.
LabelImage semantic_projection(const ToyShape& shape, int view);

}  // namespace matxfer
