#include "matxfer/pose/pose.hpp"

#include <cmath>

#include "matxfer/common/errors.hpp"

namespace matxfer {
namespace {

void check_points(const Tensor& t, const char* what) {
  require(t.rank() == 2 && t.dim(0) >= 1 && t.dim(1) == 3, std::string(what) + " must be [N, 3] with N >= 1");
}

std::vector<unsigned char> foreground(const LabelImage& labels) {
  std::vector<unsigned char> m(labels.pixel_count());
  for (std::size_t i = 0; i < m.size(); ++i) m[i] = labels[i] != 0;
  return m;
}

}  // namespace

void Pose::validate() const {
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j) {
      double dot = 0.0;
      for (int k = 0; k < 3; ++k) dot += R[k * 3 + i] * R[k * 3 + j];
      require(std::abs(dot - (i == j ? 1.0 : 0.0)) <= 1e-9, "pose rotation is not orthonormal");
    }
  const double det = R[0] * (R[4] * R[8] - R[5] * R[7]) - R[1] * (R[3] * R[8] - R[5] * R[6]) +
                     R[2] * (R[3] * R[7] - R[4] * R[6]);
  require(std::abs(det - 1.0) <= 1e-9, "pose rotation must have det 1");
}

std::array<double, 3> Pose::apply(const std::array<double, 3>& p) const {
  std::array<double, 3> out{};
  for (int i = 0; i < 3; ++i) out[i] = R[i * 3] * p[0] + R[i * 3 + 1] * p[1] + R[i * 3 + 2] * p[2] + t[i];
  return out;
}

Pose Pose::compose(const Pose& other) const {
  Pose out;
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j) {
      double s = 0.0;
      for (int k = 0; k < 3; ++k) s += R[i * 3 + k] * other.R[k * 3 + j];
      out.R[i * 3 + j] = s;
    }
  out.t = apply(other.t);
  return out;
}

Pose Pose::from_axis_angle(const std::array<double, 3>& w, const std::array<double, 3>& t) {
  const Tensor r = axis_angle_rotation(ad::constant(Tensor({3}, {w[0], w[1], w[2]})))->value;
  Pose p;
  for (int i = 0; i < 9; ++i) p.R[i] = r[i];
  p.t = t;
  return p;
}

void PointSet::validate() const {
  check_points(world, "world points");
  if (truth) {
    check_points(*truth, "camera-space truth");
    require(truth->dim(0) == world.dim(0), "truth and world point counts differ");
  }
}

double camera_loss(const PointSet& points, const Pose& pose) {
  Tensor r({3, 3}), t({3});
  for (int i = 0; i < 9; ++i) r[i] = pose.R[i];
  for (int i = 0; i < 3; ++i) t[i] = pose.t[i];
  return camera_loss(points, ad::constant(r), ad::constant(t))->value[0];
}

ad::Var axis_angle_rotation(const ad::Var& w) {
  require(w->value.size() == 3, "axis-angle vector must have 3 entries");
  const ad::Var x = ad::select(w, 0), y = ad::select(w, 1), z = ad::select(w, 2);
  const double theta_value = std::sqrt(w->value[0] * w->value[0] + w->value[1] * w->value[1] + w->value[2] * w->value[2]);
  // R = cos(theta) I + a K + b w w^T with a = sin(theta)/theta, b = (1 - cos(theta))/theta^2.
  ad::Var c, a, b;
  if (theta_value < 1e-6) {
    const ad::Var t2 = ad::add_all({ad::square(x), ad::square(y), ad::square(z)});
    c = ad::add_scalar(ad::mul_scalar(t2, -0.5), 1.0);
    a = ad::add_scalar(ad::mul_scalar(t2, -1.0 / 6.0), 1.0);
    b = ad::add_scalar(ad::mul_scalar(t2, -1.0 / 24.0), 0.5);
  } else {
    const ad::Var t2 = ad::add_all({ad::square(x), ad::square(y), ad::square(z)});
    const ad::Var theta = ad::sqrt(t2);
    c = ad::cos(theta);
    a = ad::div(ad::sin(theta), theta);
    b = ad::div(ad::add_scalar(ad::neg(c), 1.0), t2);
  }
  const ad::Var v[3] = {x, y, z};
  // K = [[0, -z, y], [z, 0, -x], [-y, x, 0]]
  const int sign[9] = {0, -1, 1, 1, 0, -1, -1, 1, 0};
  const int axis[9] = {0, 2, 1, 2, 0, 0, 1, 0, 0};
  std::vector<ad::Var> entries;
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j) {
      ad::Var e = ad::mul(b, ad::mul(v[i], v[j]));
      if (i == j) e = ad::add(e, c);
      const int k = i * 3 + j;
      if (sign[k] != 0) e = ad::add(e, ad::mul_scalar(ad::mul(a, v[axis[k]]), sign[k]));
      entries.push_back(e);
    }
  return ad::stack(entries, {3, 3});
}

ad::Var camera_loss(const PointSet& points, const ad::Var& R, const ad::Var& t) {
  points.validate();
  require(points.truth.has_value(), "camera_loss needs camera-space truth");
  require(R->value.rank() == 2 && R->value.dim(0) == 3 && R->value.dim(1) == 3, "rotation must be [3, 3]");
  require(t->value.size() == 3, "translation must have 3 entries");
  const std::size_t n = points.world.dim(0);
  const ad::Var rotated = ad::matmul(ad::constant(points.world), ad::transpose(R));
  const ad::Var shift = ad::matmul(ad::constant(Tensor({n, 1}, 1.0)), ad::reshape(t, {1, 3}));
  const ad::Var diff = ad::sub(ad::constant(*points.truth), ad::add(rotated, shift));
  return ad::mul_scalar(ad::sum(ad::square(diff)), 1.0 / static_cast<double>(n));
}

double silhouette_iou(const std::vector<unsigned char>& a, const std::vector<unsigned char>& b) {
  require(a.size() == b.size(), "silhouette_iou: mask sizes differ");
  std::size_t inter = 0, uni = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    inter += a[i] && b[i];
    uni += a[i] || b[i];
  }
  return uni == 0 ? 0.0 : static_cast<double>(inter) / static_cast<double>(uni);
}

int select_pose(const SegmentedImage& exemplar, const ToyShape& shape, const std::vector<int>& candidates) {
  require(!candidates.empty(), "select_pose needs at least one candidate view");
  const auto target = foreground(exemplar.labels);
  require(mask_area(target) > 0, "exemplar has an empty foreground");
  int best = -1;
  double best_iou = -1.0;
  for (int view : candidates) {
    const LabelImage projection = semantic_projection(shape, view);
    require(same_size(projection, exemplar.labels), "exemplar and projection sizes differ");
    const double iou = silhouette_iou(target, foreground(projection));
    if (iou > best_iou || (iou == best_iou && view < best)) {
      best_iou = iou;
      best = view;
    }
  }
  return best;
}

LabelImage semantic_projection(const ToyShape& shape, int view) { return rasterize_labels(shape, view); }

}  // namespace matxfer
