#pragma once

#include <cstddef>

#include "matxfer/common/image.hpp"
#include "matxfer/learning/autodiff.hpp"

namespace matxfer {

/// Normalized Lab planes [1, 3, H, W]: L/100, a/128, b/128.
Tensor color_tensor(const ColorImage& image);
/// Inverse of color_tensor, clamped to the Lab gamut box.
ColorImage color_image(const Tensor& planes);

/// One-hot label planes [1, K, H, W]; labels must lie in [0, K).
Tensor one_hot_labels(const LabelImage& labels, std::size_t label_count);
/// Per-pixel argmax of a [1, K, H, W] or [H*W, K] distribution (ties to the lowest label).
LabelImage argmax_labels(const Tensor& probs, int height, int width);

/// Row i = softmax_j(cos(f_o[i], f_p[j]) / temperature). Inputs are [n, C]
/// position features; the result is [n_o, n_p] and row-stochastic.
ad::Var correspondence(const ad::Var& emb_o, const ad::Var& emb_p, double temperature);

enum class WarpDirection {
  forward,   // out[i] = sum_j corr[i][j] src[j]; src has one row per corr column
  backward,  // out[j] = sum_i corr[i][j] src[i] / sum_i corr[i][j]; src has one row per corr row
};

/// Warps position features [n, C]. Both directions are convex combinations
/// of source rows, so warping is linear in `source` and constants survive.
ad::Var warp(const ad::Var& source, const ad::Var& corr, WarpDirection direction = WarpDirection::forward);

/// Warps one-hot (or soft) label planes and renormalizes each position to a distribution.
ad::Var warp_labels(const ad::Var& source, const ad::Var& corr, WarpDirection direction = WarpDirection::forward);

}  // namespace matxfer
