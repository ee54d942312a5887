#include "matxfer/translation/correspondence.hpp"

#include <algorithm>

#include "matxfer/common/errors.hpp"

namespace matxfer {
namespace {
constexpr double kScale[3] = {100.0, 128.0, 128.0};
}  // namespace

Tensor color_tensor(const ColorImage& image) {
  const std::size_t h = static_cast<std::size_t>(image.height()), w = static_cast<std::size_t>(image.width());
  Tensor t({1, 3, h, w});
  for (std::size_t y = 0; y < h; ++y)
    for (std::size_t x = 0; x < w; ++x)
      for (std::size_t c = 0; c < 3; ++c)
        t.at(0, c, y, x) = image.at(static_cast<int>(y), static_cast<int>(x), static_cast<int>(c)) / kScale[c];
  return t;
}

ColorImage color_image(const Tensor& planes) {
  require(planes.rank() == 4 && planes.dim(0) == 1 && planes.dim(1) == 3, "color_image expects [1, 3, H, W]");
  const int h = static_cast<int>(planes.dim(2)), w = static_cast<int>(planes.dim(3));
  ColorImage img(h, w);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      img.at(y, x, 0) = std::clamp(planes.at(0, 0, y, x) * kScale[0], 0.0, 100.0);
      for (int c = 1; c < 3; ++c) img.at(y, x, c) = std::clamp(planes.at(0, c, y, x) * kScale[c], -128.0, 127.0);
    }
  return img;
}

Tensor one_hot_labels(const LabelImage& labels, std::size_t label_count) {
  const std::size_t h = static_cast<std::size_t>(labels.height()), w = static_cast<std::size_t>(labels.width());
  Tensor t({1, label_count, h, w});
  for (std::size_t y = 0; y < h; ++y)
    for (std::size_t x = 0; x < w; ++x) {
      const int l = labels.at(static_cast<int>(y), static_cast<int>(x));
      require(l >= 0 && static_cast<std::size_t>(l) < label_count, "label " + std::to_string(l) + " outside the vocabulary");
      t.at(0, static_cast<std::size_t>(l), y, x) = 1.0;
    }
  return t;
}

LabelImage argmax_labels(const Tensor& probs, int height, int width) {
  const std::size_t n = static_cast<std::size_t>(height) * static_cast<std::size_t>(width);
  const bool planes = probs.rank() == 4;
  require((planes && probs.dim(0) == 1 && probs.dim(2) * probs.dim(3) == n) || (probs.rank() == 2 && probs.dim(0) == n),
          "argmax_labels: distribution does not match the raster size");
  const std::size_t k = probs.dim(1);
  LabelImage out(height, width);
  for (std::size_t i = 0; i < n; ++i) {
    auto at = [&](std::size_t l) { return planes ? probs[l * n + i] : probs[i * k + l]; };
    std::size_t best = 0;
    for (std::size_t l = 1; l < k; ++l)
      if (at(l) > at(best)) best = l;
    out[i] = static_cast<int>(best);
  }
  return out;
}

ad::Var correspondence(const ad::Var& emb_o, const ad::Var& emb_p, double temperature) {
  require(temperature > 0.0, "correspondence temperature must be > 0");
  require(emb_o->value.rank() == 2 && emb_p->value.rank() == 2 && emb_o->value.dim(1) == emb_p->value.dim(1),
          "correspondence: embeddings must be [n, C] with equal C");
  const ad::Var cos = ad::matmul(ad::normalize_rows(emb_o), ad::transpose(ad::normalize_rows(emb_p)));
  return ad::softmax_rows(ad::mul_scalar(cos, 1.0 / temperature));
}

ad::Var warp(const ad::Var& source, const ad::Var& corr, WarpDirection direction) {
  require(corr->value.rank() == 2 && source->value.rank() == 2, "warp: expects [n, C] source and a rank-2 matrix");
  if (direction == WarpDirection::forward) {
    require(source->value.dim(0) == corr->value.dim(1), "warp: source rows must match correlation columns");
    return ad::matmul(corr, source);
  }
  require(source->value.dim(0) == corr->value.dim(0), "warp: source rows must match correlation rows");
  return ad::matmul(ad::normalize_rows_l1(ad::transpose(corr)), source);
}

ad::Var warp_labels(const ad::Var& source, const ad::Var& corr, WarpDirection direction) {
  return ad::normalize_rows_l1(warp(source, corr, direction));
}

}  // namespace matxfer
