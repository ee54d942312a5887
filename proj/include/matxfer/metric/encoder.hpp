#pragma once

#include <cstdint>
#include <vector>

#include "matxfer/common/image.hpp"
#include "matxfer/learning/model.hpp"
#include "matxfer/learning/rng.hpp"
#include "matxfer/material/library.hpp"

namespace matxfer {

inline constexpr std::size_t kEmbeddingDim = 128;
inline constexpr std::size_t kInputChannels = 4;  // L/100, a/128, b/128 (masked) + mask

/// Part encoder: conv blocks (3x3 conv + relu, 2x2 average pooling on all
/// but the last), mean pooling over the part mask, then a linear map to
/// the embedding. An empty channel list pools the input channels directly.
struct EncoderConfig {
  int input_size = 16;
  std::vector<int> channels{8, 16, 32};
  int embedding = static_cast<int>(kEmbeddingDim);

  void validate() const;
  int feature_size() const;  // spatial size after the conv blocks
};

Model init_encoder(const EncoderConfig& cfg, Rng& rng, bool trainable = true);

/// Encoder input for one part: the part's bounding box cropped from the
/// Lab raster and nearest-resized to input_size, colors zeroed outside the
/// mask, with the mask as a fourth channel. Shape [4, S, S].
Tensor part_input(const ColorImage& color, const std::vector<unsigned char>& mask, int input_size);

/// One training/evaluation item: an encoded part crop and its ground truth.
struct PartSample {
  Tensor input;  // [4, S, S]
  int material = 0;
  Category category = Category::leathers;
  int label = 0;      // semantic part label it came from
  int source = 0;     // index of the render it came from
};

/// Stacks sample inputs into [N, 4, S, S].
Tensor batch_inputs(const std::vector<const PartSample*>& samples);

/// Forward pass on a batch [N, 4, S, S] -> [N, embedding].
ad::Var encode(const ParamVars& p, const EncoderConfig& cfg, const Tensor& batch);

/// Inference embedding of one part; throws ValidationError on an empty mask.
Tensor embed(const ColorImage& color, const std::vector<unsigned char>& mask, const Model& params,
             const EncoderConfig& cfg);

}  // namespace matxfer
