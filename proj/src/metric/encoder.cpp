#include "matxfer/metric/encoder.hpp"

#include <algorithm>

#include "matxfer/common/errors.hpp"
#include "matxfer/learning/layers.hpp"

namespace matxfer {
namespace {

std::string conv_name(std::size_t i) { return "enc.conv" + std::to_string(i); }

// Mask at the resolution of the last conv block: a cell is inside when any
// input pixel it covers is inside.
Tensor pooled_mask(const Tensor& batch, int levels) {
  const std::size_t n = batch.dim(0), s = batch.dim(2);
  Tensor m({n, 1, s, s});
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t y = 0; y < s; ++y)
      for (std::size_t x = 0; x < s; ++x) m.at(i, 0, y, x) = batch.at(i, 3, y, x) > 0.5 ? 1.0 : 0.0;
  for (int l = 0; l < levels; ++l) {
    const std::size_t h = m.dim(2) / 2;
    Tensor next({n, 1, h, h});
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t y = 0; y < h; ++y)
        for (std::size_t x = 0; x < h; ++x)
          next.at(i, 0, y, x) = std::max({m.at(i, 0, 2 * y, 2 * x), m.at(i, 0, 2 * y + 1, 2 * x),
                                          m.at(i, 0, 2 * y, 2 * x + 1), m.at(i, 0, 2 * y + 1, 2 * x + 1)});
    m = std::move(next);
  }
  return m;
}

}  // namespace

void EncoderConfig::validate() const {
  require(input_size >= 1, "encoder input_size must be >= 1");
  require(embedding >= 1, "encoder embedding size must be >= 1");
  for (int c : channels) require(c >= 1, "encoder channel counts must be >= 1");
  const int pools = channels.empty() ? 0 : static_cast<int>(channels.size()) - 1;
  require(input_size % (1 << pools) == 0, "encoder input_size must be divisible by 2^(blocks-1)");
}

int EncoderConfig::feature_size() const {
  const int pools = channels.empty() ? 0 : static_cast<int>(channels.size()) - 1;
  return input_size >> pools;
}

Model init_encoder(const EncoderConfig& cfg, Rng& rng, bool trainable) {
  cfg.validate();
  Model m;
  std::size_t in = kInputChannels;
  for (std::size_t i = 0; i < cfg.channels.size(); ++i) {
    m.add(make_conv(conv_name(i), in, static_cast<std::size_t>(cfg.channels[i]), 3, rng, trainable));
    in = static_cast<std::size_t>(cfg.channels[i]);
  }
  m.add(make_linear("enc.fc", in, static_cast<std::size_t>(cfg.embedding), rng, trainable));
  return m;
}

Tensor part_input(const ColorImage& color, const std::vector<unsigned char>& mask, int input_size) {
  require(mask.size() == color.pixel_count(), "part mask does not match the image");
  require(input_size >= 1, "input_size must be >= 1");
  int y0 = color.height(), y1 = -1, x0 = color.width(), x1 = -1;
  for (int y = 0; y < color.height(); ++y)
    for (int x = 0; x < color.width(); ++x)
      if (mask[static_cast<std::size_t>(y) * color.width() + x]) {
        y0 = std::min(y0, y), y1 = std::max(y1, y);
        x0 = std::min(x0, x), x1 = std::max(x1, x);
      }
  require(y1 >= 0, "part mask is empty");
  const auto s = static_cast<std::size_t>(input_size);
  const int bh = y1 - y0 + 1, bw = x1 - x0 + 1;
  Tensor t({kInputChannels, s, s});
  auto at = [&](std::size_t c, std::size_t y, std::size_t x) -> double& { return t[(c * s + y) * s + x]; };
  for (std::size_t y = 0; y < s; ++y)
    for (std::size_t x = 0; x < s; ++x) {
      const int sy = y0 + static_cast<int>((static_cast<double>(y) + 0.5) * bh / input_size);
      const int sx = x0 + static_cast<int>((static_cast<double>(x) + 0.5) * bw / input_size);
      if (!mask[static_cast<std::size_t>(sy) * color.width() + sx]) continue;
      at(0, y, x) = color.at(sy, sx, 0) / 100.0;
      at(1, y, x) = color.at(sy, sx, 1) / 128.0;
      at(2, y, x) = color.at(sy, sx, 2) / 128.0;
      at(3, y, x) = 1.0;
    }
  return t;
}

Tensor batch_inputs(const std::vector<const PartSample*>& samples) {
  require(!samples.empty(), "empty batch");
  Shape shape = samples[0]->input.shape();
  shape.insert(shape.begin(), samples.size());
  Tensor out(shape);
  const std::size_t per = samples[0]->input.size();
  for (std::size_t i = 0; i < samples.size(); ++i) {
    require(samples[i]->input.size() == per, "batch samples differ in size");
    std::copy(samples[i]->input.vec().begin(), samples[i]->input.vec().end(), out.values().begin() + i * per);
  }
  return out;
}

ad::Var encode(const ParamVars& p, const EncoderConfig& cfg, const Tensor& batch) {
  require(batch.rank() == 4 && batch.dim(1) == kInputChannels && batch.dim(2) == static_cast<std::size_t>(cfg.input_size) &&
              batch.dim(3) == static_cast<std::size_t>(cfg.input_size),
          "encoder input must be [N, 4, " + std::to_string(cfg.input_size) + ", " + std::to_string(cfg.input_size) +
              "], got " + shape_string(batch.shape()));
  ad::Var h = ad::constant(batch);
  for (std::size_t i = 0; i < cfg.channels.size(); ++i) {
    h = ad::relu(apply_conv(p, conv_name(i), h));
    if (i + 1 < cfg.channels.size()) h = ad::avg_pool2(h);
  }
  const int levels = cfg.channels.empty() ? 0 : static_cast<int>(cfg.channels.size()) - 1;
  return apply_linear(p, "enc.fc", ad::masked_mean_pool(h, pooled_mask(batch, levels)));
}

Tensor embed(const ColorImage& color, const std::vector<unsigned char>& mask, const Model& params,
             const EncoderConfig& cfg) {
  require(mask_area(mask) > 0, "embed: part mask is empty");
  PartSample s{part_input(color, mask, cfg.input_size)};
  const ParamVars vars = ParamVars::frozen(params);
  Tensor out = encode(vars, cfg, batch_inputs({&s}))->value;
  return out.reshaped({out.size()});
}

}  // namespace matxfer
