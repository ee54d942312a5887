#include "matxfer/translation/translator.hpp"

#include <algorithm>
#include <cmath>
#include <map>

#include "matxfer/common/errors.hpp"
#include "matxfer/learning/layers.hpp"
#include "matxfer/learning/train.hpp"
#include "matxfer/synth/dataset.hpp"

namespace matxfer {
namespace {

constexpr double kLeak = 0.2;
constexpr double kProbFloor = 1e-12;
constexpr double kRmsFloor = 1e-6;  // keeps sqrt differentiable at zero difference

std::size_t sz(int v) { return static_cast<std::size_t>(v); }

ad::Var conv_relu(const ParamVars& p, const std::string& block, const ad::Var& x) {
  return ad::relu(apply_conv(p, block, x));
}

ad::Var conv_leaky(const ParamVars& p, const std::string& block, const ad::Var& x) {
  return ad::leaky_relu(apply_conv(p, block, x), kLeak);
}

void check_input(const TranslatorConfig& cfg, const Tensor& t, std::size_t channels, const char* what) {
  require(t.rank() == 4 && t.dim(0) == 1 && t.dim(1) == channels && t.dim(2) == sz(cfg.resolution) &&
              t.dim(3) == sz(cfg.resolution),
          std::string(what) + ": expected [1, " + std::to_string(channels) + ", " + std::to_string(cfg.resolution) +
              ", " + std::to_string(cfg.resolution) + "], got " + shape_string(t.shape()));
}

// [1, 2, n, n] planes holding x and y in [-1, 1] at pixel centers.
Tensor coordinate_planes(std::size_t n) {
  Tensor t({1, 2, n, n});
  for (std::size_t y = 0; y < n; ++y)
    for (std::size_t x = 0; x < n; ++x) {
      t.at(0, 0, y, x) = (2.0 * static_cast<double>(x) + 1.0) / static_cast<double>(n) - 1.0;
      t.at(0, 1, y, x) = (2.0 * static_cast<double>(y) + 1.0) / static_cast<double>(n) - 1.0;
    }
  return t;
}

}  // namespace

void TranslatorConfig::validate() const {
  require(resolution >= 4 && resolution % 4 == 0, "translator resolution must be a positive multiple of 4");
  require(label_count >= 2, "translator needs at least two labels");
  require(embed_channels >= 1 && hidden_channels >= 1 && disc_channels >= 1, "translator channel counts must be >= 1");
  require(temperature > 0.0, "correspondence temperature must be > 0");
  require(context_bandwidth > 0.0, "context bandwidth must be > 0");
  require(max_shift >= 0 && max_shift < resolution, "max_shift must be in [0, resolution)");
  require(recon_threshold > 0.0, "recon_threshold must be > 0");
}

Config TranslatorConfig::to_config() const {
  Config c;
  c.set("translator", "resolution", resolution);
  c.set("translator", "label_count", label_count);
  c.set("translator", "embed_channels", embed_channels);
  c.set("translator", "hidden_channels", hidden_channels);
  c.set("translator", "disc_channels", disc_channels);
  c.set("translator", "temperature", temperature);
  c.set("translator", "context_bandwidth", context_bandwidth);
  c.set("translator", "max_shift", max_shift);
  c.set("translator", "coordinates", coordinates ? 1 : 0);
  c.set("translator", "recon_threshold", recon_threshold);
  return c;
}

TranslatorConfig TranslatorConfig::from_config(const Config& c) {
  TranslatorConfig t;
  t.resolution = c.get_int("translator", "resolution", t.resolution);
  t.label_count = c.get_int("translator", "label_count", t.label_count);
  t.embed_channels = c.get_int("translator", "embed_channels", t.embed_channels);
  t.hidden_channels = c.get_int("translator", "hidden_channels", t.hidden_channels);
  t.disc_channels = c.get_int("translator", "disc_channels", t.disc_channels);
  t.temperature = c.get_double("translator", "temperature", t.temperature);
  t.context_bandwidth = c.get_double("translator", "context_bandwidth", t.context_bandwidth);
  t.max_shift = c.get_int("translator", "max_shift", t.max_shift);
  t.coordinates = c.get_int("translator", "coordinates", t.coordinates ? 1 : 0) != 0;
  t.recon_threshold = c.get_double("translator", "recon_threshold", t.recon_threshold);
  t.validate();
  return t;
}

void TranslationWeights::validate() const {
  for (double v : psi) require(v >= 0.0 && std::isfinite(v), "translation weights must be finite and >= 0");
}

Model init_translator(const TranslatorConfig& cfg, Rng& rng) {
  cfg.validate();
  const std::size_t k = sz(cfg.label_count), h = sz(cfg.hidden_channels), e = sz(cfg.embed_channels);
  Model m;
  const std::size_t xy = cfg.coordinates ? 2 : 0;
  m.add(make_conv("tr.seg.c1", k + xy, h, 3, rng));
  m.add(make_conv("tr.seg.c2", h, e, 3, rng));
  m.add(make_conv("tr.seg.c3", e, e, 3, rng));
  m.add(make_conv("tr.col.c1", 3 + xy, h, 3, rng));
  m.add(make_conv("tr.col.c2", h, e, 3, rng));
  m.add(make_conv("tr.col.c3", e, e, 3, rng));
  m.add(make_conv("tr.gen.e1", k + 3, h, 3, rng));
  m.add(make_conv("tr.gen.e2", h, 2 * h, 3, rng));
  m.add(make_conv("tr.gen.d1", 3 * h, h, 3, rng));
  // Zero output layer: the untrained generator passes the warped color through.
  ParamBlock out = make_conv("tr.gen.out", h, 3, 3, rng);
  out.tensor("weight").fill(0.0);
  m.add(std::move(out));

  Rng fx = rng.fork(1);
  m.add(make_conv("fx.col.l1", 3, 8, 3, fx, false));
  m.add(make_conv("fx.col.l2", 8, 16, 3, fx, false));
  m.add(make_conv("fx.col.l3", 16, 16, 3, fx, false));
  m.add(make_conv("fx.seg.l1", k, 8, 3, fx, false));
  m.add(make_conv("fx.seg.l2", 8, 16, 3, fx, false));
  return m;
}

Model init_discriminator(const TranslatorConfig& cfg, Rng& rng) {
  cfg.validate();
  const std::size_t d = sz(cfg.disc_channels);
  Model m;
  m.add(make_conv("disc.c1", 3, d, 3, rng));
  m.add(make_conv("disc.c2", d, d, 3, rng));
  m.add(make_conv("disc.out", d, 1, 3, rng));
  return m;
}

ad::Var embed_shared(const ParamVars& p, const TranslatorConfig& cfg, const ad::Var& input, Domain domain) {
  const bool seg = domain == Domain::seg;
  check_input(cfg, input->value, seg ? sz(cfg.label_count) : 3, "embed_shared");
  const std::string pre = seg ? "tr.seg." : "tr.col.";
  const ad::Var in =
      cfg.coordinates ? ad::concat_channels(input, ad::constant(coordinate_planes(input->value.dim(2)))) : input;
  ad::Var x = conv_relu(p, pre + "c1", in);
  x = conv_relu(p, pre + "c2", ad::avg_pool2(x));
  x = apply_conv(p, pre + "c3", x);
  return ad::normalize_rows(ad::to_positions(x));
}

std::vector<ad::Var> extract_features(const ParamVars& p, const ad::Var& image, Domain domain) {
  std::vector<ad::Var> out;
  if (domain == Domain::color) {
    out.push_back(conv_leaky(p, "fx.col.l1", image));
    out.push_back(conv_leaky(p, "fx.col.l2", ad::avg_pool2(out.back())));
    out.push_back(conv_leaky(p, "fx.col.l3", ad::avg_pool2(out.back())));
  } else {
    out.push_back(conv_leaky(p, "fx.seg.l1", image));
    out.push_back(conv_leaky(p, "fx.seg.l2", ad::avg_pool2(out.back())));
  }
  return out;
}

TranslationGraph run_translator(const ParamVars& p, const TranslatorConfig& cfg, const Tensor& o_s, const Tensor& p_c) {
  check_input(cfg, o_s, sz(cfg.label_count), "translator segmentation input");
  check_input(cfg, p_c, 3, "translator color input");
  const std::size_t f = sz(cfg.feature_size());
  const ad::Var seg_in = ad::constant(o_s), col_in = ad::constant(p_c);

  TranslationGraph g;
  g.emb_o = embed_shared(p, cfg, seg_in, Domain::seg);
  g.emb_p = embed_shared(p, cfg, col_in, Domain::color);
  g.corr_op = correspondence(g.emb_o, g.emb_p, cfg.temperature);
  g.corr_po = correspondence(g.emb_p, g.emb_o, cfg.temperature);

  const ad::Var color_small = ad::to_positions(ad::avg_pool2(col_in));
  g.warped_color = ad::upsample_nearest(ad::from_positions(warp(color_small, g.corr_op), f, f), 2);

  const ad::Var labels_small = ad::to_positions(ad::avg_pool2(seg_in));
  const ad::Var seg_small = warp_labels(labels_small, g.corr_po);
  g.seg = ad::to_positions(ad::upsample_nearest(ad::from_positions(seg_small, f, f), 2));

  const ad::Var e1 = conv_relu(p, "tr.gen.e1", ad::concat_channels(seg_in, g.warped_color));
  const ad::Var e2 = conv_relu(p, "tr.gen.e2", ad::avg_pool2(e1));
  const ad::Var d1 = conv_relu(p, "tr.gen.d1", ad::concat_channels(ad::upsample_nearest(e2, 2), e1));
  g.color = ad::add(apply_conv(p, "tr.gen.out", d1), g.warped_color);
  return g;
}

double mean_lab_error(const ColorImage& a, const ColorImage& b) {
  require(a.height() == b.height() && a.width() == b.width() && a.pixel_count() > 0, "mean_lab_error: size mismatch");
  double total = 0.0;
  for (std::size_t i = 0; i < a.pixel_count(); ++i) {
    const auto p = a.pixel(i), q = b.pixel(i);
    total += std::sqrt((p[0] - q[0]) * (p[0] - q[0]) + (p[1] - q[1]) * (p[1] - q[1]) + (p[2] - q[2]) * (p[2] - q[2]));
  }
  return total / static_cast<double>(a.pixel_count());
}

TranslationOutput translate(const LabelImage& o_s, const ColorImage& p_c, const Model& model,
                            const TranslatorConfig& cfg) {
  require(o_s.height() == cfg.resolution && o_s.width() == cfg.resolution && p_c.height() == cfg.resolution &&
              p_c.width() == cfg.resolution,
          "translate: inputs must be " + std::to_string(cfg.resolution) + "x" + std::to_string(cfg.resolution));
  const ParamVars vars = ParamVars::frozen(model);
  const auto g = run_translator(vars, cfg, one_hot_labels(o_s, sz(cfg.label_count)), color_tensor(p_c));
  TranslationOutput out;
  out.color = color_image(g.color->value);
  out.seg_probs = g.seg->value;
  out.seg = argmax_labels(out.seg_probs, cfg.resolution, cfg.resolution);
  out.correlation = g.corr_op->value;
  return out;
}

ad::Var contextual_loss(const std::vector<ad::Var>& feat_a, const std::vector<ad::Var>& feat_b, double bandwidth) {
  require(!feat_a.empty() && feat_a.size() == feat_b.size(), "contextual_loss: layer lists must match and be nonempty");
  require(bandwidth > 0.0, "contextual_loss: bandwidth must be > 0");
  std::vector<ad::Var> layers;
  for (std::size_t l = 0; l < feat_a.size(); ++l) {
    const auto to_rows = [](const ad::Var& f) { return f->value.rank() == 4 ? ad::to_positions(f) : f; };
    const ad::Var a = ad::normalize_rows(to_rows(feat_a[l])), b = ad::normalize_rows(to_rows(feat_b[l]));
    require(a->value.dim(0) > 0 && b->value.dim(0) > 0, "contextual_loss: empty layer");
    const ad::Var cos = ad::matmul(a, ad::transpose(b));
    const ad::Var affinity = ad::exp(ad::mul_scalar(ad::add_scalar(cos, -1.0), 1.0 / bandwidth));
    layers.push_back(ad::neg(ad::log(ad::mean(ad::row_max(affinity)))));
  }
  return ad::mul_scalar(ad::add_all(layers), 1.0 / static_cast<double>(layers.size()));
}

ad::Var l1_loss(const ad::Var& a, const ad::Var& b) { return ad::mean(ad::abs(ad::sub(a, b))); }

ad::Var perceptual_loss(const std::vector<ad::Var>& feat_a, const std::vector<ad::Var>& feat_b) {
  require(!feat_a.empty() && feat_a.size() == feat_b.size(), "perceptual_loss: layer lists must match and be nonempty");
  return l1_loss(feat_a.back(), feat_b.back());
}

ad::Var feature_matching_loss(const std::vector<ad::Var>& feat_a, const std::vector<ad::Var>& feat_b) {
  require(!feat_a.empty() && feat_a.size() == feat_b.size(), "feature_matching_loss: layer lists must match");
  std::vector<ad::Var> terms;
  for (std::size_t l = 0; l < feat_a.size(); ++l) terms.push_back(l1_loss(feat_a[l], feat_b[l]));
  return ad::mul_scalar(ad::add_all(terms), 1.0 / static_cast<double>(terms.size()));
}

AdversarialLosses adversarial_losses(const ad::Var& real_scores, const ad::Var& fake_scores) {
  const ad::Var d_real = ad::mean(ad::relu(ad::add_scalar(ad::neg(real_scores), 1.0)));
  const ad::Var d_fake = ad::mean(ad::relu(ad::add_scalar(fake_scores, 1.0)));
  return {ad::add(d_real, d_fake), ad::neg(ad::mean(fake_scores))};
}

ad::Var discriminate(const ParamVars& p, const ad::Var& image) {
  ad::Var x = conv_leaky(p, "disc.c1", image);
  x = conv_leaky(p, "disc.c2", ad::avg_pool2(x));
  return apply_conv(p, "disc.out", ad::avg_pool2(x));
}

ad::Var label_nll(const ad::Var& probs, const LabelImage& truth) {
  require(probs->value.rank() == 2 && probs->value.dim(0) == truth.pixel_count(), "label_nll: size mismatch");
  std::vector<std::size_t> idx(truth.pixel_count());
  for (std::size_t i = 0; i < idx.size(); ++i) {
    require(truth[i] >= 0, "label_nll: negative label");
    idx[i] = static_cast<std::size_t>(truth[i]);
  }
  return ad::neg(ad::mean(ad::log_clamped(ad::pick(probs, idx), kProbFloor)));
}

ad::Var segmentation_context_loss(const std::vector<ad::Var>& feat_a, const std::vector<ad::Var>& feat_b) {
  require(!feat_a.empty() && feat_a.size() == feat_b.size(), "segmentation_context_loss: layer lists must match");
  std::vector<ad::Var> terms;
  for (std::size_t l = 0; l < feat_a.size(); ++l) {
    const ad::Var ms = ad::mean(ad::square(ad::sub(feat_a[l], feat_b[l])));
    terms.push_back(ad::add_scalar(ad::sqrt(ad::add_scalar(ms, kRmsFloor * kRmsFloor)), -kRmsFloor));
  }
  return ad::add_all(terms);
}

Distortion sample_distortion(Rng& rng, int max_shift) {
  Distortion d;
  d.flip = rng.uniform() < 0.5;
  const std::size_t span = static_cast<std::size_t>(2 * max_shift + 1);
  d.dx = static_cast<int>(rng.index(span)) - max_shift;
  d.dy = static_cast<int>(rng.index(span)) - max_shift;
  return d;
}

Tensor apply_distortion(const Tensor& planes, const Distortion& d) {
  require(planes.rank() == 4, "apply_distortion expects [N, C, H, W]");
  const long H = static_cast<long>(planes.dim(2)), W = static_cast<long>(planes.dim(3));
  Tensor out(planes.shape());
  for (std::size_t n = 0; n < planes.dim(0); ++n)
    for (std::size_t c = 0; c < planes.dim(1); ++c)
      for (long y = 0; y < H; ++y)
        for (long x = 0; x < W; ++x) {
          const long sy = std::clamp(y - d.dy, 0L, H - 1);
          long sx = std::clamp(x - d.dx, 0L, W - 1);
          if (d.flip) sx = W - 1 - sx;
          out.at(n, c, static_cast<std::size_t>(y), static_cast<std::size_t>(x)) =
              planes.at(n, c, static_cast<std::size_t>(sy), static_cast<std::size_t>(sx));
        }
  return out;
}

ad::Var TranslationTerms::total(const TranslationWeights& w) const {
  std::vector<ad::Var> parts;
  for (std::size_t i = 0; i < terms.size(); ++i)
    if (w.psi[i] != 0.0) parts.push_back(ad::mul_scalar(terms[i], w.psi[i]));
  if (parts.empty()) return ad::constant(Tensor::scalar(0.0));
  return ad::add_all(parts);
}

std::array<double, 8> TranslationTerms::values() const {
  std::array<double, 8> v{};
  for (std::size_t i = 0; i < terms.size(); ++i) v[i] = terms[i]->value.item();
  return v;
}

TranslationTerms translation_terms(const ParamVars& p, const ParamVars& disc, const TranslatorConfig& cfg,
                                   const Quadruple& q, const Distortion& distortion) {
  const Tensor o_s = one_hot_labels(q.o_s, sz(cfg.label_count));
  const Tensor p_s = one_hot_labels(q.p_s, sz(cfg.label_count));
  const Tensor o_c = color_tensor(q.o_c), p_c = color_tensor(q.p_c);

  const TranslationGraph g = run_translator(p, cfg, o_s, p_c);
  const auto fx_out = extract_features(p, g.color, Domain::color);
  const auto fx_p = extract_features(p, ad::constant(p_c), Domain::color);
  const auto fx_o = extract_features(p, ad::constant(o_c), Domain::color);

  // Color context on the two deeper levels, mirroring mid-to-deep taps.
  const std::vector<ad::Var> deep_out(fx_out.begin() + 1, fx_out.end()), deep_p(fx_p.begin() + 1, fx_p.end());

  const TranslationGraph pseudo = run_translator(p, cfg, o_s, apply_distortion(o_c, distortion));
  const std::size_t res = sz(cfg.resolution);
  const ad::Var seg_planes = ad::from_positions(g.seg, res, res);
  const ad::Var p_small = ad::to_positions(ad::avg_pool2(ad::constant(p_c)));

  TranslationTerms t;
  t.terms[0] = contextual_loss(deep_out, deep_p, cfg.context_bandwidth);
  t.terms[1] = perceptual_loss(fx_out, fx_o);
  t.terms[2] = feature_matching_loss(extract_features(p, pseudo.color, Domain::color), fx_o);
  t.terms[3] = ad::neg(ad::mean(discriminate(disc, g.color)));
  t.terms[4] = label_nll(g.seg, q.p_s);
  t.terms[5] = segmentation_context_loss(extract_features(p, seg_planes, Domain::seg),
                                         extract_features(p, ad::constant(p_s), Domain::seg));
  t.terms[6] = l1_loss(g.emb_o, embed_shared(p, cfg, ad::constant(o_c), Domain::color));
  t.terms[7] = l1_loss(warp(warp(p_small, g.corr_op), g.corr_po), p_small);
  return t;
}

std::vector<Quadruple> build_quadruples(const ToyDataset& ds, const std::vector<int>& shape_ids, int max_view_gap) {
  require(max_view_gap >= 0, "max_view_gap must be >= 0");
  std::vector<Quadruple> out;
  for (int id : shape_ids) {
    ds.shape(id);  // validates the id
    std::map<std::pair<int, int>, const RenderedView*> by_key;  // (variant, view)
    for (const auto& r : ds.renders)
      if (r.shape_id == id) by_key[{r.variant, r.view}] = &r;
    for (const auto& [ko, ro] : by_key)
      for (const auto& [kp, rp] : by_key) {
        if (ko.first == kp.first || std::abs(ko.second - kp.second) > max_view_gap) continue;
        out.push_back({ro->image.color, ro->image.labels, rp->image.color, rp->image.labels});
      }
  }
  return out;
}

TranslatorTrainResult train_translator(const Model& generator, const Model& discriminator,
                                       const std::vector<Quadruple>& data, const TranslatorConfig& cfg,
                                       const TranslationWeights& weights, const OptimizerConfig& opt,
                                       const TranslatorTrainConfig& train) {
  cfg.validate();
  weights.validate();
  opt.validate();
  TranslatorTrainResult result{generator, discriminator, {}, {}, {}};
  if (train.steps == 0) return result;
  require(!data.empty(), "train_translator: no quadruples");

  Optimizer opt_g(opt), opt_d(opt);
  Rng rng(derive_seed(train.seed, 17));
  const double inv_batch = 1.0 / static_cast<double>(opt.batch_size);

  for (std::size_t s = 0; s < train.steps; ++s) {
    std::vector<const Quadruple*> batch;
    std::vector<Distortion> distortions;
    for (std::size_t b = 0; b < opt.batch_size; ++b) {
      batch.push_back(&data[rng.index(data.size())]);
      distortions.push_back(sample_distortion(rng, cfg.max_shift));
    }

    std::array<double, 8> term_sum{};
    const ParamVars disc_frozen = ParamVars::frozen(result.discriminator);
    const StepLossFn g_loss = [&](const ParamVars& p, std::size_t, Rng&) {
      std::vector<ad::Var> totals;
      for (std::size_t b = 0; b < batch.size(); ++b) {
        const TranslationTerms t = translation_terms(p, disc_frozen, cfg, *batch[b], distortions[b]);
        const auto v = t.values();
        for (std::size_t i = 0; i < 8; ++i) term_sum[i] += v[i] * inv_batch;
        totals.push_back(t.total(weights));
      }
      return ad::mul_scalar(ad::add_all(totals), inv_batch);
    };
    result.g_trace.push_back(train_one_step(result.generator, g_loss, opt_g, s, rng));
    result.term_trace.push_back(term_sum);

    // Discriminator step on fakes from the updated generator.
    const ParamVars gen_frozen = ParamVars::frozen(result.generator);
    std::vector<Tensor> fakes, reals;
    for (const Quadruple* q : batch) {
      fakes.push_back(
          run_translator(gen_frozen, cfg, one_hot_labels(q->o_s, sz(cfg.label_count)), color_tensor(q->p_c))
              .color->value);
      reals.push_back(color_tensor(q->p_c));
    }
    const StepLossFn d_loss = [&](const ParamVars& p, std::size_t, Rng&) {
      std::vector<ad::Var> terms;
      for (std::size_t b = 0; b < fakes.size(); ++b)
        terms.push_back(adversarial_losses(discriminate(p, ad::constant(reals[b])), discriminate(p, ad::constant(fakes[b])))
                            .d_loss);
      return ad::mul_scalar(ad::add_all(terms), inv_batch);
    };
    result.d_trace.push_back(train_one_step(result.discriminator, d_loss, opt_d, s, rng));
  }
  return result;
}

}  // namespace matxfer
