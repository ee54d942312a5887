#include "matxfer/transfer/transfer.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <numeric>

#include "matxfer/common/errors.hpp"
#include "matxfer/common/log.hpp"
#include "matxfer/common/raster_io.hpp"
#include "matxfer/learning/train.hpp"
#include "matxfer/pose/pose.hpp"

namespace matxfer {
namespace {

struct UnionFind {
  std::vector<std::size_t> parent;
  explicit UnionFind(std::size_t n) : parent(n) { std::iota(parent.begin(), parent.end(), 0); }
  std::size_t find(std::size_t x) {
    while (parent[x] != x) x = parent[x] = parent[parent[x]];
    return x;
  }
  // The smaller root survives so results do not depend on merge order.
  void unite(std::size_t a, std::size_t b) {
    a = find(a);
    b = find(b);
    if (a != b) parent[std::max(a, b)] = std::min(a, b);
  }
};

// 4-connected components of pixels sharing a class; -1 marks excluded pixels.
std::vector<int> components(const std::vector<int>& cls, int h, int w, int& count) {
  std::vector<int> comp(cls.size(), -1);
  count = 0;
  std::vector<std::size_t> stack;
  for (std::size_t start = 0; start < cls.size(); ++start) {
    if (cls[start] < 0 || comp[start] >= 0) continue;
    comp[start] = count;
    stack.push_back(start);
    while (!stack.empty()) {
      const std::size_t i = stack.back();
      stack.pop_back();
      const int y = static_cast<int>(i) / w, x = static_cast<int>(i) % w;
      const int ny[4] = {y - 1, y + 1, y, y}, nx[4] = {x, x, x - 1, x + 1};
      for (int k = 0; k < 4; ++k) {
        if (ny[k] < 0 || ny[k] >= h || nx[k] < 0 || nx[k] >= w) continue;
        const std::size_t j = static_cast<std::size_t>(ny[k]) * w + nx[k];
        if (comp[j] < 0 && cls[j] == cls[i]) {
          comp[j] = count;
          stack.push_back(j);
        }
      }
    }
    ++count;
  }
  return comp;
}

double color_sq(const std::array<double, 3>& a, const std::array<double, 3>& b) {
  return (a[0] - b[0]) * (a[0] - b[0]) + (a[1] - b[1]) * (a[1] - b[1]) + (a[2] - b[2]) * (a[2] - b[2]);
}

std::vector<unsigned char> nonzero(const LabelImage& labels) {
  std::vector<unsigned char> m(labels.pixel_count());
  for (std::size_t i = 0; i < m.size(); ++i) m[i] = labels[i] != 0;
  return m;
}

HeadProbs head_rows(const HeadProbs& h, std::size_t n) {
  return {ad::slice_rows(h.category, 0, n), ad::slice_rows(h.material, 0, n)};
}

template <typename F>
auto run_stage(const char* name, F&& fn) {
  try {
    return fn();
  } catch (const ValidationError& e) {
    throw ValidationError(std::string("[") + name + "] " + e.what());
  } catch (const StageError&) {
    throw;
  } catch (const std::exception& e) {
    throw StageError(name, e.what());
  }
}

}  // namespace

TranslatedColorTruth build_gt_translated_color(const std::vector<int>& o_parts, const PartMaterialAssignment& exemplar,
                                               const std::map<int, int>& predicted, const DistanceMatrix& d,
                                               const std::vector<Material>& library) {
  require(!exemplar.parts.empty(), "exemplar assignment is empty");
  std::set<int> candidates;
  for (const auto& [label, e] : exemplar.parts) {
    require(e.material >= 0 && static_cast<std::size_t>(e.material) < d.n, "exemplar material outside the library");
    candidates.insert(e.material);
  }
  TranslatedColorTruth out;
  for (int part : o_parts) {
    int material = -1;
    auto it = exemplar.parts.find(part);
    if (it != exemplar.parts.end()) {
      material = it->second.material;
      out.matched.insert(part);
    } else {
      auto pit = predicted.find(part);
      require(pit != predicted.end(), "no prediction for unmatched part " + std::to_string(part));
      require(pit->second >= 0 && static_cast<std::size_t>(pit->second) < d.n, "predicted material outside the library");
      double best = std::numeric_limits<double>::infinity();
      for (int c : candidates)  // ascending, so ties keep the lowest id
        if (d(static_cast<std::size_t>(c), static_cast<std::size_t>(pit->second)) < best) {
          best = d(static_cast<std::size_t>(c), static_cast<std::size_t>(pit->second));
          material = c;
        }
    }
    out.assignment.parts[part] = {library.at(static_cast<std::size_t>(material)).category, material, {}};
  }
  return out;
}

void OversegConfig::validate() const {
  require(granularity >= 1, "granularity must be >= 1");
  require(position_weight >= 0.0 && merge_distance >= 0.0, "overseg weights must be >= 0");
  require(min_segment_pixels >= 1 && iterations >= 1, "min_segment_pixels and iterations must be >= 1");
}

LabelImage oversegment(const ColorImage& color, const std::vector<unsigned char>& foreground,
                       const OversegConfig& cfg) {
  cfg.validate();
  const int h = color.height(), w = color.width();
  require(foreground.size() == color.pixel_count(), "oversegment: mask size mismatch");
  std::vector<std::size_t> fg;
  for (std::size_t i = 0; i < foreground.size(); ++i)
    if (foreground[i]) fg.push_back(i);
  require(!fg.empty(), "oversegment: empty foreground");
  LabelImage out(h, w, 0);
  if (fg.size() < static_cast<std::size_t>(cfg.granularity)) {
    for (std::size_t i : fg) out[i] = 1;
    return out;
  }

  using Feature = std::array<double, 5>;
  std::vector<Feature> f(fg.size());
  for (std::size_t n = 0; n < fg.size(); ++n) {
    const auto c = color.pixel(fg[n]);
    const double y = (static_cast<double>(fg[n] / w) + 0.5) / h, x = (static_cast<double>(fg[n] % w) + 0.5) / w;
    f[n] = {c[0], c[1], c[2], cfg.position_weight * x, cfg.position_weight * y};
  }
  auto dist = [](const Feature& a, const Feature& b) {
    double s = 0.0;
    for (int k = 0; k < 5; ++k) s += (a[k] - b[k]) * (a[k] - b[k]);
    return s;
  };

  // k-means++ seeding then Lloyd iterations; nearest-center ties go to the lower cluster.
  const std::size_t k = static_cast<std::size_t>(cfg.granularity);
  Rng rng(derive_seed(cfg.seed, 41));
  std::vector<Feature> centers{f[rng.index(f.size())]};
  std::vector<double> best(f.size(), std::numeric_limits<double>::infinity());
  while (centers.size() < k) {
    double total = 0.0;
    for (std::size_t n = 0; n < f.size(); ++n) total += best[n] = std::min(best[n], dist(f[n], centers.back()));
    std::size_t pick = f.size() - 1;
    if (total > 0.0) {
      double r = rng.uniform() * total;
      for (std::size_t n = 0; n < f.size(); ++n)
        if ((r -= best[n]) < 0.0) {
          pick = n;
          break;
        }
    } else {
      pick = rng.index(f.size());
    }
    centers.push_back(f[pick]);
  }
  std::vector<std::size_t> assign(f.size(), 0);
  for (int it = 0; it < cfg.iterations; ++it) {
    bool changed = it == 0;
    for (std::size_t n = 0; n < f.size(); ++n) {
      std::size_t arg = 0;
      double bd = dist(f[n], centers[0]);
      for (std::size_t c = 1; c < k; ++c) {
        const double dd = dist(f[n], centers[c]);
        if (dd < bd) {
          bd = dd;
          arg = c;
        }
      }
      changed |= assign[n] != arg;
      assign[n] = arg;
    }
    if (!changed) break;
    std::vector<Feature> sum(k, Feature{});
    std::vector<std::size_t> cnt(k, 0);
    for (std::size_t n = 0; n < f.size(); ++n) {
      for (int j = 0; j < 5; ++j) sum[assign[n]][j] += f[n][j];
      ++cnt[assign[n]];
    }
    for (std::size_t c = 0; c < k; ++c)
      if (cnt[c] > 0)
        for (int j = 0; j < 5; ++j) centers[c][j] = sum[c][j] / static_cast<double>(cnt[c]);
  }

  // Merge clusters with similar mean color.
  UnionFind clusters(k);
  const double merge_sq = cfg.merge_distance * cfg.merge_distance;
  for (std::size_t a = 0; a < k; ++a)
    for (std::size_t b = a + 1; b < k; ++b)
      if (color_sq({centers[a][0], centers[a][1], centers[a][2]}, {centers[b][0], centers[b][1], centers[b][2]}) <
          merge_sq)
        clusters.unite(a, b);

  std::vector<int> cls(color.pixel_count(), -1);
  for (std::size_t n = 0; n < fg.size(); ++n) cls[fg[n]] = static_cast<int>(clusters.find(assign[n]));
  int count = 0;
  std::vector<int> comp = components(cls, h, w, count);

  // Fold tiny components into the neighbor sharing the longest border.
  std::vector<std::size_t> size(static_cast<std::size_t>(count), 0);
  for (int c : comp)
    if (c >= 0) ++size[static_cast<std::size_t>(c)];
  UnionFind segs(static_cast<std::size_t>(count));
  for (int c = 0; c < count; ++c) {
    if (size[static_cast<std::size_t>(c)] >= static_cast<std::size_t>(cfg.min_segment_pixels)) continue;
    std::map<int, int> border;
    for (std::size_t i = 0; i < comp.size(); ++i) {
      if (comp[i] != c) continue;
      const int y = static_cast<int>(i) / w, x = static_cast<int>(i) % w;
      const int ny[4] = {y - 1, y + 1, y, y}, nx[4] = {x, x, x - 1, x + 1};
      for (int q = 0; q < 4; ++q) {
        if (ny[q] < 0 || ny[q] >= h || nx[q] < 0 || nx[q] >= w) continue;
        const int other = comp[static_cast<std::size_t>(ny[q]) * w + nx[q]];
        if (other >= 0 && other != c) ++border[other];
      }
    }
    int target = -1, longest = 0;
    for (const auto& [other, len] : border)
      if (len > longest) {
        longest = len;
        target = other;
      }
    if (target >= 0) segs.unite(static_cast<std::size_t>(c), static_cast<std::size_t>(target));
  }

  std::map<std::size_t, int> ids;
  for (std::size_t i = 0; i < comp.size(); ++i) {
    if (comp[i] < 0) continue;
    const std::size_t root = segs.find(static_cast<std::size_t>(comp[i]));
    auto [it, fresh] = ids.try_emplace(root, static_cast<int>(ids.size()) + 1);
    out[i] = it->second;
  }
  return out;
}

std::size_t SubRegionSet::count() const {
  std::size_t n = 0;
  for (const auto& [label, regions] : parts) n += regions.size();
  return n;
}

SubRegionSet intersect_subregions(const LabelImage& overseg, const LabelImage& translated_labels) {
  require(same_size(overseg, translated_labels), "intersect_subregions: rasters are not aligned");
  std::map<int, std::map<int, std::size_t>> areas;  // part -> segment -> pixels
  for (std::size_t i = 0; i < overseg.pixel_count(); ++i) {
    if (translated_labels[i] == 0) continue;
    areas[translated_labels[i]];
    if (overseg[i] > 0) ++areas[translated_labels[i]][overseg[i]];
  }
  SubRegionSet out;
  for (const auto& [part, segments] : areas) {
    if (segments.empty()) {
      log::warn_once("subregions.drop", "part " + std::to_string(part) + " has no over-segmented pixels; dropped");
      continue;
    }
    std::size_t total = 0;
    for (const auto& [seg, a] : segments) total += a;
    auto& regions = out.parts[part];
    for (const auto& [seg, a] : segments) {
      SubRegion r;
      r.segment = seg;
      r.area = a;
      r.weight = static_cast<double>(a) / static_cast<double>(total);
      r.mask.resize(overseg.pixel_count());
      for (std::size_t i = 0; i < overseg.pixel_count(); ++i)
        r.mask[i] = overseg[i] == seg && translated_labels[i] == part;
      regions.push_back(std::move(r));
    }
  }
  return out;
}

LabelImage material_raster(const LabelImage& labels, const PartMaterialAssignment& assignment) {
  LabelImage out(labels.height(), labels.width(), -1);
  for (std::size_t i = 0; i < labels.pixel_count(); ++i) {
    if (labels[i] == 0) continue;
    auto it = assignment.parts.find(labels[i]);
    require(it != assignment.parts.end(), "assignment does not cover part " + std::to_string(labels[i]));
    out[i] = it->second.material;
  }
  return out;
}

int dominant_material(const std::vector<unsigned char>& mask, const LabelImage& materials) {
  require(mask.size() == materials.pixel_count(), "dominant_material: mask size mismatch");
  std::map<int, std::size_t> votes;
  for (std::size_t i = 0; i < mask.size(); ++i)
    if (mask[i] && materials[i] >= 0) ++votes[materials[i]];
  require(!votes.empty(), "dominant_material: no labeled pixels under the mask");
  int best = votes.begin()->first;
  for (const auto& [m, n] : votes)
    if (n > votes[best]) best = m;
  return best;
}

ad::Var consistency_loss(const ad::Var& pred_o, const ad::Var& pred_p, const std::vector<MatchedPart>& matches,
                         const DistanceMatrix& d) {
  require(pred_o->value.rank() == 2 && pred_p->value.rank() == 2, "consistency_loss: predictions must be [N, M]");
  require(pred_o->value.dim(1) == d.n && pred_p->value.dim(1) == d.n, "consistency_loss: width must match D");
  if (matches.empty()) return ad::constant(Tensor::scalar(0.0));
  const ad::Var dm = ad::constant(Tensor({d.n, d.n}, d.values));
  std::vector<ad::Var> terms;
  for (const auto& m : matches) {
    require(m.o_row < pred_o->value.dim(0), "consistency_loss: missing projection prediction for part " +
                                                std::to_string(m.label));
    require(m.p_rows.size() == m.weights.size() && !m.p_rows.empty(),
            "consistency_loss: part " + std::to_string(m.label) + " needs one weight per sub-region");
    const ad::Var od = ad::matmul(ad::slice_rows(pred_o, m.o_row, m.o_row + 1), dm);
    for (std::size_t t = 0; t < m.p_rows.size(); ++t) {
      require(m.p_rows[t] < pred_p->value.dim(0), "consistency_loss: missing exemplar prediction for part " +
                                                      std::to_string(m.label));
      terms.push_back(
          ad::mul_scalar(ad::sum(ad::mul(od, ad::slice_rows(pred_p, m.p_rows[t], m.p_rows[t] + 1))), m.weights[t]));
    }
  }
  return ad::add_all(terms);
}

void TransferConfig::validate() const { overseg.validate(); }

Config TransferConfig::to_config() const {
  Config c;
  c.set("transfer", "granularity", overseg.granularity);
  c.set("transfer", "position_weight", overseg.position_weight);
  c.set("transfer", "merge_distance", overseg.merge_distance);
  c.set("transfer", "min_segment_pixels", overseg.min_segment_pixels);
  c.set("transfer", "kmeans_iterations", overseg.iterations);
  c.set("transfer", "overseg_seed", static_cast<long>(overseg.seed));
  return c;
}

TransferConfig TransferConfig::from_config(const Config& c) {
  TransferConfig t;
  auto& o = t.overseg;
  o.granularity = c.get_int("transfer", "granularity", o.granularity);
  o.position_weight = c.get_double("transfer", "position_weight", o.position_weight);
  o.merge_distance = c.get_double("transfer", "merge_distance", o.merge_distance);
  o.min_segment_pixels = c.get_int("transfer", "min_segment_pixels", o.min_segment_pixels);
  o.iterations = c.get_int("transfer", "kmeans_iterations", o.iterations);
  o.seed = static_cast<std::uint64_t>(c.get_int("transfer", "overseg_seed", static_cast<int>(o.seed)));
  t.validate();
  return t;
}

namespace {

std::vector<MatchedPart> match_parts(const std::vector<int>& o_parts, const SubRegionSet& subregions) {
  std::vector<MatchedPart> out;
  std::size_t p_row = 0;
  for (const auto& [label, regions] : subregions.parts) {
    auto it = std::find(o_parts.begin(), o_parts.end(), label);
    MatchedPart m;
    m.label = label;
    m.o_row = static_cast<std::size_t>(it - o_parts.begin());
    for (const auto& r : regions) {
      m.p_rows.push_back(p_row++);
      m.weights.push_back(r.weight);
    }
    if (it != o_parts.end()) out.push_back(std::move(m));
  }
  return out;
}

}  // namespace

TranslatedPair build_translated_pair(const ToyShape& shape, int view, const RenderedView& exemplar,
                                     const Model& translator, const TranslatorConfig& tcfg, const Model& pretrained,
                                     const EncoderConfig& enc, const std::vector<Material>& library,
                                     const DistanceMatrix& d, const TransferConfig& cfg) {
  TranslatedPair pair;
  pair.o_s = semantic_projection(shape, view);
  pair.p_c = exemplar.image.color;
  const auto translated = translate(pair.o_s, pair.p_c, translator, tcfg);
  pair.o_hat_c = translated.color;
  pair.p_hat_s = translated.seg;
  pair.overseg = oversegment(pair.p_c, nonzero(exemplar.image.labels), cfg.overseg);
  pair.subregions = intersect_subregions(pair.overseg, pair.p_hat_s);
  pair.o_parts = present_labels(pair.o_s);

  std::map<int, int> predicted;
  for (int part : pair.o_parts)
    if (!exemplar.assignment.parts.count(part))
      predicted[part] = predict(pair.o_hat_c, label_mask(pair.o_s, part), pretrained, enc).top_material(library);
  const auto truth = build_gt_translated_color(pair.o_parts, exemplar.assignment, predicted, d, library);
  pair.gt_matched = truth.matched;
  for (int part : pair.o_parts) {
    const PartEntry& e = truth.assignment.parts.at(part);
    pair.o_samples.push_back({part_input(pair.o_hat_c, label_mask(pair.o_s, part), enc.input_size), e.material,
                              e.category, part, 0});
  }

  const LabelImage materials = material_raster(exemplar.image.labels, exemplar.assignment);
  for (const auto& [label, regions] : pair.subregions.parts)
    for (const auto& r : regions) {
      const int m = dominant_material(r.mask, materials);
      pair.p_samples.push_back(
          {part_input(pair.p_c, r.mask, enc.input_size), m, library.at(static_cast<std::size_t>(m)).category, label, 0});
    }
  pair.matches = match_parts(pair.o_parts, pair.subregions);
  return pair;
}

PairOutcomes evaluate_pairs(const std::vector<TranslatedPair>& pairs, const Model& predictor_o,
                            const Model& predictor_p, const EncoderConfig& enc, const std::vector<Material>& library) {
  PairOutcomes out;
  auto outcome = [&](const MaterialPrediction& p, const PartSample& s) {
    return PartOutcome{p.top_material(library), p.top_category(), s.material, s.category};
  };
  for (const auto& pair : pairs) {
    const auto po = predict_samples(pair.o_samples, predictor_o, enc);
    for (std::size_t i = 0; i < po.size(); ++i)
      if (pair.gt_matched.count(pair.o_samples[i].label)) out.projection.push_back(outcome(po[i], pair.o_samples[i]));
    const auto pp = predict_samples(pair.p_samples, predictor_p, enc);
    for (std::size_t i = 0; i < pp.size(); ++i) out.exemplar.push_back(outcome(pp[i], pair.p_samples[i]));
  }
  return out;
}

void FineTuneConfig::validate() const {
  require(pairs_per_step >= 1, "pairs_per_step must be >= 1");
  require(consistency_weight >= 0.0 && std::isfinite(consistency_weight), "consistency_weight must be >= 0");
  require(encoder_lr_scale >= 0.0, "encoder_lr_scale must be >= 0");
  weights.validate();
}

FineTuneResult fine_tune(const Model& pretrained, const std::vector<TranslatedPair>& pairs,
                         const std::vector<Material>& library, const DistanceMatrix& d, const EncoderConfig& enc,
                         const OptimizerConfig& opt, const FineTuneConfig& cfg) {
  cfg.validate();
  require(!pairs.empty(), "fine_tune: no translated pairs");
  require(library.size() == d.n, "fine_tune: library and D sizes differ");
  FineTuneResult result{pretrained, pretrained, {}};
  Optimizer opt_o(opt), opt_p(opt);
  opt_o.set_lr_scale("enc.", cfg.encoder_lr_scale);
  opt_p.set_lr_scale("enc.", cfg.encoder_lr_scale);
  Rng rng(derive_seed(cfg.seed, 31));

  for (std::size_t step = 0; step < cfg.steps; ++step) {
    std::vector<std::size_t> chosen;
    for (std::size_t k = 0; k < cfg.pairs_per_step; ++k) chosen.push_back(rng.index(pairs.size()));

    // Projection rows: truth-bearing matched parts first, then parts needed only by the consistency term.
    std::vector<const PartSample*> o_rows, p_rows;
    std::vector<std::size_t> o_cat, o_mat, p_cat, p_mat;
    std::vector<MatchedPart> matches;
    std::vector<std::pair<std::size_t, std::size_t>> extra;  // (pair slot, o_samples index)
    std::vector<std::map<std::size_t, std::size_t>> o_index(chosen.size());
    for (std::size_t s = 0; s < chosen.size(); ++s) {
      const auto& pair = pairs[chosen[s]];
      for (std::size_t i = 0; i < pair.o_samples.size(); ++i)
        if (pair.gt_matched.count(pair.o_samples[i].label)) {
          o_index[s][i] = o_rows.size();
          o_rows.push_back(&pair.o_samples[i]);
          o_cat.push_back(index_of(pair.o_samples[i].category));
          o_mat.push_back(static_cast<std::size_t>(pair.o_samples[i].material));
        }
    }
    const std::size_t supervised = o_rows.size();
    for (std::size_t s = 0; s < chosen.size(); ++s) {
      const auto& pair = pairs[chosen[s]];
      const std::size_t p_base = p_rows.size();
      for (const auto& ps : pair.p_samples) {
        p_rows.push_back(&ps);
        p_cat.push_back(index_of(ps.category));
        p_mat.push_back(static_cast<std::size_t>(ps.material));
      }
      if (cfg.consistency_weight == 0.0) continue;
      for (const auto& m : pair.matches) {
        auto [it, fresh] = o_index[s].try_emplace(m.o_row, o_rows.size());
        if (fresh) o_rows.push_back(&pair.o_samples[m.o_row]);
        MatchedPart shifted = m;
        shifted.o_row = it->second;
        for (auto& r : shifted.p_rows) r += p_base;
        matches.push_back(std::move(shifted));
      }
    }

    const ParamVars vo = cfg.train_projection ? ParamVars(result.predictor_o) : ParamVars::frozen(result.predictor_o);
    const ParamVars vp = cfg.train_exemplar ? ParamVars(result.predictor_p) : ParamVars::frozen(result.predictor_p);
    std::vector<ad::Var> terms;
    HeadProbs ho, hp;
    if (!o_rows.empty()) ho = forward_probs(vo, enc, batch_inputs(o_rows));
    if (!p_rows.empty()) hp = forward_probs(vp, enc, batch_inputs(p_rows));
    if (cfg.train_projection && supervised > 0)
      terms.push_back(classification_loss(head_rows(ho, supervised), o_cat, o_mat, d, cfg.weights));
    if (cfg.train_exemplar && !p_rows.empty())
      terms.push_back(classification_loss(hp, p_cat, p_mat, d, cfg.weights));
    if (cfg.consistency_weight > 0.0 && !matches.empty())
      terms.push_back(ad::mul_scalar(consistency_loss(ho.material, hp.material, matches, d), cfg.consistency_weight));
    const ad::Var loss = terms.empty() ? ad::constant(Tensor::scalar(0.0)) : ad::add_all(terms);
    const double value = loss->value.item();
    if (!std::isfinite(value)) throw TrainingError("non-finite fine-tune loss", step);
    ad::backward(loss);
    if (cfg.train_projection) opt_o.step(result.predictor_o, collect_gradients(result.predictor_o, vo));
    if (cfg.train_exemplar) opt_p.step(result.predictor_p, collect_gradients(result.predictor_p, vp));
    result.loss_trace.push_back(value);
  }
  return result;
}

PartMaterialAssignment final_assignment(const std::vector<int>& parts, const SubRegionSet& subregions,
                                        const std::vector<MaterialPrediction>& pred_p,
                                        const std::map<int, MaterialPrediction>& pred_o,
                                        const std::vector<Material>& library) {
  require(pred_p.size() == subregions.count(), "final_assignment: one exemplar prediction per sub-region required");
  std::map<int, std::size_t> first_row;
  std::size_t row = 0;
  for (const auto& [label, regions] : subregions.parts) {
    first_row[label] = row;
    row += regions.size();
  }
  PartMaterialAssignment out;
  for (int part : parts) {
    auto sit = subregions.parts.find(part);
    if (sit != subregions.parts.end() && !sit->second.empty()) {
      std::map<int, double> votes;
      std::vector<double> probs(library.size(), 0.0);
      for (std::size_t t = 0; t < sit->second.size(); ++t) {
        const auto& p = pred_p[first_row[part] + t];
        require(p.material.size() == library.size(), "final_assignment: prediction width differs from the library");
        votes[p.top_material(library)] += sit->second[t].weight;
        for (std::size_t m = 0; m < probs.size(); ++m) probs[m] += sit->second[t].weight * p.material[m];
      }
      int best = votes.begin()->first;
      for (const auto& [m, v] : votes)
        if (v > votes[best]) best = m;
      out.parts[part] = {library.at(static_cast<std::size_t>(best)).category, best, probs};
      continue;
    }
    auto oit = pred_o.find(part);
    if (oit == pred_o.end()) throw ValidationError("final_assignment: part " + std::to_string(part) + " has no prediction");
    const int m = oit->second.top_material(library);
    out.parts[part] = {library.at(static_cast<std::size_t>(m)).category, m, oit->second.material};
  }
  return out;
}

TransferResult transfer(const ToyShape& shape, const SegmentedImage& exemplar, const TrainedModels& models,
                        const TransferConfig& cfg) {
  cfg.validate();
  TransferResult result;
  TransferAudit& a = result.audit;
  a.p_c = exemplar.color;
  a.view = run_stage("pose", [&] { return select_pose(exemplar, shape, shape.views); });
  a.o_s = run_stage("projection", [&] { return semantic_projection(shape, a.view); });
  const auto translated =
      run_stage("translate", [&] { return translate(a.o_s, exemplar.color, models.translator, models.translator_config); });
  a.o_hat_c = translated.color;
  a.p_hat_s = translated.seg;
  run_stage("oversegment", [&] {
    a.overseg = oversegment(exemplar.color, nonzero(exemplar.labels), cfg.overseg);
    a.subregions = intersect_subregions(a.overseg, a.p_hat_s);
    return 0;
  });
  const std::vector<int> parts = present_labels(a.o_s);
  run_stage("predict", [&] {
    for (int part : parts)
      a.pred_o[part] = predict(a.o_hat_c, label_mask(a.o_s, part), models.predictor_o, models.encoder);
    std::vector<PartSample> samples;
    for (const auto& [label, regions] : a.subregions.parts)
      for (const auto& r : regions)
        samples.push_back({part_input(exemplar.color, r.mask, models.encoder.input_size), 0, Category::leathers, label, 0});
    a.pred_p = samples.empty() ? std::vector<MaterialPrediction>{}
                               : predict_samples(samples, models.predictor_p, models.encoder);
    return 0;
  });
  result.assignment = run_stage("assign", [&] {
    auto assignment = final_assignment(parts, a.subregions, a.pred_p, a.pred_o, models.library);
    check_categories(assignment, models.library);
    return assignment;
  });
  return result;
}

std::vector<std::string> audit_inventory() {
  return {"o_s.pgm",     "p_hat_s.pgm", "overseg.pgm",     "p_c.lab",         "o_hat_c.lab",   "p_c.ppm",
          "o_hat_c.ppm", "view.txt",    "subregions.txt", "predictions.txt", "assignment.txt"};
}

void save_audit(const std::filesystem::path& dir, const TransferResult& result, const std::vector<Material>& library) {
  std::filesystem::create_directories(dir);
  const TransferAudit& a = result.audit;
  io::write_labels(dir / "o_s.pgm", a.o_s);
  io::write_labels(dir / "p_hat_s.pgm", a.p_hat_s);
  io::write_labels(dir / "overseg.pgm", a.overseg);
  io::write_color(dir / "p_c.lab", a.p_c);
  io::write_color(dir / "o_hat_c.lab", a.o_hat_c);
  io::write_ppm(dir / "p_c.ppm", lab_to_rgb(a.p_c));
  io::write_ppm(dir / "o_hat_c.ppm", lab_to_rgb(a.o_hat_c));
  io::write_text(dir / "view.txt", std::to_string(a.view) + "\n");

  std::string regions;
  char buf[64];
  for (const auto& [label, list] : a.subregions.parts)
    for (const auto& r : list) {
      std::snprintf(buf, sizeof buf, "%d %d %zu %.6g\n", label, r.segment, r.area, r.weight);
      regions += buf;
    }
  io::write_text(dir / "subregions.txt", regions);

  std::vector<std::pair<int, MaterialPrediction>> o_rows(a.pred_o.begin(), a.pred_o.end()), p_rows;
  std::size_t row = 0;
  for (const auto& [label, list] : a.subregions.parts)
    for (std::size_t t = 0; t < list.size(); ++t) p_rows.emplace_back(label, a.pred_p.at(row++));
  io::write_text(dir / "predictions.txt", "# projection pair\n" + format_predictions(o_rows, library) +
                                              "# exemplar pair (one line per sub-region)\n" +
                                              format_predictions(p_rows, library));
  save_assignment(dir / "assignment.txt", result.assignment);
}

}  // namespace matxfer
