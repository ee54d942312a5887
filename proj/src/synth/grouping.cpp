#include "matxfer/synth/grouping.hpp"

#include <algorithm>
#include <numeric>

#include "matxfer/common/errors.hpp"

namespace matxfer {
namespace {

struct UnionFind {
  std::vector<int> parent;
  explicit UnionFind(int n) : parent(static_cast<std::size_t>(n)) { std::iota(parent.begin(), parent.end(), 0); }
  int find(int x) {
    while (parent[x] != x) x = parent[x] = parent[parent[x]];
    return x;
  }
  void unite(int a, int b) {
    a = find(a);
    b = find(b);
    if (a != b) parent[std::max(a, b)] = std::min(a, b);
  }
};

// Plurality value of `regions` over pixels where `labels == label`; ties to the smallest value.
int dominant_region(const LabelImage& labels, const LabelImage& regions, int label) {
  std::map<int, int> counts;
  for (std::size_t i = 0; i < labels.pixel_count(); ++i)
    if (labels[i] == label) ++counts[regions[i]];
  int best = 0, best_count = -1;
  for (const auto& [r, c] : counts)
    if (c > best_count) best = r, best_count = c;
  return best;
}

}  // namespace

int GroupingPrior::group_of(int label) const {
  for (std::size_t g = 0; g < groups.size(); ++g)
    if (std::binary_search(groups[g].begin(), groups[g].end(), label)) return static_cast<int>(g);
  return -1;
}

GroupingPrior singleton_prior(int vocabulary) {
  GroupingPrior p;
  for (int l = 1; l <= vocabulary; ++l) p.groups.push_back({l});
  return p;
}

GroupingPrior derive_grouping_prior(const std::vector<LabelImage>& semantic_segs,
                                    const std::vector<LabelImage>& material_segs, double min_support, int vocabulary) {
  require(semantic_segs.size() == material_segs.size(), "grouping prior: observation counts differ");
  require(min_support >= 0.0 && min_support <= 1.0, "min_support must be in [0,1]");
  require(vocabulary >= 1, "vocabulary must be >= 1");
  GroupingPrior prior;
  for (std::size_t o = 0; o < semantic_segs.size(); ++o) {
    const auto& sem = semantic_segs[o];
    const auto& mat = material_segs[o];
    require(same_size(sem, mat), "grouping prior: rasters of observation " + std::to_string(o) + " are misaligned");
    const auto present = present_labels(sem);
    std::map<int, int> dom;
    for (int l : present) {
      require(l <= vocabulary, "grouping prior: label outside the vocabulary");
      dom[l] = dominant_region(sem, mat, l);
    }
    for (std::size_t i = 0; i < present.size(); ++i)
      for (std::size_t j = i + 1; j < present.size(); ++j) {
        auto& s = prior.support[{present[i], present[j]}];
        s.second += 1;
        if (dom[present[i]] == dom[present[j]]) s.first += 1;
      }
  }
  UnionFind uf(vocabulary + 1);
  for (const auto& [pair, s] : prior.support)
    if (s.second > 0 && static_cast<double>(s.first) >= min_support * s.second) uf.unite(pair.first, pair.second);
  std::map<int, std::vector<int>> by_root;
  for (int l = 1; l <= vocabulary; ++l) by_root[uf.find(l)].push_back(l);
  for (auto& [root, g] : by_root) prior.groups.push_back(std::move(g));
  return prior;
}

std::vector<LabelImage> synth_material_segmentations(const std::vector<LabelImage>& semantic_segs,
                                                     const std::vector<std::vector<int>>& hidden_groups,
                                                     double merge_probability, std::uint64_t seed) {
  require(merge_probability >= 0.0 && merge_probability <= 1.0, "merge_probability must be in [0,1]");
  Rng rng(seed);
  std::vector<LabelImage> out;
  for (const auto& sem : semantic_segs) {
    std::map<int, int> region;
    for (int l : present_labels(sem)) region[l] = l;
    for (const auto& g : hidden_groups) {
      if (g.empty() || rng.uniform() >= merge_probability) continue;
      const int anchor = *std::min_element(g.begin(), g.end());
      for (int l : g)
        if (region.count(l)) region[l] = anchor;
    }
    LabelImage mat(sem.height(), sem.width(), 0);
    for (std::size_t i = 0; i < sem.pixel_count(); ++i)
      if (sem[i] != 0) mat[i] = region.at(sem[i]);
    out.push_back(std::move(mat));
  }
  return out;
}

std::vector<std::vector<int>> default_hidden_groups(int vocabulary) {
  const std::vector<std::vector<int>> all{{1, 5}, {2, 7}, {3, 6, 8}, {4}};
  std::vector<std::vector<int>> out;
  for (const auto& g : all) {
    std::vector<int> kept;
    for (int l : g)
      if (l <= vocabulary) kept.push_back(l);
    if (!kept.empty()) out.push_back(kept);
  }
  return out;
}

CategoryPrior default_category_prior() {
  // Columns: leathers, fabrics, woods, metals, plastics.
  return {{
      {0, 0, 0, 0, 0},
      {0.3, 0.4, 0.2, 0.0, 0.1},  // back
      {0.3, 0.4, 0.2, 0.0, 0.1},  // seat
      {0.0, 0.0, 0.5, 0.4, 0.1},  // legs
      {0.2, 0.2, 0.4, 0.2, 0.0},  // arms
      {0.4, 0.5, 0.0, 0.0, 0.1},  // headrest
      {0.0, 0.0, 0.2, 0.6, 0.2},  // base
      {0.3, 0.7, 0.0, 0.0, 0.0},  // cushion
      {0.0, 0.0, 0.5, 0.5, 0.0},  // stretcher
  }};
}

std::map<int, int> sample_part_materials(const std::vector<int>& labels, const std::vector<Material>& library,
                                         const CategoryPrior& prior, Rng& rng) {
  std::array<std::vector<int>, kCategoryCount> members;
  for (std::size_t c = 0; c < kCategoryCount; ++c) members[c] = members_of(library, category_from_index(c));
  for (int l : labels) {
    require(l >= 1 && l <= kMaxVocabulary, "part label out of vocabulary");
    double total = 0.0;
    for (std::size_t c = 0; c < kCategoryCount; ++c) {
      if (prior[l][c] > 0.0 && members[c].empty())
        throw SamplingError("library has no " + std::string(to_string(category_from_index(c))) +
                            " material for part " + std::string(part_name(l)));
      total += prior[l][c];
    }
    if (total <= 0.0) throw SamplingError("category prior for part " + std::string(part_name(l)) + " is empty");
  }
  std::map<int, int> raw;
  for (int l : labels) {
    double total = 0.0;
    for (double w : prior[l]) total += w;
    double u = rng.uniform() * total;
    std::size_t pick = kCategoryCount;
    for (std::size_t c = 0; c < kCategoryCount; ++c) {
      if (prior[l][c] <= 0.0) continue;
      pick = c;  // last positive category absorbs rounding at the upper end
      if (u < prior[l][c]) break;
      u -= prior[l][c];
    }
    raw[l] = members[pick][rng.index(members[pick].size())];
  }
  return raw;
}

PartMaterialAssignment vote_groups(const std::map<int, int>& raw, const GroupingPrior& prior,
                                   const std::vector<Material>& library) {
  std::map<int, std::map<int, int>> votes;  // group -> material -> count
  for (const auto& [label, material] : raw) {
    const int g = prior.group_of(label);
    require(g >= 0, "grouping prior does not cover part " + std::to_string(label));
    require(material >= 0 && material < static_cast<int>(library.size()), "material id out of range");
    ++votes[g][material];
  }
  PartMaterialAssignment a;
  for (const auto& [label, material] : raw) {
    int best = -1, best_count = 0;
    for (const auto& [m, c] : votes[prior.group_of(label)])
      if (c > best_count) best = m, best_count = c;
    a.parts[label] = PartEntry{library[best].category, best, {}};
  }
  return a;
}

PartMaterialAssignment assign_materials(const ToyShape& shape, const GroupingPrior& prior,
                                        const std::vector<Material>& library, const CategoryPrior& category_prior,
                                        std::uint64_t seed) {
  Rng rng(seed);
  return vote_groups(sample_part_materials(shape.labels(), library, category_prior, rng), prior, library);
}

}  // namespace matxfer
