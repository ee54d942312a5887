#include "matxfer/metric/triplets.hpp"

#include <algorithm>
#include <map>
#include <set>
#include <sstream>

#include "matxfer/common/errors.hpp"
#include "matxfer/learning/rng.hpp"

namespace matxfer {

std::vector<MaterialTriplet> admissible_triplets(const DistanceMatrix& d, const std::vector<Category>& categories) {
  require(categories.size() == d.n, "triplets: category list does not match the distance matrix");
  std::set<Category> distinct(categories.begin(), categories.end());
  if (distinct.size() < 2) throw SamplingError("triplet sampling needs at least two categories");

  std::vector<MaterialTriplet> out;
  for (std::size_t r = 0; r < d.n; ++r) {
    // b: unique minimum over foreign materials.
    int b = -1;
    bool tied = false;
    for (std::size_t x = 0; x < d.n; ++x) {
      if (categories[x] == categories[r]) continue;
      if (b < 0 || d(r, x) < d(r, b)) {
        b = static_cast<int>(x);
        tied = false;
      } else if (d(r, x) == d(r, b)) {
        tied = true;
      }
    }
    if (b < 0 || tied) continue;
    for (std::size_t a = 0; a < d.n; ++a)
      if (a != r && categories[a] == categories[r] && d(r, a) < d(r, b))
        out.push_back({static_cast<int>(r), static_cast<int>(a), b});
  }
  return out;
}

std::vector<MaterialTriplet> sample_reference_triplets(const DistanceMatrix& d, const std::vector<Category>& categories,
                                                       std::size_t count, std::uint64_t seed) {
  auto all = admissible_triplets(d, categories);
  if (count >= all.size()) return all;
  Rng rng(seed);
  // Partial Fisher-Yates: the first `count` slots become a uniform subset.
  for (std::size_t i = 0; i < count; ++i) std::swap(all[i], all[i + rng.index(all.size() - i)]);
  all.resize(count);
  std::sort(all.begin(), all.end());
  return all;
}

std::vector<ImageTriplet> filter_batch_triplets(const std::vector<int>& batch_materials,
                                                const std::vector<MaterialTriplet>& am) {
  std::map<int, std::vector<std::size_t>> where;
  for (std::size_t i = 0; i < batch_materials.size(); ++i) where[batch_materials[i]].push_back(i);
  std::vector<ImageTriplet> out;
  for (const auto& t : am) {
    const auto r = where.find(t.r), a = where.find(t.a), b = where.find(t.b);
    if (r == where.end() || a == where.end() || b == where.end()) continue;
    for (std::size_t ir : r->second)
      for (std::size_t ia : a->second)
        for (std::size_t ib : b->second) out.push_back({ir, ia, ib});
  }
  std::sort(out.begin(), out.end());
  return out;
}

std::vector<Category> categories_of(const std::vector<Material>& library) {
  std::vector<Category> c;
  for (const auto& m : library) c.push_back(m.category);
  return c;
}

std::string format_triplets(const std::vector<MaterialTriplet>& t) {
  std::string s;
  for (const auto& x : t) s += std::to_string(x.r) + " " + std::to_string(x.a) + " " + std::to_string(x.b) + "\n";
  return s;
}

std::vector<MaterialTriplet> parse_triplets(const std::string& text) {
  std::istringstream in(text);
  std::vector<MaterialTriplet> out;
  MaterialTriplet t;
  while (in >> t.r >> t.a >> t.b) out.push_back(t);
  require(in.eof(), "malformed triplet list");
  return out;
}

}  // namespace matxfer
