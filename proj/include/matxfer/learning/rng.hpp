#pragma once

#include <cstddef>
#include <cstdint>
#include <random>
#include <vector>

namespace matxfer {

/// Seeded generator with platform-independent derived draws. The engine is
/// mt19937_64 (fully specified by the standard); the distributions are
/// written out here because std:: distributions differ across stdlibs and
/// checkpoints must be byte-stable.
class Rng {
 public:
  explicit Rng(std::uint64_t seed = 0) : engine_(seed) {}

  std::uint64_t next() { return engine_(); }

  /// Uniform in [0, 1) with 53 random bits.
  double uniform() { return static_cast<double>(next() >> 11) * 0x1.0p-53; }
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  /// Standard normal via Box-Muller (one value per call, no caching).
  double normal();

  /// Uniform index in [0, n); n must be > 0.
  std::size_t index(std::size_t n);

  /// Fisher-Yates shuffle driven by index().
  template <typename T>
  void shuffle(std::vector<T>& v) {
    for (std::size_t i = v.size(); i > 1; --i) std::swap(v[i - 1], v[index(i)]);
  }

  /// Independent child stream; deterministic in (parent seed, draw history, stream).
  Rng fork(std::uint64_t stream) { return Rng(next() ^ (0x9E3779B97F4A7C15ULL * (stream + 1))); }

 private:
  std::mt19937_64 engine_;
};

/// Mixes a base seed with a small tag (run index, variant id) into a new seed.
std::uint64_t derive_seed(std::uint64_t base, std::uint64_t tag);

}  // namespace matxfer
