#pragma once

#include <cstdint>
#include <vector>

namespace pdqa {

// All randomness in the project flows through this generator: xoshiro256++
// state seeded via SplitMix64, uniform doubles from the top 53 bits, normals
// via the Marsaglia polar method, and a Fisher-Yates shuffle. No std::
// distribution is used anywhere, so identical seeds give identical streams
// on every platform.
class Rng {
 public:
  explicit Rng(std::uint64_t seed);

  std::uint64_t next_u64();

  // Uniform in [0, 1).
  double uniform();
  double uniform(double lo, double hi);

  // Uniform index in [0, n); n must be positive.
  std::size_t uniform_index(std::size_t n);

  double normal();
  double normal(double mean, double stddev);

  // Independent substream derived from this generator's seed path and a tag.
  Rng fork(std::uint64_t tag);

  template <typename T>
  void shuffle(std::vector<T>& v) {
    if (v.size() < 2) return;
    for (std::size_t i = v.size() - 1; i > 0; --i) {
      std::size_t j = uniform_index(i + 1);
      std::swap(v[i], v[j]);
    }
  }

 private:
  std::uint64_t s_[4];
  bool have_spare_ = false;
  double spare_ = 0.0;
};

// Deterministic combination of a seed with up to three tags; used to derive
// per-(epoch, sample) and per-repeat substreams.
std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t a, std::uint64_t b = 0,
                       std::uint64_t c = 0);

}  // namespace pdqa
