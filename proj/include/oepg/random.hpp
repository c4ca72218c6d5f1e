#pragma once

#include <cstddef>
#include <cstdint>
#include <vector>

namespace oepg {

// Counter-based SplitMix64 stream. Output depends only on (seed, counter),
// so a stream can be re-created exactly from those two values.
class RandomStream {
 public:
  explicit RandomStream(std::uint64_t seed = 0) : seed_(seed) {}

  std::uint64_t seed() const { return seed_; }
  std::uint64_t counter() const { return counter_; }

  std::uint64_t next_u64();
  // Uniform in [0, 1) with 53 random bits.
  double uniform();
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
  // Uniform integer in [0, n). n must be positive.
  std::size_t below(std::size_t n);
  double normal();
  bool bernoulli(double p) { return uniform() < p; }

  template <typename T>
  void shuffle(std::vector<T>& v) {
    for (std::size_t i = v.size(); i > 1; --i) std::swap(v[i - 1], v[below(i)]);
  }

  // Independent child stream keyed by `tag`; does not advance this stream.
  RandomStream fork(std::uint64_t tag) const;

 private:
  std::uint64_t seed_;
  std::uint64_t counter_ = 0;
};

std::uint64_t mix_seed(std::uint64_t a, std::uint64_t b);

}  // namespace oepg
