#include "oepg/random.hpp"

#include <cmath>
#include <numbers>

#include "oepg/error.hpp"

namespace oepg {

namespace {

std::uint64_t splitmix(std::uint64_t z) {
  z += 0x9e3779b97f4a7c15ULL;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

}  // namespace

std::uint64_t mix_seed(std::uint64_t a, std::uint64_t b) {
  return splitmix(splitmix(a) ^ (b + 0x632be59bd9b4e019ULL));
}

std::uint64_t RandomStream::next_u64() {
  return splitmix(seed_ * 0xd1342543de82ef95ULL + (counter_++) * 0x9e3779b97f4a7c15ULL);
}

double RandomStream::uniform() {
  return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
}

std::size_t RandomStream::below(std::size_t n) {
  if (n == 0) throw ContractError("RandomStream::below(0)");
  // Rejection sampling removes modulo bias.
  const std::uint64_t limit = UINT64_MAX - UINT64_MAX % n;
  std::uint64_t x = next_u64();
  while (x >= limit) x = next_u64();
  return static_cast<std::size_t>(x % n);
}

double RandomStream::normal() {
  // Box-Muller; one draw per call keeps the stream position simple.
  double u1 = uniform();
  while (u1 <= 0.0) u1 = uniform();
  const double u2 = uniform();
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
}

RandomStream RandomStream::fork(std::uint64_t tag) const {
  return RandomStream(mix_seed(seed_, tag));
}

}  // namespace oepg
