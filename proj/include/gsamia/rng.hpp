#pragma once

#include <cstdint>
#include <initializer_list>
#include <random>
#include <span>

#include "gsamia/tensor.hpp"

namespace gsamia {

/// Seeded random stream.
///
/// The engine is std::mt19937_64, whose output sequence is fixed by the C++
/// standard, so a seed reproduces the same draws on every conforming
/// platform. All distributions are implemented here rather than through
/// <random> distribution classes, whose algorithms are implementation
/// defined:
///
///   uniform()       (next_u64() >> 11) * 2^-53, in [0, 1)
///   uniform_int(n)  rejection sampling on the top of the 64-bit range
///   normal()        Box-Muller: u1 = 1 - uniform(), u2 = uniform(),
///                   r = sqrt(-2 ln u1); returns r cos(2 pi u2), then caches
///                   r sin(2 pi u2) for the next call
///   exponential(l)  -ln(1 - uniform()) / l
class Rng {
 public:
  explicit Rng(std::uint64_t seed);

  std::uint64_t seed() const { return seed_; }
  std::uint64_t next_u64() { return engine_(); }
  double uniform();
  std::uint64_t uniform_int(std::uint64_t n);
  double normal();
  double exponential(double rate);

  template <typename T>
  void shuffle(std::span<T> items) {
    for (std::size_t i = items.size(); i > 1; --i) {
      const auto j = static_cast<std::size_t>(uniform_int(i));
      std::swap(items[i - 1], items[j]);
    }
  }

 private:
  std::uint64_t seed_;
  std::mt19937_64 engine_;
  double cached_normal_ = 0.0;
  bool has_cached_ = false;
};

/// SplitMix64 finalizer.
std::uint64_t mix64(std::uint64_t x);

/// Child seed from a root seed and a path of integers. Used wherever a
/// component needs its own stream (shadow i, sample id + timestep, ...).
std::uint64_t derive_seed(std::uint64_t root, std::initializer_list<std::uint64_t> path);

/// I.i.d. standard normal tensor.
Tensor gaussian_sample(Rng& rng, const Shape& shape);

}  // namespace gsamia
