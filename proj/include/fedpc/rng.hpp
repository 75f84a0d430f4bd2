#pragma once

#include <cmath>
#include <cstdint>
#include <initializer_list>
#include <string_view>
#include <vector>

#include <Eigen/Dense>

#include "fedpc/errors.hpp"

// Portable seeded randomness. Every stochastic choice in the simulator goes
// through the generators below, never through <random> distributions, whose
// output is implementation-defined. The algorithms are fixed:
//
//   * splitmix64  — seed expansion and stream derivation
//   * xoshiro256++ (Blackman & Vigna) — the main 64-bit generator
//   * uniform doubles from the top 53 bits, unbiased integers by rejection,
//     Fisher-Yates shuffles, Marsaglia polar Gaussians
//
// Identical seeds therefore give bit-identical streams on any conforming
// platform.

namespace fedpc {

struct SplitMix64 {
  std::uint64_t state;

  std::uint64_t next() {
    std::uint64_t z = (state += 0x9e3779b97f4a7c15ULL);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
  }
};

// FNV-1a, used to turn stream labels into derivation constants.
constexpr std::uint64_t fnv1a(std::string_view text) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (char c : text) {
    h ^= static_cast<unsigned char>(c);
    h *= 0x100000001b3ULL;
  }
  return h;
}

// Derives an independent child seed from a base seed and a path of labels
// and indices, e.g. derive_seed(seed, {fnv1a("local"), round, client}).
inline std::uint64_t derive_seed(std::uint64_t base,
                                 std::initializer_list<std::uint64_t> path) {
  SplitMix64 sm{base};
  std::uint64_t s = sm.next();
  for (std::uint64_t p : path) {
    SplitMix64 m{s ^ p};
    s = m.next();
  }
  return s;
}

class Rng {
 public:
  explicit Rng(std::uint64_t seed) {
    SplitMix64 sm{seed};
    for (auto& word : state_) word = sm.next();
  }

  std::uint64_t next_u64() {
    const std::uint64_t result = rotl(state_[0] + state_[3], 23) + state_[0];
    const std::uint64_t t = state_[1] << 17;
    state_[2] ^= state_[0];
    state_[3] ^= state_[1];
    state_[1] ^= state_[2];
    state_[0] ^= state_[3];
    state_[2] ^= t;
    state_[3] = rotl(state_[3], 45);
    return result;
  }

  // Uniform in [0, 1), 53-bit resolution.
  double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // Unbiased integer in [0, n) via rejection sampling.
  std::uint64_t uniform_below(std::uint64_t n) {
    if (n == 0) throw ConfigError("uniform_below: n must be positive");
    const std::uint64_t bound = n * (UINT64_MAX / n);
    std::uint64_t x;
    do {
      x = next_u64();
    } while (x >= bound);
    return x % n;
  }

  // Standard normal, Marsaglia polar method (no trig, portable libm surface).
  double normal() {
    if (has_cached_) {
      has_cached_ = false;
      return cached_;
    }
    double u, v, s;
    do {
      u = 2.0 * uniform() - 1.0;
      v = 2.0 * uniform() - 1.0;
      s = u * u + v * v;
    } while (s >= 1.0 || s == 0.0);
    const double f = std::sqrt(-2.0 * std::log(s) / s);
    cached_ = v * f;
    has_cached_ = true;
    return u * f;
  }

  Eigen::VectorXd normal_vector(Eigen::Index n) {
    Eigen::VectorXd out(n);
    for (Eigen::Index i = 0; i < n; ++i) out[i] = normal();
    return out;
  }

  // Unit-norm direction, uniform on the sphere.
  Eigen::VectorXd unit_vector(Eigen::Index n) {
    Eigen::VectorXd g;
    do {
      g = normal_vector(n);
    } while (g.norm() == 0.0);
    return g / g.norm();
  }

  template <typename T>
  void shuffle(std::vector<T>& items) {
    for (std::size_t i = items.size(); i > 1; --i) {
      const std::size_t j = static_cast<std::size_t>(uniform_below(i));
      std::swap(items[i - 1], items[j]);
    }
  }

 private:
  static std::uint64_t rotl(std::uint64_t x, int k) {
    return (x << k) | (x >> (64 - k));
  }

  std::uint64_t state_[4];
  double cached_ = 0.0;
  bool has_cached_ = false;
};

}  // namespace fedpc
