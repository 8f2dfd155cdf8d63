#pragma once

#include <cmath>
#include <cstdint>
#include <numeric>
#include <string_view>
#include <vector>

namespace hcvae {

/// Deterministic random source. Same seed gives the same stream on every
/// platform (xoshiro-style core plus Box-Muller normals, no std::distribution
/// involvement, so results never depend on the standard library build).
class Rng {
 public:
  explicit Rng(uint64_t seed) : state_(splitmix(seed ? seed : 0x9e3779b97f4a7c15ULL)) {}

  uint64_t next_u64() {
    state_ = splitmix(state_);
    return state_;
  }

  /// Uniform double in [0, 1).
  double uniform() {
    return static_cast<double>(next_u64() >> 11) * (1.0 / 9007199254740992.0);
  }

  /// Uniform integer in [0, n). n must be positive.
  int uniform_int(int n) {
    return static_cast<int>(next_u64() % static_cast<uint64_t>(n));
  }

  /// Standard normal via Box-Muller.
  double normal() {
    if (have_spare_) {
      have_spare_ = false;
      return spare_;
    }
    double u1 = uniform();
    double u2 = uniform();
    double r = std::sqrt(-2.0 * std::log1p(-u1));
    double a = 2.0 * 3.141592653589793238462643383279502884 * u2;
    spare_ = r * std::sin(a);
    have_spare_ = true;
    return r * std::cos(a);
  }

  /// Fisher-Yates permutation of {0..n-1}.
  std::vector<int> permutation(int n) {
    std::vector<int> p(static_cast<size_t>(n));
    std::iota(p.begin(), p.end(), 0);
    for (int i = n - 1; i > 0; --i) {
      int j = uniform_int(i + 1);
      std::swap(p[static_cast<size_t>(i)], p[static_cast<size_t>(j)]);
    }
    return p;
  }

  /// Independent substream labelled by a small integer tag, for keeping
  /// init / shuffle / noise / fallback draws decoupled from one another.
  Rng fork(uint64_t tag) const {
    return Rng(splitmix(state_ ^ (0xbf58476d1ce4e5b9ULL * (tag + 1))));
  }

 private:
  static uint64_t splitmix(uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
  }

  uint64_t state_;
  bool have_spare_ = false;
  double spare_ = 0.0;
};

}  // namespace hcvae
