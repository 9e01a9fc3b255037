// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cmath>
#include <cstdint>
#include <random>

namespace quantlaw {

// Uniform double in [0, 1) from the engine's full 64-bit output. Used in
// place of std::uniform_real_distribution, whose mapping is not pinned by
// the standard; this one is bit-stable across toolchains.
inline double uniform01(std::mt19937_64& eng) {
  return static_cast<double>(eng() >> 11) * 0x1.0p-53;
}

// Standard normal draws via Box-Muller on raw engine output, again to keep
// the stream independent of the standard library's distribution internals.
class GaussianGen {
 public:
  explicit GaussianGen(uint64_t seed) : eng_(seed) {}

  double next() {
    if (have_spare_) {
      have_spare_ = false;
      return spare_;
    }
    // 1 - u in (0, 1] keeps the log argument nonzero
    const double u1 = 1.0 - uniform01(eng_);
    const double u2 = uniform01(eng_);
    const double r = std::sqrt(-2.0 * std::log(u1));
    const double theta = 2.0 * 3.141592653589793238462643383279502884 * u2;
    spare_ = r * std::sin(theta);
    have_spare_ = true;
    return r * std::cos(theta);
  }

 private:
  std::mt19937_64 eng_;
  bool have_spare_ = false;
  double spare_ = 0.0;
};

}  // namespace quantlaw
