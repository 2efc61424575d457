#pragma once

#include <cmath>
#include <cstdint>

#include "sicpln/errors.hpp"

namespace sicpln {

// Deterministic counter-based generator (SplitMix64 core). All simulation
// randomness flows through this type so that identical seeds give
// byte-identical output on every platform; std:: distributions are
// implementation-defined and are deliberately not used.
//
// Substreams: stream(id) derives an independent generator from the *base*
// seed and a purpose id, so replications and purposes (design, covariance,
// latent draw, counts) never share state.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : base_(seed), state_(seed) {}

  Rng stream(std::uint64_t id) const {
    return Rng(mix(base_ ^ (0x9E3779B97F4A7C15ULL * (id + 1))));
  }

  std::uint64_t next_u64() {
    state_ += 0x9E3779B97F4A7C15ULL;
    return mix(state_);
  }

  // Uniform on [0,1), 53-bit resolution.
  double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  double uniform(double a, double b) { return a + (b - a) * uniform(); }

  // Standard normal via Box-Muller; the paired value is cached.
  double normal() {
    if (have_cached_) {
      have_cached_ = false;
      return cached_;
    }
    double u1 = 1.0 - uniform();  // (0,1], keeps log finite
    double u2 = uniform();
    double r = std::sqrt(-2.0 * std::log(u1));
    double t = 2.0 * M_PI * u2;
    cached_ = r * std::sin(t);
    have_cached_ = true;
    return r * std::cos(t);
  }

  // Poisson draw: Knuth multiplication below mean 10, PTRS transformed
  // rejection (Hormann 1993) above. Means beyond 1e12 are rejected upstream.
  long poisson(double mean) {
    if (!(mean >= 0.0)) throw domain_error("poisson: mean must be nonnegative");
    if (mean == 0.0) return 0;
    if (mean < 10.0) return poisson_knuth(mean);
    return poisson_ptrs(mean);
  }

 private:
  static std::uint64_t mix(std::uint64_t z) {
    z ^= z >> 30;
    z *= 0xBF58476D1CE4E5B9ULL;
    z ^= z >> 27;
    z *= 0x94D049BB133111EBULL;
    z ^= z >> 31;
    return z;
  }

  long poisson_knuth(double mean) {
    const double limit = std::exp(-mean);
    long k = 0;
    double prod = 1.0;
    do {
      ++k;
      prod *= uniform();
    } while (prod > limit);
    return k - 1;
  }

  long poisson_ptrs(double mean) {
    const double slam = std::sqrt(mean);
    const double loglam = std::log(mean);
    const double b = 0.931 + 2.53 * slam;
    const double a = -0.059 + 0.02483 * b;
    const double inv_alpha = 1.1239 + 1.1328 / (b - 3.4);
    const double v_r = 0.9277 - 3.6224 / (b - 2.0);
    for (;;) {
      double u = uniform() - 0.5;
      double v = uniform();
      double us = 0.5 - std::fabs(u);
      double kf = std::floor((2.0 * a / us + b) * u + mean + 0.43);
      if (us >= 0.07 && v <= v_r) return static_cast<long>(kf);
      if (kf < 0.0 || (us < 0.013 && v > us)) continue;
      if (std::log(v * inv_alpha / (a / (us * us) + b)) <=
          kf * loglam - mean - std::lgamma(kf + 1.0)) {
        return static_cast<long>(kf);
      }
    }
  }

  std::uint64_t base_;
  std::uint64_t state_;
  double cached_ = 0.0;
  bool have_cached_ = false;
};

}  // namespace sicpln
