#pragma once

#include <cmath>
#include <cstdint>
#include <vector>

#include "mvt/types.hpp"

namespace mvt {

// splitmix64 step; also used as the stream-derivation mixer.
inline std::uint64_t mix64(std::uint64_t z) {
  z += 0x9e3779b97f4a7c15ULL;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

// Deterministic generator with splittable streams: derive(master, h) yields
// a stream that is bit-reproducible regardless of execution order, so
// parallel and serial simulation runs agree exactly.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : state_(mix64(seed ^ 0x6a09e667f3bcc908ULL)) {}

  static Rng derive(std::uint64_t master, std::uint64_t stream) {
    return Rng(mix64(master) ^ mix64(stream * 0x9e3779b97f4a7c15ULL + 0x0du));
  }

  std::uint64_t next_u64() {
    state_ += 0x9e3779b97f4a7c15ULL;
    std::uint64_t z = state_;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
  }

  // uniform on [0,1)
  double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // Box-Muller; the pair partner is cached.
  double normal() {
    if (have_cached_) {
      have_cached_ = false;
      return cached_;
    }
    double u1 = uniform();
    while (u1 <= 0.0) u1 = uniform();
    const double u2 = uniform();
    const double r = std::sqrt(-2.0 * std::log(u1));
    const double a = 2.0 * M_PI * u2;
    cached_ = r * std::sin(a);
    have_cached_ = true;
    return r * std::cos(a);
  }

  double chi_squared_1() {
    const double z = normal();
    return z * z;
  }

  bool bernoulli(double p) { return uniform() < p; }

  // index in [0, probs.size()) by inverse CDF; probs need not be normalized.
  int categorical(const Vector& probs) {
    double total = probs.sum();
    double u = uniform() * total;
    double acc = 0.0;
    for (Index k = 0; k < probs.size(); ++k) {
      acc += probs[k];
      if (u < acc) return static_cast<int>(k);
    }
    return static_cast<int>(probs.size() - 1);
  }

  double exponential_truncated(double rate, double cap) {
    const double z = 1.0 - std::exp(-rate * cap);
    return -std::log(1.0 - uniform() * z) / rate;
  }

  double logistic_truncated(double cap) {
    const double flo = 1.0 / (1.0 + std::exp(cap));   // F(-cap)
    const double fhi = 1.0 / (1.0 + std::exp(-cap));  // F(cap)
    const double u = flo + uniform() * (fhi - flo);
    return std::log(u / (1.0 - u));
  }

  // inverse CDF over a finite pmf; returns the support index.
  int discrete(const std::vector<double>& pmf) {
    double total = 0.0;
    for (double p : pmf) total += p;
    double u = uniform() * total;
    double acc = 0.0;
    for (std::size_t k = 0; k < pmf.size(); ++k) {
      acc += pmf[k];
      if (u < acc) return static_cast<int>(k);
    }
    return static_cast<int>(pmf.size() - 1);
  }

 private:
  std::uint64_t state_;
  double cached_ = 0.0;
  bool have_cached_ = false;
};

}  // namespace mvt
