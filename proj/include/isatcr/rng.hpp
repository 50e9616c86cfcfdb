#pragma once

#include <cmath>
#include <cstdint>
#include <limits>

namespace isatcr {

// splitmix64 step; doubles as the stream-derivation hash.
inline std::uint64_t splitmix64(std::uint64_t& x) {
  x += 0x9e3779b97f4a7c15ULL;
  std::uint64_t z = x;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

// Deterministic generator with hand-coded distribution transforms.
// std:: distributions are implementation-defined, which would break the
// byte-identical-replay contract, so the few transforms needed are coded here.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : state_(seed) {
    // burn-in so that small seeds decorrelate
    next();
    next();
  }

  // Independent named stream derived from a master seed. Streams keyed by
  // (purpose, index) stay identical no matter how other streams are consumed.
  static Rng stream(std::uint64_t master, std::uint64_t purpose, std::uint64_t index = 0) {
    std::uint64_t s = master;
    std::uint64_t a = splitmix64(s);
    s ^= 0x632be59bd9b4e019ULL * (purpose + 1);
    std::uint64_t b = splitmix64(s);
    s ^= 0x9e3779b97f4a7c15ULL * (index + 1);
    std::uint64_t c = splitmix64(s);
    return Rng(a ^ (b * 0x2545f4914f6cdd1dULL) ^ c);
  }

  std::uint64_t next() { return splitmix64(state_); }

  // uniform in [0, 1)
  double uniform() { return static_cast<double>(next() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // uniform integer in [0, n)
  std::uint64_t uniform_int(std::uint64_t n) {
    // multiply-shift; bias is negligible for the small n used here
    return static_cast<std::uint64_t>(uniform() * static_cast<double>(n)) % n;
  }

  double exponential(double mean) {
    double u = uniform();
    return -mean * std::log1p(-u);
  }

  double normal(double mu = 0.0, double sigma = 1.0) {
    if (have_spare_) {
      have_spare_ = false;
      return mu + sigma * spare_;
    }
    double u1 = uniform();
    double u2 = uniform();
    while (u1 <= std::numeric_limits<double>::min()) u1 = uniform();
    double r = std::sqrt(-2.0 * std::log(u1));
    double t = 2.0 * M_PI * u2;
    spare_ = r * std::sin(t);
    have_spare_ = true;
    return mu + sigma * r * std::cos(t);
  }

  bool bernoulli(double p) { return uniform() < p; }

 private:
  std::uint64_t state_;
  double spare_ = 0.0;
  bool have_spare_ = false;
};

}  // namespace isatcr
