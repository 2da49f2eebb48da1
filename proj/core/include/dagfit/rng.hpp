#pragma once

#include <cmath>
#include <cstdint>
#include <random>

namespace dagfit {

inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

// mt19937_64 engine with hand-rolled draws. std:: distributions are
// implementation-defined, and byte-identical replay is part of the contract
// here, so every transform from raw bits is spelled out.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : seed_(seed), eng_(splitmix64(seed)) {}

  // Independent stream keyed by up to three tags. Derivation uses only the
  // original seed, never engine state, so derive() is order-insensitive.
  Rng derive(std::uint64_t a, std::uint64_t b = 0, std::uint64_t c = 0) const {
    std::uint64_t h = splitmix64(seed_ ^ (0x9e3779b97f4a7c15ULL + a));
    h = splitmix64(h ^ (0xc2b2ae3d27d4eb4fULL + b));
    h = splitmix64(h ^ (0x165667b19e3779f9ULL + c));
    return Rng(h);
  }

  std::uint64_t seed() const { return seed_; }
  std::uint64_t next_u64() { return eng_(); }

  // [0, 1)
  double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }
  // (0, 1), safe under log()
  double uniform_open() { return (static_cast<double>(next_u64() >> 11) + 0.5) * 0x1.0p-53; }

  double uniform_in(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  bool bernoulli(double p) { return uniform() < p; }

  double normal() {
    if (has_spare_) {
      has_spare_ = false;
      return spare_;
    }
    double u1 = uniform_open();
    double u2 = uniform();
    double r = std::sqrt(-2.0 * std::log(u1));
    double a = 2.0 * 3.14159265358979323846 * u2;
    spare_ = r * std::sin(a);
    has_spare_ = true;
    return r * std::cos(a);
  }

  double gumbel() { return -std::log(-std::log(uniform_open())); }

  // Uniform over {0, ..., n-1}, exact via rejection.
  int uniform_int(int n) {
    std::uint64_t un = static_cast<std::uint64_t>(n);
    std::uint64_t limit = UINT64_MAX - UINT64_MAX % un;
    std::uint64_t x;
    do {
      x = next_u64();
    } while (x >= limit);
    return static_cast<int>(x % un);
  }

 private:
  std::uint64_t seed_;
  std::mt19937_64 eng_;
  double spare_ = 0.0;
  bool has_spare_ = false;
};

}  // namespace dagfit
