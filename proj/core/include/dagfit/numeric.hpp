#pragma once

#include <cmath>

namespace dagfit {

inline double sigmoid(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  double e = std::exp(x);
  return e / (1.0 + e);
}

inline double softplus(double x) {
  return x > 0.0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x));
}

// Compensated accumulator; sums stay order-stable to ~2 ulp of sum|x|.
struct KahanSum {
  double s = 0.0;
  double c = 0.0;
  void add(double x) {
    double y = x - c;
    double t = s + y;
    c = (t - s) - y;
    s = t;
  }
  double value() const { return s; }
};

inline constexpr double kTwoPi = 6.283185307179586476925286766559;

}  // namespace dagfit
