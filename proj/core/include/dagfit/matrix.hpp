#pragma once

#include <algorithm>
#include <cstddef>
#include <vector>

namespace dagfit {

// Dense row-major matrix. Deliberately minimal: hot loops index raw storage.
struct Mat {
  int rows = 0;
  int cols = 0;
  std::vector<double> v;

  Mat() = default;
  Mat(int r, int c, double fill = 0.0)
      : rows(r), cols(c), v(static_cast<std::size_t>(r) * static_cast<std::size_t>(c), fill) {}

  double& at(int r, int c) { return v[static_cast<std::size_t>(r) * cols + c]; }
  double at(int r, int c) const { return v[static_cast<std::size_t>(r) * cols + c]; }
  double* row(int r) { return v.data() + static_cast<std::size_t>(r) * cols; }
  const double* row(int r) const { return v.data() + static_cast<std::size_t>(r) * cols; }
  std::size_t size() const { return v.size(); }
  bool same_shape(const Mat& o) const { return rows == o.rows && cols == o.cols; }
  void fill(double x) { std::fill(v.begin(), v.end(), x); }

  bool operator==(const Mat&) const = default;
};

inline void axpy(Mat& y, double a, const Mat& x) {
  for (std::size_t i = 0; i < y.v.size(); ++i) y.v[i] += a * x.v[i];
}

inline void axpy(std::vector<double>& y, double a, const std::vector<double>& x) {
  for (std::size_t i = 0; i < y.size(); ++i) y[i] += a * x[i];
}

}  // namespace dagfit
