#pragma once

#include <unistd.h>

#include <filesystem>
#include <random>
#include <string>
#include <vector>

#include "dagfit/bpl.hpp"
#include "dagfit/dataset.hpp"
#include "dagfit/rng.hpp"

namespace testutil {

// Unique scratch directory under the system temp root, removed on scope exit.
struct TempDir {
  std::filesystem::path path;

  explicit TempDir(const std::string& tag) {
    path = std::filesystem::temp_directory_path() /
           ("dagfit_test_" + tag + "_" + std::to_string(::getpid()));
    std::filesystem::remove_all(path);
    std::filesystem::create_directories(path);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path, ec);
  }
  std::string str() const { return path.string(); }
  std::string file(const std::string& name) const { return (path / name).string(); }
};

inline std::vector<double> random_theta(int n, dagfit::Rng& rng, double scale = 1.0) {
  std::vector<double> t(n);
  for (double& v : t) v = scale * rng.normal();
  return t;
}

inline dagfit::BplParams random_params(int n, dagfit::Rng& rng, bool with_forbidden = false) {
  dagfit::BplParams p = dagfit::BplParams::init(n);
  for (int i = 0; i < n; ++i) p.theta[i] = 0.8 * rng.normal();
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j)
      if (i != j) p.edge_logits.at(i, j) = rng.normal() - 0.3;
  if (with_forbidden && n >= 2) p.forbidden.set(0, n - 1, 1);
  return p;
}

// Small three-regime dataset with deliberately uneven regime sizes.
inline dagfit::InterventionalDataset random_dataset(int n, dagfit::Rng& rng) {
  dagfit::InterventionalDataset d;
  const int rows[3] = {7, 3, 2};
  int m = rows[0] + rows[1] + rows[2];
  d.x = dagfit::Mat(m, n);
  int r = 0;
  for (int g = 0; g < 3; ++g)
    for (int k = 0; k < rows[g]; ++k, ++r) {
      d.regime_of.push_back(g);
      for (int j = 0; j < n; ++j) d.x.at(r, j) = rng.normal();
    }
  d.intervened = {{}, {0}, {1 % n, (n > 2 ? 2 : 1) % n}};
  auto& last = d.intervened[2];
  std::sort(last.begin(), last.end());
  last.erase(std::unique(last.begin(), last.end()), last.end());
  for (int j = 0; j < n; ++j) d.columns.push_back("x" + std::to_string(j));
  return d;
}

inline std::vector<int> all_rows(const dagfit::InterventionalDataset& d) {
  std::vector<int> r(d.n_rows());
  for (int i = 0; i < d.n_rows(); ++i) r[i] = i;
  return r;
}

}  // namespace testutil
