#pragma once

#include <string>
#include <vector>

#include "dagfit/matrix.hpp"

namespace dagfit {

// Rows of samples with per-row regime labels; each regime carries the set of
// intervened variables (empty = observational).
struct InterventionalDataset {
  Mat x;                                      // m x n
  std::vector<int> regime_of;                 // size m
  std::vector<std::vector<int>> intervened;   // per regime, sorted unique indices
  std::vector<std::string> columns;           // size n

  int n_rows() const { return x.rows; }
  int n_vars() const { return x.cols; }
  int n_regimes() const { return static_cast<int>(intervened.size()); }
  void validate() const;

  // flags[j] == 1 iff variable j is intervened in `regime` (excluded from the score).
  std::vector<std::uint8_t> excluded_mask(int regime) const;
};

// Trio layout inside a directory: samples.csv (header = variable names),
// regimes.csv (row_index, regime_id), interventions.json (regime -> indices).
// Floats print with 17 significant digits and round-trip bit-exactly.
void save_dataset(const std::string& dir, const InterventionalDataset& d);
InterventionalDataset load_dataset(const std::string& dir);
InterventionalDataset load_dataset_files(const std::string& samples_csv,
                                         const std::string& regimes_csv,
                                         const std::string& interventions_json);

// 17-significant-digit decimal, shared by every writer in the toolkit.
std::string format_double(double v);

// Writes to a sibling temp file, then renames over the target.
void atomic_write_text(const std::string& path, const std::string& text);

}  // namespace dagfit
