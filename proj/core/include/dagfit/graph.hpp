#pragma once

#include <cstdint>
#include <limits>
#include <string>
#include <vector>

#include "dagfit/matrix.hpp"

namespace dagfit {

// perm[k] = node ranked at position k.
using Permutation = std::vector<int>;

struct Adjacency {
  int n = 0;
  std::vector<std::uint8_t> a;  // row-major; a[i*n+j] == 1 iff edge i -> j

  Adjacency() = default;
  explicit Adjacency(int n_) : n(n_), a(static_cast<std::size_t>(n_) * n_, 0) {}

  std::uint8_t at(int i, int j) const { return a[static_cast<std::size_t>(i) * n + j]; }
  void set(int i, int j, std::uint8_t v) { a[static_cast<std::size_t>(i) * n + j] = v; }
  const std::uint8_t* row(int i) const { return a.data() + static_cast<std::size_t>(i) * n; }
  int edge_count() const;

  bool operator==(const Adjacency&) const = default;
};

struct MetricReport {
  double shd = 0.0;
  double fdr = 0.0;
  double tpr = 0.0;
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
  double kendall_tau = std::numeric_limits<double>::quiet_NaN();  // absent unless scores given
};

bool is_valid_permutation(const Permutation& p);
Permutation perm_inverse(const Permutation& p);

// a_ij = mask_ij when i precedes j under p, else 0. Output is acyclic by
// construction.
Adjacency adjacency_from_sample(const Permutation& p, const Adjacency& mask);

bool is_dag(const Adjacency& a);

// Reversals cost 1: each unordered pair contributes 1 unless both graphs
// agree on its state (none / i->j / j->i).
int shd(const Adjacency& est, const Adjacency& truth);

// Directed-edge confusion counts. Conventions: fdr = 0 with no predictions;
// tpr = 1 when truth is empty.
MetricReport confusion_metrics(const Adjacency& est, const Adjacency& truth);

// Kendall tau over the reachability partial order of `truth`: pairs (i,j)
// with a directed path i -> ... -> j. Ties in scores count neither way;
// returns 1 when no pair is comparable.
double kendall_tau_partial(const std::vector<double>& scores, const Adjacency& truth);

// Reachability closure; r.at(i,j) == 1 iff a directed path i -> ... -> j exists.
Adjacency transitive_closure(const Adjacency& a);

// {"n": int, "edges": [[i,j], ...]} with edges sorted; round-trips bit-exactly.
void save_graph_json(const std::string& path, const Adjacency& a);
Adjacency load_graph_json(const std::string& path);

// Dense 0/1 rows, comma-separated, no header.
void save_graph_csv(const std::string& path, const Adjacency& a);
Adjacency load_graph_csv(const std::string& path);

}  // namespace dagfit
