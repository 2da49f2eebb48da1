#include "dagfit/graph.hpp"

#include <algorithm>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include <json.hpp>

namespace dagfit {

int Adjacency::edge_count() const {
  int c = 0;
  for (std::uint8_t x : a) c += x != 0;
  return c;
}

bool is_valid_permutation(const Permutation& p) {
  const int n = static_cast<int>(p.size());
  std::vector<char> seen(n, 0);
  for (int x : p) {
    if (x < 0 || x >= n || seen[x]) return false;
    seen[x] = 1;
  }
  return true;
}

Permutation perm_inverse(const Permutation& p) {
  if (!is_valid_permutation(p)) throw std::invalid_argument("perm_inverse: not a permutation");
  Permutation inv(p.size());
  for (int k = 0; k < static_cast<int>(p.size()); ++k) inv[p[k]] = k;
  return inv;
}

Adjacency adjacency_from_sample(const Permutation& p, const Adjacency& mask) {
  const int n = mask.n;
  if (static_cast<int>(p.size()) != n)
    throw std::invalid_argument("adjacency_from_sample: dimension mismatch");
  Permutation pos = perm_inverse(p);
  Adjacency out(n);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j)
      if (i != j && mask.at(i, j) && pos[i] < pos[j]) out.set(i, j, 1);
  return out;
}

bool is_dag(const Adjacency& a) {
  const int n = a.n;
  std::vector<int> indeg(n, 0);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) indeg[j] += a.at(i, j) != 0;
  std::vector<int> stack;
  for (int j = 0; j < n; ++j)
    if (indeg[j] == 0) stack.push_back(j);
  int removed = 0;
  while (!stack.empty()) {
    int u = stack.back();
    stack.pop_back();
    ++removed;
    for (int j = 0; j < n; ++j)
      if (a.at(u, j) && --indeg[j] == 0) stack.push_back(j);
  }
  return removed == n;
}

int shd(const Adjacency& est, const Adjacency& truth) {
  if (est.n != truth.n) throw std::invalid_argument("shd: dimension mismatch");
  const int n = est.n;
  int d = 0;
  for (int i = 0; i < n; ++i)
    for (int j = i + 1; j < n; ++j) {
      int e = est.at(i, j) ? 1 : (est.at(j, i) ? 2 : 0);
      int t = truth.at(i, j) ? 1 : (truth.at(j, i) ? 2 : 0);
      d += e != t;
    }
  return d;
}

MetricReport confusion_metrics(const Adjacency& est, const Adjacency& truth) {
  if (est.n != truth.n) throw std::invalid_argument("confusion_metrics: dimension mismatch");
  const int n = est.n;
  int tp = 0, fp = 0, fn = 0;
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) {
      if (i == j) continue;
      bool e = est.at(i, j) != 0;
      bool t = truth.at(i, j) != 0;
      tp += e && t;
      fp += e && !t;
      fn += !e && t;
    }
  MetricReport r;
  r.shd = shd(est, truth);
  r.fdr = (tp + fp) > 0 ? static_cast<double>(fp) / (tp + fp) : 0.0;
  r.precision = 1.0 - r.fdr;
  r.tpr = (tp + fn) > 0 ? static_cast<double>(tp) / (tp + fn) : 1.0;
  r.recall = r.tpr;
  r.f1 = (r.precision + r.recall) > 0.0
             ? 2.0 * r.precision * r.recall / (r.precision + r.recall)
             : 0.0;
  return r;
}

Adjacency transitive_closure(const Adjacency& a) {
  const int n = a.n;
  // Bitset rows; reverse topological-ish sweep is unnecessary, plain
  // iterative closure is fine at toolkit scales.
  const int words = (n + 63) / 64;
  std::vector<std::uint64_t> reach(static_cast<std::size_t>(n) * words, 0);
  auto bit = [&](int i, int j) -> std::uint64_t& { return reach[static_cast<std::size_t>(i) * words + j / 64]; };
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j)
      if (a.at(i, j)) bit(i, j) |= 1ULL << (j % 64);
  bool changed = true;
  while (changed) {
    changed = false;
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < n; ++j)
        if ((bit(i, j) >> (j % 64)) & 1ULL) {
          for (int w = 0; w < words; ++w) {
            std::uint64_t before = reach[static_cast<std::size_t>(i) * words + w];
            std::uint64_t merged = before | reach[static_cast<std::size_t>(j) * words + w];
            if (merged != before) {
              reach[static_cast<std::size_t>(i) * words + w] = merged;
              changed = true;
            }
          }
        }
  }
  Adjacency out(n);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j)
      if (i != j && ((reach[static_cast<std::size_t>(i) * words + j / 64] >> (j % 64)) & 1ULL))
        out.set(i, j, 1);
  return out;
}

double kendall_tau_partial(const std::vector<double>& scores, const Adjacency& truth) {
  if (static_cast<int>(scores.size()) != truth.n)
    throw std::invalid_argument("kendall_tau_partial: dimension mismatch");
  if (!is_dag(truth)) throw std::invalid_argument("kendall_tau_partial: truth is cyclic");
  Adjacency reach = transitive_closure(truth);
  long long concordant = 0, discordant = 0, comparable = 0;
  const int n = truth.n;
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j)
      if (i != j && reach.at(i, j)) {
        ++comparable;
        if (scores[i] > scores[j])
          ++concordant;
        else if (scores[i] < scores[j])
          ++discordant;
      }
  if (comparable == 0) return 1.0;
  return static_cast<double>(concordant - discordant) / static_cast<double>(comparable);
}

void save_graph_json(const std::string& path, const Adjacency& a) {
  nlohmann::json edges = nlohmann::json::array();
  for (int i = 0; i < a.n; ++i)
    for (int j = 0; j < a.n; ++j)
      if (a.at(i, j)) edges.push_back({i, j});
  nlohmann::json doc;
  doc["n"] = a.n;
  doc["edges"] = edges;
  std::ofstream out(path);
  if (!out) throw std::runtime_error("save_graph_json: cannot open " + path);
  out << doc.dump(2) << "\n";
}

Adjacency load_graph_json(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("load_graph_json: cannot open " + path);
  nlohmann::json doc = nlohmann::json::parse(in);
  int n = doc.at("n").get<int>();
  if (n < 0) throw std::runtime_error("load_graph_json: negative n");
  Adjacency a(n);
  for (const auto& e : doc.at("edges")) {
    int i = e.at(0).get<int>();
    int j = e.at(1).get<int>();
    if (i < 0 || i >= n || j < 0 || j >= n || i == j)
      throw std::runtime_error("load_graph_json: edge out of range");
    a.set(i, j, 1);
  }
  return a;
}

void save_graph_csv(const std::string& path, const Adjacency& a) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("save_graph_csv: cannot open " + path);
  for (int i = 0; i < a.n; ++i) {
    for (int j = 0; j < a.n; ++j) {
      if (j) out << ',';
      out << static_cast<int>(a.at(i, j));
    }
    out << '\n';
  }
}

Adjacency load_graph_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("load_graph_csv: cannot open " + path);
  std::vector<std::vector<std::uint8_t>> rows;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::vector<std::uint8_t> row;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) {
      if (cell != "0" && cell != "1") throw std::runtime_error("load_graph_csv: non-binary entry");
      row.push_back(cell == "1");
    }
    rows.push_back(std::move(row));
  }
  const int n = static_cast<int>(rows.size());
  Adjacency a(n);
  for (int i = 0; i < n; ++i) {
    if (static_cast<int>(rows[i].size()) != n) throw std::runtime_error("load_graph_csv: ragged rows");
    for (int j = 0; j < n; ++j) a.set(i, j, rows[i][j]);
  }
  return a;
}

}  // namespace dagfit
