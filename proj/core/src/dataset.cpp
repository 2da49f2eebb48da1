#include "dagfit/dataset.hpp"

#include <algorithm>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include <json.hpp>

namespace dagfit {

void InterventionalDataset::validate() const {
  if (static_cast<int>(regime_of.size()) != x.rows)
    throw std::runtime_error("dataset: regime_of size mismatch");
  if (!columns.empty() && static_cast<int>(columns.size()) != x.cols)
    throw std::runtime_error("dataset: column-name count mismatch");
  for (int r : regime_of)
    if (r < 0 || r >= n_regimes()) throw std::runtime_error("dataset: unknown regime label");
  for (const auto& set : intervened) {
    for (std::size_t k = 0; k < set.size(); ++k) {
      if (set[k] < 0 || set[k] >= x.cols) throw std::runtime_error("dataset: intervened index out of range");
      if (k > 0 && set[k] <= set[k - 1]) throw std::runtime_error("dataset: intervened set not sorted unique");
    }
  }
}

std::vector<std::uint8_t> InterventionalDataset::excluded_mask(int regime) const {
  if (regime < 0 || regime >= n_regimes()) throw std::runtime_error("dataset: unknown regime label");
  std::vector<std::uint8_t> flags(x.cols, 0);
  for (int j : intervened[regime]) flags[j] = 1;
  return flags;
}

std::string format_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

void atomic_write_text(const std::string& path, const std::string& text) {
  std::string tmp = path + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot open " + tmp);
    out << text;
    out.flush();
    if (!out) throw std::runtime_error("write failed on " + tmp);
  }
  if (std::rename(tmp.c_str(), path.c_str()) != 0)
    throw std::runtime_error("cannot rename " + tmp + " to " + path);
}

namespace {

double parse_double(const std::string& s) {
  char* end = nullptr;
  double v = std::strtod(s.c_str(), &end);
  if (end == s.c_str() || *end != '\0') throw std::runtime_error("dataset: bad numeric cell '" + s + "'");
  return v;
}

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> cells;
  std::stringstream ss(line);
  std::string cell;
  while (std::getline(ss, cell, ',')) cells.push_back(cell);
  if (!line.empty() && line.back() == ',') cells.push_back("");
  return cells;
}

}  // namespace

void save_dataset(const std::string& dir, const InterventionalDataset& d) {
  d.validate();
  {
    std::ofstream out(dir + "/samples.csv");
    if (!out) throw std::runtime_error("save_dataset: cannot open samples.csv under " + dir);
    for (int j = 0; j < d.x.cols; ++j) {
      if (j) out << ',';
      out << (d.columns.empty() ? "x" + std::to_string(j) : d.columns[j]);
    }
    out << '\n';
    for (int r = 0; r < d.x.rows; ++r) {
      const double* row = d.x.row(r);
      for (int j = 0; j < d.x.cols; ++j) {
        if (j) out << ',';
        out << format_double(row[j]);
      }
      out << '\n';
    }
  }
  {
    std::ofstream out(dir + "/regimes.csv");
    if (!out) throw std::runtime_error("save_dataset: cannot open regimes.csv under " + dir);
    out << "row_index,regime_id\n";
    for (int r = 0; r < d.x.rows; ++r) out << r << ',' << d.regime_of[r] << '\n';
  }
  {
    nlohmann::json doc = nlohmann::json::object();
    for (int r = 0; r < d.n_regimes(); ++r) doc[std::to_string(r)] = d.intervened[r];
    std::ofstream out(dir + "/interventions.json");
    if (!out) throw std::runtime_error("save_dataset: cannot open interventions.json under " + dir);
    out << doc.dump(2) << "\n";
  }
}

InterventionalDataset load_dataset(const std::string& dir) {
  return load_dataset_files(dir + "/samples.csv", dir + "/regimes.csv", dir + "/interventions.json");
}

InterventionalDataset load_dataset_files(const std::string& samples_csv,
                                         const std::string& regimes_csv,
                                         const std::string& interventions_json) {
  InterventionalDataset d;
  {
    std::ifstream in(samples_csv);
    if (!in) throw std::runtime_error("load_dataset: cannot open " + samples_csv);
    std::string line;
    if (!std::getline(in, line)) throw std::runtime_error("load_dataset: empty samples file");
    d.columns = split_csv_line(line);
    std::vector<double> values;
    int rows = 0;
    while (std::getline(in, line)) {
      if (line.empty()) continue;
      auto cells = split_csv_line(line);
      if (cells.size() != d.columns.size())
        throw std::runtime_error("load_dataset: ragged sample row");
      for (const auto& c : cells) values.push_back(parse_double(c));
      ++rows;
    }
    d.x = Mat(rows, static_cast<int>(d.columns.size()));
    d.x.v = std::move(values);
  }
  {
    std::ifstream in(regimes_csv);
    if (!in) throw std::runtime_error("load_dataset: cannot open " + regimes_csv);
    std::string line;
    if (!std::getline(in, line)) throw std::runtime_error("load_dataset: empty regimes file");
    d.regime_of.assign(d.x.rows, -1);
    while (std::getline(in, line)) {
      if (line.empty()) continue;
      auto cells = split_csv_line(line);
      if (cells.size() != 2) throw std::runtime_error("load_dataset: bad regimes row");
      int idx = std::stoi(cells[0]);
      int reg = std::stoi(cells[1]);
      if (idx < 0 || idx >= d.x.rows) throw std::runtime_error("load_dataset: regime row index out of range");
      d.regime_of[idx] = reg;
    }
    for (int r : d.regime_of)
      if (r < 0) throw std::runtime_error("load_dataset: row missing regime label");
  }
  {
    std::ifstream in(interventions_json);
    if (!in) throw std::runtime_error("load_dataset: cannot open " + interventions_json);
    nlohmann::json doc = nlohmann::json::parse(in);
    int max_regime = -1;
    for (auto it = doc.begin(); it != doc.end(); ++it)
      max_regime = std::max(max_regime, std::stoi(it.key()));
    d.intervened.assign(max_regime + 1, {});
    for (auto it = doc.begin(); it != doc.end(); ++it) {
      auto& set = d.intervened[std::stoi(it.key())];
      for (const auto& v : it.value()) set.push_back(v.get<int>());
      std::sort(set.begin(), set.end());
      set.erase(std::unique(set.begin(), set.end()), set.end());
    }
  }
  d.validate();
  return d;
}

}  // namespace dagfit
