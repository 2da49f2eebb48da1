#pragma once

#include <stdexcept>
#include <string>
#include <vector>

#include "dagfit/bpl.hpp"
#include "dagfit/conditionals.hpp"
#include "dagfit/dataset.hpp"
#include "dagfit/estimators.hpp"

namespace dagfit {

// steps and learning_rate default to -1 = "pick per estimator":
// reinforce uses 5000 steps at lr 0.01, analytic 20000 steps at lr 0.001.
struct TrainConfig {
  std::string estimator = "reinforce";  // reinforce | analytic
  int steps = -1;
  int batch_size = 64;
  double learning_rate = -1.0;
  int mc_samples = 200;
  double lambda = 1.0;
  double threshold = 0.5;
  double val_fraction = 0.2;
  std::uint64_t seed = 0;
  bool subsample_nodes = false;
  std::string model = "linear";  // linear | mlp
  int mlp_layers = 2;
  int mlp_hidden = 4;
  int eval_every = 100;

  // Fills estimator-dependent defaults and checks invariants.
  void resolve();
};

// Starts from current values (call on a default-constructed config to get
// defaults < file semantics). Unknown keys are rejected.
void train_config_apply_json(TrainConfig& cfg, const std::string& json_text);
TrainConfig load_train_config(const std::string& path);
std::string train_config_to_json(const TrainConfig& cfg);

struct HistoryRow {
  int step = 0;
  double train_objective = 0.0;
  double val_objective = 0.0;  // most recent evaluation
  double grad_variance = 0.0;
};

void save_history_csv(const std::string& path, const std::vector<HistoryRow>& rows);

struct FitResult {
  BplParams params;  // checkpoint with the best validation objective
  ConditionalModel model;
  Mat expected_adjacency;
  Adjacency extracted_graph;
  std::vector<HistoryRow> history;
  double best_val_objective = 0.0;
  int best_step = 0;
  std::vector<std::string> warnings;
};

// Raised when the objective or a parameter goes non-finite; carries a JSON
// dump of the offending step's state for postmortems.
class NumericalError : public std::runtime_error {
 public:
  NumericalError(const std::string& what, std::string dump)
      : std::runtime_error(what), dump_(std::move(dump)) {}
  const std::string& state_dump() const { return dump_; }

 private:
  std::string dump_;
};

// Adaptive-moment ascent over one flat parameter vector.
struct AdamState {
  std::vector<double> m, v;
  int t = 0;

  explicit AdamState(std::size_t dim) : m(dim, 0.0), v(dim, 0.0) {}
};

// params += lr * bias-corrected step toward +gradient.
void adam_update(AdamState& state, const std::vector<double>& gradient, double lr,
                 std::vector<double>& params);

// Mini-batch ascent on the penalized expected score with periodic validation;
// returns the checkpoint with the best validation objective. Deterministic
// for a fixed seed regardless of worker-thread count.
FitResult fit(const InterventionalDataset& dataset, TrainConfig config);

// Edge i -> j iff E[a_ij] > threshold (strict). threshold >= 0.5 keeps the
// result acyclic: E[a_ij] > 1/2 forces Pr(i before j) > 1/2, so theta_i >
// theta_j, and a cycle would need a strictly decreasing theta loop.
Adjacency extract_graph(const BplParams& params, double threshold);

}  // namespace dagfit
