#include "dagfit/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <stdexcept>

#include <json.hpp>

#include "dagfit/numeric.hpp"
#include "dagfit/objective.hpp"

namespace dagfit {

namespace {

constexpr std::uint64_t kTagBatch = 101;
constexpr std::uint64_t kTagStep = 102;
constexpr std::uint64_t kTagEval = 103;
constexpr std::uint64_t kTagInit = 104;

// Validation cost control: at most this many rows per evaluation, and this
// many sampled DAGs when the estimator has no closed form.
constexpr int kMaxEvalRows = 2048;
constexpr int kEvalSamples = 64;

constexpr double kAdamBeta1 = 0.9;
constexpr double kAdamBeta2 = 0.999;
constexpr double kAdamEps = 1e-8;

}  // namespace

void TrainConfig::resolve() {
  if (estimator != "reinforce" && estimator != "analytic")
    throw std::invalid_argument("config: estimator must be 'reinforce' or 'analytic'");
  if (model != "linear" && model != "mlp")
    throw std::invalid_argument("config: model must be 'linear' or 'mlp'");
  if (steps == -1) steps = estimator == "analytic" ? 20000 : 5000;
  if (learning_rate == -1.0) learning_rate = estimator == "analytic" ? 0.001 : 0.01;
  if (steps <= 0) throw std::invalid_argument("config: steps must be positive");
  if (batch_size <= 0) throw std::invalid_argument("config: batch_size must be positive");
  if (!(learning_rate > 0.0)) throw std::invalid_argument("config: learning_rate must be positive");
  if (mc_samples < 2) throw std::invalid_argument("config: mc_samples must be >= 2");
  if (lambda < 0.0) throw std::invalid_argument("config: lambda must be >= 0");
  if (!(threshold > 0.0 && threshold < 1.0))
    throw std::invalid_argument("config: threshold must be in (0, 1)");
  if (!(val_fraction >= 0.0 && val_fraction < 1.0))
    throw std::invalid_argument("config: val_fraction must be in [0, 1)");
  if (mlp_layers < 1 || mlp_hidden < 1)
    throw std::invalid_argument("config: mlp shape must be positive");
  if (eval_every < 1) throw std::invalid_argument("config: eval_every must be positive");
  if (estimator == "analytic" && model != "linear")
    throw std::invalid_argument("config: the analytic estimator requires the linear model");
}

void train_config_apply_json(TrainConfig& cfg, const std::string& json_text) {
  nlohmann::json j = nlohmann::json::parse(json_text);
  if (!j.is_object()) throw std::runtime_error("config: expected a JSON object");
  for (const auto& [key, val] : j.items()) {
    if (key == "estimator")
      cfg.estimator = val.get<std::string>();
    else if (key == "steps")
      cfg.steps = val.get<int>();
    else if (key == "batch_size")
      cfg.batch_size = val.get<int>();
    else if (key == "learning_rate")
      cfg.learning_rate = val.get<double>();
    else if (key == "mc_samples")
      cfg.mc_samples = val.get<int>();
    else if (key == "lambda")
      cfg.lambda = val.get<double>();
    else if (key == "threshold")
      cfg.threshold = val.get<double>();
    else if (key == "val_fraction")
      cfg.val_fraction = val.get<double>();
    else if (key == "seed")
      cfg.seed = val.get<std::uint64_t>();
    else if (key == "subsample_nodes")
      cfg.subsample_nodes = val.get<bool>();
    else if (key == "model")
      cfg.model = val.get<std::string>();
    else if (key == "mlp_layers")
      cfg.mlp_layers = val.get<int>();
    else if (key == "mlp_hidden")
      cfg.mlp_hidden = val.get<int>();
    else if (key == "eval_every")
      cfg.eval_every = val.get<int>();
    else
      throw std::runtime_error("config: unknown key '" + key + "'");
  }
}

TrainConfig load_train_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("config: cannot open " + path);
  std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  TrainConfig cfg;
  train_config_apply_json(cfg, text);
  return cfg;
}

std::string train_config_to_json(const TrainConfig& cfg) {
  nlohmann::json j;
  j["estimator"] = cfg.estimator;
  j["steps"] = cfg.steps;
  j["batch_size"] = cfg.batch_size;
  j["learning_rate"] = cfg.learning_rate;
  j["mc_samples"] = cfg.mc_samples;
  j["lambda"] = cfg.lambda;
  j["threshold"] = cfg.threshold;
  j["val_fraction"] = cfg.val_fraction;
  j["seed"] = cfg.seed;
  j["subsample_nodes"] = cfg.subsample_nodes;
  j["model"] = cfg.model;
  j["mlp_layers"] = cfg.mlp_layers;
  j["mlp_hidden"] = cfg.mlp_hidden;
  j["eval_every"] = cfg.eval_every;
  return j.dump(2);
}

void save_history_csv(const std::string& path, const std::vector<HistoryRow>& rows) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("history: cannot open " + path);
  out << "step,train_objective,val_objective,grad_variance\n";
  for (const auto& r : rows)
    out << r.step << ',' << format_double(r.train_objective) << ','
        << format_double(r.val_objective) << ',' << format_double(r.grad_variance) << '\n';
}

void adam_update(AdamState& state, const std::vector<double>& gradient, double lr,
                 std::vector<double>& params) {
  if (gradient.size() != params.size() || gradient.size() != state.m.size())
    throw std::invalid_argument("adam_update: size mismatch");
  state.t += 1;
  const double c1 = 1.0 - std::pow(kAdamBeta1, state.t);
  const double c2 = 1.0 - std::pow(kAdamBeta2, state.t);
  for (std::size_t i = 0; i < params.size(); ++i) {
    double g = gradient[i];
    state.m[i] = kAdamBeta1 * state.m[i] + (1.0 - kAdamBeta1) * g;
    state.v[i] = kAdamBeta2 * state.v[i] + (1.0 - kAdamBeta2) * g * g;
    params[i] += lr * (state.m[i] / c1) / (std::sqrt(state.v[i] / c2) + kAdamEps);
  }
}

Adjacency extract_graph(const BplParams& params, double threshold) {
  if (!(threshold >= 0.5))
    throw std::invalid_argument("extract_graph: threshold below 0.5 voids acyclicity");
  Mat e = expected_edge_matrix(params);
  const int n = params.n();
  Adjacency g(n);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j)
      if (i != j && e.at(i, j) > threshold) g.set(i, j, 1);
  if (!is_dag(g)) throw std::logic_error("extract_graph: produced a cycle");
  return g;
}

namespace {

struct FlatLayout {
  int n = 0;
  std::size_t model_dim = 0;

  std::size_t dim() const {
    return static_cast<std::size_t>(n) + static_cast<std::size_t>(n) * n + model_dim;
  }
  void gather(const BplParams& p, const ConditionalModel& m, std::vector<double>& flat) const {
    std::size_t k = 0;
    for (int i = 0; i < n; ++i) flat[k++] = p.theta[i];
    for (double v : p.edge_logits.v) flat[k++] = v;
    pack_params(m, flat.data() + k);
  }
  void scatter(const std::vector<double>& flat, BplParams& p, ConditionalModel& m) const {
    std::size_t k = 0;
    for (int i = 0; i < n; ++i) p.theta[i] = flat[k++];
    for (double& v : p.edge_logits.v) v = flat[k++];
    unpack_params(m, flat.data() + k);
  }
  void gather_grad(const GradientBundle& g, std::vector<double>& flat) const {
    std::size_t k = 0;
    for (int i = 0; i < n; ++i) flat[k++] = g.d_theta[i];
    for (double v : g.d_edge_logits.v) flat[k++] = v;
    pack_params(g.d_model, flat.data() + k);
  }
};

std::string dump_state(int step, double objective, const std::vector<double>& flat) {
  nlohmann::json j;
  j["step"] = step;
  j["objective"] = objective;
  j["flat_params"] = flat;
  return j.dump(2);
}

}  // namespace

FitResult fit(const InterventionalDataset& dataset, TrainConfig config) {
  config.resolve();
  dataset.validate();
  const int n = dataset.n_vars();
  if (n < 2) throw std::invalid_argument("fit: need at least 2 variables");
  if (dataset.n_rows() < 1) throw std::invalid_argument("fit: empty dataset");
  const bool analytic = config.estimator == "analytic";

  Rng root(config.seed);
  FitResult res;

  // Stratified split: the last val_fraction of each regime's rows.
  std::vector<int> train_rows, val_rows;
  {
    std::vector<std::vector<int>> by_regime(dataset.n_regimes());
    for (int r = 0; r < dataset.n_rows(); ++r) by_regime[dataset.regime_of[r]].push_back(r);
    for (const auto& rows : by_regime) {
      int v = static_cast<int>(config.val_fraction * static_cast<double>(rows.size()));
      int t = static_cast<int>(rows.size()) - v;
      train_rows.insert(train_rows.end(), rows.begin(), rows.begin() + t);
      val_rows.insert(val_rows.end(), rows.begin() + t, rows.end());
    }
    std::sort(train_rows.begin(), train_rows.end());
    std::sort(val_rows.begin(), val_rows.end());
  }
  if (train_rows.empty()) throw std::invalid_argument("fit: empty training split");
  if (val_rows.empty()) val_rows = train_rows;

  // Evaluation subset: evenly strided so every regime stays represented.
  std::vector<int> eval_rows;
  {
    std::size_t stride = (val_rows.size() + kMaxEvalRows - 1) / kMaxEvalRows;
    for (std::size_t k = 0; k < val_rows.size(); k += stride) eval_rows.push_back(val_rows[k]);
  }

  // Degenerate columns never move off the sigma floor; flag them up front.
  for (int j = 0; j < n; ++j) {
    double mn = dataset.x.at(0, j), mx = mn;
    for (int r = 1; r < dataset.n_rows(); ++r) {
      mn = std::min(mn, dataset.x.at(r, j));
      mx = std::max(mx, dataset.x.at(r, j));
    }
    if (mn == mx)
      res.warnings.push_back("constant column " + std::to_string(j) +
                             "; sigma floor will engage");
  }

  BplParams params = BplParams::init(n);
  ConditionalModel model;
  if (config.model == "linear") {
    model = LinearGaussian::init(n);
  } else {
    Rng init_rng = root.derive(kTagInit);
    model = MlpGaussian::init(n, config.mlp_layers, config.mlp_hidden, init_rng);
  }

  FlatLayout layout{n, param_count(model)};
  std::vector<double> flat(layout.dim()), grad(layout.dim());
  layout.gather(params, model, flat);
  AdamState adam(layout.dim());

  auto eval_objective = [&](int step) {
    if (analytic)
      return analytic_score(dataset, eval_rows, params, std::get<LinearGaussian>(model));
    Rng eval_rng = root.derive(kTagEval, static_cast<std::uint64_t>(step));
    KahanSum acc;
    for (int k = 0; k < kEvalSamples; ++k) {
      DagSample s = sample_dag(params, eval_rng);
      acc.add(interventional_score(dataset, eval_rows, s.adjacency, model));
    }
    return acc.value() / kEvalSamples;
  };

  double best_val = -std::numeric_limits<double>::infinity();
  auto consider = [&](int step, double val) {
    if (val > best_val) {
      best_val = val;
      res.best_step = step;
      res.params = params;
      res.model = model;
    }
  };
  double last_val = eval_objective(0);
  consider(0, last_val);

  res.history.reserve(config.steps);
  std::vector<int> batch(config.batch_size);
  for (int step = 1; step <= config.steps; ++step) {
    Rng batch_rng = root.derive(kTagBatch, static_cast<std::uint64_t>(step));
    for (int b = 0; b < config.batch_size; ++b)
      batch[b] = train_rows[batch_rng.uniform_int(static_cast<int>(train_rows.size()))];

    Rng step_rng = root.derive(kTagStep, static_cast<std::uint64_t>(step));
    GradientBundle bundle =
        analytic
            ? analytic_gradient(dataset, batch, params, std::get<LinearGaussian>(model),
                                config.lambda,
                                config.subsample_nodes ? cross_term_subsample_count(n) : 0,
                                &step_rng)
            : reinforce_step(dataset, batch, params, model, config.mc_samples, config.lambda,
                             step_rng);

    double objective = bundle.diagnostics.objective_estimate;
    if (!std::isfinite(objective))
      throw NumericalError("fit: objective went non-finite at step " + std::to_string(step),
                           dump_state(step, objective, flat));

    layout.gather_grad(bundle, grad);
    adam_update(adam, grad, config.learning_rate, flat);
    for (double v : flat)
      if (!std::isfinite(v))
        throw NumericalError("fit: parameter went non-finite at step " + std::to_string(step),
                             dump_state(step, objective, flat));
    layout.scatter(flat, params, model);

    if (step % config.eval_every == 0 || step == config.steps) {
      last_val = eval_objective(step);
      consider(step, last_val);
    }
    res.history.push_back(
        {step, objective, last_val, bundle.diagnostics.grad_trace_variance});
  }

  res.best_val_objective = best_val;
  res.expected_adjacency = expected_edge_matrix(res.params);
  res.extracted_graph = extract_graph(res.params, config.threshold);
  if (const auto* lin = std::get_if<LinearGaussian>(&res.model)) {
    for (int j = 0; j < n; ++j)
      if (std::exp(lin->log_scale[j]) <= kSigmaFloor)
        res.warnings.push_back("sigma floor engaged at node " + std::to_string(j));
  }
  return res;
}

}  // namespace dagfit
