// Command-line front end: generate / fit / eval / variance subcommands over
// the core library. Exit codes: 0 success, 2 usage, 3 data error, 4
// numerical abort.

#include <chrono>
#include <cstdint>
#include <filesystem>
#include <iostream>
#include <string>
#include <thread>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "dagfit/checkpoint.hpp"
#include "dagfit/dataset.hpp"
#include "dagfit/estimators.hpp"
#include "dagfit/graph.hpp"
#include "dagfit/synthbench.hpp"
#include "dagfit/threading.hpp"
#include "dagfit/trainer.hpp"
#include "dagfit/version.hpp"

namespace {

constexpr int kExitOk = 0;
constexpr int kExitUsage = 2;
constexpr int kExitData = 3;
constexpr int kExitNumeric = 4;

namespace fs = std::filesystem;
using nlohmann::json;

struct Clock {
  std::chrono::steady_clock::time_point t0 = std::chrono::steady_clock::now();
  double seconds() const {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  }
};

int resolve_threads(int requested) {
  int t = requested > 0 ? requested
                        : static_cast<int>(std::max(1u, std::thread::hardware_concurrency()));
  dagfit::set_worker_threads(t);
  return t;
}

void write_manifest(const std::string& out_dir, const std::string& command,
                    const std::vector<std::string>& argv, const json& config,
                    std::uint64_t seed, int threads, const std::vector<std::string>& inputs,
                    const std::vector<std::string>& outputs, double wall_seconds) {
  json j;
  j["command"] = command;
  j["argv"] = argv;
  j["config"] = config;
  j["seed"] = seed;
  j["threads"] = threads;
  j["inputs"] = inputs;
  j["outputs"] = outputs;
  j["wall_seconds"] = wall_seconds;
  j["version"] = dagfit::kVersion;
  dagfit::atomic_write_text(out_dir + "/manifest.json", j.dump(2) + "\n");
}

dagfit::Adjacency load_graph_any(const std::string& path) {
  if (path.size() > 4 && path.substr(path.size() - 4) == ".csv")
    return dagfit::load_graph_csv(path);
  return dagfit::load_graph_json(path);
}

// ---------------------------------------------------------------- generate

struct GenerateArgs {
  int n = 10;
  double degree = 1.0;
  double edge_prob = -1.0;
  std::string mechanism = "linear";
  std::uint64_t seed = 0;
  int n_obs = 10000;
  int n_int = 500;
  double alpha = 1.0;
  double p_mislabel = 0.0;
  bool no_standardize = false;
  std::string out = ".";
  int threads = 0;
  bool edge_prob_given = false;
};

int run_generate(const GenerateArgs& a, const std::vector<std::string>& argv) {
  Clock clock;
  int threads = resolve_threads(a.threads);
  fs::create_directories(a.out);
  double edge_prob =
      a.edge_prob_given ? a.edge_prob : dagfit::edge_prob_for_degree(a.n, a.degree);

  dagfit::Rng root(a.seed);
  dagfit::Rng gen_rng = root.derive(1);
  dagfit::GenOptions opt;
  opt.soft_alpha = a.alpha;
  opt.standardize = !a.no_standardize;
  dagfit::GroundTruth truth;
  dagfit::InterventionalDataset data;
  if (a.mechanism == "mlp") {
    truth = dagfit::make_mlp_truth(a.n, edge_prob, gen_rng);
    data = dagfit::gen_mlp_dataset(truth, a.n_obs, a.n_int, gen_rng, opt);
  } else {
    truth = dagfit::make_linear_truth(a.n, edge_prob, gen_rng);
    data = dagfit::gen_linear_dataset(truth, a.n_obs, a.n_int, gen_rng, opt);
  }
  if (a.p_mislabel > 0.0) {
    dagfit::Rng corrupt_rng = root.derive(2);
    data = dagfit::corrupt_targets(data, a.p_mislabel, corrupt_rng);
  }

  dagfit::save_dataset(a.out, data);
  dagfit::save_graph_json(a.out + "/truth.json", truth.dag);
  dagfit::save_graph_csv(a.out + "/truth.csv", truth.dag);

  json config;
  config["n"] = a.n;
  config["edge_prob"] = edge_prob;
  config["degree"] = a.edge_prob_given ? json() : json(a.degree);
  config["mechanism"] = a.mechanism;
  config["n_obs"] = a.n_obs;
  config["n_int_per_var"] = a.n_int;
  config["alpha"] = a.alpha;
  config["p_mislabel"] = a.p_mislabel;
  config["standardize"] = !a.no_standardize;
  // Values the protocol leaves open; recorded so runs are self-describing.
  config["generator_defaults"] = {{"linear_weight_range", {0.5, 2.0}},
                                  {"linear_noise_sigma", 0.5},
                                  {"mlp_hidden_units", 100},
                                  {"mlp_noise_variance", 0.5},
                                  {"intervention_mean", 0.0},
                                  {"intervention_variance", 0.1}};
  write_manifest(a.out, "generate", argv, config, a.seed, threads, {},
                 {"samples.csv", "regimes.csv", "interventions.json", "truth.json", "truth.csv"},
                 clock.seconds());
  std::cout << "generated " << data.n_rows() << " rows, " << data.n_vars() << " variables, "
            << data.n_regimes() << " regimes -> " << a.out << "\n";
  return kExitOk;
}

// --------------------------------------------------------------------- fit

struct FitArgs {
  std::string data_dir;
  std::string samples, regimes, interventions;
  std::string config_path;
  std::string out = ".";
  int threads = 0;
  dagfit::TrainConfig cfg;
  // per-flag presence, filled by CLI11 counts
  bool has_estimator = false, has_steps = false, has_batch = false, has_lr = false,
       has_k = false, has_lambda = false, has_threshold = false, has_val = false,
       has_seed = false, has_subsample = false, has_model = false, has_layers = false,
       has_hidden = false, has_eval_every = false;
  dagfit::TrainConfig flags;  // raw flag values
};

dagfit::InterventionalDataset load_cli_dataset(const std::string& data_dir,
                                               const std::string& samples,
                                               const std::string& regimes,
                                               const std::string& interventions) {
  if (!data_dir.empty()) return dagfit::load_dataset(data_dir);
  return dagfit::load_dataset_files(samples, regimes, interventions);
}

int run_fit(FitArgs& a, const std::vector<std::string>& argv) {
  Clock clock;
  int threads = resolve_threads(a.threads);

  if (a.data_dir.empty() && a.samples.empty()) {
    std::cerr << "dagfit fit: pass --data or the --samples/--regimes/--interventions trio\n";
    return kExitUsage;
  }
  dagfit::TrainConfig cfg;  // defaults < JSON < flags
  if (!a.config_path.empty()) {
    try {
      cfg = dagfit::load_train_config(a.config_path);
    } catch (const std::exception& e) {
      std::cerr << "dagfit fit: " << e.what() << "\n";
      return kExitUsage;
    }
  }
  if (a.has_estimator) cfg.estimator = a.flags.estimator;
  if (a.has_steps) cfg.steps = a.flags.steps;
  if (a.has_batch) cfg.batch_size = a.flags.batch_size;
  if (a.has_lr) cfg.learning_rate = a.flags.learning_rate;
  if (a.has_k) cfg.mc_samples = a.flags.mc_samples;
  if (a.has_lambda) cfg.lambda = a.flags.lambda;
  if (a.has_threshold) cfg.threshold = a.flags.threshold;
  if (a.has_val) cfg.val_fraction = a.flags.val_fraction;
  if (a.has_seed) cfg.seed = a.flags.seed;
  if (a.has_subsample) cfg.subsample_nodes = a.flags.subsample_nodes;
  if (a.has_model) cfg.model = a.flags.model;
  if (a.has_layers) cfg.mlp_layers = a.flags.mlp_layers;
  if (a.has_hidden) cfg.mlp_hidden = a.flags.mlp_hidden;
  if (a.has_eval_every) cfg.eval_every = a.flags.eval_every;
  try {
    cfg.resolve();
  } catch (const std::exception& e) {
    std::cerr << "dagfit fit: " << e.what() << "\n";
    return kExitUsage;
  }

  fs::create_directories(a.out);
  dagfit::InterventionalDataset data =
      load_cli_dataset(a.data_dir, a.samples, a.regimes, a.interventions);

  dagfit::FitResult res;
  try {
    res = dagfit::fit(data, cfg);
  } catch (const dagfit::NumericalError& e) {
    std::cerr << "dagfit fit: " << e.what() << "\n";
    dagfit::atomic_write_text(a.out + "/numerical_dump.json", e.state_dump() + "\n");
    std::cerr << "state dump written to " << a.out << "/numerical_dump.json\n";
    return kExitNumeric;
  }

  dagfit::save_checkpoint(a.out + "/checkpoint.json", res.params, res.model);
  dagfit::save_graph_json(a.out + "/graph.json", res.extracted_graph);
  dagfit::save_graph_csv(a.out + "/graph.csv", res.extracted_graph);
  dagfit::save_history_csv(a.out + "/history.csv", res.history);
  write_manifest(a.out, "fit", argv, json::parse(dagfit::train_config_to_json(cfg)), cfg.seed,
                 threads,
                 a.data_dir.empty()
                     ? std::vector<std::string>{a.samples, a.regimes, a.interventions}
                     : std::vector<std::string>{a.data_dir},
                 {"checkpoint.json", "graph.json", "graph.csv", "history.csv"},
                 clock.seconds());
  for (const auto& w : res.warnings) std::cerr << "warning: " << w << "\n";
  std::cout << "best step " << res.best_step << ", validation objective "
            << dagfit::format_double(res.best_val_objective) << ", "
            << res.extracted_graph.edge_count() << " edges -> " << a.out << "\n";
  return kExitOk;
}

// -------------------------------------------------------------------- eval

struct EvalArgs {
  std::string est, truth, checkpoint;
  std::string out = ".";
  int threads = 0;
};

int run_eval(const EvalArgs& a, const std::vector<std::string>& argv) {
  Clock clock;
  int threads = resolve_threads(a.threads);
  if (!fs::exists(a.est) || !fs::exists(a.truth) ||
      (!a.checkpoint.empty() && !fs::exists(a.checkpoint))) {
    std::cerr << "dagfit eval: input file missing\n";
    return kExitUsage;
  }
  dagfit::Adjacency est = load_graph_any(a.est);
  dagfit::Adjacency truth = load_graph_any(a.truth);
  dagfit::MetricReport m = dagfit::confusion_metrics(est, truth);
  bool have_tau = false;
  if (!a.checkpoint.empty()) {
    auto [params, model] = dagfit::load_checkpoint(a.checkpoint);
    if (params.n() != truth.n)
      throw std::invalid_argument("eval: checkpoint dimension mismatch");
    m.kendall_tau = dagfit::kendall_tau_partial(params.theta, truth);
    have_tau = true;
  }

  fs::create_directories(a.out);
  json metrics;
  metrics["shd"] = m.shd;
  metrics["fdr"] = m.fdr;
  metrics["tpr"] = m.tpr;
  metrics["precision"] = m.precision;
  metrics["recall"] = m.recall;
  metrics["f1"] = m.f1;
  if (have_tau) metrics["kendall_tau"] = m.kendall_tau;
  dagfit::atomic_write_text(a.out + "/metrics.json", metrics.dump(2) + "\n");

  std::cout << "metric      value\n";
  std::cout << "shd         " << m.shd << "\n";
  std::cout << "fdr         " << dagfit::format_double(m.fdr) << "\n";
  std::cout << "tpr         " << dagfit::format_double(m.tpr) << "\n";
  std::cout << "precision   " << dagfit::format_double(m.precision) << "\n";
  std::cout << "recall      " << dagfit::format_double(m.recall) << "\n";
  std::cout << "f1          " << dagfit::format_double(m.f1) << "\n";
  if (have_tau) std::cout << "kendall_tau " << dagfit::format_double(m.kendall_tau) << "\n";

  json config;
  config["est"] = a.est;
  config["truth"] = a.truth;
  config["checkpoint"] = a.checkpoint;
  write_manifest(a.out, "eval", argv, config, 0, threads,
                 {a.est, a.truth}, {"metrics.json"}, clock.seconds());
  return kExitOk;
}

// ---------------------------------------------------------------- variance

struct VarianceArgs {
  std::string data_dir;
  std::string checkpoint;
  std::vector<int> k_list = {10, 50, 100, 200};
  int repeats = 6;
  int steps = 100;
  int every = 10;
  int batch_size = 64;
  std::uint64_t seed = 0;
  std::string out = ".";
  int threads = 0;
};

int run_variance(const VarianceArgs& a, const std::vector<std::string>& argv) {
  Clock clock;
  int threads = resolve_threads(a.threads);
  fs::create_directories(a.out);
  dagfit::InterventionalDataset data = dagfit::load_dataset(a.data_dir);
  const int n = data.n_vars();

  dagfit::BplParams params = dagfit::BplParams::init(n);
  dagfit::ConditionalModel model = dagfit::LinearGaussian::init(n);
  if (!a.checkpoint.empty()) {
    auto loaded = dagfit::load_checkpoint(a.checkpoint);
    params = std::move(loaded.first);
    model = std::move(loaded.second);
    if (params.n() != n) throw std::invalid_argument("variance: checkpoint dimension mismatch");
  }

  dagfit::Rng root(a.seed);
  dagfit::TrainConfig train;
  train.resolve();
  dagfit::AdamState adam(static_cast<std::size_t>(n) + static_cast<std::size_t>(n) * n +
                         dagfit::param_count(model));
  std::vector<dagfit::VarianceRow> rows;
  std::vector<int> batch(a.batch_size);
  std::vector<double> flat(adam.m.size()), grad(adam.m.size());

  for (int step = 0; step <= a.steps; ++step) {
    dagfit::Rng batch_rng = root.derive(11, static_cast<std::uint64_t>(step));
    for (int b = 0; b < a.batch_size; ++b)
      batch[b] = batch_rng.uniform_int(data.n_rows());

    if (step % a.every == 0) {
      for (int k : a.k_list) {
        dagfit::Rng var_rng = root.derive(12, static_cast<std::uint64_t>(step),
                                          static_cast<std::uint64_t>(k));
        dagfit::VarianceReport r = dagfit::variance_report(data, batch, params, model, k,
                                                           a.repeats, true, var_rng);
        rows.push_back({step, r.trace_with, r.bound, 1, k});
        rows.push_back({step, r.trace_without, r.bound_without, 0, k});
      }
    }
    if (step == a.steps) break;

    dagfit::Rng step_rng = root.derive(13, static_cast<std::uint64_t>(step));
    dagfit::GradientBundle bundle = dagfit::reinforce_step(
        data, batch, params, model, train.mc_samples, train.lambda, step_rng);
    std::size_t c = 0;
    for (int i = 0; i < n; ++i, ++c) {
      flat[c] = params.theta[i];
      grad[c] = bundle.d_theta[i];
    }
    for (std::size_t e = 0; e < params.edge_logits.v.size(); ++e, ++c) {
      flat[c] = params.edge_logits.v[e];
      grad[c] = bundle.d_edge_logits.v[e];
    }
    dagfit::pack_params(model, flat.data() + c);
    dagfit::pack_params(bundle.d_model, grad.data() + c);
    dagfit::adam_update(adam, grad, train.learning_rate, flat);
    c = 0;
    for (int i = 0; i < n; ++i, ++c) params.theta[i] = flat[c];
    for (std::size_t e = 0; e < params.edge_logits.v.size(); ++e, ++c)
      params.edge_logits.v[e] = flat[c];
    dagfit::unpack_params(model, flat.data() + c);
  }

  dagfit::save_variance_csv(a.out + "/variance.csv", rows);
  json config;
  config["K"] = a.k_list;
  config["repeats"] = a.repeats;
  config["steps"] = a.steps;
  config["every"] = a.every;
  config["batch_size"] = a.batch_size;
  config["checkpoint"] = a.checkpoint;
  write_manifest(a.out, "variance", argv, config, a.seed, threads, {a.data_dir},
                 {"variance.csv"}, clock.seconds());
  std::cout << rows.size() << " variance rows -> " << a.out << "/variance.csv\n";
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"DAG structure learning from interventional data"};
  app.set_version_flag("--version", dagfit::kVersion);
  app.require_subcommand(1);
  std::vector<std::string> argv_copy(argv + 1, argv + argc);

  GenerateArgs gen;
  CLI::App* cmd_gen = app.add_subcommand("generate", "Sample a ground truth and dataset");
  cmd_gen->add_option("--n", gen.n, "Number of variables")->required();
  auto* opt_degree = cmd_gen->add_option("--degree", gen.degree, "Expected edges per node");
  auto* opt_eprob = cmd_gen->add_option("--edge-prob", gen.edge_prob, "ER edge probability");
  opt_degree->excludes(opt_eprob);
  opt_eprob->excludes(opt_degree);
  cmd_gen->add_option("--mechanism", gen.mechanism, "linear or mlp")
      ->check(CLI::IsMember({"linear", "mlp"}));
  cmd_gen->add_option("--seed", gen.seed, "Generation seed");
  cmd_gen->add_option("--n-obs", gen.n_obs, "Observational rows");
  cmd_gen->add_option("--n-int", gen.n_int, "Interventional rows per variable");
  cmd_gen->add_option("--alpha", gen.alpha, "Intervention softness (1 = perfect)");
  cmd_gen->add_option("--p-mislabel", gen.p_mislabel, "Target mislabel probability");
  cmd_gen->add_flag("--no-standardize", gen.no_standardize, "Skip column standardization");
  cmd_gen->add_option("--out", gen.out, "Output directory");
  cmd_gen->add_option("--threads", gen.threads, "Worker threads (0 = all)");

  FitArgs fit_args;
  CLI::App* cmd_fit = app.add_subcommand("fit", "Fit the model to a dataset");
  auto* opt_data = cmd_fit->add_option("--data", fit_args.data_dir, "Dataset directory");
  auto* opt_samples = cmd_fit->add_option("--samples", fit_args.samples, "samples.csv path");
  cmd_fit->add_option("--regimes", fit_args.regimes, "regimes.csv path");
  cmd_fit->add_option("--interventions", fit_args.interventions, "interventions.json path");
  opt_data->excludes(opt_samples);
  cmd_fit->add_option("--config", fit_args.config_path, "TrainConfig JSON file");
  auto* f_est = cmd_fit->add_option("--estimator", fit_args.flags.estimator,
                                    "reinforce or analytic")
                    ->check(CLI::IsMember({"reinforce", "analytic"}));
  auto* f_steps = cmd_fit->add_option("--steps", fit_args.flags.steps, "Training steps");
  auto* f_batch = cmd_fit->add_option("--batch-size", fit_args.flags.batch_size, "Batch size");
  auto* f_lr = cmd_fit->add_option("--lr", fit_args.flags.learning_rate, "Learning rate");
  auto* f_k = cmd_fit->add_option("--mc-samples", fit_args.flags.mc_samples,
                                  "Monte Carlo samples per step");
  auto* f_lambda = cmd_fit->add_option("--lambda", fit_args.flags.lambda, "Edge penalty");
  auto* f_thresh =
      cmd_fit->add_option("--threshold", fit_args.flags.threshold, "Extraction threshold");
  auto* f_val =
      cmd_fit->add_option("--val-fraction", fit_args.flags.val_fraction, "Validation fraction");
  auto* f_seed = cmd_fit->add_option("--seed", fit_args.flags.seed, "Training seed");
  auto* f_sub = cmd_fit->add_flag("--subsample-nodes", fit_args.flags.subsample_nodes,
                                  "Subsample cross-term targets");
  auto* f_model =
      cmd_fit->add_option("--model", fit_args.flags.model, "Conditional family: linear or mlp")
          ->check(CLI::IsMember({"linear", "mlp"}));
  auto* f_layers = cmd_fit->add_option("--mlp-layers", fit_args.flags.mlp_layers, "MLP depth");
  auto* f_hidden = cmd_fit->add_option("--mlp-hidden", fit_args.flags.mlp_hidden, "MLP width");
  auto* f_evevery =
      cmd_fit->add_option("--eval-every", fit_args.flags.eval_every, "Validation interval");
  cmd_fit->add_option("--out", fit_args.out, "Output directory");
  cmd_fit->add_option("--threads", fit_args.threads, "Worker threads (0 = all)");

  EvalArgs eval_args;
  CLI::App* cmd_eval = app.add_subcommand("eval", "Score a graph against ground truth");
  cmd_eval->add_option("--est", eval_args.est, "Estimated graph (json or csv)")->required();
  cmd_eval->add_option("--truth", eval_args.truth, "Ground-truth graph")->required();
  cmd_eval->add_option("--checkpoint", eval_args.checkpoint,
                       "Checkpoint for ordering metrics");
  cmd_eval->add_option("--out", eval_args.out, "Output directory");
  cmd_eval->add_option("--threads", eval_args.threads, "Worker threads (0 = all)");

  VarianceArgs var_args;
  CLI::App* cmd_var = app.add_subcommand("variance", "Gradient variance diagnostics");
  cmd_var->add_option("--data", var_args.data_dir, "Dataset directory")->required();
  cmd_var->add_option("--checkpoint", var_args.checkpoint, "Starting checkpoint");
  cmd_var->add_option("--K", var_args.k_list, "Sample counts, comma separated")
      ->delimiter(',');
  cmd_var->add_option("--repeats", var_args.repeats, "Estimator repeats per measurement");
  cmd_var->add_option("--steps", var_args.steps, "Training steps to traverse");
  cmd_var->add_option("--every", var_args.every, "Measure every this many steps");
  cmd_var->add_option("--batch-size", var_args.batch_size, "Batch size");
  cmd_var->add_option("--seed", var_args.seed, "Seed");
  cmd_var->add_option("--out", var_args.out, "Output directory");
  cmd_var->add_option("--threads", var_args.threads, "Worker threads (0 = all)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForVersion& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitUsage;
  }

  gen.edge_prob_given = opt_eprob->count() > 0;
  fit_args.has_estimator = f_est->count() > 0;
  fit_args.has_steps = f_steps->count() > 0;
  fit_args.has_batch = f_batch->count() > 0;
  fit_args.has_lr = f_lr->count() > 0;
  fit_args.has_k = f_k->count() > 0;
  fit_args.has_lambda = f_lambda->count() > 0;
  fit_args.has_threshold = f_thresh->count() > 0;
  fit_args.has_val = f_val->count() > 0;
  fit_args.has_seed = f_seed->count() > 0;
  fit_args.has_subsample = f_sub->count() > 0;
  fit_args.has_model = f_model->count() > 0;
  fit_args.has_layers = f_layers->count() > 0;
  fit_args.has_hidden = f_hidden->count() > 0;
  fit_args.has_eval_every = f_evevery->count() > 0;

  try {
    if (cmd_gen->parsed()) return run_generate(gen, argv_copy);
    if (cmd_fit->parsed()) return run_fit(fit_args, argv_copy);
    if (cmd_eval->parsed()) return run_eval(eval_args, argv_copy);
    if (cmd_var->parsed()) return run_variance(var_args, argv_copy);
  } catch (const dagfit::NumericalError& e) {
    std::cerr << "dagfit: " << e.what() << "\n";
    return kExitNumeric;
  } catch (const std::exception& e) {
    std::cerr << "dagfit: " << e.what() << "\n";
    return kExitData;
  }
  return kExitUsage;
}
