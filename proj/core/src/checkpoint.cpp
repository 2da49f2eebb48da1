#include "dagfit/checkpoint.hpp"

#include <fstream>
#include <stdexcept>

#include <json.hpp>

#include "dagfit/dataset.hpp"

namespace dagfit {

namespace {

using nlohmann::json;

json net_to_json(const MlpNet& net) {
  json layers = json::array();
  for (const auto& layer : net.layers)
    layers.push_back(json{{"w", layer.w.v}, {"b", layer.b}});
  return layers;
}

MlpNet net_from_json(const json& j, int in_dim, int hidden_layers, int hidden_width) {
  MlpNet net;
  if (!j.is_array() || static_cast<int>(j.size()) != hidden_layers + 1)
    throw std::runtime_error("checkpoint: bad layer count");
  int in = in_dim;
  for (int l = 0; l <= hidden_layers; ++l) {
    int out = l == hidden_layers ? 1 : hidden_width;
    MlpLayer layer;
    layer.w = Mat(out, in);
    layer.w.v = j[l].at("w").get<std::vector<double>>();
    layer.b = j[l].at("b").get<std::vector<double>>();
    if (layer.w.v.size() != static_cast<std::size_t>(out) * in ||
        layer.b.size() != static_cast<std::size_t>(out))
      throw std::runtime_error("checkpoint: bad layer shape");
    net.layers.push_back(std::move(layer));
    in = out;
  }
  return net;
}

}  // namespace

void save_checkpoint(const std::string& path, const BplParams& params,
                     const ConditionalModel& model) {
  params.validate();
  json j;
  j["n"] = params.n();
  j["theta"] = params.theta;
  j["edge_logits"] = params.edge_logits.v;
  j["forbidden_mask"] = params.forbidden.a;
  json cond;
  if (const auto* lin = std::get_if<LinearGaussian>(&model)) {
    cond["family"] = "linear";
    cond["weights"] = lin->weights.v;
    cond["bias"] = lin->bias;
    cond["log_scale"] = lin->log_scale;
  } else {
    const auto& mlp = std::get<MlpGaussian>(model);
    cond["family"] = "mlp";
    cond["hidden_layers"] = mlp.hidden_layers;
    cond["hidden_width"] = mlp.hidden_width;
    json nodes = json::array();
    for (int v = 0; v < mlp.n(); ++v)
      nodes.push_back(json{{"mean", net_to_json(mlp.mean_nets[v])},
                           {"scale", net_to_json(mlp.scale_nets[v])}});
    cond["nodes"] = std::move(nodes);
  }
  j["conditional"] = std::move(cond);
  atomic_write_text(path, j.dump(2) + "\n");
}

std::pair<BplParams, ConditionalModel> load_checkpoint(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("checkpoint: cannot open " + path);
  json j = json::parse(in);

  int n = j.at("n").get<int>();
  if (n < 1) throw std::runtime_error("checkpoint: bad n");
  BplParams params;
  params.theta = j.at("theta").get<std::vector<double>>();
  params.edge_logits = Mat(n, n);
  params.edge_logits.v = j.at("edge_logits").get<std::vector<double>>();
  params.forbidden = Adjacency(n);
  params.forbidden.a = j.at("forbidden_mask").get<std::vector<std::uint8_t>>();
  if (static_cast<int>(params.theta.size()) != n ||
      params.edge_logits.v.size() != static_cast<std::size_t>(n) * n ||
      params.forbidden.a.size() != static_cast<std::size_t>(n) * n)
    throw std::runtime_error("checkpoint: parameter shape mismatch");
  params.validate();

  const json& cond = j.at("conditional");
  std::string family = cond.at("family").get<std::string>();
  ConditionalModel model;
  if (family == "linear") {
    LinearGaussian lin = LinearGaussian::init(n);
    lin.weights.v = cond.at("weights").get<std::vector<double>>();
    lin.bias = cond.at("bias").get<std::vector<double>>();
    lin.log_scale = cond.at("log_scale").get<std::vector<double>>();
    if (lin.weights.v.size() != static_cast<std::size_t>(n) * n ||
        lin.bias.size() != static_cast<std::size_t>(n) ||
        lin.log_scale.size() != static_cast<std::size_t>(n))
      throw std::runtime_error("checkpoint: linear shape mismatch");
    model = std::move(lin);
  } else if (family == "mlp") {
    MlpGaussian mlp;
    mlp.hidden_layers = cond.at("hidden_layers").get<int>();
    mlp.hidden_width = cond.at("hidden_width").get<int>();
    if (mlp.hidden_layers < 1 || mlp.hidden_width < 1)
      throw std::runtime_error("checkpoint: bad mlp shape");
    const json& nodes = cond.at("nodes");
    if (static_cast<int>(nodes.size()) != n) throw std::runtime_error("checkpoint: bad node count");
    for (int v = 0; v < n; ++v) {
      mlp.mean_nets.push_back(
          net_from_json(nodes[v].at("mean"), n, mlp.hidden_layers, mlp.hidden_width));
      mlp.scale_nets.push_back(
          net_from_json(nodes[v].at("scale"), n, mlp.hidden_layers, mlp.hidden_width));
    }
    model = std::move(mlp);
  } else {
    throw std::runtime_error("checkpoint: unknown conditional family '" + family + "'");
  }
  return {std::move(params), std::move(model)};
}

}  // namespace dagfit
