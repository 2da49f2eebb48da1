#include "dagfit/conditionals.hpp"

#include <cmath>
#include <stdexcept>

#include "dagfit/numeric.hpp"

namespace dagfit {

namespace {

constexpr double kLeakySlope = 0.01;

double leaky(double x) { return x >= 0.0 ? x : kLeakySlope * x; }
double leaky_grad(double x) { return x >= 0.0 ? 1.0 : kLeakySlope; }

double gaussian_loglik(double x, double mu, double sigma) {
  double z = (x - mu) / sigma;
  return -0.5 * std::log(kTwoPi * sigma * sigma) - 0.5 * z * z;
}

// Scratch for MLP forward/backward; reused across calls per thread.
struct NetScratch {
  std::vector<std::vector<double>> pre;   // pre-activation per hidden layer
  std::vector<std::vector<double>> act;   // post-activation per hidden layer
  std::vector<double> delta;
  std::vector<double> delta_next;
};

thread_local NetScratch g_scratch_mean;
thread_local NetScratch g_scratch_scale;

// Forward through hidden layers + linear head; activations kept for backprop.
double net_forward(const MlpNet& net, const std::vector<double>& input, NetScratch& s) {
  const int hidden = static_cast<int>(net.layers.size()) - 1;
  if (static_cast<int>(s.pre.size()) < hidden) {
    s.pre.resize(hidden);
    s.act.resize(hidden);
  }
  const std::vector<double>* cur = &input;
  for (int l = 0; l < hidden; ++l) {
    const MlpLayer& layer = net.layers[l];
    auto& pre = s.pre[l];
    auto& act = s.act[l];
    pre.assign(layer.b.begin(), layer.b.end());
    for (int o = 0; o < layer.w.rows; ++o) {
      const double* wrow = layer.w.row(o);
      double acc = pre[o];
      for (int i = 0; i < layer.w.cols; ++i) acc += wrow[i] * (*cur)[i];
      pre[o] = acc;
    }
    act.resize(pre.size());
    for (std::size_t i = 0; i < pre.size(); ++i) act[i] = leaky(pre[i]);
    cur = &act;
  }
  const MlpLayer& head = net.layers.back();
  double out = head.b[0];
  const double* wrow = head.w.row(0);
  for (int i = 0; i < head.w.cols; ++i) out += wrow[i] * (*cur)[i];
  return out;
}

// Backprop d(out)/d(params) scaled by g into grad_net; input/activations from
// the matching net_forward call.
void net_backward(const MlpNet& net, const std::vector<double>& input, NetScratch& s,
                  double g, MlpNet& grad_net) {
  const int hidden = static_cast<int>(net.layers.size()) - 1;
  const MlpLayer& head = net.layers.back();
  MlpLayer& ghead = grad_net.layers.back();
  const std::vector<double>& top = hidden > 0 ? s.act[hidden - 1] : input;
  ghead.b[0] += g;
  for (int i = 0; i < head.w.cols; ++i) ghead.w.at(0, i) += g * top[i];
  if (hidden == 0) return;
  auto& delta = s.delta;
  delta.assign(head.w.cols, 0.0);
  for (int i = 0; i < head.w.cols; ++i)
    delta[i] = g * head.w.at(0, i) * leaky_grad(s.pre[hidden - 1][i]);
  for (int l = hidden - 1; l >= 0; --l) {
    const MlpLayer& layer = net.layers[l];
    MlpLayer& glayer = grad_net.layers[l];
    const std::vector<double>& below = l > 0 ? s.act[l - 1] : input;
    for (int o = 0; o < layer.w.rows; ++o) {
      double d = delta[o];
      if (d == 0.0) continue;
      glayer.b[o] += d;
      double* gw = glayer.w.row(o);
      for (int i = 0; i < layer.w.cols; ++i) gw[i] += d * below[i];
    }
    if (l == 0) break;
    auto& nxt = s.delta_next;
    nxt.assign(layer.w.cols, 0.0);
    for (int o = 0; o < layer.w.rows; ++o) {
      double d = delta[o];
      if (d == 0.0) continue;
      const double* wrow = layer.w.row(o);
      for (int i = 0; i < layer.w.cols; ++i) nxt[i] += d * wrow[i];
    }
    for (int i = 0; i < layer.w.cols; ++i) nxt[i] *= leaky_grad(s.pre[l - 1][i]);
    delta.swap(nxt);
  }
}

thread_local std::vector<double> g_masked_input;

}  // namespace

LinearGaussian LinearGaussian::init(int n) {
  LinearGaussian m;
  m.weights = Mat(n, n, 0.0);
  m.bias.assign(n, 0.0);
  m.log_scale.assign(n, 0.0);
  return m;
}

MlpGaussian MlpGaussian::init(int n, int hidden_layers, int hidden_width, Rng& rng) {
  if (hidden_layers < 1 || hidden_width < 1)
    throw std::invalid_argument("MlpGaussian::init: bad shape");
  MlpGaussian m;
  m.hidden_layers = hidden_layers;
  m.hidden_width = hidden_width;
  auto make_net = [&](void) {
    MlpNet net;
    int in_dim = n;
    for (int l = 0; l < hidden_layers; ++l) {
      MlpLayer layer;
      layer.w = Mat(hidden_width, in_dim);
      layer.b.assign(hidden_width, 0.0);
      double bound = std::sqrt(6.0 / (in_dim + hidden_width));
      for (double& w : layer.w.v) w = rng.uniform_in(-bound, bound);
      net.layers.push_back(std::move(layer));
      in_dim = hidden_width;
    }
    MlpLayer head;
    head.w = Mat(1, in_dim);
    head.b.assign(1, 0.0);
    double bound = std::sqrt(6.0 / (in_dim + 1));
    for (double& w : head.w.v) w = rng.uniform_in(-bound, bound);
    net.layers.push_back(std::move(head));
    return net;
  };
  m.mean_nets.reserve(n);
  m.scale_nets.reserve(n);
  for (int j = 0; j < n; ++j) {
    m.mean_nets.push_back(make_net());
    m.scale_nets.push_back(make_net());
  }
  return m;
}

int model_dim(const ConditionalModel& m) {
  if (const auto* lin = std::get_if<LinearGaussian>(&m)) return lin->n();
  return std::get<MlpGaussian>(m).n();
}

double loglik_node(const ConditionalModel& m, const double* x, int n,
                   const std::uint8_t* parent_mask, int j) {
  if (parent_mask[j]) throw std::invalid_argument("loglik_node: node cannot parent itself");
  for (int i = 0; i < n; ++i)
    if (!std::isfinite(x[i])) throw std::invalid_argument("loglik_node: non-finite input");
  if (const auto* lin = std::get_if<LinearGaussian>(&m)) {
    double mu = lin->bias[j];
    for (int i = 0; i < n; ++i)
      if (parent_mask[i]) mu += lin->weights.at(i, j) * x[i];
    double sigma = std::max(std::exp(lin->log_scale[j]), kSigmaFloor);
    return gaussian_loglik(x[j], mu, sigma);
  }
  const auto& mlp = std::get<MlpGaussian>(m);
  auto& v = g_masked_input;
  v.resize(n);
  for (int i = 0; i < n; ++i) v[i] = parent_mask[i] ? x[i] : 0.0;
  double mu = net_forward(mlp.mean_nets[j], v, g_scratch_mean);
  double sigma = std::max(softplus(net_forward(mlp.scale_nets[j], v, g_scratch_scale)), kSigmaFloor);
  return gaussian_loglik(x[j], mu, sigma);
}

double loglik_grad_node(const ConditionalModel& m, const double* x, int n,
                        const std::uint8_t* parent_mask, int j, double weight,
                        ConditionalModel& grad) {
  if (parent_mask[j]) throw std::invalid_argument("loglik_grad_node: node cannot parent itself");
  if (const auto* lin = std::get_if<LinearGaussian>(&m)) {
    auto& g = std::get<LinearGaussian>(grad);
    double mu = lin->bias[j];
    for (int i = 0; i < n; ++i)
      if (parent_mask[i]) mu += lin->weights.at(i, j) * x[i];
    double raw = std::exp(lin->log_scale[j]);
    double sigma = std::max(raw, kSigmaFloor);
    double resid = x[j] - mu;
    double inv_var = 1.0 / (sigma * sigma);
    double dmu = resid * inv_var;
    g.bias[j] += weight * dmu;
    for (int i = 0; i < n; ++i)
      if (parent_mask[i]) g.weights.at(i, j) += weight * dmu * x[i];
    if (raw > kSigmaFloor) g.log_scale[j] += weight * (resid * resid * inv_var - 1.0);
    return gaussian_loglik(x[j], mu, sigma);
  }
  const auto& mlp = std::get<MlpGaussian>(m);
  auto& g = std::get<MlpGaussian>(grad);
  auto& v = g_masked_input;
  v.resize(n);
  for (int i = 0; i < n; ++i) v[i] = parent_mask[i] ? x[i] : 0.0;
  double mu = net_forward(mlp.mean_nets[j], v, g_scratch_mean);
  double z = net_forward(mlp.scale_nets[j], v, g_scratch_scale);
  double sp = softplus(z);
  double sigma = std::max(sp, kSigmaFloor);
  double resid = x[j] - mu;
  double inv_var = 1.0 / (sigma * sigma);
  double dmu = resid * inv_var;
  net_backward(mlp.mean_nets[j], v, g_scratch_mean, weight * dmu, g.mean_nets[j]);
  if (sp > kSigmaFloor) {
    double dsigma = resid * resid * inv_var / sigma - 1.0 / sigma;
    double dz = dsigma * sigmoid(z);
    net_backward(mlp.scale_nets[j], v, g_scratch_scale, weight * dz, g.scale_nets[j]);
  }
  return gaussian_loglik(x[j], mu, sigma);
}

void grad_params_node(const ConditionalModel& m, const double* x, int n,
                      const std::uint8_t* parent_mask, int j, ConditionalModel& grad) {
  loglik_grad_node(m, x, n, parent_mask, j, 1.0, grad);
}

namespace {

template <typename Visit>
void walk_net(const MlpNet& net, Visit&& visit) {
  for (const MlpLayer& layer : net.layers) {
    for (const double& w : layer.w.v) visit(w);
    for (const double& b : layer.b) visit(b);
  }
}

template <typename Visit>
void walk_net(MlpNet& net, Visit&& visit) {
  for (MlpLayer& layer : net.layers) {
    for (double& w : layer.w.v) visit(w);
    for (double& b : layer.b) visit(b);
  }
}

}  // namespace

std::size_t param_count(const ConditionalModel& m) {
  if (const auto* lin = std::get_if<LinearGaussian>(&m))
    return lin->weights.size() + lin->bias.size() + lin->log_scale.size();
  const auto& mlp = std::get<MlpGaussian>(m);
  std::size_t c = 0;
  for (int j = 0; j < mlp.n(); ++j) {
    walk_net(mlp.mean_nets[j], [&](const double&) { ++c; });
    walk_net(mlp.scale_nets[j], [&](const double&) { ++c; });
  }
  return c;
}

void pack_params(const ConditionalModel& m, double* out) {
  std::size_t k = 0;
  if (const auto* lin = std::get_if<LinearGaussian>(&m)) {
    for (double w : lin->weights.v) out[k++] = w;
    for (double b : lin->bias) out[k++] = b;
    for (double s : lin->log_scale) out[k++] = s;
    return;
  }
  const auto& mlp = std::get<MlpGaussian>(m);
  for (int j = 0; j < mlp.n(); ++j) {
    walk_net(mlp.mean_nets[j], [&](const double& w) { out[k++] = w; });
    walk_net(mlp.scale_nets[j], [&](const double& w) { out[k++] = w; });
  }
}

void unpack_params(ConditionalModel& m, const double* in) {
  std::size_t k = 0;
  if (auto* lin = std::get_if<LinearGaussian>(&m)) {
    for (double& w : lin->weights.v) w = in[k++];
    for (double& b : lin->bias) b = in[k++];
    for (double& s : lin->log_scale) s = in[k++];
    return;
  }
  auto& mlp = std::get<MlpGaussian>(m);
  for (int j = 0; j < mlp.n(); ++j) {
    walk_net(mlp.mean_nets[j], [&](double& w) { w = in[k++]; });
    walk_net(mlp.scale_nets[j], [&](double& w) { w = in[k++]; });
  }
}

ConditionalModel zeros_like(const ConditionalModel& m) {
  ConditionalModel z = m;
  std::vector<double> buf(param_count(m), 0.0);
  unpack_params(z, buf.data());
  return z;
}

void axpy_params(ConditionalModel& y, double a, const ConditionalModel& x) {
  if (y.index() != x.index() || param_count(y) != param_count(x))
    throw std::invalid_argument("axpy_params: shape mismatch");
  if (auto* ylin = std::get_if<LinearGaussian>(&y)) {
    const auto& xlin = std::get<LinearGaussian>(x);
    axpy(ylin->weights, a, xlin.weights);
    axpy(ylin->bias, a, xlin.bias);
    axpy(ylin->log_scale, a, xlin.log_scale);
    return;
  }
  auto& ymlp = std::get<MlpGaussian>(y);
  const auto& xmlp = std::get<MlpGaussian>(x);
  for (int j = 0; j < ymlp.n(); ++j) {
    for (std::size_t l = 0; l < ymlp.mean_nets[j].layers.size(); ++l) {
      axpy(ymlp.mean_nets[j].layers[l].w, a, xmlp.mean_nets[j].layers[l].w);
      axpy(ymlp.mean_nets[j].layers[l].b, a, xmlp.mean_nets[j].layers[l].b);
      axpy(ymlp.scale_nets[j].layers[l].w, a, xmlp.scale_nets[j].layers[l].w);
      axpy(ymlp.scale_nets[j].layers[l].b, a, xmlp.scale_nets[j].layers[l].b);
    }
  }
}

}  // namespace dagfit
