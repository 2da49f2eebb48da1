#pragma once

#include <cstdint>
#include <variant>
#include <vector>

#include "dagfit/matrix.hpp"
#include "dagfit/rng.hpp"

namespace dagfit {

// sigma never reports below this; a pinned floor carries zero gradient.
inline constexpr double kSigmaFloor = 1e-4;

struct LinearGaussian {
  Mat weights;  // weights.at(i, j) = effect of variable i on node j's mean
  std::vector<double> bias;
  std::vector<double> log_scale;  // sigma_j = exp(log_scale_j)

  int n() const { return static_cast<int>(bias.size()); }
  static LinearGaussian init(int n);  // W = 0, b = 0, sigma = 1
};

struct MlpLayer {
  Mat w;  // out_dim x in_dim
  std::vector<double> b;
};

struct MlpNet {
  std::vector<MlpLayer> layers;  // hidden layers, then a 1-dim linear head
};

// Two networks per node: one for the mean, one for pre-softplus sigma.
// Inputs are the full sample with non-parents zeroed. Hidden nonlinearity is
// a leaky rectifier (slope 0.01).
struct MlpGaussian {
  int hidden_layers = 2;
  int hidden_width = 4;
  std::vector<MlpNet> mean_nets;
  std::vector<MlpNet> scale_nets;

  int n() const { return static_cast<int>(mean_nets.size()); }
  static MlpGaussian init(int n, int hidden_layers, int hidden_width, Rng& rng);
};

constexpr std::pair<int, int> default_mlp_shape() { return {2, 4}; }

using ConditionalModel = std::variant<LinearGaussian, MlpGaussian>;

int model_dim(const ConditionalModel& m);

// Gaussian log-density of x[j] given the masked parents of j.
// parent_mask is column j of an adjacency (parent_mask[j] must be 0).
double loglik_node(const ConditionalModel& m, const double* x, int n,
                   const std::uint8_t* parent_mask, int j);

// Adds weight * d loglik_node / d params into grad (same-shaped model) and
// returns the log-likelihood. One fused pass; the MLP path is manual
// backprop through both networks and the softplus.
double loglik_grad_node(const ConditionalModel& m, const double* x, int n,
                        const std::uint8_t* parent_mask, int j, double weight,
                        ConditionalModel& grad);

void grad_params_node(const ConditionalModel& m, const double* x, int n,
                      const std::uint8_t* parent_mask, int j, ConditionalModel& grad);

// Flat views for the optimizer. Order is stable: linear = W row-major, bias,
// log_scale; MLP = per node, mean net then scale net, each layer w then b.
std::size_t param_count(const ConditionalModel& m);
void pack_params(const ConditionalModel& m, double* out);
void unpack_params(ConditionalModel& m, const double* in);
ConditionalModel zeros_like(const ConditionalModel& m);

// y += a * x, elementwise over parameters. Shapes must match.
void axpy_params(ConditionalModel& y, double a, const ConditionalModel& x);

}  // namespace dagfit
