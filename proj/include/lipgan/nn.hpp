#pragma once

// Multilayer perceptrons over the autodiff graph, Adam, weight clipping and
// spectral normalization.

#include "lipgan/autodiff.hpp"

#include <Eigen/Dense>

#include <cmath>
#include <functional>
#include <iosfwd>
#include <random>
#include <span>
#include <string>
#include <vector>

namespace lipgan {

enum class Activation { linear, relu, leaky_relu, tanh };

std::string to_string(Activation a);
Activation activation_from_string(const std::string& name);

/// Affine map y = x W^T + b followed by an activation. Samples are rows.
struct Layer {
  Eigen::MatrixXd weight; // out x in
  Eigen::MatrixXd bias;   // 1 x out
  Activation activation = Activation::linear;
  double slope = 0.2;     // leaky_relu only

  Eigen::Index in_dim() const { return weight.cols(); }
  Eigen::Index out_dim() const { return weight.rows(); }
};

/// Warm-started singular vector estimates for one layer.
struct SpectralState {
  Eigen::VectorXd u; // left, out_dim
  Eigen::VectorXd v; // right, in_dim
};

struct ModelParams {
  std::vector<Layer> layers;
  /// One entry per layer when spectral normalization is on, empty otherwise.
  std::vector<SpectralState> spectral;
  int power_iterations = 1;

  bool spectral_norm() const { return !spectral.empty(); }
  Eigen::Index input_dim() const { return layers.front().in_dim(); }
  Eigen::Index output_dim() const { return layers.back().out_dim(); }
  /// Throws std::invalid_argument when dimensions do not chain.
  void validate() const;
};

struct MlpShape {
  Eigen::Index input_dim = 2;
  std::vector<Eigen::Index> hidden{64, 64};
  Eigen::Index output_dim = 1;
  Activation hidden_activation = Activation::leaky_relu;
  Activation output_activation = Activation::linear;
  double slope = 0.2;
};

/// Uniform(-1/sqrt(fan_in), 1/sqrt(fan_in)) weights and biases.
ModelParams init_mlp(const MlpShape& shape, std::mt19937_64& rng);

/// Parameter tensors in the fixed order W0, b0, W1, b1, ...
std::vector<Eigen::MatrixXd> parameter_values(const ModelParams& params);
std::size_t parameter_count(const ModelParams& params);

/// Parameters lifted into graph nodes for one forward/backward pass.
class BoundModel {
public:
  BoundModel() = default;
  BoundModel(const ModelParams& params, bool trainable);

  Var forward(const Var& x) const;
  /// The leaf nodes that gradients are taken against, W0, b0, W1, b1, ...
  const std::vector<Var>& leaves() const { return leaves_; }

private:
  std::vector<Var> leaves_;
  std::vector<Var> weights_; // after spectral normalization when enabled
  std::vector<Var> biases_;
  std::vector<Activation> activations_;
  std::vector<double> slopes_;
};

/// Forward pass with parameters held constant.
Var mlp_forward(const ModelParams& params, const Var& x);

/// A scalar-per-sample function of a batch, e.g. a discriminator.
using Critic = std::function<Var(const Var&)>;

/// Critic evaluating `params` as frozen constants (a snapshot).
Critic frozen_critic(const ModelParams& params);

struct AdamState {
  double learning_rate = 1e-3;
  double beta1 = 0.0;
  double beta2 = 0.9;
  double epsilon = 1e-8;
  long step = 0;
  std::vector<Eigen::MatrixXd> first_moment;
  std::vector<Eigen::MatrixXd> second_moment;
};

AdamState make_adam(const ModelParams& params, double learning_rate, double beta1 = 0.0,
                    double beta2 = 0.9, double epsilon = 1e-8);

/// One bias-corrected Adam update. Gradients are in parameter_values() order.
/// Throws NumericError before touching anything if a gradient is not finite.
void adam_step(AdamState& state, ModelParams& params, std::span<const Eigen::MatrixXd> grads);

/// Clamps every weight and bias element into [-c, c].
void clip_weights(ModelParams& params, double c);

template <class Scalar>
struct PowerIterationResult {
  Scalar sigma;
  Eigen::Matrix<Scalar, Eigen::Dynamic, 1> u;
  Eigen::Matrix<Scalar, Eigen::Dynamic, 1> v;
};

/// Estimates the top singular value of `w` by alternating v <- W^T u / |.|,
/// u <- W v / |.|, starting from the given vectors. A zero matrix reports
/// sigma = 0 and returns the start vectors unchanged.
template <class Derived>
PowerIterationResult<typename Derived::Scalar>
power_iteration_sigma(const Eigen::MatrixBase<Derived>& w,
                      Eigen::Matrix<typename Derived::Scalar, Eigen::Dynamic, 1> u,
                      Eigen::Matrix<typename Derived::Scalar, Eigen::Dynamic, 1> v, int iters) {
  using Scalar = typename Derived::Scalar;
  using Vector = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;
  if (iters < 1) throw std::invalid_argument("power_iteration_sigma: iters must be >= 1");
  if (u.size() != w.rows() || v.size() != w.cols()) {
    throw std::invalid_argument("power_iteration_sigma: vector sizes do not match matrix");
  }
  for (int i = 0; i < iters; ++i) {
    Vector wt_u = w.transpose() * u;
    const Scalar nv = wt_u.norm();
    if (nv == Scalar(0)) return {Scalar(0), u, v};
    v = wt_u / nv;
    Vector w_v = w * v;
    const Scalar nu = w_v.norm();
    if (nu == Scalar(0)) return {Scalar(0), u, v};
    u = w_v / nu;
  }
  return {u.dot(w * v), u, v};
}

/// Turns on spectral normalization with random unit start vectors.
void enable_spectral_norm(ModelParams& params, std::mt19937_64& rng, int power_iterations = 1);

/// Advances every layer's singular vector estimates by params.power_iterations
/// steps (warm start). No-op without spectral normalization.
void update_spectral_state(ModelParams& params);

/// Current sigma estimate u^T W v per layer.
std::vector<double> spectral_sigmas(const ModelParams& params);

/// Plain parameters whose weights are W / sigma(W) under the stored
/// estimates. Throws std::domain_error for a layer with sigma = 0.
ModelParams apply_spectral_norm(const ModelParams& params);

/// Versioned text checkpoint.
void save_checkpoint(std::ostream& out, const ModelParams& params);
ModelParams load_checkpoint(std::istream& in);
void save_checkpoint(const std::string& path, const ModelParams& params);
ModelParams load_checkpoint(const std::string& path);

inline constexpr int kCheckpointVersion = 1;

} // namespace lipgan
