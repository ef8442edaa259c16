#pragma once

// Penalty-based Lipschitz mechanisms. Every regularizer term follows one sign
// convention: it is added to the objective the discriminator maximizes, so a
// trainer that minimizes subtracts it exactly once.

#include "lipgan/autodiff.hpp"
#include "lipgan/nn.hpp"

#include <Eigen/Dense>

#include <random>
#include <span>
#include <string>
#include <vector>

namespace lipgan {

enum class RegularizerKind { none, clip, sn, gp, lp, maxgp, maxal };

std::string to_string(RegularizerKind k);
RegularizerKind regularizer_from_string(const std::string& name);

struct BufferEntry {
  Eigen::RowVectorXd point;
  double grad_norm = 0.0;
};

struct RegularizerState {
  RegularizerKind kind = RegularizerKind::none;
  double rho = 10.0;
  double target = 1.0;  // Lipschitz target k
  double lambda = 0.0;  // maxal multiplier
  std::size_t buffer_capacity = 0;
  /// Sorted by grad_norm, descending.
  std::vector<BufferEntry> buffer;
  double clip = 0.01;          // kind == clip
  int power_iterations = 1;    // kind == sn

  /// Throws std::invalid_argument on rho < 0, target <= 0 or clip <= 0.
  void validate() const;
};

struct InterpolationSource {
  Eigen::Index real_index;
  Eigen::Index fake_index;
  double t;
};

/// Points t * real + (1 - t) * fake with their provenance.
struct InterpolationBatch {
  Tensor points;
  std::vector<InterpolationSource> sources;
};

/// The exact expression every interpolated point is built with.
inline Eigen::RowVectorXd interpolate(const Eigen::Ref<const Eigen::RowVectorXd>& real,
                                      const Eigen::Ref<const Eigen::RowVectorXd>& fake, double t) {
  return t * real + (1.0 - t) * fake;
}

/// One point per aligned (real[i], fake[i]) row pair, t ~ U[0, 1] per pair.
InterpolationBatch sample_interpolations(const Tensor& real, const Tensor& fake,
                                         std::mt19937_64& rng);

/// Same as above with the mixing coefficients given.
InterpolationBatch interpolate_batch(const Tensor& real, const Tensor& fake,
                                     std::span<const double> t);

/// Result of a max-gradient regularizer.
struct MaxGradientTerm {
  Var value;
  double g_max = 0.0;
  /// Row of the penalized point in [batch; buffer] order.
  Eigen::Index argmax = 0;
};

// Formulas over a vector of per-sample gradient norms.
Var gp_from_norms(const Var& norms, double rho, double target);
Var lp_from_norms(const Var& norms, double rho, double target);
Var max_penalty(const Var& g_max, double rho, double target);

/// -(rho/2) * mean (|grad f| - k)^2 over the batch.
Var reg_gp(const Critic& f, const Tensor& points, double rho, double target = 1.0);
/// -(rho/2) * mean max(0, |grad f| - k)^2 over the batch.
Var reg_lp(const Critic& f, const Tensor& points, double rho, double target = 1.0);

/// -(rho/2) * (g_max - k)^2 where g_max is the largest gradient norm over the
/// batch and, when the buffer is enabled, the re-evaluated buffered points.
/// Refreshes the buffer with the global top buffer_capacity points.
MaxGradientTerm reg_maxgp(const Critic& f, const Tensor& points, RegularizerState& state);

/// lambda * (g_max - k) - (rho/2) * (g_max - k)^2.
MaxGradientTerm reg_maxal(const Critic& f, const Tensor& points, RegularizerState& state);

/// lambda <- lambda - rho * (g_max - k).
void update_lambda(RegularizerState& state, double g_max);

/// Largest gradient norm over n_samples fresh interpolations between random
/// real and fake rows. A lower bound on the Lipschitz constant of f over the
/// interpolation support.
double lipschitz_estimate(const Critic& f, const Tensor& real, const Tensor& fake,
                          std::size_t n_samples, std::mt19937_64& rng);

/// Gradient norms of f at each row of `points`, no graph kept.
Eigen::VectorXd gradient_norms(const Critic& f, const Tensor& points);
/// Input gradients of f at each row of `points`.
Tensor input_gradients(const Critic& f, const Tensor& points);

/// Maximizer of k * w1 - (rho/2) * (k - 1)^2, i.e. w1 / rho + 1.
double predicted_k_star(double w1, double rho);

} // namespace lipgan
