#pragma once

// Adversarial objectives and the two training regimes: discriminator-only
// fitting between fixed clouds, and alternating generator/discriminator
// training.

#include "lipgan/autodiff.hpp"
#include "lipgan/nn.hpp"
#include "lipgan/regularizers.hpp"
#include "lipgan/transport.hpp"

#include <cstdint>
#include <functional>
#include <optional>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

namespace lipgan {

enum class Objective { wgan, hinge, vanilla };

std::string to_string(Objective o);
Objective objective_from_string(const std::string& name);

/// Discriminator loss to minimize, before any regularizer.
///   wgan:    -(mean f(real) - mean f(fake))
///   hinge:   mean max(0, 1 - f(real)) + mean max(0, 1 + f(fake))
///   vanilla: sigmoid cross-entropy, real -> 1, fake -> 0, on logits f
Var d_loss(Objective objective, const Var& f_real, const Var& f_fake);

/// Generator loss to minimize: -mean f(fake) for wgan and hinge,
/// mean softplus(-f(fake)) = -mean log sigmoid(f(fake)) for vanilla.
Var g_loss(Objective objective, const Var& f_fake);

struct TrainConfig {
  Objective objective = Objective::wgan;
  RegularizerState regularizer;
  MlpShape discriminator{};
  MlpShape generator{2, {64, 64}, 2, Activation::leaky_relu, Activation::tanh, 0.2};
  int d_steps = 5;
  Eigen::Index batch_size = 64;
  long iterations = 2000;
  double d_learning_rate = 1e-3;
  double g_learning_rate = 1e-4;
  double beta1 = 0.0;
  double beta2 = 0.9;
  double adam_epsilon = 1e-8;
  /// Learning rates are multiplied by decay_factor after every decay_fraction
  /// of the run.
  bool lr_decay = true;
  double decay_factor = 0.5;
  double decay_fraction = 0.25;
  std::uint64_t seed = 0;
  Eigen::Index prior_dim = 2;
  bool freeze_generator = false;

  long log_every = 10;
  std::size_t lipschitz_samples = 256;
  bool evaluate_alignment = true;  // segment cosine and slope residual
  std::vector<double> t_grid = default_t_grid();
  Eigen::Index eval_samples = 64;  // train_gan evaluation cloud size
  double divergence_threshold = 1e6;

  void validate() const;
};

struct MetricsRecord {
  long iteration = 0;
  std::optional<double> d_loss;
  std::optional<double> g_loss;
  std::optional<double> dual_objective;
  std::optional<double> lipschitz_estimate;
  std::optional<double> pairwise_lipschitz;
  std::optional<double> lambda;
  std::optional<double> g_max;
  std::optional<double> w1;
  std::optional<double> prop1_min_cosine;
  std::optional<double> prop1_mean_cosine;
  std::optional<double> lemma2_max_residual;  // relative to d(x, y)
  double wall_ms = 0.0;
};

using MetricsSink = std::function<void(const MetricsRecord&)>;

/// Thrown on NaN/Inf or |d_loss| above the divergence threshold. Records
/// emitted before the failure stay with the sink.
class TrainingDiverged : public std::runtime_error {
public:
  TrainingDiverged(long iteration, const std::string& what)
      : std::runtime_error("diverged at iteration " + std::to_string(iteration) + ": " + what),
        iteration_(iteration) {}
  long iteration() const noexcept { return iteration_; }

private:
  long iteration_;
};

struct FitResult {
  ModelParams discriminator;
  RegularizerState regularizer;
  double w1 = 0.0;
  TransportPlan plan;
  std::vector<MetricsRecord> records;
};

/// Trains a discriminator between two fixed clouds (real scores high).
FitResult fit_discriminator(const PointCloud& real, const PointCloud& fake,
                            const TrainConfig& config, const MetricsSink& sink = {});

/// Draws n real samples.
using DataSampler = std::function<Tensor(Eigen::Index n, std::mt19937_64& rng)>;

struct GanResult {
  ModelParams generator;
  ModelParams discriminator;
  RegularizerState regularizer;
  long d_updates = 0;
  long g_updates = 0;
  std::vector<MetricsRecord> records;
};

/// Alternates d_steps discriminator updates with one generator update, for
/// config.iterations generator steps. Prior is standard normal.
GanResult train_gan(const TrainConfig& config, const DataSampler& sampler,
                    const MetricsSink& sink = {});

/// Learning-rate multiplier at 1-based iteration `it` of `total`.
double lr_multiplier(const TrainConfig& config, long it, long total);

/// Mixture of `modes` isotropic Gaussians evenly spaced on a circle.
DataSampler ring_mixture(int modes, double radius, double stddev);

} // namespace lipgan
