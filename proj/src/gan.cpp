#include "lipgan/gan.hpp"

#include <chrono>
#include <cmath>
#include <numbers>

namespace lipgan {

std::string to_string(Objective o) {
  switch (o) {
  case Objective::wgan: return "wgan";
  case Objective::hinge: return "hinge";
  case Objective::vanilla: return "vanilla";
  }
  return "wgan";
}

Objective objective_from_string(const std::string& name) {
  if (name == "wgan") return Objective::wgan;
  if (name == "hinge") return Objective::hinge;
  if (name == "vanilla") return Objective::vanilla;
  throw std::invalid_argument("unknown objective '" + name + "'");
}

Var d_loss(Objective objective, const Var& f_real, const Var& f_fake) {
  switch (objective) {
  case Objective::wgan: return sub(mean(f_fake), mean(f_real));
  case Objective::hinge:
    return add(mean(relu(add_scalar(neg(f_real), 1.0))), mean(relu(add_scalar(f_fake, 1.0))));
  case Objective::vanilla: return add(mean(softplus(neg(f_real))), mean(softplus(f_fake)));
  }
  throw std::invalid_argument("d_loss: unknown objective");
}

Var g_loss(Objective objective, const Var& f_fake) {
  switch (objective) {
  case Objective::wgan:
  case Objective::hinge: return neg(mean(f_fake));
  case Objective::vanilla: return mean(softplus(neg(f_fake)));
  }
  throw std::invalid_argument("g_loss: unknown objective");
}

void TrainConfig::validate() const {
  regularizer.validate();
  if (d_steps < 1) throw std::invalid_argument("d_steps must be >= 1");
  if (batch_size < 1) throw std::invalid_argument("batch_size must be >= 1");
  if (iterations < 1) throw std::invalid_argument("iterations must be >= 1");
  if (log_every < 1) throw std::invalid_argument("log_every must be >= 1");
  if (prior_dim < 1) throw std::invalid_argument("prior_dim must be >= 1");
  if (eval_samples < 1) throw std::invalid_argument("eval_samples must be >= 1");
  if (lipschitz_samples < 1) throw std::invalid_argument("lipschitz_samples must be >= 1");
  if (!(d_learning_rate > 0.0)) throw std::invalid_argument("d_learning_rate must be > 0");
  if (!(g_learning_rate >= 0.0)) throw std::invalid_argument("g_learning_rate must be >= 0");
  if (!(decay_factor > 0.0 && decay_factor <= 1.0)) {
    throw std::invalid_argument("decay_factor must be in (0, 1]");
  }
  if (!(decay_fraction > 0.0 && decay_fraction <= 1.0)) {
    throw std::invalid_argument("decay_fraction must be in (0, 1]");
  }
}

double lr_multiplier(const TrainConfig& config, long it, long total) {
  if (!config.lr_decay) return 1.0;
  const long period =
      std::max<long>(1, static_cast<long>(std::ceil(config.decay_fraction * static_cast<double>(total))));
  return std::pow(config.decay_factor, static_cast<double>((it - 1) / period));
}

DataSampler ring_mixture(int modes, double radius, double stddev) {
  return [=](Eigen::Index n, std::mt19937_64& rng) {
    std::uniform_int_distribution<int> mode(0, modes - 1);
    std::normal_distribution<double> noise(0.0, stddev);
    Tensor out(n, 2);
    for (Eigen::Index i = 0; i < n; ++i) {
      const double angle = 2.0 * std::numbers::pi * mode(rng) / modes;
      out(i, 0) = radius * std::cos(angle) + noise(rng);
      out(i, 1) = radius * std::sin(angle) + noise(rng);
    }
    return out;
  };
}

namespace {

using Clock = std::chrono::steady_clock;

double elapsed_ms(Clock::time_point start) {
  return std::chrono::duration<double, std::milli>(Clock::now() - start).count();
}

Tensor sample_rows(const Tensor& cloud, Eigen::Index n, std::mt19937_64& rng) {
  std::uniform_int_distribution<Eigen::Index> pick_row(0, cloud.rows() - 1);
  Tensor out(n, cloud.cols());
  for (Eigen::Index i = 0; i < n; ++i) out.row(i) = cloud.row(pick_row(rng));
  return out;
}

Tensor standard_normal(Eigen::Index rows, Eigen::Index cols, std::mt19937_64& rng) {
  std::normal_distribution<double> normal;
  Tensor out(rows, cols);
  for (Eigen::Index i = 0; i < rows; ++i) {
    for (Eigen::Index j = 0; j < cols; ++j) out(i, j) = normal(rng);
  }
  return out;
}

bool has_penalty_term(RegularizerKind k) {
  return k == RegularizerKind::gp || k == RegularizerKind::lp || k == RegularizerKind::maxgp ||
         k == RegularizerKind::maxal;
}

struct StepOutcome {
  double d_loss = 0.0;
  std::optional<double> g_max;
};

/// One discriminator update on the given batches; the regularizer term is
/// subtracted from the minimized loss.
StepOutcome discriminator_step(ModelParams& d, AdamState& adam, RegularizerState& reg,
                               Objective objective, const Tensor& real, const Tensor& fake,
                               std::mt19937_64& rng, long iteration, double threshold) {
  if (reg.kind == RegularizerKind::sn) update_spectral_state(d);
  const BoundModel model(d, true);
  const Critic critic = [&model](const Var& x) { return model.forward(x); };

  StepOutcome outcome;
  Var total;
  try {
    Var loss = d_loss(objective, critic(constant(real)), critic(constant(fake)));
    outcome.d_loss = loss.item();
    total = loss;
    if (has_penalty_term(reg.kind)) {
      const InterpolationBatch points = sample_interpolations(real, fake, rng);
      Var term;
      switch (reg.kind) {
      case RegularizerKind::gp: term = reg_gp(critic, points.points, reg.rho, reg.target); break;
      case RegularizerKind::lp: term = reg_lp(critic, points.points, reg.rho, reg.target); break;
      case RegularizerKind::maxgp: {
        MaxGradientTerm m = reg_maxgp(critic, points.points, reg);
        term = m.value;
        outcome.g_max = m.g_max;
        break;
      }
      case RegularizerKind::maxal: {
        MaxGradientTerm m = reg_maxal(critic, points.points, reg);
        term = m.value;
        outcome.g_max = m.g_max;
        break;
      }
      default: break;
      }
      total = sub(total, term);
    }
  } catch (const NumericError& e) {
    throw TrainingDiverged(iteration, e.what());
  }
  if (std::abs(outcome.d_loss) > threshold) {
    throw TrainingDiverged(iteration, "|d_loss| = " + std::to_string(std::abs(outcome.d_loss)) +
                                          " exceeds threshold");
  }

  try {
    const std::vector<Tensor> grads = backward(total, model.leaves());
    adam_step(adam, d, grads);
  } catch (const NumericError& e) {
    throw TrainingDiverged(iteration, e.what());
  }
  if (reg.kind == RegularizerKind::clip) clip_weights(d, reg.clip);
  // The multiplier update reuses the pre-step g_max.
  if (reg.kind == RegularizerKind::maxal) update_lambda(reg, *outcome.g_max);
  return outcome;
}

ModelParams make_discriminator(const TrainConfig& config, Eigen::Index input_dim,
                               std::mt19937_64& rng) {
  MlpShape shape = config.discriminator;
  shape.input_dim = input_dim;
  shape.output_dim = 1;
  ModelParams d = init_mlp(shape, rng);
  if (config.regularizer.kind == RegularizerKind::sn) {
    enable_spectral_norm(d, rng, config.regularizer.power_iterations);
  }
  return d;
}

/// Evaluation metrics of a critic between two clouds.
void evaluate_critic(MetricsRecord& rec, const ModelParams& d, const PointCloud& real,
                     const PointCloud& fake, const TrainConfig& config, const TransportPlan& plan,
                     double w1, std::mt19937_64& eval_rng) {
  const Critic critic = frozen_critic(d);
  rec.w1 = w1;
  rec.dual_objective = dual_objective(critic, real, fake);
  const double k_hat = lipschitz_estimate(critic, real.points(), fake.points(),
                                          config.lipschitz_samples, eval_rng);
  rec.lipschitz_estimate = k_hat;
  rec.pairwise_lipschitz = pairwise_lipschitz(critic, real, fake);
  if (config.evaluate_alignment) {
    const Prop1Report p1 = check_proposition1(critic, plan, real, fake, config.t_grid);
    rec.prop1_min_cosine = p1.min_cosine;
    rec.prop1_mean_cosine = p1.mean_cosine;
    if (k_hat > 0.0) {
      rec.lemma2_max_residual = check_lemma2(critic, plan, real, fake, k_hat).max_relative_residual;
    }
  }
}

constexpr std::uint64_t kEvalStream = 0x9E3779B97F4A7C15ULL;

} // namespace

FitResult fit_discriminator(const PointCloud& real, const PointCloud& fake,
                            const TrainConfig& config, const MetricsSink& sink) {
  config.validate();
  if (real.dim() != fake.dim()) throw std::invalid_argument("clouds differ in dimension");
  const auto start = Clock::now();
  std::mt19937_64 rng(config.seed);
  std::mt19937_64 eval_rng(config.seed ^ kEvalStream);

  FitResult result;
  result.regularizer = config.regularizer;
  result.discriminator = make_discriminator(config, real.dim(), rng);
  auto [w1, plan] = exact_w1(real, fake);
  result.w1 = w1;
  result.plan = plan;
  AdamState adam = make_adam(result.discriminator, config.d_learning_rate, config.beta1,
                             config.beta2, config.adam_epsilon);
  RegularizerState& reg = result.regularizer;

  auto emit = [&](MetricsRecord rec) {
    rec.wall_ms = elapsed_ms(start);
    if (sink) sink(rec);
    result.records.push_back(std::move(rec));
  };

  MetricsRecord initial;
  initial.iteration = 0;
  if (reg.kind == RegularizerKind::maxal) initial.lambda = reg.lambda;
  evaluate_critic(initial, result.discriminator, real, fake, config, plan, w1, eval_rng);
  emit(std::move(initial));

  for (long it = 1; it <= config.iterations; ++it) {
    adam.learning_rate = config.d_learning_rate * lr_multiplier(config, it, config.iterations);
    const Tensor real_batch = sample_rows(real.points(), config.batch_size, rng);
    const Tensor fake_batch = sample_rows(fake.points(), config.batch_size, rng);
    StepOutcome step;
    try {
      step = discriminator_step(result.discriminator, adam, reg, config.objective, real_batch,
                                fake_batch, rng, it, config.divergence_threshold);
    } catch (const TrainingDiverged&) {
      MetricsRecord failed;
      failed.iteration = it;
      emit(std::move(failed));
      throw;
    }
    if (it % config.log_every == 0 || it == config.iterations) {
      MetricsRecord rec;
      rec.iteration = it;
      rec.d_loss = step.d_loss;
      rec.g_max = step.g_max;
      if (reg.kind == RegularizerKind::maxal) rec.lambda = reg.lambda;
      evaluate_critic(rec, result.discriminator, real, fake, config, plan, w1, eval_rng);
      emit(std::move(rec));
    }
  }
  return result;
}

GanResult train_gan(const TrainConfig& config, const DataSampler& sampler,
                    const MetricsSink& sink) {
  config.validate();
  const auto start = Clock::now();
  std::mt19937_64 rng(config.seed);
  std::mt19937_64 eval_rng(config.seed ^ kEvalStream);

  const Tensor eval_real = sampler(config.eval_samples, eval_rng);
  const Tensor eval_noise = standard_normal(config.eval_samples, config.prior_dim, eval_rng);
  const PointCloud eval_real_cloud(eval_real);

  GanResult result;
  result.regularizer = config.regularizer;
  MlpShape g_shape = config.generator;
  g_shape.input_dim = config.prior_dim;
  g_shape.output_dim = eval_real.cols();
  result.generator = init_mlp(g_shape, rng);
  result.discriminator = make_discriminator(config, eval_real.cols(), rng);
  AdamState d_adam = make_adam(result.discriminator, config.d_learning_rate, config.beta1,
                               config.beta2, config.adam_epsilon);
  AdamState g_adam = make_adam(result.generator, config.g_learning_rate, config.beta1,
                               config.beta2, config.adam_epsilon);
  RegularizerState& reg = result.regularizer;

  auto emit = [&](MetricsRecord rec) {
    rec.wall_ms = elapsed_ms(start);
    if (sink) sink(rec);
    result.records.push_back(std::move(rec));
  };
  auto evaluate = [&](MetricsRecord& rec) {
    Tensor generated;
    {
      NoGradGuard no_grad;
      generated = mlp_forward(result.generator, constant(eval_noise)).value();
    }
    const PointCloud fake_cloud(generated);
    auto [w1, plan] = exact_w1(eval_real_cloud, fake_cloud);
    if (reg.kind == RegularizerKind::maxal) rec.lambda = reg.lambda;
    evaluate_critic(rec, result.discriminator, eval_real_cloud, fake_cloud, config, plan, w1,
                    eval_rng);
  };

  MetricsRecord initial;
  initial.iteration = 0;
  evaluate(initial);
  emit(std::move(initial));

  for (long it = 1; it <= config.iterations; ++it) {
    const double multiplier = lr_multiplier(config, it, config.iterations);
    d_adam.learning_rate = config.d_learning_rate * multiplier;
    g_adam.learning_rate = config.g_learning_rate * multiplier;

    StepOutcome step;
    try {
      for (int s = 0; s < config.d_steps; ++s) {
        const Tensor real_batch = sampler(config.batch_size, rng);
        Tensor fake_batch;
        {
          NoGradGuard no_grad;
          fake_batch = mlp_forward(result.generator,
                                   constant(standard_normal(config.batch_size, config.prior_dim, rng)))
                           .value();
        }
        step = discriminator_step(result.discriminator, d_adam, reg, config.objective, real_batch,
                                  fake_batch, rng, it, config.divergence_threshold);
        ++result.d_updates;
      }
    } catch (const TrainingDiverged&) {
      MetricsRecord failed;
      failed.iteration = it;
      emit(std::move(failed));
      throw;
    }

    double g_loss_value = 0.0;
    {
      const BoundModel g_model(result.generator, true);
      const Tensor z = standard_normal(config.batch_size, config.prior_dim, rng);
      Var fake = g_model.forward(constant(z));
      Var loss = g_loss(config.objective, mlp_forward(result.discriminator, fake));
      g_loss_value = loss.item();
      if (!config.freeze_generator) {
        const std::vector<Tensor> grads = backward(loss, g_model.leaves());
        try {
          adam_step(g_adam, result.generator, grads);
        } catch (const NumericError& e) {
          MetricsRecord failed;
          failed.iteration = it;
          emit(std::move(failed));
          throw TrainingDiverged(it, e.what());
        }
      }
      ++result.g_updates;
    }

    if (it % config.log_every == 0 || it == config.iterations) {
      MetricsRecord rec;
      rec.iteration = it;
      rec.d_loss = step.d_loss;
      rec.g_loss = g_loss_value;
      rec.g_max = step.g_max;
      evaluate(rec);
      emit(std::move(rec));
    }
  }
  return result;
}

} // namespace lipgan
