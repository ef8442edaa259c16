#include "lipgan/regularizers.hpp"

#include <algorithm>
#include <numeric>
#include <stdexcept>

namespace lipgan {

std::string to_string(RegularizerKind k) {
  switch (k) {
  case RegularizerKind::none: return "none";
  case RegularizerKind::clip: return "clip";
  case RegularizerKind::sn: return "sn";
  case RegularizerKind::gp: return "gp";
  case RegularizerKind::lp: return "lp";
  case RegularizerKind::maxgp: return "maxgp";
  case RegularizerKind::maxal: return "maxal";
  }
  return "none";
}

RegularizerKind regularizer_from_string(const std::string& name) {
  for (auto k : {RegularizerKind::none, RegularizerKind::clip, RegularizerKind::sn,
                 RegularizerKind::gp, RegularizerKind::lp, RegularizerKind::maxgp,
                 RegularizerKind::maxal}) {
    if (to_string(k) == name) return k;
  }
  throw std::invalid_argument("unknown regularizer '" + name + "'");
}

void RegularizerState::validate() const {
  if (!(rho >= 0.0)) throw std::invalid_argument("rho must be >= 0");
  if (!(target > 0.0)) throw std::invalid_argument("target k must be > 0");
  if (kind == RegularizerKind::clip && !(clip > 0.0)) {
    throw std::invalid_argument("clip must be > 0");
  }
  if (kind == RegularizerKind::sn && power_iterations < 1) {
    throw std::invalid_argument("power_iterations must be >= 1");
  }
  if (buffer.size() > buffer_capacity) throw std::invalid_argument("buffer over capacity");
}

InterpolationBatch interpolate_batch(const Tensor& real, const Tensor& fake,
                                     std::span<const double> t) {
  if (real.rows() != fake.rows() || real.cols() != fake.cols()) {
    throw ShapeError("sample_interpolations", shape_string(real) + " x " + shape_string(fake));
  }
  if (static_cast<Eigen::Index>(t.size()) != real.rows()) {
    throw std::invalid_argument("interpolate_batch: one t per row required");
  }
  InterpolationBatch batch;
  batch.points.resize(real.rows(), real.cols());
  for (Eigen::Index i = 0; i < real.rows(); ++i) {
    batch.points.row(i) = interpolate(real.row(i), fake.row(i), t[i]);
    batch.sources.push_back({i, i, t[i]});
  }
  return batch;
}

InterpolationBatch sample_interpolations(const Tensor& real, const Tensor& fake,
                                         std::mt19937_64& rng) {
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::vector<double> t(static_cast<std::size_t>(real.rows()));
  for (double& ti : t) ti = unit(rng);
  return interpolate_batch(real, fake, t);
}

Var gp_from_norms(const Var& norms, double rho, double target) {
  return scale(mean(square(add_scalar(norms, -target))), -0.5 * rho);
}

Var lp_from_norms(const Var& norms, double rho, double target) {
  return scale(mean(square(relu(add_scalar(norms, -target)))), -0.5 * rho);
}

Var max_penalty(const Var& g_max, double rho, double target) {
  return scale(square(add_scalar(g_max, -target)), -0.5 * rho);
}

namespace {

Var norms_at(const Critic& f, const Tensor& points) {
  Var x = variable(points);
  return grad_norm(f(x), x);
}

Tensor with_buffer(const Tensor& points, const RegularizerState& state) {
  if (state.buffer.empty()) return points;
  Tensor all(points.rows() + static_cast<Eigen::Index>(state.buffer.size()), points.cols());
  all.topRows(points.rows()) = points;
  for (std::size_t i = 0; i < state.buffer.size(); ++i) {
    if (state.buffer[i].point.size() != points.cols()) {
      throw ShapeError("reg_maxgp", "buffer point of dimension " +
                                        std::to_string(state.buffer[i].point.size()) +
                                        " with batch " + shape_string(points));
    }
    all.row(points.rows() + static_cast<Eigen::Index>(i)) = state.buffer[i].point;
  }
  return all;
}

void refresh_buffer(RegularizerState& state, const Tensor& candidates,
                    const Eigen::VectorXd& norms) {
  if (state.buffer_capacity == 0) return;
  std::vector<Eigen::Index> order(static_cast<std::size_t>(candidates.rows()));
  std::iota(order.begin(), order.end(), Eigen::Index{0});
  std::stable_sort(order.begin(), order.end(),
                   [&](Eigen::Index a, Eigen::Index b) { return norms(a) > norms(b); });
  order.resize(std::min(order.size(), state.buffer_capacity));
  std::vector<BufferEntry> next;
  for (Eigen::Index i : order) next.push_back({candidates.row(i), norms(i)});
  state.buffer = std::move(next);
}

struct PickedMax {
  Var g_max;
  Eigen::Index argmax;
};

PickedMax pick_max_gradient(const Critic& f, const Tensor& points, RegularizerState& state,
                            const char* op) {
  if (points.rows() == 0 && state.buffer.empty()) {
    throw std::invalid_argument(std::string(op) + ": empty batch and empty buffer");
  }
  const Tensor candidates =
      points.rows() == 0 ? with_buffer(Tensor(0, state.buffer.front().point.size()), state)
                         : with_buffer(points, state);
  Var norms = norms_at(f, candidates);
  const Eigen::Index best = argmax(norms.value()).first;
  refresh_buffer(state, candidates, norms.value().col(0));
  return {pick(norms, best, 0), best};
}

} // namespace

Var reg_gp(const Critic& f, const Tensor& points, double rho, double target) {
  if (!(rho >= 0.0)) throw std::invalid_argument("reg_gp: rho must be >= 0");
  return gp_from_norms(norms_at(f, points), rho, target);
}

Var reg_lp(const Critic& f, const Tensor& points, double rho, double target) {
  if (!(rho >= 0.0)) throw std::invalid_argument("reg_lp: rho must be >= 0");
  return lp_from_norms(norms_at(f, points), rho, target);
}

MaxGradientTerm reg_maxgp(const Critic& f, const Tensor& points, RegularizerState& state) {
  state.validate();
  auto [g_max, best] = pick_max_gradient(f, points, state, "reg_maxgp");
  return {max_penalty(g_max, state.rho, state.target), g_max.item(), best};
}

MaxGradientTerm reg_maxal(const Critic& f, const Tensor& points, RegularizerState& state) {
  state.validate();
  auto [g_max, best] = pick_max_gradient(f, points, state, "reg_maxal");
  Var multiplier = scale(add_scalar(g_max, -state.target), state.lambda);
  return {add(max_penalty(g_max, state.rho, state.target), multiplier), g_max.item(), best};
}

void update_lambda(RegularizerState& state, double g_max) {
  state.lambda -= state.rho * (g_max - state.target);
}

Tensor input_gradients(const Critic& f, const Tensor& points) {
  Var x = variable(points);
  Var out = f(x);
  const Var wrt[] = {x};
  return grad(sum(out), wrt, false)[0].value();
}

Eigen::VectorXd gradient_norms(const Critic& f, const Tensor& points) {
  return input_gradients(f, points).rowwise().norm();
}

double lipschitz_estimate(const Critic& f, const Tensor& real, const Tensor& fake,
                          std::size_t n_samples, std::mt19937_64& rng) {
  if (n_samples == 0) throw std::invalid_argument("lipschitz_estimate: n_samples must be >= 1");
  if (real.rows() == 0 || fake.rows() == 0 || real.cols() != fake.cols()) {
    throw ShapeError("lipschitz_estimate", shape_string(real) + " x " + shape_string(fake));
  }
  std::uniform_int_distribution<Eigen::Index> pick_real(0, real.rows() - 1);
  std::uniform_int_distribution<Eigen::Index> pick_fake(0, fake.rows() - 1);
  const auto n = static_cast<Eigen::Index>(n_samples);
  Tensor r(n, real.cols()), g(n, real.cols());
  for (Eigen::Index i = 0; i < n; ++i) {
    r.row(i) = real.row(pick_real(rng));
    g.row(i) = fake.row(pick_fake(rng));
  }
  const InterpolationBatch batch = sample_interpolations(r, g, rng);
  return gradient_norms(f, batch.points).maxCoeff();
}

double predicted_k_star(double w1, double rho) {
  if (!(rho > 0.0)) throw std::invalid_argument("predicted_k_star: rho must be > 0");
  if (!(w1 >= 0.0)) throw std::invalid_argument("predicted_k_star: W1 must be >= 0");
  return w1 / rho + 1.0;
}

} // namespace lipgan
