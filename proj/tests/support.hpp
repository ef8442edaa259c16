#pragma once

// Oracles shared by the test binaries: central finite differences, factorial
// transport enumeration, and random instances.

#include "lipgan/nn.hpp"
#include "lipgan/transport.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <functional>
#include <numeric>
#include <random>
#include <vector>

namespace testing {

using lipgan::ModelParams;

/// Random leaky-relu MLP with 1-3 layers and widths up to 16.
inline ModelParams random_mlp(std::mt19937_64& rng, Eigen::Index input_dim,
                              lipgan::Activation act = lipgan::Activation::leaky_relu) {
  std::uniform_int_distribution<int> depth(0, 2), width(2, 16);
  lipgan::MlpShape shape;
  shape.input_dim = input_dim;
  shape.hidden.clear();
  for (int i = depth(rng); i > 0; --i) shape.hidden.push_back(width(rng));
  shape.hidden_activation = act;
  return lipgan::init_mlp(shape, rng);
}

/// The k-th parameter tensor in W0, b0, W1, b1, ... order.
inline Eigen::MatrixXd& param(ModelParams& p, std::size_t k) {
  auto& layer = p.layers[k / 2];
  return k % 2 == 0 ? layer.weight : layer.bias;
}

/// Central differences of a scalar function of the parameters, one tensor
/// per parameter.
inline std::vector<Eigen::MatrixXd>
fd_param_gradient(const std::function<double(const ModelParams&)>& fn, ModelParams p,
                  double h = 1e-5) {
  std::vector<Eigen::MatrixXd> out;
  for (std::size_t k = 0; k < 2 * p.layers.size(); ++k) {
    Eigen::MatrixXd& t = param(p, k);
    Eigen::MatrixXd g(t.rows(), t.cols());
    for (Eigen::Index i = 0; i < t.size(); ++i) {
      const double saved = t.data()[i];
      t.data()[i] = saved + h;
      const double up = fn(p);
      t.data()[i] = saved - h;
      const double down = fn(p);
      t.data()[i] = saved;
      g.data()[i] = (up - down) / (2 * h);
    }
    out.push_back(g);
  }
  return out;
}

inline Eigen::MatrixXd fd_input_gradient(const std::function<double(const Eigen::MatrixXd&)>& fn,
                                         Eigen::MatrixXd x, double h = 1e-5) {
  Eigen::MatrixXd g(x.rows(), x.cols());
  for (Eigen::Index i = 0; i < x.size(); ++i) {
    const double saved = x.data()[i];
    x.data()[i] = saved + h;
    const double up = fn(x);
    x.data()[i] = saved - h;
    const double down = fn(x);
    x.data()[i] = saved;
    g.data()[i] = (up - down) / (2 * h);
  }
  return g;
}

/// |a - b| / max(|b|, floor) over the concatenation of all tensors.
inline double relative_error(const std::vector<Eigen::MatrixXd>& a,
                             const std::vector<Eigen::MatrixXd>& b, double floor = 1e-6) {
  double diff = 0.0, ref = 0.0;
  for (std::size_t k = 0; k < a.size(); ++k) {
    diff += (a[k] - b[k]).squaredNorm();
    ref += b[k].squaredNorm();
  }
  return std::sqrt(diff) / std::max(std::sqrt(ref), floor);
}

/// Minimum mean matched cost over all n! permutations.
inline double brute_force_w1(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b) {
  const auto n = a.rows();
  std::vector<Eigen::Index> perm(static_cast<std::size_t>(n));
  std::iota(perm.begin(), perm.end(), 0);
  double best = std::numeric_limits<double>::infinity();
  do {
    double total = 0.0;
    for (Eigen::Index i = 0; i < n; ++i) total += (a.row(i) - b.row(perm[i])).norm();
    best = std::min(best, total / static_cast<double>(n));
  } while (std::next_permutation(perm.begin(), perm.end()));
  return best;
}

inline Eigen::MatrixXd uniform_matrix(std::mt19937_64& rng, Eigen::Index rows, Eigen::Index cols,
                                      double lo = -1.0, double hi = 1.0) {
  std::uniform_real_distribution<double> u(lo, hi);
  Eigen::MatrixXd m(rows, cols);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = u(rng);
  return m;
}

inline Eigen::MatrixXd normal_matrix(std::mt19937_64& rng, Eigen::Index rows, Eigen::Index cols) {
  std::normal_distribution<double> n;
  Eigen::MatrixXd m(rows, cols);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = n(rng);
  return m;
}

/// Critic f(x) = x w^T + c.
inline lipgan::Critic linear_critic(const Eigen::RowVectorXd& w, double c = 0.0) {
  return [w, c](const lipgan::Var& x) {
    lipgan::Var y = lipgan::matmul(x, lipgan::constant(Eigen::MatrixXd(w.transpose())));
    return lipgan::add_scalar(y, c);
  };
}

} // namespace testing
