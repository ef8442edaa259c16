#pragma once

// Exact W1 between equal-size uniform point clouds and the checks that
// compare a trained critic against the optimal transport plan.

#include "lipgan/nn.hpp"

#include <Eigen/Dense>

#include <iosfwd>
#include <limits>
#include <span>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace lipgan {

/// Uniformly weighted points, one per row.
template <class Scalar>
class BasicPointCloud {
public:
  using Matrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;

  BasicPointCloud() = default;
  explicit BasicPointCloud(Matrix points) : points_(std::move(points)) {
    if (points_.rows() == 0 || points_.cols() == 0) {
      throw std::invalid_argument("point cloud must be nonempty");
    }
  }

  const Matrix& points() const noexcept { return points_; }
  Eigen::Index size() const noexcept { return points_.rows(); }
  Eigen::Index dim() const noexcept { return points_.cols(); }
  auto point(Eigen::Index i) const { return points_.row(i); }

private:
  Matrix points_;
};

using PointCloud = BasicPointCloud<double>;

/// A permutation matching with mass 1/n per pair.
template <class Scalar>
struct BasicTransportPlan {
  /// target[i] is the index in the second cloud matched to point i of the first.
  std::vector<Eigen::Index> target;
  Scalar total_cost{};

  std::size_t size() const noexcept { return target.size(); }
};

using TransportPlan = BasicTransportPlan<double>;

/// Euclidean cost matrix cost(i, j) = |a_i - b_j|.
template <class Scalar>
Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>
distance_matrix(const BasicPointCloud<Scalar>& a, const BasicPointCloud<Scalar>& b) {
  if (a.dim() != b.dim()) throw std::invalid_argument("point clouds differ in dimension");
  Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic> cost(a.size(), b.size());
  for (Eigen::Index i = 0; i < a.size(); ++i) {
    for (Eigen::Index j = 0; j < b.size(); ++j) cost(i, j) = (a.point(i) - b.point(j)).norm();
  }
  return cost;
}

/// Mean matched cost, summed in source-index order.
template <class Derived>
typename Derived::Scalar matching_cost(const Eigen::MatrixBase<Derived>& cost,
                                       std::span<const Eigen::Index> target) {
  using Scalar = typename Derived::Scalar;
  Scalar total(0);
  for (std::size_t i = 0; i < target.size(); ++i) {
    total += cost(static_cast<Eigen::Index>(i), target[i]);
  }
  return total / static_cast<Scalar>(target.size());
}

/// Minimum-cost perfect matching on a square cost matrix (shortest augmenting
/// paths with dual potentials, O(n^3)). Returns target[i] for each row i.
template <class Derived>
std::vector<Eigen::Index> solve_assignment(const Eigen::MatrixBase<Derived>& cost) {
  using Scalar = typename Derived::Scalar;
  const Eigen::Index n = cost.rows();
  if (n == 0 || cost.cols() != n) throw std::invalid_argument("assignment needs a square matrix");
  const Scalar inf = std::numeric_limits<Scalar>::infinity();

  // 1-based rows/cols; column 0 is the virtual start of each augmenting path.
  std::vector<Scalar> row_pot(n + 1, Scalar(0)), col_pot(n + 1, Scalar(0));
  std::vector<Eigen::Index> col_owner(n + 1, 0), way(n + 1, 0);
  for (Eigen::Index row = 1; row <= n; ++row) {
    col_owner[0] = row;
    Eigen::Index col0 = 0;
    std::vector<Scalar> min_slack(n + 1, inf);
    std::vector<char> used(n + 1, 0);
    do {
      used[col0] = 1;
      const Eigen::Index r0 = col_owner[col0];
      Scalar delta = inf;
      Eigen::Index col1 = 0;
      for (Eigen::Index j = 1; j <= n; ++j) {
        if (used[j]) continue;
        const Scalar reduced = cost(r0 - 1, j - 1) - row_pot[r0] - col_pot[j];
        if (reduced < min_slack[j]) {
          min_slack[j] = reduced;
          way[j] = col0;
        }
        if (min_slack[j] < delta) {
          delta = min_slack[j];
          col1 = j;
        }
      }
      for (Eigen::Index j = 0; j <= n; ++j) {
        if (used[j]) {
          row_pot[col_owner[j]] += delta;
          col_pot[j] -= delta;
        } else {
          min_slack[j] -= delta;
        }
      }
      col0 = col1;
    } while (col_owner[col0] != 0);
    do {
      const Eigen::Index col1 = way[col0];
      col_owner[col0] = col_owner[col1];
      col0 = col1;
    } while (col0 != 0);
  }

  std::vector<Eigen::Index> target(static_cast<std::size_t>(n));
  for (Eigen::Index j = 1; j <= n; ++j) target[col_owner[j] - 1] = j - 1;
  return target;
}

/// Exact W1 between two equal-size uniform clouds.
template <class Scalar>
std::pair<Scalar, BasicTransportPlan<Scalar>> exact_w1(const BasicPointCloud<Scalar>& a,
                                                       const BasicPointCloud<Scalar>& b) {
  if (a.size() == 0 || b.size() == 0) throw std::invalid_argument("exact_w1: empty cloud");
  if (a.size() != b.size()) {
    throw std::invalid_argument("exact_w1: clouds must have equal size (" +
                                std::to_string(a.size()) + " vs " + std::to_string(b.size()) +
                                ")");
  }
  const auto cost = distance_matrix(a, b);
  BasicTransportPlan<Scalar> plan;
  plan.target = solve_assignment(cost);
  plan.total_cost = matching_cost(cost, plan.target);
  return {plan.total_cost, std::move(plan)};
}

/// Point cloud text format: first line is the dimension, then one point per
/// line as space-separated coordinates. Blank lines and '#' comments ignored.
PointCloud read_point_cloud(std::istream& in);
PointCloud read_point_cloud(const std::string& path);
void write_point_cloud(std::ostream& out, const PointCloud& cloud);

struct Prop1Report {
  double min_cosine = 0.0;
  double mean_cosine = 0.0;
  /// |(|grad f|) - 1| aggregated over evaluated points.
  double max_norm_deviation = 0.0;
  double mean_norm_deviation = 0.0;
  std::size_t evaluated = 0;
  std::size_t skipped_pairs = 0;  // matched pairs with coincident points
  bool degenerate = false;        // some gradient had norm < 1e-8
};

/// Alignment of grad f along each matched segment with the unit vector from
/// the `fake` point to its matched `real` point, at x_t = t real + (1-t) fake.
/// Gradients with norm below 1e-8 count as cosine 0 and set `degenerate`.
Prop1Report check_proposition1(const Critic& f, const TransportPlan& plan, const PointCloud& real,
                               const PointCloud& fake, std::span<const double> t_grid);

struct Lemma2Report {
  double max_residual = 0.0;           // max |(f(x) - f(y)) / k - d(x, y)|
  double max_relative_residual = 0.0;  // same, divided by d(x, y)
  std::size_t skipped_pairs = 0;
};

/// Normalized potential difference on matched pairs. Throws on k_hat <= 0.
Lemma2Report check_lemma2(const Critic& f, const TransportPlan& plan, const PointCloud& real,
                          const PointCloud& fake, double k_hat);

/// mean f(a) - mean f(b).
double dual_objective(const Critic& f, const PointCloud& a, const PointCloud& b);

/// max over all (x in a, y in b), x != y, of |f(x) - f(y)| / |x - y|: the
/// smallest k for which f / k meets every constraint of the support-restricted
/// dual, so dual_objective / k <= W1 holds exactly.
double pairwise_lipschitz(const Critic& f, const PointCloud& a, const PointCloud& b);

/// Default t grid for the alignment check: 0, 0.1, ..., 1.
std::vector<double> default_t_grid();

/// Threshold below which a gradient is treated as zero.
inline constexpr double kDegenerateGradient = 1e-8;

} // namespace lipgan
