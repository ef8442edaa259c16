#pragma once

// Tabular views of a trained critic: gradient fields over a 2-D box and
// gradient-ascent increment paths from fake points.

#include "lipgan/nn.hpp"
#include "lipgan/transport.hpp"

#include <Eigen/Dense>

#include <iosfwd>
#include <span>
#include <vector>

namespace lipgan {

struct Box2 {
  double x_min = -1.0, x_max = 1.0;
  double y_min = -1.0, y_max = 1.0;

  void validate() const;
};

/// Rows of (x1, x2, df/dx1, df/dx2, |grad f|), x1 varying fastest.
struct FieldTable {
  Eigen::MatrixXd rows;
  Eigen::Index resolution = 0;
};

/// Gradient of f on a resolution x resolution grid spanning the box. A 1 x 1
/// grid is the box center. Throws std::invalid_argument unless f takes 2-D
/// input.
FieldTable export_gradient_field(const Critic& f, Eigen::Index input_dim, const Box2& box,
                                 Eigen::Index resolution);

void write_field_csv(std::ostream& out, const FieldTable& field);

/// Arrow plot of the field (unit-length arrows, shaded by |grad f|) with
/// optional real and fake points overlaid.
void write_field_svg(std::ostream& out, const FieldTable& field, const Box2& box,
                     const Eigen::MatrixXd* real = nullptr, const Eigen::MatrixXd* fake = nullptr);

/// x + eps * grad f(x) for each eps, with distances to every target point.
struct IncrementPath {
  std::vector<double> eps;
  Eigen::MatrixXd points;     // one row per eps
  Eigen::MatrixXd distances;  // eps x target count
  /// Target point closest to any point on the path.
  Eigen::Index nearest = -1;
  double nearest_distance = 0.0;
  bool degenerate = false;  // |grad f(x)| < 1e-8
};

IncrementPath export_increment_path(const Critic& f, const Eigen::RowVectorXd& x,
                                    std::span<const double> eps, const PointCloud& targets);

/// `count` evenly spaced values in [0, 1.5 * distance].
std::vector<double> increment_eps_grid(double distance, int count = 32);

} // namespace lipgan
