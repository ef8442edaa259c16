#include "lipgan/exports.hpp"

#include "lipgan/regularizers.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <ostream>
#include <stdexcept>

namespace lipgan {

void Box2::validate() const {
  if (!(std::isfinite(x_min) && std::isfinite(x_max) && std::isfinite(y_min) &&
        std::isfinite(y_max))) {
    throw std::invalid_argument("box bounds must be finite");
  }
  if (!(x_min < x_max && y_min < y_max)) throw std::invalid_argument("box must have min < max");
}

namespace {

double grid_coordinate(double lo, double hi, Eigen::Index i, Eigen::Index n) {
  if (n == 1) return 0.5 * (lo + hi);
  return lo + (hi - lo) * static_cast<double>(i) / static_cast<double>(n - 1);
}

} // namespace

FieldTable export_gradient_field(const Critic& f, Eigen::Index input_dim, const Box2& box,
                                 Eigen::Index resolution) {
  if (input_dim != 2) {
    throw std::invalid_argument("gradient field needs a 2-D model, got input dimension " +
                                std::to_string(input_dim));
  }
  if (resolution < 1) throw std::invalid_argument("grid resolution must be >= 1");
  box.validate();
  Tensor points(resolution * resolution, 2);
  for (Eigen::Index j = 0; j < resolution; ++j) {
    for (Eigen::Index i = 0; i < resolution; ++i) {
      points(j * resolution + i, 0) = grid_coordinate(box.x_min, box.x_max, i, resolution);
      points(j * resolution + i, 1) = grid_coordinate(box.y_min, box.y_max, j, resolution);
    }
  }
  const Tensor grads = input_gradients(f, points);
  FieldTable field;
  field.resolution = resolution;
  field.rows.resize(points.rows(), 5);
  field.rows.leftCols(2) = points;
  field.rows.middleCols(2, 2) = grads;
  field.rows.col(4) = grads.rowwise().norm();
  return field;
}

void write_field_csv(std::ostream& out, const FieldTable& field) {
  out << "x1,x2,df_dx1,df_dx2,grad_norm\n" << std::setprecision(17);
  for (Eigen::Index r = 0; r < field.rows.rows(); ++r) {
    for (Eigen::Index c = 0; c < 5; ++c) out << (c ? "," : "") << field.rows(r, c);
    out << '\n';
  }
}

void write_field_svg(std::ostream& out, const FieldTable& field, const Box2& box,
                     const Eigen::MatrixXd* real, const Eigen::MatrixXd* fake) {
  constexpr double size = 480.0, margin = 20.0;
  const double sx = size / (box.x_max - box.x_min);
  const double sy = size / (box.y_max - box.y_min);
  auto px = [&](double x) { return margin + (x - box.x_min) * sx; };
  auto py = [&](double y) { return margin + (box.y_max - y) * sy; };
  const double cell = size / static_cast<double>(std::max<Eigen::Index>(field.resolution, 1));
  const double max_norm = field.rows.rows() ? field.rows.col(4).maxCoeff() : 0.0;

  out << std::setprecision(6);
  out << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << size + 2 * margin
      << "\" height=\"" << size + 2 * margin << "\">\n";
  out << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  for (Eigen::Index r = 0; r < field.rows.rows(); ++r) {
    const double norm = field.rows(r, 4);
    if (norm < kDegenerateGradient) continue;
    // Screen y grows downward.
    const double dx = field.rows(r, 2) / norm * 0.4 * cell;
    const double dy = -field.rows(r, 3) / norm * 0.4 * cell;
    const double x0 = px(field.rows(r, 0)), y0 = py(field.rows(r, 1));
    const int shade = max_norm > 0.0 ? static_cast<int>(200.0 * (1.0 - norm / max_norm)) : 0;
    out << "<line x1=\"" << x0 - dx << "\" y1=\"" << y0 - dy << "\" x2=\"" << x0 + dx
        << "\" y2=\"" << y0 + dy << "\" stroke=\"rgb(" << shade << "," << shade << ",255)\"/>\n";
    out << "<circle cx=\"" << x0 + dx << "\" cy=\"" << y0 + dy
        << "\" r=\"1.5\" fill=\"rgb(" << shade << "," << shade << ",255)\"/>\n";
  }
  auto dots = [&](const Eigen::MatrixXd* cloud, const char* color) {
    if (!cloud || cloud->cols() != 2) return;
    for (Eigen::Index i = 0; i < cloud->rows(); ++i) {
      out << "<circle cx=\"" << px((*cloud)(i, 0)) << "\" cy=\"" << py((*cloud)(i, 1))
          << "\" r=\"5\" fill=\"" << color << "\"/>\n";
    }
  };
  dots(real, "red");
  dots(fake, "black");
  out << "</svg>\n";
}

IncrementPath export_increment_path(const Critic& f, const Eigen::RowVectorXd& x,
                                    std::span<const double> eps, const PointCloud& targets) {
  if (x.size() != targets.dim()) {
    throw ShapeError("export_increment_path", "point of dimension " + std::to_string(x.size()) +
                                                  " with targets of dimension " +
                                                  std::to_string(targets.dim()));
  }
  if (eps.empty()) throw std::invalid_argument("export_increment_path: empty eps grid");
  const Eigen::RowVectorXd g = input_gradients(f, x).row(0);

  IncrementPath path;
  path.eps.assign(eps.begin(), eps.end());
  path.degenerate = g.norm() < kDegenerateGradient;
  const auto n = static_cast<Eigen::Index>(eps.size());
  path.points.resize(n, x.size());
  path.distances.resize(n, targets.size());
  path.nearest_distance = std::numeric_limits<double>::infinity();
  for (Eigen::Index e = 0; e < n; ++e) {
    path.points.row(e) = x + eps[static_cast<std::size_t>(e)] * g;
    for (Eigen::Index t = 0; t < targets.size(); ++t) {
      const double d = (path.points.row(e) - targets.point(t)).norm();
      path.distances(e, t) = d;
      if (d < path.nearest_distance) {
        path.nearest_distance = d;
        path.nearest = t;
      }
    }
  }
  return path;
}

std::vector<double> increment_eps_grid(double distance, int count) {
  if (!(distance >= 0.0) || !std::isfinite(distance)) {
    throw std::invalid_argument("increment_eps_grid: distance must be finite and >= 0");
  }
  if (count < 2) throw std::invalid_argument("increment_eps_grid: count must be >= 2");
  std::vector<double> grid(static_cast<std::size_t>(count));
  for (int i = 0; i < count; ++i) grid[static_cast<std::size_t>(i)] = 1.5 * distance * i / (count - 1);
  return grid;
}

} // namespace lipgan
