#include "lipgan/transport.hpp"

#include "lipgan/regularizers.hpp"

#include <algorithm>
#include <fstream>
#include <iomanip>
#include <sstream>

namespace lipgan {

PointCloud read_point_cloud(std::istream& in) {
  std::string line;
  long dim = -1;
  std::vector<std::vector<double>> rows;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    std::istringstream fields(line);
    std::vector<double> values;
    double v = 0.0;
    while (fields >> v) values.push_back(v);
    if (!fields.eof()) {
      throw std::runtime_error("point cloud line " + std::to_string(line_no) +
                               ": not a number");
    }
    if (values.empty()) continue;
    if (dim < 0) {
      if (values.size() != 1 || values[0] < 1 || values[0] != static_cast<long>(values[0])) {
        throw std::runtime_error("point cloud line " + std::to_string(line_no) +
                                 ": expected dimension header");
      }
      dim = static_cast<long>(values[0]);
      continue;
    }
    if (static_cast<long>(values.size()) != dim) {
      throw std::runtime_error("point cloud line " + std::to_string(line_no) + ": expected " +
                               std::to_string(dim) + " coordinates, got " +
                               std::to_string(values.size()));
    }
    rows.push_back(std::move(values));
  }
  if (dim < 0 || rows.empty()) throw std::runtime_error("point cloud is empty");
  Eigen::MatrixXd points(static_cast<Eigen::Index>(rows.size()), dim);
  for (std::size_t i = 0; i < rows.size(); ++i) {
    for (long j = 0; j < dim; ++j) points(static_cast<Eigen::Index>(i), j) = rows[i][j];
  }
  return PointCloud(std::move(points));
}

PointCloud read_point_cloud(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot read point cloud " + path);
  return read_point_cloud(in);
}

void write_point_cloud(std::ostream& out, const PointCloud& cloud) {
  out << std::setprecision(17) << cloud.dim() << '\n';
  for (Eigen::Index i = 0; i < cloud.size(); ++i) {
    for (Eigen::Index j = 0; j < cloud.dim(); ++j) {
      if (j > 0) out << ' ';
      out << cloud.points()(i, j);
    }
    out << '\n';
  }
}

std::vector<double> default_t_grid() {
  std::vector<double> grid;
  for (int i = 0; i <= 10; ++i) grid.push_back(i / 10.0);
  return grid;
}

namespace {

void require_matching(const TransportPlan& plan, const PointCloud& real, const PointCloud& fake) {
  if (real.dim() != fake.dim() || static_cast<Eigen::Index>(plan.size()) != real.size() ||
      real.size() != fake.size()) {
    throw std::invalid_argument("plan does not match the point clouds");
  }
}

} // namespace

Prop1Report check_proposition1(const Critic& f, const TransportPlan& plan, const PointCloud& real,
                               const PointCloud& fake, std::span<const double> t_grid) {
  require_matching(plan, real, fake);
  Prop1Report report;
  std::vector<Eigen::RowVectorXd> points, directions;
  for (std::size_t i = 0; i < plan.size(); ++i) {
    const Eigen::RowVectorXd x = real.point(static_cast<Eigen::Index>(i));
    const Eigen::RowVectorXd y = fake.point(plan.target[i]);
    const double d = (x - y).norm();
    if (d == 0.0) {
      ++report.skipped_pairs;
      continue;
    }
    for (double t : t_grid) {
      points.push_back(interpolate(x, y, t));
      directions.push_back((x - y) / d);
    }
  }
  if (points.empty()) {
    report.degenerate = true;
    return report;
  }

  Tensor batch(static_cast<Eigen::Index>(points.size()), real.dim());
  for (std::size_t i = 0; i < points.size(); ++i) batch.row(static_cast<Eigen::Index>(i)) = points[i];
  const Tensor grads = input_gradients(f, batch);

  report.min_cosine = 1.0;
  double cos_sum = 0.0, dev_sum = 0.0;
  for (Eigen::Index i = 0; i < grads.rows(); ++i) {
    const double norm = grads.row(i).norm();
    double cosine = 0.0;
    if (norm < kDegenerateGradient) {
      report.degenerate = true;
    } else {
      cosine = grads.row(i).dot(directions[static_cast<std::size_t>(i)]) / norm;
    }
    const double deviation = std::abs(norm - 1.0);
    report.min_cosine = std::min(report.min_cosine, cosine);
    report.max_norm_deviation = std::max(report.max_norm_deviation, deviation);
    cos_sum += cosine;
    dev_sum += deviation;
  }
  report.evaluated = static_cast<std::size_t>(grads.rows());
  report.mean_cosine = cos_sum / static_cast<double>(grads.rows());
  report.mean_norm_deviation = dev_sum / static_cast<double>(grads.rows());
  return report;
}

Lemma2Report check_lemma2(const Critic& f, const TransportPlan& plan, const PointCloud& real,
                          const PointCloud& fake, double k_hat) {
  if (!(k_hat > 0.0)) throw std::invalid_argument("check_lemma2: k_hat must be > 0");
  require_matching(plan, real, fake);
  NoGradGuard no_grad;
  const Tensor f_real = f(constant(real.points())).value();
  const Tensor f_fake = f(constant(fake.points())).value();
  Lemma2Report report;
  for (std::size_t i = 0; i < plan.size(); ++i) {
    const auto r = static_cast<Eigen::Index>(i);
    const Eigen::Index g = plan.target[i];
    const double d = (real.point(r) - fake.point(g)).norm();
    if (d == 0.0) {
      ++report.skipped_pairs;
      continue;
    }
    const double residual = std::abs((f_real(r, 0) - f_fake(g, 0)) / k_hat - d);
    report.max_residual = std::max(report.max_residual, residual);
    report.max_relative_residual = std::max(report.max_relative_residual, residual / d);
  }
  return report;
}

double dual_objective(const Critic& f, const PointCloud& a, const PointCloud& b) {
  NoGradGuard no_grad;
  return f(constant(a.points())).value().mean() - f(constant(b.points())).value().mean();
}

double pairwise_lipschitz(const Critic& f, const PointCloud& a, const PointCloud& b) {
  NoGradGuard no_grad;
  const Tensor fa = f(constant(a.points())).value();
  const Tensor fb = f(constant(b.points())).value();
  double best = 0.0;
  for (Eigen::Index i = 0; i < a.size(); ++i) {
    for (Eigen::Index j = 0; j < b.size(); ++j) {
      const double d = (a.point(i) - b.point(j)).norm();
      if (d > 0.0) best = std::max(best, std::abs(fa(i, 0) - fb(j, 0)) / d);
    }
  }
  return best;
}

} // namespace lipgan
