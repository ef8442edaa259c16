// Acceptance suite: one PASS/FAIL line per criterion.
//
// Training configurations come from the files in specs/, so the numbers here
// are the ones a user gets from `lipgan run`. Oracles (finite differences,
// permutation enumeration, SVD, grid scans) live in tests/support.hpp.
//
// Exit status is 0 when every criterion passes, or fails only where listed
// with --xfail.

#include "support.hpp"

#include "lipgan/experiments.hpp"

#include <CLI11.hpp>
#include <Eigen/QR>
#include <Eigen/SVD>

#include <chrono>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <set>
#include <sstream>

#ifndef LIPGAN_SPEC_DIR
#define LIPGAN_SPEC_DIR "specs"
#endif

using namespace lipgan;
namespace fs = std::filesystem;

namespace {

struct Verdict {
  bool pass = false;
  std::string detail;
};

std::string spec_dir = LIPGAN_SPEC_DIR;

ExperimentSpec spec_named(const std::string& file, std::uint64_t seed) {
  ExperimentSpec s = load_spec((fs::path(spec_dir) / file).string());
  s.train.seed = seed;
  s.data.seed.reset();
  return s;
}

std::string fmt(double v, int precision = 4) {
  std::ostringstream out;
  out << std::setprecision(precision) << v;
  return out.str();
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

// 1 --------------------------------------------------------------------------

Verdict autodiff_correctness() {
  double first = 0.0, second = 0.0;
  for (int seed = 0; seed < 100; ++seed) {
    std::mt19937_64 rng(static_cast<std::uint64_t>(seed));
    const Eigen::Index in = 1 + seed % 4;
    const ModelParams params =
        testing::random_mlp(rng, in, seed % 3 == 2 ? Activation::tanh : Activation::leaky_relu);
    const Tensor x = testing::uniform_matrix(rng, 4, in);

    auto value = [&](const ModelParams& p, const Tensor& input) {
      NoGradGuard guard;
      return sum(square(mlp_forward(p, constant(input)))).item();
    };
    {
      const BoundModel model(params, true);
      const Var xv = variable(x);
      std::vector<Var> wrt = model.leaves();
      wrt.push_back(xv);
      const auto analytic = backward(sum(square(model.forward(xv))), wrt);
      auto fd = testing::fd_param_gradient([&](const ModelParams& p) { return value(p, x); }, params);
      fd.push_back(testing::fd_input_gradient([&](const Tensor& t) { return value(params, t); }, x));
      first = std::max(first, testing::relative_error(analytic, fd));
    }
    {
      auto penalty = [&](const ModelParams& p) {
        const Var xv = variable(x);
        return mean(square(add_scalar(grad_norm(mlp_forward(p, xv), xv), -1.0))).item();
      };
      const BoundModel model(params, true);
      const Var xv = variable(x);
      const Var root = mean(square(add_scalar(grad_norm(model.forward(xv), xv), -1.0)));
      const auto analytic = backward(root, model.leaves());
      second = std::max(second, testing::relative_error(analytic, testing::fd_param_gradient(penalty, params)));
    }
  }
  return {first <= 1e-4 && second <= 1e-3,
          "100 MLPs: first-order rel err " + fmt(first, 3) + " (<= 1e-4), second-order " +
              fmt(second, 3) + " (<= 1e-3)"};
}

// 2 --------------------------------------------------------------------------

Verdict ot_exactness() {
  std::mt19937_64 rng(2);
  int mismatches = 0;
  for (int trial = 0; trial < 200; ++trial) {
    const Eigen::Index n = 1 + trial % 6;
    const Eigen::MatrixXd a = testing::uniform_matrix(rng, n, 2);
    const Eigen::MatrixXd b = testing::uniform_matrix(rng, n, 2);
    const double w = exact_w1(PointCloud(a), PointCloud(b)).first;
    mismatches += w != testing::brute_force_w1(a, b);
  }
  return {mismatches == 0, "200 instances n <= 6: " + std::to_string(mismatches) +
                               " differ from n! enumeration (exact equality)"};
}

// 3 --------------------------------------------------------------------------

Verdict alignment_maxgp() {
  double min_cos = 1.0, max_res = 0.0;
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    const ExperimentSpec s = spec_named("toy2d_maxgp.yaml", seed);
    const auto [real, fake] = make_clouds(s);
    const FitResult r = fit_discriminator(real, fake, s.train);
    min_cos = std::min(min_cos, r.records.back().prop1_min_cosine.value_or(-1.0));
    max_res = std::max(max_res, r.records.back().lemma2_max_residual.value_or(1.0));
  }
  return {min_cos >= 0.99 && max_res <= 0.05,
          "10 instances: min cosine " + fmt(min_cos, 6) + " (>= 0.99), slope residual " +
              fmt(max_res, 3) + " d(x,y) (<= 0.05)"};
}

// 4 --------------------------------------------------------------------------

double scan_k_star(double w1, double rho, double h) {
  double best_k = 0.0, best = -std::numeric_limits<double>::infinity();
  const long steps = static_cast<long>(std::ceil((w1 / rho + 3.0) / h));
  for (long i = 0; i <= steps; ++i) {
    const double k = static_cast<double>(i) * h;
    const double v = k * w1 - 0.5 * rho * (k - 1.0) * (k - 1.0);
    if (v > best) {
      best = v;
      best_k = k;
    }
  }
  return best_k;
}

Verdict kstar_drift() {
  const ExperimentSpec s = spec_named("kstar_sweep_gp.yaml", 0);
  const auto [real, fake] = make_clouds(s);
  std::string detail = "W1 = ";
  bool pass = true;
  for (double rho : {1.0, 10.0, 100.0}) {
    TrainConfig c = s.train;
    c.regularizer.rho = rho;
    std::vector<MetricsRow> rows;
    const FitResult r = fit_discriminator(real, fake, c, [&](const MetricsRecord& m) {
      rows.push_back({"run", rho, m});
    });
    if (rho == 1.0) detail += fmt(r.w1) + ";";
    const double k_hat = tail_mean(rows, "run", &MetricsRecord::lipschitz_estimate).value_or(0.0);
    const double k_star = predicted_k_star(r.w1, rho);
    const double rel = std::abs(k_hat - k_star) / k_star;
    pass = pass && rel <= 0.10;
    detail += " rho=" + fmt(rho) + ": k_hat " + fmt(k_hat) + " vs " + fmt(k_star) + " (" + fmt(100 * rel, 2) + "%)";
  }
  double scan_err = 0.0;
  std::mt19937_64 rng(4);
  std::uniform_real_distribution<double> w(0.01, 10.0), r(0.1, 100.0);
  for (int i = 0; i < 100; ++i) {
    const double w1 = w(rng), rho = r(rng);
    scan_err = std::max(scan_err, std::abs(scan_k_star(w1, rho, 1e-4) - predicted_k_star(w1, rho)));
  }
  pass = pass && scan_err <= 1e-4;
  return {pass, detail + "; scan |diff| " + fmt(scan_err, 2) + " (<= 1e-4)"};
}

// 5 --------------------------------------------------------------------------

Verdict maxal_strictness() {
  long worst_reach = 0;
  double worst_after = 0.0;
  bool pass = true;
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    const ExperimentSpec s = spec_named("maxal_slopes.yaml", seed);
    const auto [real, fake] = make_clouds(s);
    const FitResult r = fit_discriminator(real, fake, s.train);
    const double cut = 0.2 * static_cast<double>(s.train.iterations);
    long reach = -1;
    double after = 0.0;
    for (const MetricsRecord& m : r.records) {
      const double dev = std::abs(*m.lipschitz_estimate - 1.0);
      if (static_cast<double>(m.iteration) <= cut) {
        if (reach < 0 && dev <= 0.02) reach = m.iteration;
      } else {
        after = std::max(after, dev);
      }
    }
    pass = pass && reach >= 0 && after <= 0.05;
    worst_reach = reach < 0 ? s.train.iterations : std::max(worst_reach, reach);
    worst_after = std::max(worst_after, after);
  }
  return {pass, "10 instances: 1 +- 0.02 reached by iteration " + std::to_string(worst_reach) +
                    " (<= 20%), worst |k_hat - 1| after 20% " + fmt(worst_after, 3) + " (<= 0.05)"};
}

// 6 --------------------------------------------------------------------------

Verdict lambda_w1() {
  double worst = 0.0;
  std::string one_d;
  auto relative_error = [&](const ExperimentSpec& s) {
    const auto [real, fake] = make_clouds(s);
    std::vector<MetricsRow> rows;
    const FitResult r = fit_discriminator(real, fake, s.train, [&](const MetricsRecord& m) {
      rows.push_back({"run", s.train.regularizer.rho, m});
    });
    const double lambda = tail_mean(rows, "run", &MetricsRecord::lambda).value_or(0.0);
    return std::pair{lambda, std::abs(-lambda - r.w1) / r.w1};
  };
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    worst = std::max(worst, relative_error(spec_named("lambda_track.yaml", seed)).second);
  }
  ExperimentSpec line = spec_named("lambda_track.yaml", 0);
  line.data.real = Eigen::MatrixXd::Constant(1, 1, 2.0);
  line.data.fake = Eigen::MatrixXd::Zero(1, 1);
  const auto [lambda, rel] = relative_error(line);
  worst = std::max(worst, rel);
  return {worst <= 0.05, "10 2-D instances + 1-D {2} vs {0} (lambda " + fmt(lambda) +
                             ", W1 2): worst |-lambda - W1| / W1 " + fmt(100 * worst, 3) + "% (<= 5%)"};
}

// 7 --------------------------------------------------------------------------

Verdict spectral_bound() {
  double worst_quotient = 0.0, tight_quotient = 0.0;
  std::mt19937_64 rng(7);
  for (Activation act : {Activation::relu, Activation::leaky_relu, Activation::tanh}) {
    MlpShape shape;
    shape.input_dim = 4;
    shape.hidden = {32, 32};
    shape.hidden_activation = act;
    ModelParams p = init_mlp(shape, rng);
    for (auto& l : p.layers) l.weight *= 3.0;
    enable_spectral_norm(p, rng, 1);
    for (int i = 0; i < 50; ++i) update_spectral_state(p);
    const Critic f = frozen_critic(p);
    const Tensor a = testing::normal_matrix(rng, 10000, 4);
    const Tensor b = a + 0.5 * testing::normal_matrix(rng, 10000, 4);
    const Tensor fa = f(constant(a)).value(), fb = f(constant(b)).value();
    for (Eigen::Index i = 0; i < a.rows(); ++i) {
      worst_quotient = std::max(worst_quotient, std::abs(fa(i, 0) - fb(i, 0)) / (a.row(i) - b.row(i)).norm());
    }
  }
  // Orthogonal square layers sit on the bound; stepping along the input gradient
  // pushes quotients toward 1, so a loose normalization would show up here.
  for (Activation act : {Activation::leaky_relu, Activation::tanh}) {
    MlpShape shape;
    shape.input_dim = 4;
    shape.hidden = {4, 4};
    shape.hidden_activation = act;
    ModelParams p = init_mlp(shape, rng);
    for (auto& l : p.layers) {
      if (l.weight.rows() == l.weight.cols()) {
        l.weight = Eigen::HouseholderQR<Eigen::MatrixXd>(testing::normal_matrix(rng, 4, 4)).householderQ();
      } else {
        l.weight.normalize();
      }
      l.weight *= 3.0;
      l.bias.setZero();
    }
    enable_spectral_norm(p, rng, 1);
    for (int i = 0; i < 50; ++i) update_spectral_state(p);
    const Critic f = frozen_critic(p);
    const Tensor a = 0.05 * testing::normal_matrix(rng, 10000, 4);
    const Tensor g = input_gradients(f, a);
    Tensor b = a;
    for (Eigen::Index i = 0; i < a.rows(); ++i) b.row(i) += 1e-3 * g.row(i).normalized();
    const Tensor fa = f(constant(a)).value(), fb = f(constant(b)).value();
    for (Eigen::Index i = 0; i < a.rows(); ++i) {
      const double q = std::abs(fa(i, 0) - fb(i, 0)) / (a.row(i) - b.row(i)).norm();
      worst_quotient = std::max(worst_quotient, q);
      tight_quotient = std::max(tight_quotient, q);
    }
  }
  double worst_sigma = 0.0;
  for (int trial = 0; trial < 50; ++trial) {
    const Eigen::MatrixXd w = testing::normal_matrix(rng, 8, 8);
    const Eigen::VectorXd u = testing::normal_matrix(rng, 8, 1).normalized();
    const Eigen::VectorXd v = testing::normal_matrix(rng, 8, 1).normalized();
    const double svd = Eigen::JacobiSVD<Eigen::MatrixXd>(w).singularValues()(0);
    worst_sigma = std::max(worst_sigma, std::abs(power_iteration_sigma(w, u, v, 1000).sigma - svd));
  }
  return {worst_quotient <= 1.0 + 1e-3 && worst_sigma <= 1e-4,
          "5 SN nets x 1e4 pairs: max quotient " + fmt(worst_quotient, 10) + " (orthogonal nets reach " +
              fmt(tight_quotient, 10) + ")" +
              " (<= 1.001); 50 8x8 matrices: |sigma - SVD| " + fmt(worst_sigma, 2) + " (<= 1e-4)"};
}

// 8 --------------------------------------------------------------------------

int increment_hits(const std::string& file, std::uint64_t seed) {
  const ExperimentSpec s = spec_named(file, seed);
  const auto [real, fake] = make_clouds(s);
  const FitResult r = fit_discriminator(real, fake, s.train);
  const Critic f = frozen_critic(r.discriminator);
  int hits = 0;
  for (std::size_t i = 0; i < r.plan.size(); ++i) {
    const auto matched = static_cast<Eigen::Index>(i);
    const Eigen::RowVectorXd x = fake.point(r.plan.target[i]);
    const auto eps = increment_eps_grid((real.point(matched) - x).norm());
    hits += export_increment_path(f, x, eps, real).nearest == matched;
  }
  return hits;
}

Verdict increment_paths() {
  const int maxgp = increment_hits("toycloud_maxgp.yaml", 0);
  const int gp = increment_hits("toycloud_gp.yaml", 0);
  std::string others;
  for (std::uint64_t seed = 1; seed < 5; ++seed) {
    others += (seed > 1 ? " " : "") + std::to_string(increment_hits("toycloud_maxgp.yaml", seed));
  }
  return {maxgp >= 9, "MAXGP " + std::to_string(maxgp) + "/10 (>= 9); GP report " +
                          std::to_string(gp) + "/10; MAXGP on seeds 1-4: " + others};
}

// 9 --------------------------------------------------------------------------

Verdict gan_sanity() {
  const ExperimentSpec s = spec_named("gan2d_maxgp.yaml", 0);
  const fs::path root = fs::temp_directory_path() / "lipgan-acceptance";
  fs::remove_all(root);
  RunOptions a, b;
  a.output_root = root / "a";
  b.output_root = root / "b";
  const RunOutcome first = run_experiment(s, a);
  const RunOutcome second = run_experiment(s, b);
  auto bytes = [](const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    return std::string(std::istreambuf_iterator<char>(in), {});
  };
  const bool identical = bytes(first.directory / "metrics.csv") == bytes(second.directory / "metrics.csv");
  const double w0 = *first.rows.front().record.w1, w_end = *first.rows.back().record.w1;
  const double drop = 1.0 - w_end / w0;
  return {drop >= 0.5 && identical && s.train.iterations <= 20000,
          "W1 " + fmt(w0) + " -> " + fmt(w_end) + " over " + std::to_string(s.train.iterations) +
              " iterations, drop " + fmt(100 * drop, 3) + "% (>= 50%); rerun metrics.csv " +
              (identical ? "byte-identical" : "DIFFERS")};
}

// 10 -------------------------------------------------------------------------

Verdict regularizer_algebra() {
  std::mt19937_64 rng(10);
  int maxal_mismatch = 0, lp_below = 0, fixed_point_wrong = 0;
  for (int trial = 0; trial < 1000; ++trial) {
    const ModelParams p = testing::random_mlp(rng, 2);
    const Critic f = frozen_critic(p);
    const Tensor points = testing::normal_matrix(rng, 16, 2) * 2.0;
    const double rho = std::uniform_real_distribution<double>(0.0, 50.0)(rng);
    const double k = std::uniform_real_distribution<double>(0.25, 2.0)(rng);

    RegularizerState al, gp;
    al.kind = RegularizerKind::maxal;
    gp.kind = RegularizerKind::maxgp;
    al.rho = gp.rho = rho;
    al.target = gp.target = k;
    const MaxGradientTerm ta = reg_maxal(f, points, al), tg = reg_maxgp(f, points, gp);
    maxal_mismatch += ta.value.item() != tg.value.item() || ta.g_max != tg.g_max;

    lp_below += reg_lp(f, points, rho, k).item() < reg_gp(f, points, rho, k).item();

    RegularizerState s = al;
    s.rho = rho + 0.5;
    s.lambda = std::normal_distribution<double>()(rng);
    const double before = s.lambda;
    update_lambda(s, k);
    fixed_point_wrong += s.lambda != before;
    update_lambda(s, ta.g_max);
    fixed_point_wrong += (s.lambda != before) != (ta.g_max != k);
  }
  return {maxal_mismatch == 0 && lp_below == 0 && fixed_point_wrong == 0,
          "1000 batches: maxal(0) != maxgp " + std::to_string(maxal_mismatch) + ", lp < gp " +
              std::to_string(lp_below) + ", fixed-point violations " + std::to_string(fixed_point_wrong)};
}

struct Criterion {
  int id;
  const char* name;
  double budget_s;  // runtime limit, 0 when none is stated
  Verdict (*run)();
};

const Criterion kCriteria[] = {
    {1, "autodiff-correctness", 60, autodiff_correctness},
    {2, "ot-oracle-exactness", 60, ot_exactness},
    {3, "alignment-maxgp", 300, alignment_maxgp},
    {4, "kstar-drift", 0, kstar_drift},
    {5, "maxal-strictness", 0, maxal_strictness},
    {6, "lambda-w1", 0, lambda_w1},
    {7, "spectral-norm-bound", 0, spectral_bound},
    {8, "increment-paths", 600, increment_paths},
    {9, "gan-sanity", 0, gan_sanity},
    {10, "regularizer-algebra", 0, regularizer_algebra},
};

} // namespace

int main(int argc, char** argv) {
  CLI::App app{"Acceptance criteria, one line each"};
  std::vector<int> only, xfail;
  app.add_option("--only", only, "Run only these criteria");
  app.add_option("--xfail", xfail, "Criteria known not to be met; their failure does not fail the run");
  app.add_option("--specs", spec_dir, "Directory holding the spec files")->capture_default_str();
  CLI11_PARSE(app, argc, argv);
  const std::set<int> selected(only.begin(), only.end()), expected(xfail.begin(), xfail.end());

  int unexpected = 0, passed = 0, total = 0;
  for (const Criterion& c : kCriteria) {
    if (!selected.empty() && !selected.count(c.id)) continue;
    const auto t0 = std::chrono::steady_clock::now();
    Verdict v;
    try {
      v = c.run();
    } catch (const std::exception& e) {
      v = {false, std::string("error: ") + e.what()};
    }
    const double secs = seconds_since(t0);
    const bool in_budget = c.budget_s == 0 || secs < c.budget_s;
    const bool pass = v.pass && in_budget;
    std::string timing = fmt(secs, 3) + " s";
    if (c.budget_s > 0) timing += " (< " + fmt(c.budget_s) + " s)";
    std::string tag = pass ? "PASS" : "FAIL";
    if (!pass && expected.count(c.id)) tag = "FAIL (expected)";
    std::printf("[%s] %2d %-22s %s; %s\n", tag.c_str(), c.id, c.name, v.detail.c_str(), timing.c_str());
    std::fflush(stdout);
    ++total;
    passed += pass;
    unexpected += !pass && !expected.count(c.id);
  }
  std::printf("%d/%d criteria passed\n", passed, total);
  return unexpected == 0 ? 0 : 1;
}
