#include "lipgan/experiments.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <functional>
#include <iomanip>
#include <limits>
#include <map>
#include <sstream>

namespace lipgan {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

using Field = std::optional<double> MetricsRecord::*;

struct Column {
  const char* name;
  Field field;
};

// The value columns of metrics.csv, in order, after run, rho, iteration.
constexpr Column kColumns[] = {
    {"d_loss", &MetricsRecord::d_loss},
    {"g_loss", &MetricsRecord::g_loss},
    {"dual_objective", &MetricsRecord::dual_objective},
    {"lipschitz_estimate", &MetricsRecord::lipschitz_estimate},
    {"pairwise_lipschitz", &MetricsRecord::pairwise_lipschitz},
    {"lambda", &MetricsRecord::lambda},
    {"g_max", &MetricsRecord::g_max},
    {"w1", &MetricsRecord::w1},
    {"prop1_min_cosine", &MetricsRecord::prop1_min_cosine},
    {"prop1_mean_cosine", &MetricsRecord::prop1_mean_cosine},
    {"lemma2_max_residual", &MetricsRecord::lemma2_max_residual},
};

void write_optional(std::ostream& out, const std::optional<double>& v) {
  if (v) out << *v;
}

std::optional<double> parse_optional(const std::string& cell) {
  if (cell.empty()) return std::nullopt;
  return std::stod(cell);
}

std::vector<std::string> split_csv(const std::string& line) {
  std::vector<std::string> cells;
  std::string cell;
  std::istringstream in(line);
  while (std::getline(in, cell, ',')) cells.push_back(cell);
  if (!line.empty() && line.back() == ',') cells.emplace_back();
  return cells;
}

} // namespace

std::string metrics_csv_header() {
  std::string header = "run,rho,iteration";
  for (const Column& c : kColumns) header += std::string(",") + c.name;
  return header;
}

void write_metrics_row(std::ostream& out, const MetricsRow& row) {
  out << std::setprecision(17) << row.run << ',';
  write_optional(out, row.rho);
  out << ',' << row.record.iteration;
  for (const Column& c : kColumns) {
    out << ',';
    write_optional(out, row.record.*c.field);
  }
  out << '\n';
}

std::vector<MetricsRow> read_metrics_csv(std::istream& in) {
  std::string line;
  if (!std::getline(in, line) || line != metrics_csv_header()) {
    throw std::runtime_error("metrics.csv: unexpected header");
  }
  std::vector<MetricsRow> rows;
  int line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    const std::vector<std::string> cells = split_csv(line);
    if (cells.size() != 3 + std::size(kColumns)) {
      throw std::runtime_error("metrics.csv line " + std::to_string(line_no) +
                               ": wrong number of columns");
    }
    MetricsRow row;
    row.run = cells[0];
    row.rho = parse_optional(cells[1]);
    row.record.iteration = std::stol(cells[2]);
    for (std::size_t i = 0; i < std::size(kColumns); ++i) {
      row.record.*kColumns[i].field = parse_optional(cells[3 + i]);
    }
    rows.push_back(std::move(row));
  }
  return rows;
}

std::optional<double> tail_mean(const std::vector<MetricsRow>& rows, const std::string& run,
                                Field field) {
  long last = -1;
  for (const MetricsRow& r : rows) {
    if (r.run == run) last = std::max(last, r.record.iteration);
  }
  if (last < 0) return std::nullopt;
  const double cutoff = 0.75 * static_cast<double>(last);
  double sum = 0.0;
  long count = 0;
  for (const MetricsRow& r : rows) {
    if (r.run != run || static_cast<double>(r.record.iteration) <= cutoff) continue;
    if (const auto& v = r.record.*field) {
      sum += *v;
      ++count;
    }
  }
  if (count == 0) return std::nullopt;
  return sum / static_cast<double>(count);
}

namespace {

std::vector<std::string> run_names(const std::vector<MetricsRow>& rows) {
  std::vector<std::string> names;
  for (const MetricsRow& r : rows) {
    if (std::find(names.begin(), names.end(), r.run) == names.end()) names.push_back(r.run);
  }
  return names;
}

const MetricsRow* last_row(const std::vector<MetricsRow>& rows, const std::string& run) {
  const MetricsRow* last = nullptr;
  for (const MetricsRow& r : rows) {
    if (r.run == run) last = &r;
  }
  return last;
}

std::string fmt(double v) {
  std::ostringstream out;
  out << std::setprecision(6) << v;
  return out.str();
}

CheckResult check_runs(CheckKind kind, const std::vector<MetricsRow>& rows, double threshold,
                       bool larger_is_better,
                       const std::function<std::optional<double>(const std::string&)>& value_of) {
  CheckResult result;
  result.kind = kind;
  result.threshold = threshold;
  result.pass = true;
  const std::vector<std::string> runs = run_names(rows);
  if (runs.empty()) {
    result.pass = false;
    result.detail = "no metrics";
    return result;
  }
  bool first = true;
  for (const std::string& run : runs) {
    const std::optional<double> v = value_of(run);
    if (!v) {
      result.pass = false;
      result.detail += run + ": missing; ";
      continue;
    }
    const bool ok = larger_is_better ? *v >= threshold : *v <= threshold;
    if (!ok) {
      result.pass = false;
      result.detail += run + ": " + fmt(*v) + "; ";
    }
    if (first || (larger_is_better ? *v < result.value : *v > result.value)) result.value = *v;
    first = false;
  }
  if (first) result.value = std::numeric_limits<double>::quiet_NaN();
  if (!result.detail.empty()) result.detail = "failing runs: " + result.detail;
  return result;
}

} // namespace

std::vector<CheckResult> evaluate_checks(const ExperimentSpec& spec,
                                         const std::vector<MetricsRow>& rows,
                                         const std::vector<PathOutcome>& paths) {
  const Thresholds& t = spec.thresholds;
  std::vector<CheckResult> results;
  for (CheckKind kind : spec.checks) {
    switch (kind) {
    case CheckKind::prop1:
      results.push_back(check_runs(kind, rows, t.prop1_min_cosine, true, [&](const std::string& run) {
        return last_row(rows, run)->record.prop1_min_cosine;
      }));
      break;
    case CheckKind::lemma2:
      results.push_back(check_runs(kind, rows, t.lemma2_max_residual, false, [&](const std::string& run) {
        return last_row(rows, run)->record.lemma2_max_residual;
      }));
      break;
    case CheckKind::kstar:
      results.push_back(check_runs(kind, rows, t.kstar_relative, false,
                                   [&](const std::string& run) -> std::optional<double> {
        const MetricsRow* last = last_row(rows, run);
        const auto k = tail_mean(rows, run, &MetricsRecord::lipschitz_estimate);
        if (!k || !last->rho || !last->record.w1 || !(*last->rho > 0.0)) return std::nullopt;
        const double k_star = predicted_k_star(*last->record.w1, *last->rho);
        return std::abs(*k - k_star) / k_star;
      }));
      break;
    case CheckKind::lambda_w1:
      results.push_back(check_runs(kind, rows, t.lambda_relative, false,
                                   [&](const std::string& run) -> std::optional<double> {
        const MetricsRow* last = last_row(rows, run);
        const auto lambda = tail_mean(rows, run, &MetricsRecord::lambda);
        if (!lambda || !last->record.w1 || !(*last->record.w1 > 0.0)) return std::nullopt;
        // The printed update drives lambda to -W1; see README.
        return std::abs(-*lambda - *last->record.w1) / *last->record.w1;
      }));
      break;
    case CheckKind::weak_duality: {
      CheckResult r;
      r.kind = kind;
      r.threshold = t.weak_duality_slack;
      r.value = -std::numeric_limits<double>::infinity();
      std::size_t checked = 0;
      for (const MetricsRow& row : rows) {
        const MetricsRecord& rec = row.record;
        if (!rec.dual_objective || !rec.pairwise_lipschitz || !rec.w1) continue;
        const double excess = *rec.dual_objective / std::max(*rec.pairwise_lipschitz, 1e-12) - *rec.w1;
        r.value = std::max(r.value, excess);
        ++checked;
      }
      r.pass = checked > 0 && r.value <= r.threshold;
      r.detail = std::to_string(checked) + " rows checked";
      results.push_back(r);
      break;
    }
    case CheckKind::increment_paths: {
      CheckResult r;
      r.kind = kind;
      r.threshold = t.increment_paths_fraction;
      std::size_t hits = 0;
      for (const PathOutcome& p : paths) hits += p.nearest_real == p.matched_real;
      r.value = paths.empty() ? 0.0 : static_cast<double>(hits) / static_cast<double>(paths.size());
      r.pass = !paths.empty() && r.value >= r.threshold;
      r.detail = std::to_string(hits) + "/" + std::to_string(paths.size()) +
                 " paths nearest to their matched real point";
      results.push_back(r);
      break;
    }
    case CheckKind::w1_drop:
      results.push_back(check_runs(kind, rows, t.w1_drop, true,
                                   [&](const std::string& run) -> std::optional<double> {
        std::optional<double> first, last;
        for (const MetricsRow& row : rows) {
          if (row.run != run || !row.record.w1) continue;
          if (!first) first = row.record.w1;
          last = row.record.w1;
        }
        if (!first || !(*first > 0.0)) return std::nullopt;
        return 1.0 - *last / *first;
      }));
      break;
    }
  }
  return results;
}

fs::path run_directory(const ExperimentSpec& spec, const std::optional<fs::path>& root) {
  const fs::path base = root ? *root : fs::path(spec.output_dir);
  return base / (spec.name + "-seed" + std::to_string(spec.train.seed));
}

std::pair<PointCloud, PointCloud> make_clouds(const ExperimentSpec& spec, int instance) {
  if (spec.data.real && spec.data.fake) return {PointCloud(*spec.data.real), PointCloud(*spec.data.fake)};
  std::mt19937_64 rng(spec.data_seed() + static_cast<std::uint64_t>(instance));
  const DataSpec& d = spec.data;
  auto draw = [&] {
    Eigen::MatrixXd m(d.points, d.dim);
    if (d.distribution == "normal") {
      std::normal_distribution<double> normal(0.0, d.scale);
      for (Eigen::Index i = 0; i < m.rows(); ++i) {
        for (Eigen::Index j = 0; j < m.cols(); ++j) m(i, j) = normal(rng);
      }
    } else {
      std::uniform_real_distribution<double> uniform(-d.scale, d.scale);
      for (Eigen::Index i = 0; i < m.rows(); ++i) {
        for (Eigen::Index j = 0; j < m.cols(); ++j) m(i, j) = uniform(rng);
      }
    }
    return m;
  };
  Eigen::MatrixXd real = draw();
  Eigen::MatrixXd fake = draw();
  return {PointCloud(std::move(real)), PointCloud(std::move(fake))};
}

namespace {

bool is_penalty(RegularizerKind k) {
  return k == RegularizerKind::gp || k == RegularizerKind::lp || k == RegularizerKind::maxgp ||
         k == RegularizerKind::maxal;
}

std::optional<double> rho_of(const RegularizerState& r) {
  if (is_penalty(r.kind)) return r.rho;
  return std::nullopt;
}

json optional_json(const std::optional<double>& v) { return v ? json(*v) : json(nullptr); }

json record_json(const MetricsRecord& rec) {
  json out = {{"iteration", rec.iteration}};
  for (const Column& c : kColumns) out[c.name] = optional_json(rec.*c.field);
  return out;
}

json check_json(const CheckResult& c) {
  return {{"check", to_string(c.kind)},
          {"pass", c.pass},
          {"value", std::isfinite(c.value) ? json(c.value) : json(nullptr)},
          {"threshold", c.threshold},
          {"detail", c.detail}};
}

Box2 bounding_box(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b, double pad) {
  Box2 box;
  box.x_min = std::min(a.col(0).minCoeff(), b.col(0).minCoeff()) - pad;
  box.x_max = std::max(a.col(0).maxCoeff(), b.col(0).maxCoeff()) + pad;
  box.y_min = std::min(a.col(1).minCoeff(), b.col(1).minCoeff()) - pad;
  box.y_max = std::max(a.col(1).maxCoeff(), b.col(1).maxCoeff()) + pad;
  return box;
}

void write_file(const fs::path& path, const std::string& content) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << content;
}

class Runner {
public:
  Runner(const ExperimentSpec& spec, const RunOptions& options, RunOutcome& outcome)
      : spec_(spec), options_(options), outcome_(outcome) {
    dir_ = outcome.directory;
    metrics_.open(dir_ / "metrics.csv");
    timing_.open(dir_ / "timing.csv");
    if (!metrics_ || !timing_) throw std::runtime_error("cannot write into " + dir_.string());
    metrics_ << metrics_csv_header() << '\n';
    timing_ << "run,iteration,wall_ms\n";
  }

  json run() {
    switch (spec_.scenario) {
    case Scenario::toy2d:
    case Scenario::toycloud:
    case Scenario::lambda_track: return fixed_clouds();
    case Scenario::kstar_sweep: return kstar_sweep();
    case Scenario::gan2d: return gan2d();
    case Scenario::sn_compare: return sn_compare();
    }
    return json::object();
  }

private:
  MetricsSink sink(const std::string& run, std::optional<double> rho) {
    return [this, run, rho](const MetricsRecord& rec) {
      MetricsRow row{run, rho, rec};
      write_metrics_row(metrics_, row);
      metrics_.flush();
      timing_ << run << ',' << rec.iteration << ',' << std::fixed << std::setprecision(3)
              << rec.wall_ms << std::defaultfloat << '\n';
      outcome_.rows.push_back(std::move(row));
    };
  }

  void log(const std::string& line) {
    if (options_.log) *options_.log << spec_.name << ": " << line << '\n';
  }

  void export_field(const Critic& critic, Eigen::Index dim, const Box2& box,
                    const Eigen::MatrixXd& real, const Eigen::MatrixXd& fake) {
    if (!spec_.field.enabled || dim != 2) return;
    const FieldTable field = export_gradient_field(critic, dim, box, spec_.field.resolution);
    std::ofstream csv(dir_ / "field.csv");
    write_field_csv(csv, field);
    std::ofstream svg(dir_ / "field.svg");
    write_field_svg(svg, field, box, &real, &fake);
  }

  void write_clouds(const PointCloud& real, const PointCloud& fake) {
    std::ofstream r(dir_ / "real.txt");
    write_point_cloud(r, real);
    std::ofstream f(dir_ / "fake.txt");
    write_point_cloud(f, fake);
  }

  json fixed_clouds() {
    const auto [real, fake] = make_clouds(spec_);
    write_clouds(real, fake);
    const FitResult fit =
        fit_discriminator(real, fake, spec_.train, sink("main", rho_of(spec_.train.regularizer)));
    save_checkpoint((dir_ / "discriminator.ckpt").string(), fit.discriminator);
    log("trained, W1 = " + fmt(fit.w1));
    const Critic critic = frozen_critic(fit.discriminator);
    export_field(critic, real.dim(),
                 spec_.field.box.value_or(bounding_box(real.points(), fake.points(), 0.5)),
                 real.points(), fake.points());

    const bool paths = spec_.scenario == Scenario::toycloud ||
                       std::find(spec_.checks.begin(), spec_.checks.end(),
                                 CheckKind::increment_paths) != spec_.checks.end();
    json extra = json::object();
    if (paths) extra["paths"] = increment_paths(critic, fit.plan, real, fake);
    return extra;
  }

  json increment_paths(const Critic& critic, const TransportPlan& plan, const PointCloud& real,
                       const PointCloud& fake) {
    std::ofstream csv(dir_ / "paths.csv");
    csv << "run,fake_index,matched_real,step,eps";
    for (Eigen::Index j = 0; j < real.dim(); ++j) csv << ",x" << j;
    for (Eigen::Index j = 0; j < real.size(); ++j) csv << ",dist_real" << j;
    csv << '\n' << std::setprecision(17);
    json out = json::array();
    for (std::size_t i = 0; i < plan.size(); ++i) {
      const auto matched = static_cast<Eigen::Index>(i);
      const Eigen::Index fake_index = plan.target[i];
      const Eigen::RowVectorXd x = fake.point(fake_index);
      const std::vector<double> eps = increment_eps_grid((real.point(matched) - x).norm());
      const IncrementPath path = export_increment_path(critic, x, eps, real);
      for (std::size_t e = 0; e < eps.size(); ++e) {
        const auto row = static_cast<Eigen::Index>(e);
        csv << "main," << fake_index << ',' << matched << ',' << e << ',' << eps[e];
        for (Eigen::Index j = 0; j < path.points.cols(); ++j) csv << ',' << path.points(row, j);
        for (Eigen::Index j = 0; j < path.distances.cols(); ++j) csv << ',' << path.distances(row, j);
        csv << '\n';
      }
      PathOutcome p{"main", fake_index, matched, path.nearest, path.nearest_distance, path.degenerate};
      outcome_.paths.push_back(p);
      out.push_back({{"fake_index", p.fake_index},
                     {"matched_real", p.matched_real},
                     {"nearest_real", p.nearest_real},
                     {"nearest_distance", p.nearest_distance},
                     {"degenerate", p.degenerate}});
    }
    return out;
  }

  json kstar_sweep() {
    const auto [real, fake] = make_clouds(spec_);
    write_clouds(real, fake);
    json table = json::array();
    for (double rho : spec_.rhos) {
      TrainConfig config = spec_.train;
      config.regularizer.rho = rho;
      const std::string run = "rho=" + fmt(rho);
      const FitResult fit = fit_discriminator(real, fake, config, sink(run, rho));
      const auto k_tail = tail_mean(outcome_.rows, run, &MetricsRecord::lipschitz_estimate);
      const double k_star = predicted_k_star(fit.w1, rho);
      log(run + ": k_hat " + fmt(k_tail.value_or(0.0)) + " vs k* " + fmt(k_star));
      table.push_back({{"run", run},
                       {"rho", rho},
                       {"w1", fit.w1},
                       {"k_star", k_star},
                       {"k_hat_tail_mean", optional_json(k_tail)}});
    }
    return {{"kstar_sweep", table}};
  }

  json gan2d() {
    const DataSampler sampler = ring_mixture(spec_.data.modes, spec_.data.radius, spec_.data.stddev);
    const GanResult gan =
        train_gan(spec_.train, sampler, sink("main", rho_of(spec_.train.regularizer)));
    save_checkpoint((dir_ / "generator.ckpt").string(), gan.generator);
    save_checkpoint((dir_ / "discriminator.ckpt").string(), gan.discriminator);
    log("trained " + std::to_string(gan.g_updates) + " generator steps");

    std::mt19937_64 rng(spec_.data_seed());
    const Tensor real = sampler(256, rng);
    Tensor noise(256, spec_.train.prior_dim);
    std::normal_distribution<double> normal;
    for (Eigen::Index i = 0; i < noise.rows(); ++i) {
      for (Eigen::Index j = 0; j < noise.cols(); ++j) noise(i, j) = normal(rng);
    }
    Tensor generated;
    {
      NoGradGuard no_grad;
      generated = mlp_forward(gan.generator, constant(noise)).value();
    }
    const double r = spec_.data.radius + 3.0 * spec_.data.stddev + 0.5;
    export_field(frozen_critic(gan.discriminator), 2, spec_.field.box.value_or(Box2{-r, r, -r, r}),
                 real, generated);
    std::ofstream samples(dir_ / "samples.txt");
    write_point_cloud(samples, PointCloud(generated));
    return {{"d_updates", gan.d_updates}, {"g_updates", gan.g_updates}};
  }

  json sn_compare() {
    struct Entry {
      std::string method;
      int instance;
      double w1, dual, k_hat, gap;
      std::optional<double> min_cos, mean_cos;
    };
    std::vector<Entry> entries;
    for (int inst = 0; inst < spec_.instances; ++inst) {
      const auto [real, fake] = make_clouds(spec_, inst);
      for (RegularizerKind method : spec_.methods) {
        TrainConfig config = spec_.train;
        config.regularizer.kind = method;
        config.seed = spec_.train.seed + static_cast<std::uint64_t>(inst);
        const std::string run = to_string(method) + "/" + std::to_string(inst);
        const FitResult fit = fit_discriminator(real, fake, config, sink(run, rho_of(config.regularizer)));
        const MetricsRecord& last = fit.records.back();
        // Gradient-based k_hat: for a single pair the pairwise quotient
        // reproduces the distance and the gap would be zero by construction.
        const double k_hat = last.lipschitz_estimate.value_or(0.0);
        const double dual = last.dual_objective.value_or(0.0);
        const double ratio = k_hat > 0.0 ? dual / k_hat : 0.0;
        entries.push_back({to_string(method), inst, fit.w1, dual, k_hat,
                           std::abs(ratio - fit.w1) / fit.w1, last.prop1_min_cosine,
                           last.prop1_mean_cosine});
      }
      log("instance " + std::to_string(inst) + " done");
    }

    std::ofstream csv(dir_ / "sn_compare.csv");
    csv << "instance,method,w1,dual_objective,lipschitz_estimate,dual_gap,converged,"
           "prop1_min_cosine,prop1_mean_cosine\n"
        << std::setprecision(17);
    for (const Entry& e : entries) {
      csv << e.instance << ',' << e.method << ',' << e.w1 << ',' << e.dual << ',' << e.k_hat << ','
          << e.gap << ',' << (e.gap < 0.05 ? 1 : 0) << ',';
      write_optional(csv, e.min_cos);
      csv << ',';
      write_optional(csv, e.mean_cos);
      csv << '\n';
    }

    json methods = json::object();
    for (RegularizerKind m : spec_.methods) {
      const std::string name = to_string(m);
      double gap = 0.0, cos = 0.0, converged = 0.0;
      int n = 0;
      for (const Entry& e : entries) {
        if (e.method != name) continue;
        gap += e.gap;
        cos += e.mean_cos.value_or(0.0);
        converged += e.gap < 0.05 ? 1.0 : 0.0;
        ++n;
      }
      methods[name] = {{"mean_dual_gap", gap / n},
                       {"mean_prop1_cosine", cos / n},
                       {"converged_fraction", converged / n}};
    }
    json report = {{"instances", spec_.instances}, {"methods", methods}};
    const auto has = [&](RegularizerKind k) {
      return std::find(spec_.methods.begin(), spec_.methods.end(), k) != spec_.methods.end();
    };
    if (has(RegularizerKind::sn) && has(RegularizerKind::maxgp)) {
      int worse = 0;
      for (int inst = 0; inst < spec_.instances; ++inst) {
        double sn = 0.0, maxgp = 0.0;
        for (const Entry& e : entries) {
          if (e.instance != inst) continue;
          if (e.method == "sn") sn = e.gap;
          if (e.method == "maxgp") maxgp = e.gap;
        }
        worse += sn > maxgp;
      }
      report["sn_gap_exceeds_maxgp_fraction"] = static_cast<double>(worse) / spec_.instances;
    }
    return {{"sn_compare", report}};
  }

  const ExperimentSpec& spec_;
  const RunOptions& options_;
  RunOutcome& outcome_;
  fs::path dir_;
  std::ofstream metrics_;
  std::ofstream timing_;
};

json summary_json(const ExperimentSpec& spec, const RunOutcome& outcome, const json& extra) {
  json checks = json::array();
  bool passed = outcome.status == "ok";
  for (const CheckResult& c : outcome.checks) {
    checks.push_back(check_json(c));
    passed = passed && c.pass;
  }
  json runs = json::object();
  for (const std::string& run : run_names(outcome.rows)) {
    runs[run] = {{"final", record_json(last_row(outcome.rows, run)->record)},
                 {"lipschitz_estimate_tail_mean",
                  optional_json(tail_mean(outcome.rows, run, &MetricsRecord::lipschitz_estimate))},
                 {"lambda_tail_mean",
                  optional_json(tail_mean(outcome.rows, run, &MetricsRecord::lambda))}};
  }
  json out = {{"metrics_schema", kMetricsSchemaVersion},
              {"spec_version", spec.version},
              {"name", spec.name},
              {"scenario", to_string(spec.scenario)},
              {"seed", spec.train.seed},
              {"status", outcome.status},
              {"message", outcome.message},
              {"passed", passed},
              {"checks", checks},
              {"runs", runs}};
  for (auto it = extra.begin(); it != extra.end(); ++it) out[it.key()] = it.value();
  return out;
}

} // namespace

RunOutcome run_experiment(const ExperimentSpec& spec, const RunOptions& options) {
  spec.validate();
  RunOutcome outcome;
  outcome.directory = run_directory(spec, options.output_root);
  fs::create_directories(outcome.directory);
  write_file(outcome.directory / "config.echo.json", spec_to_json(spec));

  json extra = json::object();
  outcome.status = "ok";
  try {
    Runner runner(spec, options, outcome);
    extra = runner.run();
  } catch (const TrainingDiverged& e) {
    outcome.status = "diverged";
    outcome.message = e.what();
    outcome.exit_code = ExitCode::diverged;
  }
  if (outcome.status == "ok") {
    outcome.checks = evaluate_checks(spec, outcome.rows, outcome.paths);
    const bool all = std::all_of(outcome.checks.begin(), outcome.checks.end(),
                                 [](const CheckResult& c) { return c.pass; });
    outcome.exit_code = all ? ExitCode::ok : ExitCode::check_failed;
  }
  write_file(outcome.directory / "summary.json", summary_json(spec, outcome, extra).dump(2) + "\n");
  return outcome;
}

void write_report(std::ostream& out, const std::vector<fs::path>& dirs) {
  out << "directory,name,scenario,seed,status,check,pass,value,threshold\n" << std::setprecision(17);
  for (const fs::path& dir : dirs) {
    std::ifstream in(dir / "summary.json");
    if (!in) throw std::runtime_error("no summary.json in " + dir.string());
    json s;
    try {
      in >> s;
    } catch (const json::exception& e) {
      throw std::runtime_error(dir.string() + "/summary.json: " + e.what());
    }
    const std::string prefix = dir.string() + "," + s.value("name", "") + "," +
                               s.value("scenario", "") + "," +
                               std::to_string(s.value("seed", 0ULL)) + "," + s.value("status", "");
    const json& checks = s["checks"];
    if (!checks.is_array() || checks.empty()) {
      out << prefix << ",,,,\n";
      continue;
    }
    for (const json& c : checks) {
      out << prefix << ',' << c.value("check", "") << ',' << (c.value("pass", false) ? 1 : 0) << ',';
      if (c["value"].is_number()) out << c["value"].get<double>();
      out << ',' << c.value("threshold", 0.0) << '\n';
    }
  }
}

} // namespace lipgan
