#pragma once

// Runs an ExperimentSpec: trains, evaluates the oracle checks and writes the
// artifacts of one run under <output root>/<name>-seed<seed>/.

#include "lipgan/experiment_spec.hpp"

#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

namespace lipgan {

enum class ExitCode : int { ok = 0, validation = 1, diverged = 2, check_failed = 3 };

/// metrics.csv column layout version. Columns never change within a version.
inline constexpr int kMetricsSchemaVersion = 1;

/// One metrics.csv row: a record tagged with its training run (a scenario
/// may train several, e.g. one per rho) and that run's rho.
struct MetricsRow {
  std::string run;
  std::optional<double> rho;
  MetricsRecord record;
};

std::string metrics_csv_header();
void write_metrics_row(std::ostream& out, const MetricsRow& row);
/// Reads back what write_metrics_row wrote. wall_ms is not part of the file.
std::vector<MetricsRow> read_metrics_csv(std::istream& in);

/// Increment-path outcome for one fake point.
struct PathOutcome {
  std::string run;
  Eigen::Index fake_index = 0;
  Eigen::Index matched_real = 0;
  Eigen::Index nearest_real = 0;
  double nearest_distance = 0.0;
  bool degenerate = false;
};

struct CheckResult {
  CheckKind kind = CheckKind::prop1;
  bool pass = false;
  /// The worst value over runs, in the units of the threshold.
  double value = 0.0;
  double threshold = 0.0;
  std::string detail;
};

/// Evaluates the spec's checks from metrics rows and path outcomes only, so
/// a summary can be recomputed offline from the artifacts.
///   prop1          final prop1_min_cosine >= threshold, every run
///   lemma2         final lemma2_max_residual <= threshold, every run
///   kstar          |k_tail - (w1/rho + 1)| / (w1/rho + 1) <= threshold
///   lambda_w1      |-lambda_tail - w1| / w1 <= threshold
///   weak_duality   dual_objective / pairwise_lipschitz <= w1 + slack, every row
///   increment_paths fraction of fake points whose path is nearest to the
///                  matched real point >= threshold
///   w1_drop        1 - w1_final / w1_initial >= threshold
/// x_tail is the mean of x over records in the last quarter of the run.
std::vector<CheckResult> evaluate_checks(const ExperimentSpec& spec,
                                         const std::vector<MetricsRow>& rows,
                                         const std::vector<PathOutcome>& paths);

/// Mean of `field` over the records of `run` with iteration > 3/4 of the last
/// iteration. Empty when no such record has the field.
std::optional<double> tail_mean(const std::vector<MetricsRow>& rows, const std::string& run,
                                std::optional<double> MetricsRecord::*field);

struct RunOptions {
  /// Overrides spec.output_dir when set.
  std::optional<std::filesystem::path> output_root;
  /// Progress lines (one per finished training run); null for silence.
  std::ostream* log = nullptr;
};

struct RunOutcome {
  ExitCode exit_code = ExitCode::ok;
  std::filesystem::path directory;
  std::vector<CheckResult> checks;
  std::vector<MetricsRow> rows;
  std::vector<PathOutcome> paths;
  std::string status;  // "ok" or "diverged"
  std::string message;
};

/// Creates the run directory and writes metrics.csv, timing.csv,
/// summary.json, config.echo.json and the scenario's extra artifacts.
RunOutcome run_experiment(const ExperimentSpec& spec, const RunOptions& options = {});

/// <root>/<name>-seed<seed>
std::filesystem::path run_directory(const ExperimentSpec& spec,
                                    const std::optional<std::filesystem::path>& root);

/// The fixed clouds of a spec (explicit or drawn from its data seed);
/// instance shifts the data seed.
std::pair<PointCloud, PointCloud> make_clouds(const ExperimentSpec& spec, int instance = 0);

/// One CSV line per (run directory, check) from each directory's summary.json.
void write_report(std::ostream& out, const std::vector<std::filesystem::path>& dirs);

} // namespace lipgan
