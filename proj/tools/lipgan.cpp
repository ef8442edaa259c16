// lipgan: run experiment specs, validate them, export gradient fields from
// checkpoints and tabulate finished runs.

#include "lipgan/experiments.hpp"

#include <CLI11.hpp>

#include <cstdlib>
#include <fstream>
#include <iostream>
#include <sstream>

namespace {

using lipgan::ExitCode;

int code(ExitCode c) { return static_cast<int>(c); }

std::optional<std::filesystem::path> output_root() {
  if (const char* env = std::getenv("LIPGAN_OUTPUT_ROOT"); env && *env) return std::filesystem::path(env);
  return std::nullopt;
}

lipgan::Box2 parse_box(const std::string& text) {
  std::vector<double> v;
  std::istringstream in(text);
  std::string cell;
  while (std::getline(in, cell, ',')) v.push_back(std::stod(cell));
  if (v.size() != 4) throw std::invalid_argument("--box needs x_min,x_max,y_min,y_max");
  lipgan::Box2 box{v[0], v[1], v[2], v[3]};
  box.validate();
  return box;
}

int cmd_run(const std::string& spec_path, bool quiet) {
  const lipgan::ExperimentSpec spec = lipgan::load_spec(spec_path);
  lipgan::RunOptions options;
  options.output_root = output_root();
  options.log = quiet ? nullptr : &std::cerr;
  const lipgan::RunOutcome outcome = lipgan::run_experiment(spec, options);
  std::cout << outcome.directory.string() << '\n';
  if (outcome.status != "ok") std::cerr << "diverged: " << outcome.message << '\n';
  for (const lipgan::CheckResult& c : outcome.checks) {
    std::cout << (c.pass ? "PASS " : "FAIL ") << lipgan::to_string(c.kind) << " value=" << c.value
              << " threshold=" << c.threshold;
    if (!c.detail.empty()) std::cout << " (" << c.detail << ')';
    std::cout << '\n';
  }
  return code(outcome.exit_code);
}

int cmd_validate(const std::string& spec_path, bool print) {
  const lipgan::ExperimentSpec spec = lipgan::load_spec(spec_path);
  if (print) std::cout << lipgan::spec_to_json(spec);
  else std::cout << spec_path << ": ok\n";
  return code(ExitCode::ok);
}

int cmd_field(const std::string& checkpoint, const std::string& box_text, int resolution,
              const std::string& out_path, const std::string& svg_path) {
  const lipgan::ModelParams params = lipgan::load_checkpoint(checkpoint);
  const lipgan::Box2 box = parse_box(box_text);
  const lipgan::FieldTable field = lipgan::export_gradient_field(
      lipgan::frozen_critic(params), params.input_dim(), box, resolution);
  if (out_path.empty() || out_path == "-") {
    lipgan::write_field_csv(std::cout, field);
  } else {
    std::ofstream out(out_path);
    if (!out) throw std::runtime_error("cannot write " + out_path);
    lipgan::write_field_csv(out, field);
  }
  if (!svg_path.empty()) {
    std::ofstream svg(svg_path);
    if (!svg) throw std::runtime_error("cannot write " + svg_path);
    lipgan::write_field_svg(svg, field, box);
  }
  return code(ExitCode::ok);
}

int cmd_report(const std::vector<std::string>& dirs, const std::string& out_path) {
  std::vector<std::filesystem::path> paths(dirs.begin(), dirs.end());
  if (out_path.empty() || out_path == "-") {
    lipgan::write_report(std::cout, paths);
  } else {
    std::ofstream out(out_path);
    if (!out) throw std::runtime_error("cannot write " + out_path);
    lipgan::write_report(out, paths);
  }
  return code(ExitCode::ok);
}

} // namespace

int main(int argc, char** argv) {
  CLI::App app{"Lipschitz-regularized critics: experiments and exports"};
  app.require_subcommand(1);

  std::string spec_path;
  bool quiet = false;
  auto* run = app.add_subcommand("run", "Run an experiment spec (output root: $LIPGAN_OUTPUT_ROOT or the spec's output_dir)");
  run->add_option("spec", spec_path, "YAML spec")->required();
  run->add_flag("-q,--quiet", quiet, "No progress on stderr");

  bool print = false;
  auto* validate = app.add_subcommand("validate", "Parse and check a spec without running it");
  validate->add_option("spec", spec_path, "YAML spec")->required();
  validate->add_flag("--print", print, "Print the resolved spec as JSON");

  std::string checkpoint, box_text = "-1,1,-1,1", out_path, svg_path;
  int resolution = 21;
  auto* field = app.add_subcommand("field", "Export the gradient field of a 2-D critic checkpoint");
  field->add_option("checkpoint", checkpoint, "Discriminator checkpoint")->required();
  field->add_option("--box", box_text, "x_min,x_max,y_min,y_max")->capture_default_str();
  field->add_option("--res", resolution, "Grid points per axis")->capture_default_str()
      ->check(CLI::PositiveNumber);
  field->add_option("--out", out_path, "CSV output (default stdout)");
  field->add_option("--svg", svg_path, "Also write an SVG arrow plot");

  std::vector<std::string> dirs;
  std::string report_out;
  auto* report = app.add_subcommand("report", "Tabulate checks of finished runs as CSV");
  report->add_option("dirs", dirs, "Run directories")->required();
  report->add_option("--out", report_out, "CSV output (default stdout)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : code(ExitCode::validation);
  }

  try {
    if (*run) return cmd_run(spec_path, quiet);
    if (*validate) return cmd_validate(spec_path, print);
    if (*field) return cmd_field(checkpoint, box_text, resolution, out_path, svg_path);
    if (*report) return cmd_report(dirs, report_out);
  } catch (const lipgan::SpecError& e) {
    std::cerr << e.what() << '\n';
    return code(ExitCode::validation);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return code(ExitCode::validation);
  }
  return code(ExitCode::validation);
}
