// Command-line front end: single runs, hyperparameter sweeps, oracle
// exports, and field comparison.

#include <cstdio>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "bpinn/experiment.hpp"

namespace {

void apply_precision_override(bpinn::RunManifest& m, const std::string& precision) {
  if (precision.empty()) return;
  if (precision == "f32")
    m.precision = bpinn::Precision::f32;
  else if (precision == "f64")
    m.precision = bpinn::Precision::f64;
  else
    throw bpinn::ConfigError("--precision must be f32 or f64");
}

std::string fmt_rel_error(double v) {
  char buf[32];
  if (v == 0.0 || std::abs(v) >= 1e-4)
    std::snprintf(buf, sizeof(buf), "%.6f", v);
  else
    std::snprintf(buf, sizeof(buf), "%.6e", v);
  return buf;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Implicit-Euler transfer-learning PINN for the viscous Burgers equation"};
  app.require_subcommand(1);

  std::string config_path, precision, mode = "custom", out_root;
  std::size_t jobs = 0;

  CLI::App* run_cmd = app.add_subcommand("run", "execute a single experiment from a JSON config");
  run_cmd->add_option("--config", config_path, "JSON configuration file")->required();
  run_cmd->add_option("--precision", precision, "override arithmetic precision (f32|f64)");
  run_cmd->add_option("--out-root", out_root, "override the output root directory");

  CLI::App* sweep_cmd = app.add_subcommand("sweep", "run a hyperparameter sweep grid");
  sweep_cmd->add_option("--config", config_path, "JSON configuration file")->required();
  sweep_cmd->add_option("--mode", mode, "table1 | table2 | custom")
      ->check(CLI::IsMember({"table1", "table2", "custom"}));
  sweep_cmd->add_option("--jobs", jobs, "worker pool width (default: available cores)");
  sweep_cmd->add_option("--precision", precision, "override arithmetic precision (f32|f64)");
  sweep_cmd->add_option("--out-root", out_root, "override the output root directory");

  std::string oracle_problem = "prob1", oracle_out;
  double oracle_t = 0.0;
  std::optional<double> oracle_nu;
  std::size_t oracle_points = 1001;
  CLI::App* oracle_cmd = app.add_subcommand("oracle", "export a reference solution as CSV");
  oracle_cmd->add_option("--problem", oracle_problem, "prob1 | prob2")
      ->check(CLI::IsMember({"prob1", "prob2"}));
  oracle_cmd->add_option("--t", oracle_t, "time at which to evaluate")->required();
  oracle_cmd->add_option("--nu", oracle_nu, "viscosity (default: 1 for prob1, 0.01/pi for prob2)");
  oracle_cmd->add_option("--points", oracle_points, "grid points (default 1001)");
  oracle_cmd->add_option("--out", oracle_out, "output CSV path")->required();

  std::string cmp_a, cmp_b;
  CLI::App* compare_cmd = app.add_subcommand("compare", "L2 relative error between two field CSVs");
  compare_cmd->add_option("a", cmp_a, "first CSV")->required();
  compare_cmd->add_option("b", cmp_b, "reference CSV")->required();

  CLI11_PARSE(app, argc, argv);

  try {
    if (*run_cmd || *sweep_cmd) {
      bpinn::SweepAxes axes;
      bpinn::RunManifest manifest = bpinn::load_manifest_file(config_path, &axes);
      apply_precision_override(manifest, precision);
      if (!out_root.empty()) manifest.output_dir = out_root;
      if (*run_cmd) {
        const bpinn::RunOutcome outcome = bpinn::run(manifest);
        if (!outcome.ok) {
          std::cerr << "run aborted: " << outcome.message << "\n";
          return 2;
        }
      } else {
        bpinn::SweepMode sweep_mode = bpinn::SweepMode::custom;
        if (mode == "table1") sweep_mode = bpinn::SweepMode::table1;
        if (mode == "table2") sweep_mode = bpinn::SweepMode::table2;
        bpinn::sweep(manifest, sweep_mode, axes, jobs);
      }
    } else if (*oracle_cmd) {
      const bpinn::Problem p =
          oracle_problem == "prob1" ? bpinn::Problem::prob1 : bpinn::Problem::prob2;
      const double nu = oracle_nu.value_or(p == bpinn::Problem::prob1 ? 1.0 : 0.01 / bpinn::oracle::kPi);
      bpinn::write_oracle_csv(p, oracle_t, nu, oracle_points, oracle_out);
    } else if (*compare_cmd) {
      std::cout << fmt_rel_error(bpinn::compare_fields(cmp_a, cmp_b)) << "\n";
    }
  } catch (const bpinn::ConfigError& e) {
    std::cerr << "configuration error: " << e.what() << "\n";
    return 1;
  } catch (const bpinn::UsageError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  return 0;
}
