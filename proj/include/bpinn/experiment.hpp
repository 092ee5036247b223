#pragma once

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <mutex>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include <json.hpp>

#include "bpinn/checkpoint.hpp"
#include "bpinn/csv.hpp"
#include "bpinn/errors.hpp"
#include "bpinn/oracles.hpp"
#include "bpinn/solver.hpp"

namespace bpinn {

enum class Problem { prob1, prob2 };
enum class Precision { f32, f64 };

inline const char* to_string(Problem p) { return p == Problem::prob1 ? "prob1" : "prob2"; }
inline const char* to_string(Precision p) { return p == Precision::f32 ? "f32" : "f64"; }

/// Environment variable naming the default root for run outputs.
inline constexpr const char* kOutputRootEnv = "BURGERS_PINN_OUT_ROOT";

/// Resolved configuration of one experiment invocation.
struct RunManifest {
  Problem problem = Problem::prob1;
  Precision precision = Precision::f32;
  double nu = 1.0;
  double ht = 1e-3;
  std::size_t nt = 1;
  std::size_t ns = 100;
  std::uint32_t hidden_layers = 3;
  std::uint32_t hidden_units = 30;
  TrainSettings train{};
  std::uint64_t seed = 1;
  std::size_t repetitions = 1;
  std::string output_dir = "out";
  std::vector<double> output_times{};
  bool checkpoints = false;
  bool eval_error = true;
  bool error_every_step = true;  // false: only at output times
  std::size_t error_grid = 1001;

  void validate() const {
    if (repetitions < 1) throw ConfigError("repetitions must be at least 1");
    if (!(ht > 0) || nt < 1 || ns < 3 || !(nu > 0))
      throw ConfigError("invalid solver parameters (require ht>0, nt>=1, ns>=3, nu>0)");
    Architecture{hidden_layers, hidden_units}.validate();
    if (train.tolerance <= 0) throw ConfigError("tolerance must be positive");
  }
};

/// Axes of a hyperparameter sweep; absent axes fall back to the base
/// manifest's value. Cells are independent.
struct SweepAxes {
  std::vector<std::uint32_t> hidden_layers{};
  std::vector<std::uint32_t> hidden_units{};
  std::vector<std::size_t> ns{};
  std::vector<double> ht{};
  std::size_t repetitions = 3;
};

enum class SweepMode { table1, table2, custom };

// ---- JSON config parsing -----------------------------------------------------

namespace detail {

inline std::size_t line_of_byte(const std::string& text, std::size_t byte) {
  std::size_t line = 1;
  for (std::size_t i = 0; i < byte && i < text.size(); ++i)
    if (text[i] == '\n') ++line;
  return line;
}

inline std::size_t line_of_key(const std::string& text, const std::string& key) {
  const std::size_t pos = text.find('"' + key + '"');
  return pos == std::string::npos ? 0 : line_of_byte(text, pos);
}

[[noreturn]] inline void config_fail(const std::string& source, std::size_t line,
                                     const std::string& msg) {
  std::string where = source;
  if (line > 0) where += ":" + std::to_string(line);
  throw ConfigError(where + ": " + msg);
}

}  // namespace detail

/// Parse a run manifest from JSON. Unknown keys are a hard error, with the
/// offending key's line number in the message.
inline RunManifest parse_manifest(const std::string& text, const std::string& source,
                                  SweepAxes* axes_out = nullptr) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    detail::config_fail(source, detail::line_of_byte(text, e.byte), "JSON parse error: " + std::string(e.what()));
  }
  if (!j.is_object()) detail::config_fail(source, 1, "top-level JSON value must be an object");

  static const std::vector<std::string> known{
      "problem",      "nu",          "ht",           "nt",
      "ns",           "hidden_layers", "hidden_units", "precision",
      "seed",         "repetitions", "output_dir",   "output_times",
      "checkpoints",  "eval_error",  "error_every_step", "error_grid",
      "learning_rate", "beta1",      "beta2",        "adam_epsilon",
      "batch_size",   "max_epochs",  "tolerance",    "loss_check_cadence",
      "sweep"};
  for (const auto& [key, value] : j.items()) {
    if (std::find(known.begin(), known.end(), key) == known.end())
      detail::config_fail(source, detail::line_of_key(text, key), "unknown key '" + key + "'");
  }

  RunManifest m;
  try {
    const std::string prob = j.value("problem", "prob1");
    if (prob == "prob1")
      m.problem = Problem::prob1;
    else if (prob == "prob2")
      m.problem = Problem::prob2;
    else
      detail::config_fail(source, detail::line_of_key(text, "problem"),
                          "problem must be 'prob1' or 'prob2'");

    m.nu = (m.problem == Problem::prob1) ? 1.0 : 0.01 / oracle::kPi;
    m.error_every_step = (m.problem == Problem::prob1);

    m.nu = j.value("nu", m.nu);
    m.ht = j.value("ht", m.ht);
    m.nt = j.value("nt", m.nt);
    m.ns = j.value("ns", m.ns);
    m.hidden_layers = j.value("hidden_layers", m.hidden_layers);
    m.hidden_units = j.value("hidden_units", m.hidden_units);
    const std::string prec = j.value("precision", "f32");
    if (prec == "f32")
      m.precision = Precision::f32;
    else if (prec == "f64")
      m.precision = Precision::f64;
    else
      detail::config_fail(source, detail::line_of_key(text, "precision"),
                          "precision must be 'f32' or 'f64'");
    m.seed = j.value("seed", m.seed);
    m.repetitions = j.value("repetitions", m.repetitions);
    m.output_dir = j.value("output_dir", m.output_dir);
    if (j.contains("output_times")) m.output_times = j["output_times"].get<std::vector<double>>();
    m.checkpoints = j.value("checkpoints", m.checkpoints);
    m.eval_error = j.value("eval_error", m.eval_error);
    m.error_every_step = j.value("error_every_step", m.error_every_step);
    m.error_grid = j.value("error_grid", m.error_grid);
    m.train.adam.learning_rate = j.value("learning_rate", m.train.adam.learning_rate);
    m.train.adam.beta1 = j.value("beta1", m.train.adam.beta1);
    m.train.adam.beta2 = j.value("beta2", m.train.adam.beta2);
    m.train.adam.epsilon = j.value("adam_epsilon", m.train.adam.epsilon);
    m.train.batch_size = j.value("batch_size", m.train.batch_size);
    m.train.max_epochs = j.value("max_epochs", m.train.max_epochs);
    m.train.tolerance = j.value("tolerance", m.train.tolerance);
    m.train.loss_check_cadence = j.value("loss_check_cadence", m.train.loss_check_cadence);
    m.train.shuffle_seed = m.seed;

    if (axes_out && j.contains("sweep")) {
      const nlohmann::json& s = j["sweep"];
      static const std::vector<std::string> sweep_known{"hidden_layers", "hidden_units", "ns",
                                                        "ht", "repetitions"};
      for (const auto& [key, value] : s.items()) {
        if (std::find(sweep_known.begin(), sweep_known.end(), key) == sweep_known.end())
          detail::config_fail(source, detail::line_of_key(text, key),
                              "unknown sweep key '" + key + "'");
      }
      if (s.contains("hidden_layers"))
        axes_out->hidden_layers = s["hidden_layers"].get<std::vector<std::uint32_t>>();
      if (s.contains("hidden_units"))
        axes_out->hidden_units = s["hidden_units"].get<std::vector<std::uint32_t>>();
      if (s.contains("ns")) axes_out->ns = s["ns"].get<std::vector<std::size_t>>();
      if (s.contains("ht")) axes_out->ht = s["ht"].get<std::vector<double>>();
      axes_out->repetitions = s.value("repetitions", axes_out->repetitions);
    }
  } catch (const nlohmann::json::exception& e) {
    detail::config_fail(source, 0, std::string("invalid value type: ") + e.what());
  }
  m.validate();
  return m;
}

inline RunManifest load_manifest_file(const std::string& path, SweepAxes* axes_out = nullptr) {
  std::ifstream is(path);
  if (!is) throw IoError("cannot open config file: " + path);
  std::string text((std::istreambuf_iterator<char>(is)), std::istreambuf_iterator<char>());
  return parse_manifest(text, path, axes_out);
}

// ---- problem bindings ---------------------------------------------------------

inline double problem_u0(Problem p, double nu, double x) {
  return p == Problem::prob1 ? oracle::problem1_u0(x, nu) : oracle::problem2_u0(x);
}

inline double problem_reference(Problem p, double nu, double t, double x) {
  return p == Problem::prob1 ? oracle::problem1_u(t, x, nu) : oracle::problem2_u(t, x, nu);
}

// ---- run orchestration ---------------------------------------------------------

namespace detail {

inline std::string fmt_time_label(double t) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%g", t);
  return buf;
}

inline std::optional<double> median_of(std::vector<double> v) {
  if (v.empty()) return std::nullopt;
  std::sort(v.begin(), v.end());
  return v[v.size() / 2];
}

/// Map requested output times to step indices, snapping to the k*ht grid
/// with a warning on mismatch.
inline std::vector<std::pair<std::size_t, double>> snap_output_times(
    const std::vector<double>& times, double ht, std::size_t nt, std::ostream& warn) {
  std::vector<std::pair<std::size_t, double>> snapped;
  for (const double t : times) {
    const double kf = t / ht;
    const auto k = static_cast<long long>(std::llround(kf));
    if (k < 0 || static_cast<std::size_t>(k) > nt)
      throw ConfigError("output time " + fmt_time_label(t) + " is outside [0, nt*ht]");
    if (std::abs(double(k) * ht - t) > 1e-9 * std::max(1.0, std::abs(t)))
      warn << "warning: output time " << fmt_time_label(t) << " snapped to step " << k << " (t="
           << fmt_time_label(double(k) * ht) << ")\n";
    snapped.emplace_back(static_cast<std::size_t>(k), t);
  }
  return snapped;
}

inline nlohmann::json manifest_json(const RunManifest& m, std::uint64_t seed) {
  return nlohmann::json{{"problem", to_string(m.problem)},
                        {"precision", to_string(m.precision)},
                        {"nu", m.nu},
                        {"ht", m.ht},
                        {"nt", m.nt},
                        {"ns", m.ns},
                        {"hidden_layers", m.hidden_layers},
                        {"hidden_units", m.hidden_units},
                        {"seed", seed},
                        {"learning_rate", m.train.adam.learning_rate},
                        {"beta1", m.train.adam.beta1},
                        {"beta2", m.train.adam.beta2},
                        {"adam_epsilon", m.train.adam.epsilon},
                        {"batch_size", m.train.batch_size},
                        {"max_epochs", m.train.max_epochs},
                        {"tolerance", m.train.tolerance},
                        {"loss_check_cadence", m.train.loss_check_cadence},
                        {"output_times", m.output_times},
                        {"checkpoints", m.checkpoints},
                        {"eval_error", m.eval_error},
                        {"error_every_step", m.error_every_step},
                        {"error_grid", m.error_grid}};
}

template <class Scalar>
SolverConfig<Scalar> solver_config(const RunManifest& m, std::uint64_t seed) {
  SolverConfig<Scalar> cfg;
  cfg.nu = static_cast<Scalar>(m.nu);
  cfg.ht = static_cast<Scalar>(m.ht);
  cfg.nt = m.nt;
  cfg.ns = m.ns;
  cfg.arch = Architecture{m.hidden_layers, m.hidden_units};
  cfg.train = m.train;
  cfg.train.shuffle_seed = seed;
  cfg.seed = seed;
  return cfg;
}

template <class Scalar>
SolveResult<Scalar> run_typed(const RunManifest& m, std::uint64_t seed,
                              const std::filesystem::path& dir,
                              const std::vector<std::pair<std::size_t, double>>& dumps) {
  const SolverConfig<Scalar> cfg = solver_config<Scalar>(m, seed);
  const auto u0 = [&](Scalar x) { return problem_u0(m.problem, m.nu, double(x)); };

  SolveHooks<Scalar> hooks;
  if (m.eval_error) {
    hooks.oracle = [&](double t, double x) { return problem_reference(m.problem, m.nu, t, x); };
    hooks.error_grid_points = m.error_grid;
    if (!m.error_every_step) {
      std::vector<std::size_t> steps;
      for (const auto& [k, t] : dumps) steps.push_back(k);
      hooks.error_at = [steps](std::size_t k) {
        return std::find(steps.begin(), steps.end(), k) != steps.end();
      };
    }
  }
  const std::vector<double> grid = uniform_grid(m.error_grid);
  hooks.on_step = [&](const TimeStepRecord& rec, const MlpParams<Scalar>& net) {
    for (const auto& [k, t] : dumps) {
      if (k != rec.k) continue;
      write_solution_csv((dir / ("solution_t" + fmt_time_label(t) + ".csv")).string(),
                         sample_network(net, grid));
    }
    if (m.checkpoints)
      save_checkpoint((dir / ("net_k" + std::to_string(rec.k) + ".ckpt")).string(), net);
  };
  return solve(cfg, u0, hooks);
}

}  // namespace detail

struct RunOutcome {
  bool ok = true;
  std::string message;
  std::vector<std::vector<TimeStepRecord>> records;  // one per repetition
};

inline std::filesystem::path resolve_output_dir(const std::string& dir) {
  std::filesystem::path p(dir);
  if (p.is_relative()) {
    if (const char* root = std::getenv(kOutputRootEnv)) p = std::filesystem::path(root) / p;
  }
  return p;
}

/// Execute a manifest: one run per repetition (seed = base + index), each
/// in its own directory with manifest.json, records.csv and requested
/// solution dumps; a medians summary.csv when repetitions > 1. Output
/// directories are created and probed before any training happens.
inline RunOutcome run(const RunManifest& m, std::ostream& log = std::cerr) {
  m.validate();
  const std::filesystem::path base = resolve_output_dir(m.output_dir);
  const auto dumps = detail::snap_output_times(m.output_times, m.ht, m.nt, log);

  // Fail on unwritable output locations before any training.
  std::vector<std::filesystem::path> dirs;
  std::error_code ec;
  for (std::size_t r = 0; r < m.repetitions; ++r) {
    const std::filesystem::path dir =
        m.repetitions > 1 ? base / ("rep_" + std::to_string(r)) : base;
    std::filesystem::create_directories(dir, ec);
    if (ec) throw IoError("cannot create output directory " + dir.string() + ": " + ec.message());
    const std::uint64_t seed = m.seed + r;
    std::ofstream probe(dir / "manifest.json", std::ios::trunc);
    if (!probe) throw IoError("output directory is not writable: " + dir.string());
    probe << detail::manifest_json(m, seed).dump(2) << "\n";
    dirs.push_back(dir);
  }

  RunOutcome outcome;
  for (std::size_t r = 0; r < m.repetitions; ++r) {
    const std::uint64_t seed = m.seed + r;
    bool aborted = false;
    std::string reason;
    std::vector<TimeStepRecord> recs;
    if (m.precision == Precision::f32) {
      const auto res = detail::run_typed<float>(m, seed, dirs[r], dumps);
      recs = res.records;
      aborted = res.aborted;
      reason = res.abort_reason;
    } else {
      const auto res = detail::run_typed<double>(m, seed, dirs[r], dumps);
      recs = res.records;
      aborted = res.aborted;
      reason = res.abort_reason;
    }
    write_records_csv((dirs[r] / "records.csv").string(), recs);
    outcome.records.push_back(std::move(recs));
    if (aborted) {
      outcome.ok = false;
      outcome.message = "repetition " + std::to_string(r) + ": " + reason;
      log << "error: " << outcome.message << "\n";
      return outcome;  // partial artifacts retained
    }
  }

  if (m.repetitions > 1) {
    std::ofstream os(base / "summary.csv", std::ios::trunc | std::ios::binary);
    if (!os) throw IoError("cannot write summary.csv");
    os << "k,t,median_epochs,median_loss,median_rel_error\n";
    const std::size_t steps = outcome.records.front().size();
    for (std::size_t k = 0; k < steps; ++k) {
      std::vector<double> epochs, losses, errors;
      for (const auto& recs : outcome.records) {
        if (k >= recs.size()) continue;
        epochs.push_back(double(recs[k].epochs));
        losses.push_back(recs[k].loss);
        if (recs[k].rel_error) errors.push_back(*recs[k].rel_error);
      }
      os << outcome.records.front()[k].k << ',' << fmt_g9(outcome.records.front()[k].t) << ','
         << fmt_g9(*detail::median_of(epochs)) << ',' << fmt_g9(*detail::median_of(losses))
         << ',';
      if (const auto me = detail::median_of(errors)) os << fmt_g9(*me);
      os << '\n';
    }
  }
  return outcome;
}

// ---- sweep ---------------------------------------------------------------------

struct SweepCell {
  std::uint32_t hidden_layers;
  std::uint32_t hidden_units;
  std::size_t ns;
  double ht;
};

struct SweepRow {
  SweepCell cell;
  double mean_epochs = 0.0;
  std::optional<double> mean_loss{};
  std::optional<double> mean_rel_error{};
  std::string status = "ok";
};

/// Cell grids: table1 reproduces the initial-condition study, table2 the
/// first-step study; custom crosses whatever axes are given.
inline std::vector<SweepCell> make_sweep_cells(SweepMode mode, const SweepAxes& axes,
                                               const RunManifest& base) {
  SweepAxes a = axes;
  if (mode == SweepMode::table1) {
    a.hidden_layers = {1, 2, 3, 4};
    a.hidden_units = {10, 20, 30, 40};
    a.ns = {10, 100};
    a.ht = {base.ht};
  } else if (mode == SweepMode::table2) {
    a.hidden_layers = {base.hidden_layers};
    a.hidden_units = {base.hidden_units};
    a.ns = {10, 100, 1000};
    a.ht = {1e-1, 1e-2, 1e-3};
  }
  if (a.hidden_layers.empty()) a.hidden_layers = {base.hidden_layers};
  if (a.hidden_units.empty()) a.hidden_units = {base.hidden_units};
  if (a.ns.empty()) a.ns = {base.ns};
  if (a.ht.empty()) a.ht = {base.ht};

  std::vector<SweepCell> cells;
  for (const double ht : a.ht)
    for (const std::size_t ns : a.ns)
      for (const std::uint32_t nl : a.hidden_layers)
        for (const std::uint32_t nn : a.hidden_units)
          cells.push_back({nl, nn, ns, ht});
  return cells;
}

namespace detail {

template <class Scalar>
SweepRow run_cell_typed(const RunManifest& base, SweepMode mode, const SweepCell& cell,
                        std::size_t reps, const std::filesystem::path& dir) {
  SweepRow row{cell};
  std::vector<double> epochs, losses, errors;
  for (std::size_t r = 0; r < reps; ++r) {
    RunManifest m = base;
    m.hidden_layers = cell.hidden_layers;
    m.hidden_units = cell.hidden_units;
    m.ns = cell.ns;
    m.ht = cell.ht;
    const std::uint64_t seed = base.seed + r;
    const std::filesystem::path rep_dir = dir / ("rep_" + std::to_string(r));
    std::error_code ec;
    std::filesystem::create_directories(rep_dir, ec);
    if (ec) throw IoError("cannot create " + rep_dir.string());
    std::ofstream mf(rep_dir / "manifest.json", std::ios::trunc);
    mf << manifest_json(m, seed).dump(2) << "\n";

    SolverConfig<Scalar> cfg = solver_config<Scalar>(m, seed);
    const auto u0 = [&](Scalar x) { return problem_u0(m.problem, m.nu, double(x)); };
    std::vector<TimeStepRecord> recs;
    if (mode == SweepMode::table1) {
      auto [net, rec] = train_initial(cfg, u0);
      recs.push_back(rec);
      epochs.push_back(double(rec.epochs));
      losses.push_back(rec.loss);
    } else {
      cfg.nt = (mode == SweepMode::table2) ? 1 : m.nt;
      SolveHooks<Scalar> hooks;
      if (m.eval_error) {
        hooks.oracle = [&](double t, double x) { return problem_reference(m.problem, m.nu, t, x); };
        hooks.error_grid_points = m.error_grid;
      }
      const SolveResult<Scalar> res = solve(cfg, u0, hooks);
      recs = res.records;
      if (res.aborted) throw TrainingError(res.abort_reason, 0);
      const TimeStepRecord& last = res.records.back();
      double total_epochs = 0;
      for (const auto& rec : res.records) total_epochs += double(rec.epochs);
      epochs.push_back(mode == SweepMode::table2 ? double(last.epochs) : total_epochs);
      losses.push_back(last.loss);
      if (last.rel_error) errors.push_back(*last.rel_error);
    }
    write_records_csv((rep_dir / "records.csv").string(), recs);
  }
  const auto mean = [](const std::vector<double>& v) -> std::optional<double> {
    if (v.empty()) return std::nullopt;
    double s = 0;
    for (double x : v) s += x;
    return s / double(v.size());
  };
  row.mean_epochs = *mean(epochs);
  row.mean_loss = mean(losses);
  row.mean_rel_error = mean(errors);
  return row;
}

}  // namespace detail

/// Run every cell of the sweep on a worker pool; one row per cell lands in
/// table.csv. Cell failures are recorded in the row's status column and do
/// not stop the sweep.
inline std::vector<SweepRow> sweep(const RunManifest& base, SweepMode mode, const SweepAxes& axes,
                                   std::size_t jobs = 0, std::ostream& log = std::cerr) {
  base.validate();
  const std::vector<SweepCell> cells = make_sweep_cells(mode, axes, base);
  const std::filesystem::path root = resolve_output_dir(base.output_dir);
  std::error_code ec;
  std::filesystem::create_directories(root, ec);
  if (ec) throw IoError("cannot create output directory " + root.string());

  std::vector<SweepRow> rows(cells.size());
  std::atomic<std::size_t> next{0};
  std::mutex log_mutex;
  if (jobs == 0) jobs = std::max(1u, std::thread::hardware_concurrency());
  jobs = std::min(jobs, cells.size());

  auto worker = [&]() {
    for (;;) {
      const std::size_t i = next.fetch_add(1);
      if (i >= cells.size()) return;
      const SweepCell& c = cells[i];
      char label[96];
      std::snprintf(label, sizeof(label), "cell_nl%u_nn%u_ns%zu_ht%g", c.hidden_layers,
                    c.hidden_units, c.ns, c.ht);
      const std::filesystem::path dir = root / label;
      try {
        rows[i] = base.precision == Precision::f32
                      ? detail::run_cell_typed<float>(base, mode, c, axes.repetitions, dir)
                      : detail::run_cell_typed<double>(base, mode, c, axes.repetitions, dir);
      } catch (const std::exception& e) {
        rows[i] = SweepRow{c};
        std::string msg = e.what();
        std::replace(msg.begin(), msg.end(), ',', ';');
        rows[i].status = "error: " + msg;
      }
      std::lock_guard<std::mutex> lock(log_mutex);
      log << label << ": " << rows[i].status << "\n";
    }
  };
  std::vector<std::thread> pool;
  for (std::size_t t = 0; t < jobs; ++t) pool.emplace_back(worker);
  for (auto& th : pool) th.join();

  std::ofstream os(root / "table.csv", std::ios::trunc | std::ios::binary);
  if (!os) throw IoError("cannot write table.csv");
  os << "n_l,n_n,ns,ht,mean_epochs,mean_loss,mean_rel_error,status\n";
  for (const SweepRow& r : rows) {
    os << r.cell.hidden_layers << ',' << r.cell.hidden_units << ',' << r.cell.ns << ','
       << fmt_g9(r.cell.ht) << ',' << fmt_g9(r.mean_epochs) << ',';
    if (r.mean_loss) os << fmt_g9(*r.mean_loss);
    os << ',';
    if (r.mean_rel_error) os << fmt_g9(*r.mean_rel_error);
    os << ',' << r.status << '\n';
  }
  return rows;
}

/// File-level relative error: both CSVs must share the identical x column.
inline double compare_fields(const std::string& path_a, const std::string& path_b) {
  const SolutionField a = read_solution_csv(path_a);
  const SolutionField b = read_solution_csv(path_b);
  return rel_error(a, b);
}

/// Sample an oracle solution onto the standard grid and write it in the
/// solver's CSV format.
inline void write_oracle_csv(Problem p, double t, double nu, std::size_t points,
                             const std::string& path) {
  SolutionField f;
  f.x = uniform_grid(points);
  f.u.resize(f.x.size());
  for (std::size_t i = 0; i < f.x.size(); ++i)
    f.u[i] = (t == 0.0) ? problem_u0(p, nu, f.x[i]) : problem_reference(p, nu, t, f.x[i]);
  write_solution_csv(path, f);
}

}  // namespace bpinn
