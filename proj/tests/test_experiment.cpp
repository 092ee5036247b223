#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "bpinn/experiment.hpp"

using namespace bpinn;
namespace fs = std::filesystem;

namespace {

fs::path fresh_dir(const std::string& name) {
  const fs::path dir = fs::temp_directory_path() / "bpinn_exp_tests" / name;
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

std::string slurp(const fs::path& p) {
  std::ifstream is(p, std::ios::binary);
  REQUIRE(bool(is));
  return {std::istreambuf_iterator<char>(is), std::istreambuf_iterator<char>()};
}

/// records.csv lines with the wall-clock column stripped (wall time is the
/// one legitimately non-reproducible column).
std::string strip_wall_ms(const std::string& csv) {
  std::istringstream is(csv);
  std::string line, out;
  while (std::getline(is, line)) {
    const std::size_t last = line.rfind(',');
    out += line.substr(0, last) + "\n";
  }
  return out;
}

RunManifest tiny_manifest(const fs::path& dir) {
  RunManifest m;
  m.problem = Problem::prob1;
  m.precision = Precision::f64;
  m.ht = 1e-3;
  m.nt = 2;
  m.ns = 10;
  m.hidden_layers = 1;
  m.hidden_units = 6;
  m.train.max_epochs = 300;
  m.train.tolerance = 1e-5;
  m.seed = 7;
  m.output_dir = dir.string();
  m.error_grid = 101;
  return m;
}

}  // namespace

TEST_SUITE("experiment.config") {
  TEST_CASE("problem-specific defaults") {
    const RunManifest m1 = parse_manifest(R"({"problem":"prob1"})", "inline");
    CHECK(m1.nu == 1.0);
    CHECK(m1.error_every_step);
    const RunManifest m2 = parse_manifest(R"({"problem":"prob2"})", "inline");
    CHECK(m2.nu == doctest::Approx(0.01 / oracle::kPi).epsilon(1e-15));
    CHECK_FALSE(m2.error_every_step);
    CHECK(m2.precision == Precision::f32);
  }

  TEST_CASE("unknown keys fail hard with a line number") {
    const std::string text = "{\n  \"problem\": \"prob1\",\n  \"leraning_rate\": 0.1\n}";
    try {
      parse_manifest(text, "cfg.json");
      FAIL("expected ConfigError");
    } catch (const ConfigError& e) {
      const std::string what = e.what();
      CHECK(what.find("leraning_rate") != std::string::npos);
      CHECK(what.find("cfg.json:3") != std::string::npos);
    }
  }

  TEST_CASE("malformed JSON reports the line") {
    try {
      parse_manifest("{\n  \"problem\": \"prob1\",\n}", "broken.json");
      FAIL("expected ConfigError");
    } catch (const ConfigError& e) {
      CHECK(std::string(e.what()).find("broken.json:3") != std::string::npos);
    }
  }

  TEST_CASE("sweep axes parse alongside the manifest") {
    SweepAxes axes;
    parse_manifest(
        R"({"problem":"prob1","sweep":{"hidden_units":[10,20],"ns":[10,100],"repetitions":2}})",
        "inline", &axes);
    CHECK(axes.hidden_units == std::vector<std::uint32_t>{10, 20});
    CHECK(axes.ns == std::vector<std::size_t>{10, 100});
    CHECK(axes.repetitions == 2);
  }

  TEST_CASE("values are validated") {
    CHECK_THROWS_AS(parse_manifest(R"({"problem":"prob3"})", "x"), ConfigError);
    CHECK_THROWS_AS(parse_manifest(R"({"ht":-1.0})", "x"), ConfigError);
    CHECK_THROWS_AS(parse_manifest(R"({"precision":"f16"})", "x"), ConfigError);
  }
}

TEST_SUITE("experiment.run") {
  TEST_CASE("single run writes the documented artifacts") {
    const fs::path dir = fresh_dir("single");
    RunManifest m = tiny_manifest(dir);
    m.output_times = {0.002};
    std::ostringstream log;
    const RunOutcome outcome = run(m, log);
    CHECK(outcome.ok);

    CHECK(fs::exists(dir / "manifest.json"));
    CHECK(fs::exists(dir / "records.csv"));
    const fs::path dump = dir / "solution_t0.002.csv";
    REQUIRE(fs::exists(dump));
    const SolutionField f = read_solution_csv(dump.string());
    CHECK(f.x.size() == m.error_grid);  // one row per grid point plus header

    const auto recs = read_records_csv((dir / "records.csv").string());
    REQUIRE(recs.size() == m.nt + 1);
    for (std::size_t k = 0; k < recs.size(); ++k) {
      CHECK(recs[k].k == k);
      CHECK(recs[k].rel_error.has_value());
    }
  }

  TEST_CASE("output times snap to the step grid with a warning") {
    const fs::path dir = fresh_dir("snap");
    RunManifest m = tiny_manifest(dir);
    m.output_times = {0.00105};
    std::ostringstream log;
    run(m, log);
    CHECK(log.str().find("snapped") != std::string::npos);
    CHECK(fs::exists(dir / "solution_t0.00105.csv"));
  }

  TEST_CASE("out-of-range output times are rejected") {
    RunManifest m = tiny_manifest(fresh_dir("oob"));
    m.output_times = {0.5};  // nt*ht = 0.002
    std::ostringstream log;
    CHECK_THROWS_AS(run(m, log), ConfigError);
  }

  TEST_CASE("unwritable output location fails before any training") {
    const fs::path dir = fresh_dir("blocked");
    std::ofstream(dir / "blocker") << "file";
    RunManifest m = tiny_manifest(dir / "blocker" / "out");
    std::ostringstream log;
    CHECK_THROWS_AS(run(m, log), IoError);
  }

  TEST_CASE("repetitions produce per-seed directories and a medians summary") {
    const fs::path dir = fresh_dir("reps");
    RunManifest m = tiny_manifest(dir);
    m.repetitions = 3;
    std::ostringstream log;
    const RunOutcome outcome = run(m, log);
    CHECK(outcome.ok);
    for (int r = 0; r < 3; ++r) CHECK(fs::exists(dir / ("rep_" + std::to_string(r)) / "records.csv"));
    REQUIRE(fs::exists(dir / "summary.csv"));

    // Aggregates are recomputable from the per-run records.
    std::vector<std::vector<TimeStepRecord>> all;
    for (int r = 0; r < 3; ++r)
      all.push_back(read_records_csv((dir / ("rep_" + std::to_string(r)) / "records.csv").string()));
    std::ifstream sum(dir / "summary.csv");
    std::string line;
    std::getline(sum, line);
    CHECK(line == "k,t,median_epochs,median_loss,median_rel_error");
    for (std::size_t k = 0; k <= m.nt; ++k) {
      REQUIRE(std::getline(sum, line));
      std::vector<double> epochs;
      for (const auto& recs : all) epochs.push_back(double(recs[k].epochs));
      std::sort(epochs.begin(), epochs.end());
      const std::string expect_epochs = fmt_g9(epochs[1]);
      CHECK(line.find("," + expect_epochs + ",") != std::string::npos);
    }

    // Distinct seeds actually differ.
    CHECK(slurp(dir / "rep_0" / "manifest.json") != slurp(dir / "rep_1" / "manifest.json"));
  }

  TEST_CASE("identical manifest and seed reproduce records.csv byte for byte") {
    const fs::path a = fresh_dir("repro_a"), b = fresh_dir("repro_b");
    RunManifest ma = tiny_manifest(a), mb = tiny_manifest(b);
    std::ostringstream log;
    run(ma, log);
    run(mb, log);
    CHECK(strip_wall_ms(slurp(a / "records.csv")) == strip_wall_ms(slurp(b / "records.csv")));
  }

  TEST_CASE("a training abort exits non-zero but keeps partial artifacts") {
    const fs::path dir = fresh_dir("abort");
    RunManifest m = tiny_manifest(dir);
    m.train.adam.learning_rate = 1e200;  // overflows the squared loss immediately
    std::ostringstream log;
    const RunOutcome outcome = run(m, log);
    CHECK_FALSE(outcome.ok);
    CHECK(fs::exists(dir / "manifest.json"));
    CHECK(fs::exists(dir / "records.csv"));
  }

  TEST_CASE("relative output directories honor the root environment variable") {
    const fs::path root = fresh_dir("envroot");
    setenv(kOutputRootEnv, root.string().c_str(), 1);
    RunManifest m = tiny_manifest("relative_out");
    std::ostringstream log;
    run(m, log);
    unsetenv(kOutputRootEnv);
    CHECK(fs::exists(root / "relative_out" / "records.csv"));
  }

  TEST_CASE("checkpoints are written per step on request") {
    const fs::path dir = fresh_dir("ckpt");
    RunManifest m = tiny_manifest(dir);
    m.checkpoints = true;
    std::ostringstream log;
    run(m, log);
    for (std::size_t k = 0; k <= m.nt; ++k) {
      const fs::path p = dir / ("net_k" + std::to_string(k) + ".ckpt");
      CHECK(fs::exists(p));
      CHECK(fs::exists(p.string() + ".json"));
    }
    const auto net = load_checkpoint<double>((dir / "net_k2.ckpt").string());
    CHECK(net.arch().hidden_units == m.hidden_units);
  }
}

TEST_SUITE("experiment.csv") {
  TEST_CASE("solution CSV round trip is stable and compares to zero") {
    const fs::path dir = fresh_dir("csv");
    SolutionField f;
    f.x = {0.0, 1.0 / 3.0, 2.0 / 3.0, 1.0};
    f.u = {0.0, 0.123456789123, -7.5e-7, 1e9};
    const std::string p1 = (dir / "f1.csv").string();
    write_solution_csv(p1, f);
    const SolutionField f2 = read_solution_csv(p1);
    const std::string p2 = (dir / "f2.csv").string();
    write_solution_csv(p2, f2);
    CHECK(slurp(p1) == slurp(p2));
    CHECK(compare_fields(p1, p2) == 0.0);
    CHECK(compare_fields(p1, p1) == 0.0);
  }

  TEST_CASE("comparing against a doubled copy gives exactly one") {
    const fs::path dir = fresh_dir("csv2");
    SolutionField f;
    f.x = uniform_grid(11);
    f.u.assign(11, 0.0);
    for (std::size_t i = 0; i < 11; ++i) f.u[i] = 0.25 * double(i) - 1.0;
    SolutionField twice = f;
    for (auto& u : twice.u) u *= 2.0;
    const std::string pa = (dir / "a.csv").string(), pb = (dir / "b.csv").string();
    write_solution_csv(pa, twice);
    write_solution_csv(pb, f);
    CHECK(compare_fields(pa, pb) == 1.0);
  }

  TEST_CASE("grid mismatch errors name the first differing abscissa") {
    const fs::path dir = fresh_dir("csv3");
    SolutionField a{{0.0, 0.25, 1.0}, {1, 2, 3}};
    SolutionField b{{0.0, 0.5, 1.0}, {1, 2, 3}};
    const std::string pa = (dir / "a.csv").string(), pb = (dir / "b.csv").string();
    write_solution_csv(pa, a);
    write_solution_csv(pb, b);
    try {
      compare_fields(pa, pb);
      FAIL("expected UsageError");
    } catch (const UsageError& e) {
      CHECK(std::string(e.what()).find("row 1") != std::string::npos);
    }
  }

  TEST_CASE("records round trip preserves the empty rel_error column") {
    const fs::path dir = fresh_dir("csv4");
    std::vector<TimeStepRecord> recs{{0, 0.0, 12, 1e-7, std::nullopt, 3.5, true},
                                     {1, 1e-3, 34, 2e-7, 0.5, 4.5, true}};
    const std::string p = (dir / "records.csv").string();
    write_records_csv(p, recs);
    const auto back = read_records_csv(p);
    REQUIRE(back.size() == 2);
    CHECK_FALSE(back[0].rel_error.has_value());
    REQUIRE(back[1].rel_error.has_value());
    CHECK(*back[1].rel_error == 0.5);
  }
}

TEST_SUITE("experiment.oracle_export") {
  TEST_CASE("oracle CSV has the standard grid and pinned boundaries") {
    const fs::path dir = fresh_dir("oracle");
    const std::string p = (dir / "exact.csv").string();
    write_oracle_csv(Problem::prob1, 0.1, 1.0, 1001, p);
    const SolutionField f = read_solution_csv(p);
    REQUIRE(f.x.size() == 1001);
    CHECK(f.u.front() == 0.0);
    CHECK(f.u.back() == 0.0);
    CHECK(f.x[500] == 0.5);
  }
}

TEST_SUITE("experiment.sweep") {
  TEST_CASE("study grids have the documented cell counts") {
    const RunManifest base = tiny_manifest("unused");
    CHECK(make_sweep_cells(SweepMode::table1, {}, base).size() == 32);
    CHECK(make_sweep_cells(SweepMode::table2, {}, base).size() == 9);
    CHECK(make_sweep_cells(SweepMode::custom, {}, base).size() == 1);
  }

  TEST_CASE("custom sweep runs every cell and reports per-cell means") {
    const fs::path dir = fresh_dir("sweep");
    RunManifest base = tiny_manifest(dir);
    base.nt = 1;
    SweepAxes axes;
    axes.hidden_units = {4, 6};
    axes.repetitions = 2;
    std::ostringstream log;
    const auto rows = sweep(base, SweepMode::custom, axes, 2, log);
    REQUIRE(rows.size() == 2);
    for (const auto& row : rows) {
      CHECK(row.status == "ok");
      CHECK(row.mean_epochs > 0.0);
      REQUIRE(row.mean_rel_error.has_value());
    }
    REQUIRE(fs::exists(dir / "table.csv"));
    const std::string table = slurp(dir / "table.csv");
    CHECK(table.find("n_l,n_n,ns,ht,mean_epochs,mean_loss,mean_rel_error,status") == 0);

    // Means are recomputable from the per-rep records.
    char label[96];
    std::snprintf(label, sizeof(label), "cell_nl%u_nn%u_ns%zu_ht%g", base.hidden_layers, 4u,
                  base.ns, base.ht);
    double total = 0.0;
    for (int r = 0; r < 2; ++r) {
      const auto recs =
          read_records_csv((dir / label / ("rep_" + std::to_string(r)) / "records.csv").string());
      for (const auto& rec : recs) total += double(rec.epochs);
    }
    CHECK(rows[0].mean_epochs == doctest::Approx(total / 2.0));
  }

  TEST_CASE("a failing cell is recorded in its row and the sweep continues") {
    const fs::path dir = fresh_dir("sweep_fail");
    RunManifest base = tiny_manifest(dir);
    base.nt = 1;
    SweepAxes axes;
    axes.hidden_units = {0, 6};  // first cell is invalid
    axes.repetitions = 1;
    std::ostringstream log;
    const auto rows = sweep(base, SweepMode::custom, axes, 1, log);
    REQUIRE(rows.size() == 2);
    CHECK(rows[0].status.find("error") != std::string::npos);
    CHECK(rows[1].status == "ok");
  }
}
