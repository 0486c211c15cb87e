#include <doctest.h>

#include <unistd.h>

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <limits>
#include <sstream>
#include <string>
#include <vector>

#include "dopf/algorithms.hpp"
#include "dopf/experiment.hpp"

using dopf::AlgorithmKind;
using dopf::ChannelKind;
using dopf::ExperimentConfig;
using dopf::ExperimentReport;
using dopf::PointReport;
using dopf::RunRecord;
using dopf::RunStatus;
using dopf::load_config;
using dopf::parse_config;
using dopf::preset_names;
using dopf::preset_params;
using dopf::relative_gap;
using dopf::report_from_json;
using dopf::report_to_csv;
using dopf::report_to_json;
using dopf::run_experiment;
using dopf::success_rate;
using dopf::write_file;

namespace {

// Tiny fixture on disk: the tests need real paths for case and partition.
struct TempFixture {
  std::filesystem::path dir;

  TempFixture() {
    dir = std::filesystem::temp_directory_path() /
          ("dopf_test_" + std::to_string(::getpid()));
    std::filesystem::create_directories(dir);
    write_file((dir / "case2.m").string(),
               "function mpc = case2\n"
               "mpc.baseMVA = 100;\n"
               "mpc.bus = [\n"
               "  1  3    0  0 0 0 1 1 0 345 1 1.1 0.9;\n"
               "  2  1  100  0 0 0 1 1 0 345 1 1.1 0.9;\n"
               "];\n"
               "mpc.gen = [ 1 0 0 300 -300 1 100 1 400 0 ];\n"
               "mpc.branch = [ 1 2 0 0.1 0 250 0 0 0 0 1 -360 360 ];\n"
               "mpc.gencost = [ 2 0 0 3 0.0001 0 0 ];\n");
    write_file((dir / "case2.part").string(), "1 1\n2 2\n");
  }
  ~TempFixture() {
    std::error_code ec;
    std::filesystem::remove_all(dir, ec);
  }

  std::string config_json(const std::string& channels,
                          const std::string& extra = "") const {
    return std::string("{\n") +
           "  \"case\": \"" + (dir / "case2.m").string() + "\",\n" +
           "  \"partition\": \"" + (dir / "case2.part").string() + "\",\n" +
           "  \"algorithm\": { \"kind\": \"admm\", \"alpha\": 10.0 },\n" +
           "  \"channels\": [" + channels + "],\n" +
           "  \"runs\": 3,\n  \"seed\": 11" + extra + "\n}\n";
  }
};

RunRecord record_with(RunStatus status, double gap) {
  RunRecord r;
  r.status = status;
  r.relative_gap = gap;
  r.objective = 1.0;
  return r;
}

}  // namespace

TEST_CASE("relative_gap is symmetric around the centralized cost") {
  CHECK(relative_gap(101.0, 100.0) == doctest::Approx(0.01));
  CHECK(relative_gap(99.0, 100.0) == doctest::Approx(0.01));
  CHECK(relative_gap(100.0, 100.0) == 0.0);
  CHECK(relative_gap(50.0, -100.0) == doctest::Approx(1.5));
  CHECK_THROWS_AS(relative_gap(1.0, 0.0), std::invalid_argument);
}

TEST_CASE("success_rate counts sub-1% gaps without subproblem failures") {
  std::vector<RunRecord> recs;
  recs.push_back(record_with(RunStatus::converged, 0.001));
  recs.push_back(record_with(RunStatus::iteration_limit, 0.005));  // counts!
  recs.push_back(record_with(RunStatus::converged, 0.02));         // gap too big
  recs.push_back(record_with(RunStatus::subproblem_failure, 0.0));
  recs.push_back(record_with(RunStatus::converged,
                             std::numeric_limits<double>::quiet_NaN()));
  CHECK(success_rate(recs) == doctest::Approx(40.0));
  CHECK_THROWS_AS(success_rate({}), std::invalid_argument);
}

TEST_CASE("presets cover every bundled system and expand APP shorthand") {
  const std::vector<std::string> names = preset_names();
  CHECK(names.size() == 16);
  for (const std::string& n : names) {
    const dopf::AlgorithmParams p = preset_params(n);
    p.check();
  }

  CHECK(preset_params("case118/admm").alpha == 1e6);
  CHECK(preset_params("wb5/admm").alpha == 1e3);
  CHECK(preset_params("wb5/admm-text").alpha == 1e2);

  const dopf::AlgorithmParams atc = preset_params("case14/atc");
  CHECK(atc.kind == AlgorithmKind::atc);
  CHECK(atc.alpha == 1.04);
  CHECK(atc.beta == 1.0);

  const dopf::AlgorithmParams app = preset_params("case14/app");
  CHECK(app.kind == AlgorithmKind::app);
  CHECK(app.alpha == 1e5);
  CHECK(app.gamma == 1e5);
  CHECK(app.beta == 2e5);

  CHECK_THROWS_AS(preset_params("case9/admm"), std::invalid_argument);
}

TEST_CASE("config parsing: presets, overrides, and typo rejection") {
  TempFixture fx;

  SUBCASE("explicit algorithm block") {
    const ExperimentConfig cfg =
        parse_config(fx.config_json("{ \"kind\": \"ideal\" }"));
    CHECK(cfg.params.kind == AlgorithmKind::admm);
    CHECK(cfg.params.alpha == 10.0);
    CHECK(cfg.runs == 3);
    CHECK(cfg.base_seed == 11);
    CHECK(cfg.threads == 1);
    CHECK(cfg.grid.size() == 1);
    CHECK(cfg.grid[0].kind == ChannelKind::ideal);
    cfg.check();
  }
  SUBCASE("preset with a selective override") {
    const std::string text = std::string("{\n") +
        "  \"case\": \"" + (fx.dir / "case2.m").string() + "\",\n" +
        "  \"partition\": \"" + (fx.dir / "case2.part").string() + "\",\n" +
        "  \"preset\": \"case14/admm\",\n" +
        "  \"algorithm\": { \"max_iterations\": 50 },\n" +
        "  \"channels\": [{ \"kind\": \"gaussian\", \"sigma_noise\": 1e-4 }]\n"
        "}\n";
    const ExperimentConfig cfg = parse_config(text);
    CHECK(cfg.preset == "case14/admm");
    CHECK(cfg.params.alpha == 1e4);          // from the preset
    CHECK(cfg.params.max_iterations == 50);  // overridden
    CHECK(cfg.grid[0].sigma_noise == 1e-4);
  }
  SUBCASE("unknown top-level key") {
    CHECK_THROWS_WITH_AS(
        parse_config(fx.config_json("{ \"kind\": \"ideal\" }",
                                    ",\n  \"thread\": 4")),
        doctest::Contains("thread"), std::invalid_argument);
  }
  SUBCASE("unknown channel key") {
    CHECK_THROWS_AS(
        parse_config(fx.config_json("{ \"kind\": \"gaussian\", \"sd\": 1 }")),
        std::invalid_argument);
  }
  SUBCASE("check() wants at least one channel and positive runs") {
    ExperimentConfig cfg =
        parse_config(fx.config_json("{ \"kind\": \"ideal\" }"));
    cfg.grid.clear();
    CHECK_THROWS_AS(cfg.check(), std::invalid_argument);
    cfg = parse_config(fx.config_json("{ \"kind\": \"ideal\" }"));
    cfg.runs = 0;
    CHECK_THROWS_AS(cfg.check(), std::invalid_argument);
    cfg = parse_config(fx.config_json("{ \"kind\": \"ideal\" }"));
    cfg.threads = 0;
    CHECK_THROWS_AS(cfg.check(), std::invalid_argument);
  }
  SUBCASE("load_config reads from disk") {
    const std::string path = (fx.dir / "cfg.json").string();
    write_file(path, fx.config_json("{ \"kind\": \"ideal\" }"));
    CHECK(load_config(path).runs == 3);
  }
}

TEST_CASE("a small ideal sweep succeeds on every run") {
  TempFixture fx;
  const ExperimentConfig cfg =
      parse_config(fx.config_json("{ \"kind\": \"ideal\" }"));
  const ExperimentReport rep = run_experiment(cfg);

  CHECK(rep.case_name == "case2");
  CHECK(rep.algorithm == std::string("admm"));
  CHECK(rep.runs == 3);
  CHECK(rep.central_objective == doctest::Approx(1.0).epsilon(1e-6));
  REQUIRE(rep.points.size() == 1);

  const PointReport& pt = rep.points[0];
  REQUIRE(pt.runs.size() == 3);
  CHECK(pt.success_rate == 100.0);
  CHECK(pt.failures == 0);
  CHECK(pt.avg_iterations > 0.0);
  CHECK(pt.mean_mismatch <= 1e-4);
  CHECK(pt.mean_gap < 0.01);
  CHECK(pt.max_gap < 0.01);
  for (const auto& run : pt.runs) {
    CHECK(run.success);
    CHECK(run.status == RunStatus::converged);
    CHECK(run.final_true_mismatch <= 1e-4);
  }
  // ideal channel: every run is the same trajectory under its own seed,
  // and seeds are distinct
  CHECK(pt.runs[0].seed != pt.runs[1].seed);
  CHECK(pt.runs[0].iterations == pt.runs[1].iterations);
}

TEST_CASE("reports are byte-identical across thread counts") {
  TempFixture fx;
  const std::string channels =
      "{ \"kind\": \"gaussian\", \"sigma_noise\": 1e-3 }, "
      "{ \"kind\": \"ideal\" }";
  ExperimentConfig cfg = parse_config(fx.config_json(channels));
  cfg.threads = 1;
  const std::string one = report_to_json(run_experiment(cfg));
  cfg.threads = 2;
  const std::string two = report_to_json(run_experiment(cfg));
  cfg.threads = 7;  // more threads than tasks
  const std::string seven = report_to_json(run_experiment(cfg));
  CHECK(one == two);
  CHECK(one == seven);
}

TEST_CASE("grid reordering does not change a point's runs") {
  TempFixture fx;
  const std::string a =
      "{ \"kind\": \"ideal\" }, "
      "{ \"kind\": \"bad_data\", \"r_max\": 2.0, \"p_bad\": 0.01 }";
  const std::string b =
      "{ \"kind\": \"bad_data\", \"r_max\": 2.0, \"p_bad\": 0.01 }, "
      "{ \"kind\": \"ideal\" }";
  const ExperimentReport ra = run_experiment(parse_config(fx.config_json(a)));
  const ExperimentReport rb = run_experiment(parse_config(fx.config_json(b)));
  // the bad-data point sits at index 1 in a and index 0 in b
  const PointReport& pa = ra.points[1];
  const PointReport& pb = rb.points[0];
  REQUIRE(pa.runs.size() == pb.runs.size());
  for (std::size_t k = 0; k < pa.runs.size(); ++k) {
    CHECK(pa.runs[k].seed == pb.runs[k].seed);
    CHECK(pa.runs[k].final_true_mismatch == pb.runs[k].final_true_mismatch);
    CHECK(pa.runs[k].objective == pb.runs[k].objective);
  }
}

TEST_CASE("JSON reports round-trip byte for byte") {
  TempFixture fx;
  const ExperimentReport rep = run_experiment(parse_config(fx.config_json(
      "{ \"kind\": \"gaussian\", \"sigma_noise\": 1e-3 }")));
  const std::string text = report_to_json(rep);
  const ExperimentReport back = report_from_json(text);
  CHECK(report_to_json(back) == text);
  CHECK(back.central_objective == rep.central_objective);
  CHECK(back.points[0].runs[0].seed == rep.points[0].runs[0].seed);
}

TEST_CASE("CSV has one row per point and statistic") {
  TempFixture fx;
  const ExperimentReport rep = run_experiment(parse_config(fx.config_json(
      "{ \"kind\": \"ideal\" }, "
      "{ \"kind\": \"gaussian\", \"sigma_noise\": 1e-4 }")));
  const std::string csv = report_to_csv(rep);

  std::vector<std::string> lines;
  std::size_t start = 0;
  while (start < csv.size()) {
    const std::size_t nl = csv.find('\n', start);
    if (nl == std::string::npos) break;
    lines.push_back(csv.substr(start, nl - start));
    start = nl + 1;
  }
  REQUIRE(lines.size() == 1 + 2 * 7);  // header + 2 points x 7 statistics
  CHECK(lines[0] ==
        "point,channel_kind,sigma_noise,r_max,p_bad,lambda_f,lambda_r,"
        "statistic,value");
  CHECK(lines[1].find("0,ideal") == 0);
  CHECK(lines[1].find("success_rate") != std::string::npos);
  CHECK(lines[8].find("1,gaussian") == 0);
}

TEST_CASE("experiment output lands in the configured files") {
  TempFixture fx;
  const std::string json_path = (fx.dir / "out.json").string();
  const std::string csv_path = (fx.dir / "out.csv").string();
  ExperimentConfig cfg =
      parse_config(fx.config_json("{ \"kind\": \"ideal\" }"));
  cfg.json_path = json_path;
  cfg.csv_path = csv_path;
  const ExperimentReport rep = run_experiment(cfg);
  REQUIRE(std::filesystem::exists(json_path));
  REQUIRE(std::filesystem::exists(csv_path));
  // the JSON on disk is exactly the returned report
  std::ifstream in(json_path, std::ios::binary);
  std::stringstream buf;
  buf << in.rdbuf();
  CHECK(buf.str() == report_to_json(rep));
  CHECK(std::filesystem::file_size(csv_path) > 0);
}
