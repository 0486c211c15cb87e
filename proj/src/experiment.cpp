#include "dopf/experiment.hpp"

#include <json.hpp>

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <exception>
#include <fstream>
#include <limits>
#include <mutex>
#include <sstream>
#include <stdexcept>
#include <thread>
#include <utility>

#include "dopf/opf.hpp"
#include "dopf/rng.hpp"

namespace dopf {

namespace {

using nlohmann::json;

constexpr double kNan = std::numeric_limits<double>::quiet_NaN();

// The paper-style tuning table.  APP rows publish a single value a and
// expand to (alpha, gamma, beta) = (a, a, 2a); ATC rows publish the growth
// rate plus a starting penalty beta0.  Fast growth rates leave only a
// handful of iterations before the penalty dwarfs the cost curvature, so
// their beta0 starts near the curvature scale; the slow 14-bus rate does
// its useful work below that scale and keeps the classic beta0 = 1.
struct PresetRow {
  const char* name;
  AlgorithmKind kind;
  double alpha;
  double beta0;
};

constexpr PresetRow kPresets[] = {
    {"wb5/admm", AlgorithmKind::admm, 1e3, 0},
    {"wb5/admm-text", AlgorithmKind::admm, 1e2, 0},
    {"wb5/atc", AlgorithmKind::atc, 1.5, 300},
    {"wb5/app", AlgorithmKind::app, 1e2, 0},
    {"case14/admm", AlgorithmKind::admm, 1e4, 0},
    {"case14/atc", AlgorithmKind::atc, 1.04, 1},
    {"case14/app", AlgorithmKind::app, 1e5, 0},
    {"rts/admm", AlgorithmKind::admm, 1e7, 0},
    {"rts/atc", AlgorithmKind::atc, 1.3, 1000},
    {"rts/app", AlgorithmKind::app, 1e7, 0},
    {"case118/admm", AlgorithmKind::admm, 1e6, 0},
    {"case118/atc", AlgorithmKind::atc, 1.1, 300},
    {"case118/app", AlgorithmKind::app, 1e6, 0},
    {"case300/admm", AlgorithmKind::admm, 1e7, 0},
    {"case300/atc", AlgorithmKind::atc, 1.2, 300},
    {"case300/app", AlgorithmKind::app, 1e7, 0},
};

bool run_success(RunStatus status, double gap) {
  return status != RunStatus::subproblem_failure && std::isfinite(gap) &&
         gap < 0.01;
}

// ---------------------------------------------------------------- JSON out

void append_escaped(std::string& out, std::string_view s) {
  out += '"';
  for (char ch : s) {
    switch (ch) {
      case '"': out += "\\\""; break;
      case '\\': out += "\\\\"; break;
      case '\n': out += "\\n"; break;
      case '\r': out += "\\r"; break;
      case '\t': out += "\\t"; break;
      default:
        if (static_cast<unsigned char>(ch) < 0x20) {
          char buf[8];
          std::snprintf(buf, sizeof buf, "\\u%04x", ch);
          out += buf;
        } else {
          out += ch;
        }
    }
  }
  out += '"';
}

// 17 significant digits: enough for an exact double round trip.  NaN and
// infinity have no JSON spelling and become null.
void append_number(std::string& out, double v) {
  if (!std::isfinite(v)) {
    out += "null";
    return;
  }
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  out += buf;
}

void append_params(std::string& out, const AlgorithmParams& p,
                   const std::string& pad) {
  out += "{\n";
  out += pad + "  \"kind\": ";
  append_escaped(out, to_string(p.kind));
  out += ",\n" + pad + "  \"alpha\": ";
  append_number(out, p.alpha);
  out += ",\n" + pad + "  \"beta\": ";
  append_number(out, p.beta);
  out += ",\n" + pad + "  \"gamma\": ";
  append_number(out, p.gamma);
  out += ",\n" + pad + "  \"multiplier_init\": ";
  append_number(out, p.multiplier_init);
  out += ",\n" + pad + "  \"tolerance\": ";
  append_number(out, p.tolerance);
  out += ",\n" + pad + "  \"max_iterations\": " +
         std::to_string(p.max_iterations);
  out += ",\n" + pad + "  \"beta_cap\": ";
  append_number(out, p.beta_cap);
  out += ",\n" + pad + "  \"qp_tol\": ";
  append_number(out, p.qp_tol);
  out += "\n" + pad + "}";
}

void append_channel(std::string& out, const ChannelModel& c,
                    const std::string& pad) {
  out += "{\n";
  out += pad + "  \"kind\": ";
  append_escaped(out, to_string(c.kind));
  out += ",\n" + pad + "  \"sigma_noise\": ";
  append_number(out, c.sigma_noise);
  out += ",\n" + pad + "  \"r_max\": ";
  append_number(out, c.r_max);
  out += ",\n" + pad + "  \"p_bad\": ";
  append_number(out, c.p_bad);
  out += ",\n" + pad + "  \"lambda_f\": ";
  append_number(out, c.lambda_f);
  out += ",\n" + pad + "  \"lambda_r\": ";
  append_number(out, c.lambda_r);
  out += "\n" + pad + "}";
}

// ---------------------------------------------------------------- JSON in

double get_number(const json& j, const char* key, double fallback) {
  if (!j.contains(key)) return fallback;
  if (j.at(key).is_null()) return kNan;
  return j.at(key).get<double>();
}

void require_keys(const json& j, std::initializer_list<const char*> allowed,
                  const char* where) {
  for (const auto& item : j.items()) {
    bool known = false;
    for (const char* k : allowed) {
      if (item.key() == k) known = true;
    }
    if (!known) {
      throw std::invalid_argument("unknown key '" + item.key() + "' in " +
                                  where);
    }
  }
}

ChannelModel channel_from_json(const json& j) {
  require_keys(j,
               {"kind", "sigma_noise", "r_max", "p_bad", "lambda_f",
                "lambda_r"},
               "channel");
  ChannelModel c;
  c.kind = channel_kind_from_string(j.at("kind").get<std::string>());
  c.sigma_noise = get_number(j, "sigma_noise", c.sigma_noise);
  c.r_max = get_number(j, "r_max", c.r_max);
  c.p_bad = get_number(j, "p_bad", c.p_bad);
  c.lambda_f = get_number(j, "lambda_f", c.lambda_f);
  c.lambda_r = get_number(j, "lambda_r", c.lambda_r);
  return c;
}

AlgorithmParams params_from_json(const json& j, AlgorithmParams base,
                                 bool have_preset) {
  require_keys(j,
               {"kind", "alpha", "beta", "gamma", "multiplier_init",
                "tolerance", "max_iterations", "beta_cap", "qp_tol"},
               "algorithm");
  if (!have_preset || j.contains("kind")) {
    base.kind = algorithm_kind_from_string(j.at("kind").get<std::string>());
  }
  const bool have_alpha = j.contains("alpha");
  base.alpha = get_number(j, "alpha", base.alpha);
  if (base.kind == AlgorithmKind::app && have_alpha && !have_preset) {
    // same expansion as the presets unless overridden below
    base.gamma = base.alpha;
    base.beta = 2.0 * base.alpha;
  }
  if (base.kind == AlgorithmKind::atc && !have_preset && !j.contains("beta")) {
    base.beta = 1.0;
  }
  base.beta = get_number(j, "beta", base.beta);
  base.gamma = get_number(j, "gamma", base.gamma);
  base.multiplier_init = get_number(j, "multiplier_init", base.multiplier_init);
  base.tolerance = get_number(j, "tolerance", base.tolerance);
  if (j.contains("max_iterations")) {
    base.max_iterations = j.at("max_iterations").get<int>();
  }
  base.beta_cap = get_number(j, "beta_cap", base.beta_cap);
  base.qp_tol = get_number(j, "qp_tol", base.qp_tol);
  return base;
}

}  // namespace

double relative_gap(double dist_cost, double central_cost) {
  if (central_cost == 0.0) {
    throw std::invalid_argument(
        "relative_gap: centralized cost is zero; compare raw costs instead");
  }
  return std::abs(dist_cost - central_cost) / std::abs(central_cost);
}

AlgorithmParams preset_params(std::string_view name) {
  for (const PresetRow& row : kPresets) {
    if (name != row.name) continue;
    AlgorithmParams p;
    p.kind = row.kind;
    p.alpha = row.alpha;
    if (row.kind == AlgorithmKind::atc) p.beta = row.beta0;
    if (row.kind == AlgorithmKind::app) {
      p.gamma = row.alpha;
      p.beta = 2.0 * row.alpha;
    }
    return p;
  }
  std::string known;
  for (const PresetRow& row : kPresets) {
    if (!known.empty()) known += ", ";
    known += row.name;
  }
  throw std::invalid_argument("unknown preset '" + std::string(name) +
                              "'; known presets: " + known);
}

std::vector<std::string> preset_names() {
  std::vector<std::string> names;
  for (const PresetRow& row : kPresets) names.emplace_back(row.name);
  return names;
}

void ExperimentConfig::check() const {
  if (case_file.empty()) throw std::invalid_argument("config: no case file");
  if (partition_file.empty()) {
    throw std::invalid_argument("config: no partition file");
  }
  if (runs < 1) throw std::invalid_argument("config: runs must be >= 1");
  if (threads < 1) throw std::invalid_argument("config: threads must be >= 1");
  if (grid.empty()) {
    throw std::invalid_argument("config: channel grid is empty");
  }
  params.check();
  for (const ChannelModel& c : grid) c.check();
}

ExperimentConfig parse_config(const std::string& json_text) {
  const json j = json::parse(json_text);
  require_keys(j,
               {"case", "partition", "preset", "algorithm", "channels", "runs",
                "seed", "threads", "output"},
               "config");
  ExperimentConfig cfg;
  cfg.case_file = j.at("case").get<std::string>();
  cfg.partition_file = j.at("partition").get<std::string>();
  if (j.contains("preset")) {
    cfg.preset = j.at("preset").get<std::string>();
    cfg.params = preset_params(cfg.preset);
  }
  if (j.contains("algorithm")) {
    cfg.params =
        params_from_json(j.at("algorithm"), cfg.params, !cfg.preset.empty());
  } else if (cfg.preset.empty()) {
    throw std::invalid_argument("config: need either preset or algorithm");
  }
  for (const json& c : j.at("channels")) {
    cfg.grid.push_back(channel_from_json(c));
  }
  if (j.contains("runs")) cfg.runs = j.at("runs").get<int>();
  if (j.contains("seed")) cfg.base_seed = j.at("seed").get<std::uint64_t>();
  if (j.contains("threads")) cfg.threads = j.at("threads").get<int>();
  if (j.contains("output")) {
    const json& out = j.at("output");
    require_keys(out, {"json", "csv"}, "output");
    if (out.contains("json")) cfg.json_path = out.at("json").get<std::string>();
    if (out.contains("csv")) cfg.csv_path = out.at("csv").get<std::string>();
  }
  cfg.check();
  return cfg;
}

ExperimentConfig load_config(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open config file: " + path);
  std::ostringstream buf;
  buf << in.rdbuf();
  try {
    return parse_config(buf.str());
  } catch (const json::exception& e) {
    throw std::runtime_error(path + ": " + e.what());
  } catch (const std::invalid_argument& e) {
    throw std::invalid_argument(path + ": " + e.what());
  }
}

RunSummary summarize_run(const RunRecord& record) {
  RunSummary s;
  s.seed = record.seed;
  s.status = record.status;
  s.iterations = record.iterations;
  s.final_true_mismatch =
      record.trace.empty() ? kNan : record.trace.back().true_mismatch;
  s.final_perceived_mismatch =
      record.trace.empty() ? kNan : record.trace.back().perceived_mismatch;
  s.objective = record.objective;
  s.relative_gap = record.relative_gap;
  s.beta_overflow = record.beta_overflow;
  s.success = run_success(record.status, record.relative_gap);
  return s;
}

double success_rate(const std::vector<RunRecord>& records) {
  if (records.empty()) {
    throw std::invalid_argument("success_rate: no records");
  }
  int successes = 0;
  for (const RunRecord& r : records) {
    if (run_success(r.status, r.relative_gap)) ++successes;
  }
  return 100.0 * successes / static_cast<double>(records.size());
}

ExperimentReport run_experiment(const ExperimentConfig& config) {
  config.check();
  const NetworkCase nc = load_case(config.case_file);
  const RegionAssignment assign = load_assignment(config.partition_file);
  const PartitionedModel pm = decompose(nc, assign);
  const OpfSolution central = solve_centralized(nc);
  if (central.status != QpStatus::optimal) {
    throw std::runtime_error("centralized DC-OPF on " + config.case_file +
                             " is " + to_string(central.status) +
                             "; experiments need an optimal benchmark");
  }

  ExperimentReport report;
  report.case_name = nc.name;
  report.partition_file = config.partition_file;
  report.algorithm = to_string(config.params.kind);
  report.params = config.params;
  report.runs = config.runs;
  report.base_seed = config.base_seed;
  report.central_objective = central.objective;

  // Flat (point, run) task list filled into fixed slots: aggregation order
  // and therefore the report never depend on scheduling.
  const int total = static_cast<int>(config.grid.size()) * config.runs;
  std::vector<RunSummary> slots(static_cast<std::size_t>(total));
  std::atomic<int> next{0};
  std::atomic<bool> poisoned{false};
  std::exception_ptr error;
  std::mutex error_mutex;

  auto worker = [&]() {
    for (;;) {
      const int t = next.fetch_add(1);
      if (t >= total || poisoned.load()) return;
      const int point = t / config.runs;
      const int run = t % config.runs;
      const ChannelModel& channel = config.grid[static_cast<std::size_t>(point)];
      const std::uint64_t seed =
          derive_seed({config.base_seed, channel.content_hash(),
                       static_cast<std::uint64_t>(run)});
      try {
        slots[static_cast<std::size_t>(t)] = summarize_run(run_distributed(
            pm, config.params, channel, seed, central.objective));
      } catch (...) {
        std::lock_guard<std::mutex> lock(error_mutex);
        if (!error) error = std::current_exception();
        poisoned.store(true);
        return;
      }
    }
  };

  const int nthreads = std::max(1, std::min(config.threads, total));
  if (nthreads == 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    pool.reserve(static_cast<std::size_t>(nthreads));
    for (int i = 0; i < nthreads; ++i) pool.emplace_back(worker);
    for (std::thread& th : pool) th.join();
  }
  if (error) std::rethrow_exception(error);

  for (std::size_t point = 0; point < config.grid.size(); ++point) {
    PointReport pr;
    pr.channel = config.grid[point];
    pr.runs.assign(slots.begin() + static_cast<long>(point) * config.runs,
                   slots.begin() + static_cast<long>(point + 1) * config.runs);

    int successes = 0;
    double iter_sum = 0.0;
    double mm_sum = 0.0, mm_sq = 0.0;
    int mm_n = 0;
    double gap_sum = 0.0, gap_max = 0.0;
    int gap_n = 0;
    for (const RunSummary& rs : pr.runs) {
      if (rs.status == RunStatus::subproblem_failure) ++pr.failures;
      if (rs.success) {
        ++successes;
        iter_sum += rs.iterations;
      }
      if (std::isfinite(rs.final_true_mismatch)) {
        mm_sum += rs.final_true_mismatch;
        mm_sq += rs.final_true_mismatch * rs.final_true_mismatch;
        ++mm_n;
      }
      if (std::isfinite(rs.relative_gap)) {
        gap_sum += rs.relative_gap;
        gap_max = std::max(gap_max, rs.relative_gap);
        ++gap_n;
      }
    }
    pr.success_rate = 100.0 * successes / static_cast<double>(pr.runs.size());
    pr.avg_iterations = successes > 0
                            ? iter_sum / successes
                            : static_cast<double>(config.params.max_iterations);
    if (mm_n > 0) {
      pr.mean_mismatch = mm_sum / mm_n;
      const double var =
          mm_n > 1
              ? std::max(0.0, (mm_sq - mm_sum * mm_sum / mm_n) / (mm_n - 1))
              : 0.0;
      pr.std_mismatch = std::sqrt(var);
    } else {
      pr.mean_mismatch = kNan;
      pr.std_mismatch = kNan;
    }
    pr.mean_gap = gap_n > 0 ? gap_sum / gap_n : kNan;
    pr.max_gap = gap_n > 0 ? gap_max : kNan;
    report.points.push_back(std::move(pr));
  }

  if (!config.json_path.empty()) {
    write_file(config.json_path, report_to_json(report));
  }
  if (!config.csv_path.empty()) {
    write_file(config.csv_path, report_to_csv(report));
  }
  return report;
}

std::string report_to_json(const ExperimentReport& report) {
  std::string out;
  out.reserve(4096 + report.points.size() * 2048);
  out += "{\n  \"case\": ";
  append_escaped(out, report.case_name);
  out += ",\n  \"partition\": ";
  append_escaped(out, report.partition_file);
  out += ",\n  \"algorithm\": ";
  append_escaped(out, report.algorithm);
  out += ",\n  \"params\": ";
  append_params(out, report.params, "  ");
  out += ",\n  \"runs\": " + std::to_string(report.runs);
  out += ",\n  \"base_seed\": " + std::to_string(report.base_seed);
  out += ",\n  \"central_objective\": ";
  append_number(out, report.central_objective);
  out += ",\n  \"points\": [";
  for (std::size_t i = 0; i < report.points.size(); ++i) {
    const PointReport& pr = report.points[i];
    out += i == 0 ? "\n" : ",\n";
    out += "    {\n      \"channel\": ";
    append_channel(out, pr.channel, "      ");
    out += ",\n      \"success_rate\": ";
    append_number(out, pr.success_rate);
    out += ",\n      \"avg_iterations\": ";
    append_number(out, pr.avg_iterations);
    out += ",\n      \"mean_mismatch\": ";
    append_number(out, pr.mean_mismatch);
    out += ",\n      \"std_mismatch\": ";
    append_number(out, pr.std_mismatch);
    out += ",\n      \"mean_gap\": ";
    append_number(out, pr.mean_gap);
    out += ",\n      \"max_gap\": ";
    append_number(out, pr.max_gap);
    out += ",\n      \"failures\": " + std::to_string(pr.failures);
    out += ",\n      \"runs\": [";
    for (std::size_t r = 0; r < pr.runs.size(); ++r) {
      const RunSummary& rs = pr.runs[r];
      out += r == 0 ? "\n" : ",\n";
      out += "        {\"seed\": " + std::to_string(rs.seed);
      out += ", \"status\": ";
      append_escaped(out, to_string(rs.status));
      out += ", \"iterations\": " + std::to_string(rs.iterations);
      out += ", \"final_true_mismatch\": ";
      append_number(out, rs.final_true_mismatch);
      out += ", \"final_perceived_mismatch\": ";
      append_number(out, rs.final_perceived_mismatch);
      out += ", \"objective\": ";
      append_number(out, rs.objective);
      out += ", \"relative_gap\": ";
      append_number(out, rs.relative_gap);
      out += ", \"beta_overflow\": ";
      out += rs.beta_overflow ? "true" : "false";
      out += ", \"success\": ";
      out += rs.success ? "true" : "false";
      out += "}";
    }
    out += "\n      ]\n    }";
  }
  out += "\n  ]\n}\n";
  return out;
}

std::string report_to_csv(const ExperimentReport& report) {
  std::string out =
      "point,channel_kind,sigma_noise,r_max,p_bad,lambda_f,lambda_r,"
      "statistic,value\n";
  for (std::size_t i = 0; i < report.points.size(); ++i) {
    const PointReport& pr = report.points[i];
    std::string prefix = std::to_string(i);
    prefix += ',';
    prefix += to_string(pr.channel.kind);
    for (double v : {pr.channel.sigma_noise, pr.channel.r_max,
                     pr.channel.p_bad, pr.channel.lambda_f,
                     pr.channel.lambda_r}) {
      prefix += ',';
      append_number(prefix, v);
    }
    const std::pair<const char*, double> stats[] = {
        {"success_rate", pr.success_rate},
        {"avg_iterations", pr.avg_iterations},
        {"mean_mismatch", pr.mean_mismatch},
        {"std_mismatch", pr.std_mismatch},
        {"mean_gap", pr.mean_gap},
        {"max_gap", pr.max_gap},
        {"failures", static_cast<double>(pr.failures)},
    };
    for (const auto& [name, value] : stats) {
      out += prefix;
      out += ',';
      out += name;
      out += ',';
      append_number(out, value);
      out += '\n';
    }
  }
  return out;
}

ExperimentReport report_from_json(const std::string& text) {
  const json j = json::parse(text);
  ExperimentReport report;
  report.case_name = j.at("case").get<std::string>();
  report.partition_file = j.at("partition").get<std::string>();
  report.algorithm = j.at("algorithm").get<std::string>();
  const json& p = j.at("params");
  report.params.kind =
      algorithm_kind_from_string(p.at("kind").get<std::string>());
  report.params.alpha = get_number(p, "alpha", 0.0);
  report.params.beta = get_number(p, "beta", 1.0);
  report.params.gamma = get_number(p, "gamma", 0.0);
  report.params.multiplier_init = get_number(p, "multiplier_init", 0.0);
  report.params.tolerance = get_number(p, "tolerance", 1e-4);
  report.params.max_iterations = p.at("max_iterations").get<int>();
  report.params.beta_cap = get_number(p, "beta_cap", 1e12);
  report.params.qp_tol = get_number(p, "qp_tol", 1e-8);
  report.runs = j.at("runs").get<int>();
  report.base_seed = j.at("base_seed").get<std::uint64_t>();
  report.central_objective = get_number(j, "central_objective", kNan);
  for (const json& jp : j.at("points")) {
    PointReport pr;
    pr.channel = channel_from_json(jp.at("channel"));
    pr.success_rate = get_number(jp, "success_rate", 0.0);
    pr.avg_iterations = get_number(jp, "avg_iterations", 0.0);
    pr.mean_mismatch = get_number(jp, "mean_mismatch", kNan);
    pr.std_mismatch = get_number(jp, "std_mismatch", kNan);
    pr.mean_gap = get_number(jp, "mean_gap", kNan);
    pr.max_gap = get_number(jp, "max_gap", kNan);
    pr.failures = jp.at("failures").get<int>();
    for (const json& jr : jp.at("runs")) {
      RunSummary rs;
      rs.seed = jr.at("seed").get<std::uint64_t>();
      rs.status = run_status_from_string(jr.at("status").get<std::string>());
      rs.iterations = jr.at("iterations").get<int>();
      rs.final_true_mismatch = get_number(jr, "final_true_mismatch", kNan);
      rs.final_perceived_mismatch =
          get_number(jr, "final_perceived_mismatch", kNan);
      rs.objective = get_number(jr, "objective", kNan);
      rs.relative_gap = get_number(jr, "relative_gap", kNan);
      rs.beta_overflow = jr.at("beta_overflow").get<bool>();
      rs.success = jr.at("success").get<bool>();
      pr.runs.push_back(rs);
    }
    report.points.push_back(std::move(pr));
  }
  return report;
}

void write_file(const std::string& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write " + path);
  out.write(content.data(), static_cast<std::streamsize>(content.size()));
  if (!out) throw std::runtime_error("short write to " + path);
}

}  // namespace dopf
