#include <CLI11.hpp>

#include <cmath>
#include <cstdio>
#include <exception>
#include <string>

#include "dopf/algorithms.hpp"
#include "dopf/comms.hpp"
#include "dopf/experiment.hpp"
#include "dopf/network.hpp"
#include "dopf/opf.hpp"
#include "dopf/partition.hpp"

namespace {

struct SolveArgs {
  std::string case_file;
  double tol = 1e-8;
  bool flows = false;
  bool dispatch = false;
};

struct RunArgs {
  std::string case_file;
  std::string partition_file;
  std::string preset;
  std::string algo;
  double alpha = 0.0;
  double beta = -1.0;   // <0 = keep preset/default
  double gamma = -1.0;
  double multiplier_init = 0.0;
  double tolerance = 1e-4;
  int max_iterations = 1000;
  std::string channel = "ideal";
  double sigma = 0.0;
  double r_max = 2.0;
  double p_bad = 0.0;
  double lambda_f = 0.0;
  double lambda_r = 0.0;
  std::uint64_t seed = 1;
  bool trace = false;
};

struct ExperimentArgs {
  std::string config;
  int threads = 0;  // 0 = take from config
  std::string json_path;
  std::string csv_path;
  bool quiet = false;
};

int do_solve(const SolveArgs& args) {
  const dopf::NetworkCase nc = dopf::load_case(args.case_file);
  const dopf::OpfSolution sol = dopf::solve_centralized(nc, args.tol);
  std::printf("case:       %s\n", nc.name.c_str());
  std::printf("buses:      %zu  generators: %zu  branches: %zu\n",
              nc.buses.size(), nc.generators.size(), nc.branches.size());
  std::printf("status:     %s\n", dopf::to_string(sol.status));
  if (sol.status != dopf::QpStatus::optimal) return 1;
  std::printf("objective:  %.6f $/h\n", sol.objective);
  std::printf("demand:     %.4f p.u.   generation: %.4f p.u.\n",
              nc.total_demand(), sol.p.sum());
  if (args.dispatch) {
    for (Eigen::Index k = 0; k < sol.p.size(); ++k) {
      std::printf("  gen %2lld @ bus %3d: %9.4f MW  in [%.1f, %.1f]\n",
                  static_cast<long long>(k), nc.generators[k].bus,
                  sol.p(k) * nc.base_mva, nc.generators[k].p_min_mw,
                  nc.generators[k].p_max_mw);
    }
  }
  if (args.flows) {
    const Eigen::VectorXd flows = dopf::line_flows(nc, sol.theta);
    for (Eigen::Index b = 0; b < flows.size(); ++b) {
      std::printf("  branch %3d-%3d: %9.4f MW\n", nc.branches[b].from,
                  nc.branches[b].to, flows(b) * nc.base_mva);
    }
  }
  return 0;
}

dopf::AlgorithmParams params_from_run_args(const RunArgs& args) {
  dopf::AlgorithmParams params;
  if (!args.preset.empty()) {
    params = dopf::preset_params(args.preset);
  } else {
    if (args.algo.empty()) {
      throw std::invalid_argument("run: need --preset or --algo");
    }
    params.kind = dopf::algorithm_kind_from_string(args.algo);
    params.alpha = args.alpha;
    if (params.kind == dopf::AlgorithmKind::app) {
      params.gamma = args.alpha;
      params.beta = 2.0 * args.alpha;
    }
    if (params.kind == dopf::AlgorithmKind::atc) params.beta = 1.0;
  }
  if (args.alpha > 0.0) params.alpha = args.alpha;
  if (args.beta >= 0.0) params.beta = args.beta;
  if (args.gamma >= 0.0) params.gamma = args.gamma;
  params.multiplier_init = args.multiplier_init;
  params.tolerance = args.tolerance;
  params.max_iterations = args.max_iterations;
  return params;
}

int do_run(const RunArgs& args) {
  const dopf::NetworkCase nc = dopf::load_case(args.case_file);
  const dopf::RegionAssignment assign =
      dopf::load_assignment(args.partition_file);
  const dopf::PartitionedModel pm = dopf::decompose(nc, assign);
  const dopf::AlgorithmParams params = params_from_run_args(args);

  dopf::ChannelModel channel;
  channel.kind = dopf::channel_kind_from_string(args.channel);
  channel.sigma_noise = args.sigma;
  channel.r_max = args.r_max;
  channel.p_bad = args.p_bad;
  channel.lambda_f = args.lambda_f;
  channel.lambda_r = args.lambda_r;
  channel.check();

  const dopf::OpfSolution central = dopf::solve_centralized(nc);
  if (central.status != dopf::QpStatus::optimal) {
    std::fprintf(stderr, "centralized DC-OPF is %s; cannot price the gap\n",
                 dopf::to_string(central.status));
    return 1;
  }

  const dopf::RunRecord record = dopf::run_distributed(
      pm, params, channel, args.seed, central.objective);
  if (args.trace) {
    std::printf("iter   true_mismatch  perceived      objective\n");
    for (std::size_t i = 0; i < record.trace.size(); ++i) {
      std::printf("%4zu   %13.6e  %13.6e  %13.4f\n", i + 1,
                  record.trace[i].true_mismatch,
                  record.trace[i].perceived_mismatch,
                  record.trace[i].objective);
    }
  }
  std::printf("regions:           %zu (%zu shared buses, %zu tie lines)\n",
              pm.regions.size(), pm.shared_buses.size(),
              pm.registry.size() / 2);
  std::printf("algorithm:         %s  alpha=%g beta=%g gamma=%g\n",
              dopf::to_string(params.kind), params.alpha, params.beta,
              params.gamma);
  std::printf("channel:           %s\n", dopf::to_string(channel.kind));
  std::printf("status:            %s%s\n", dopf::to_string(record.status),
              record.beta_overflow ? " (beta cap hit)" : "");
  std::printf("iterations:        %d\n", record.iterations);
  if (!record.trace.empty()) {
    std::printf("final mismatch:    %.6e rad (perceived %.6e)\n",
                record.trace.back().true_mismatch,
                record.trace.back().perceived_mismatch);
  }
  std::printf("objective:         %.6f $/h (centralized %.6f)\n",
              record.objective, central.objective);
  std::printf("relative gap:      %.6e\n", record.relative_gap);
  return record.status == dopf::RunStatus::subproblem_failure ? 1 : 0;
}

int do_experiment(const ExperimentArgs& args) {
  dopf::ExperimentConfig config = dopf::load_config(args.config);
  if (args.threads > 0) config.threads = args.threads;
  if (!args.json_path.empty()) config.json_path = args.json_path;
  if (!args.csv_path.empty()) config.csv_path = args.csv_path;

  const dopf::ExperimentReport report = dopf::run_experiment(config);
  if (!args.quiet) {
    std::printf("%s  %s  central %.4f $/h  %d runs/point\n",
                report.case_name.c_str(), report.algorithm.c_str(),
                report.central_objective, report.runs);
    for (std::size_t i = 0; i < report.points.size(); ++i) {
      const dopf::PointReport& pr = report.points[i];
      std::printf(
          "point %2zu %-17s success %6.1f%%  avg iters %7.1f  "
          "mean mismatch %.3e\n",
          i, dopf::to_string(pr.channel.kind), pr.success_rate,
          pr.avg_iterations, pr.mean_mismatch);
    }
    if (!config.json_path.empty()) {
      std::printf("wrote %s\n", config.json_path.c_str());
    }
    if (!config.csv_path.empty()) {
      std::printf("wrote %s\n", config.csv_path.c_str());
    }
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Distributed DC-OPF under nonideal communications"};
  app.require_subcommand(1);

  SolveArgs solve_args;
  CLI::App* solve = app.add_subcommand("solve", "Centralized DC-OPF solve");
  solve->add_option("--case", solve_args.case_file, "MATPOWER-style case file")
      ->required();
  solve->add_option("--tol", solve_args.tol, "KKT tolerance");
  solve->add_flag("--flows", solve_args.flows, "print branch flows");
  solve->add_flag("--dispatch", solve_args.dispatch,
                  "print generator dispatch");

  RunArgs run_args;
  CLI::App* run = app.add_subcommand("run", "One distributed run");
  run->add_option("--case", run_args.case_file, "MATPOWER-style case file")
      ->required();
  run->add_option("--partition", run_args.partition_file,
                  "bus-to-region assignment file")
      ->required();
  run->add_option("--preset", run_args.preset,
                  "named parameter preset, e.g. case118/admm");
  run->add_option("--algo", run_args.algo, "admm | atc | app");
  run->add_option("--alpha", run_args.alpha, "penalty / growth / dual step");
  run->add_option("--beta", run_args.beta, "ATC initial beta or APP beta");
  run->add_option("--gamma", run_args.gamma, "APP gamma");
  run->add_option("--multiplier-init", run_args.multiplier_init,
                  "initial multiplier value");
  run->add_option("--tol", run_args.tolerance, "stopping tolerance, radians");
  run->add_option("--max-iter", run_args.max_iterations, "iteration cap");
  run->add_option("--channel", run_args.channel,
                  "ideal | gaussian | bad_data | intermittent_loss");
  run->add_option("--sigma", run_args.sigma, "gaussian noise std dev");
  run->add_option("--r-max", run_args.r_max, "bad-data magnitude, radians");
  run->add_option("--p-bad", run_args.p_bad, "bad-data probability");
  run->add_option("--lambda-f", run_args.lambda_f, "loss failure probability");
  run->add_option("--lambda-r", run_args.lambda_r, "loss recovery probability");
  run->add_option("--seed", run_args.seed, "run seed");
  run->add_flag("--trace", run_args.trace, "print the iteration trace");

  ExperimentArgs exp_args;
  CLI::App* experiment =
      app.add_subcommand("experiment", "Monte-Carlo sweep from a JSON config");
  experiment->add_option("--config", exp_args.config, "config file")
      ->required();
  experiment->add_option("--threads", exp_args.threads,
                         "worker threads (overrides config)");
  experiment->add_option("--json", exp_args.json_path,
                         "JSON report path (overrides config)");
  experiment->add_option("--csv", exp_args.csv_path,
                         "CSV report path (overrides config)");
  experiment->add_flag("--quiet", exp_args.quiet, "no progress output");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e);
  }

  try {
    if (solve->parsed()) return do_solve(solve_args);
    if (run->parsed()) return do_run(run_args);
    if (experiment->parsed()) return do_experiment(exp_args);
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
  return 0;
}
