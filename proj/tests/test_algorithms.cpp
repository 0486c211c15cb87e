#include <doctest.h>

#include <Eigen/Dense>

#include <cmath>
#include <string>
#include <vector>

#include "dopf/algorithms.hpp"
#include "dopf/comms.hpp"
#include "dopf/network.hpp"
#include "dopf/opf.hpp"
#include "dopf/partition.hpp"
#include "dopf/qp.hpp"

using dopf::AlgorithmKind;
using dopf::AlgorithmParams;
using dopf::ChannelKind;
using dopf::ChannelModel;
using dopf::NetworkCase;
using dopf::PartitionedModel;
using dopf::QpStatus;
using dopf::RegionCoupling;
using dopf::RunRecord;
using dopf::RunStatus;
using dopf::admm_coordinator_update;
using dopf::admm_multiplier_update;
using dopf::algorithm_kind_from_string;
using dopf::app_multiplier_update;
using dopf::atc_beta_update;
using dopf::atc_coordinator_update;
using dopf::atc_multiplier_update;
using dopf::build_region_subproblem;
using dopf::consistency_mismatch;
using dopf::decompose;
using dopf::objective_cost;
using dopf::parse_assignment;
using dopf::parse_case;
using dopf::run_distributed;
using dopf::run_status_from_string;
using dopf::solve_centralized;
using dopf::solve_qp;
using dopf::to_string;

namespace {

const char* kTwoBus = R"(function mpc = case2
mpc.baseMVA = 100;
mpc.bus = [
  1  3    0  0  0  0  1  1  0  345  1  1.1  0.9;
  2  1  100  0  0  0  1  1  0  345  1  1.1  0.9;
];
mpc.gen = [
  1  0  0  300  -300  1  100  1  400  0;
];
mpc.branch = [
  1  2  0  0.1  0  250  0  0  0  0  1  -360  360;
];
mpc.gencost = [
  2  0  0  3  0.0001  0  0;
];
)";

PartitionedModel two_bus_split() {
  return decompose(parse_case(kTwoBus), parse_assignment("1 1\n2 2\n"));
}

AlgorithmParams admm_params(double alpha) {
  AlgorithmParams p;
  p.kind = AlgorithmKind::admm;
  p.alpha = alpha;
  return p;
}

AlgorithmParams atc_params(double alpha, double beta = 1.0) {
  AlgorithmParams p;
  p.kind = AlgorithmKind::atc;
  p.alpha = alpha;
  p.beta = beta;
  return p;
}

AlgorithmParams app_params(double beta) {
  AlgorithmParams p;
  p.kind = AlgorithmKind::app;
  p.beta = beta;
  p.alpha = beta / 2.0;
  p.gamma = beta / 2.0;
  return p;
}

// vertex of a 1-d quadratic from three samples; exact up to rounding
template <typename F>
double numeric_vertex(F q, double x0, double h) {
  const double lo = q(x0 - h), mid = q(x0), hi = q(x0 + h);
  return x0 - 0.5 * h * (hi - lo) / (hi - 2.0 * mid + lo);
}

}  // namespace

TEST_CASE("kind and status names round-trip") {
  for (const AlgorithmKind k :
       {AlgorithmKind::admm, AlgorithmKind::atc, AlgorithmKind::app}) {
    CHECK(algorithm_kind_from_string(to_string(k)) == k);
  }
  CHECK_THROWS_AS(algorithm_kind_from_string("simplex"),
                  std::invalid_argument);
  for (const RunStatus s :
       {RunStatus::converged, RunStatus::iteration_limit,
        RunStatus::subproblem_failure}) {
    CHECK(run_status_from_string(to_string(s)) == s);
  }
}

TEST_CASE("parameter validation per algorithm") {
  AlgorithmParams p = admm_params(0.0);
  CHECK_THROWS_AS(p.check(), std::invalid_argument);  // alpha must be > 0
  p.alpha = 1e3;
  p.check();
  p.tolerance = 0.0;
  CHECK_THROWS_AS(p.check(), std::invalid_argument);

  AlgorithmParams t = atc_params(0.99);
  CHECK_THROWS_AS(t.check(), std::invalid_argument);  // growth rate >= 1
  t.alpha = 1.1;
  t.check();
  t.beta_cap = 0.5;  // below the initial beta
  CHECK_THROWS_AS(t.check(), std::invalid_argument);

  AlgorithmParams a = app_params(10.0);
  a.check();
  a.alpha = 12.0;  // alpha < 2 gamma violated
  CHECK_THROWS_AS(a.check(), std::invalid_argument);
  a.alpha = 5.0;
  a.gamma = 6.0;  // 2 gamma <= beta violated
  CHECK_THROWS_AS(a.check(), std::invalid_argument);
}

TEST_CASE("coordinator updates: hand examples") {
  Eigen::VectorXd copies(2), zeros(2);
  copies << 0.2, 0.4;
  zeros.setZero();
  // zero multipliers: plain average, independent of the weight
  CHECK(admm_coordinator_update(copies, zeros, 7.0) == doctest::Approx(0.3));
  CHECK(atc_coordinator_update(copies, zeros, 3.0) == doctest::Approx(0.3));

  // multipliers shift the consensus by -sum(lambda) / (weight * count)
  Eigen::VectorXd lam(2);
  lam << 0.2, 0.0;
  CHECK(admm_coordinator_update(zeros, lam, 2.0) ==
        doctest::Approx(-0.05));  // -0.2 / (2 * 2)
  // ATC weight is 2 beta^2
  CHECK(atc_coordinator_update(zeros, lam, 2.0) ==
        doctest::Approx(-0.2 / (2.0 * 4.0 * 2.0)));

  // opposing multipliers cancel
  lam << 0.3, -0.3;
  CHECK(admm_coordinator_update(copies, lam, 5.0) == doctest::Approx(0.3));
}

TEST_CASE("coordinator updates minimize the coordinator quadratic") {
  Eigen::VectorXd copies(3), lam(3);
  copies << 0.11, -0.07, 0.25;
  lam << 1.4, -0.6, 0.3;

  SUBCASE("admm") {
    const double alpha = 37.0;
    const double closed = admm_coordinator_update(copies, lam, alpha);
    const auto q = [&](double th) {
      double v = 0.0;
      for (int m = 0; m < 3; ++m) {
        const double d = th - copies[m];
        v += lam[m] * d + 0.5 * alpha * d * d;
      }
      return v;
    };
    CHECK(std::abs(closed - numeric_vertex(q, 0.0, 0.5)) < 1e-8);
    CHECK(q(closed) < q(closed + 1e-4));
    CHECK(q(closed) < q(closed - 1e-4));
  }
  SUBCASE("atc") {
    const double beta = 4.0;
    const double closed = atc_coordinator_update(copies, lam, beta);
    const auto q = [&](double th) {
      double v = 0.0;
      for (int m = 0; m < 3; ++m) {
        const double d = th - copies[m];
        v += lam[m] * d + beta * beta * d * d;
      }
      return v;
    };
    CHECK(std::abs(closed - numeric_vertex(q, 0.0, 0.5)) < 1e-8);
  }
}

TEST_CASE("multiplier updates are the exact affine maps") {
  Eigen::VectorXd lam(2), tc(2), tm(2), tn(2);
  lam << 1.0, -1.0;
  tc << 0.5, 0.5;
  tm << 0.25, 1.0;
  tn << 0.125, 0.75;

  const Eigen::VectorXd a = admm_multiplier_update(lam, 2.0, tc, tm);
  CHECK(a[0] == 1.0 + 2.0 * 0.25);   // exact in binary
  CHECK(a[1] == -1.0 + 2.0 * -0.5);

  const Eigen::VectorXd t = atc_multiplier_update(lam, 2.0, tc, tm);
  // weight 2 beta^2 = 8
  CHECK(t[0] == 1.0 + 8.0 * 0.25);
  CHECK(t[1] == -1.0 + 8.0 * -0.5);

  const Eigen::VectorXd p = app_multiplier_update(lam, 4.0, tm, tn);
  CHECK(p[0] == 1.0 + 4.0 * (0.25 - 0.125));
  CHECK(p[1] == -1.0 + 4.0 * 0.25);
}

TEST_CASE("beta grows geometrically") {
  double beta = 1.0;
  for (int k = 0; k < 10; ++k) beta = atc_beta_update(beta, 1.1);
  CHECK(beta == doctest::Approx(2.5937424601).epsilon(1e-12));
  CHECK(atc_beta_update(2.0, 1.0) == 2.0);  // rate 1 freezes beta
}

TEST_CASE("consensus with zero-sum multipliers is a fixed point") {
  Eigen::VectorXd copies = Eigen::VectorXd::Constant(3, 0.125);
  Eigen::VectorXd lam(3);
  lam << 0.5, -0.25, -0.25;
  const double tc = admm_coordinator_update(copies, lam, 10.0);
  CHECK(tc == 0.125);  // exact: mean is the common value, sum(lam) = 0
  const Eigen::VectorXd next = admm_multiplier_update(
      lam, 10.0, Eigen::VectorXd::Constant(3, tc), copies);
  CHECK(next == lam);
}

TEST_CASE("engine's first iteration matches one-shot subproblem solves") {
  const PartitionedModel pm = two_bus_split();
  const NetworkCase& nc = pm.base;

  for (const AlgorithmParams& params :
       {admm_params(10.0), atc_params(1.1, 2.0), app_params(20.0)}) {
    CAPTURE(to_string(params.kind));
    AlgorithmParams one = params;
    one.max_iterations = 1;
    one.tolerance = 1e-15;  // force the full first iteration
    ChannelModel ideal;
    const RunRecord rec = run_distributed(pm, one, ideal, 99);
    REQUIRE(rec.trace.size() == 1);

    // oracle: solve each region's documented subproblem from the cold
    // start (zero multipliers, zero targets)
    std::vector<Eigen::VectorXd> angles;
    Eigen::VectorXd p_global = Eigen::VectorXd::Zero(nc.generators.size());
    for (std::size_t r = 0; r < pm.regions.size(); ++r) {
      const int n_sh =
          static_cast<int>(pm.shared_of_region(static_cast<int>(r)).size());
      RegionCoupling c;
      c.lambda = Eigen::VectorXd::Zero(n_sh);
      c.theta_c = Eigen::VectorXd::Zero(n_sh);
      c.theta_m_prev = Eigen::VectorXd::Zero(n_sh);
      c.theta_n_prev = Eigen::VectorXd::Zero(n_sh);
      c.beta_k = params.beta;
      const dopf::QpSolution s =
          solve_qp(build_region_subproblem(pm, static_cast<int>(r), params, c));
      REQUIRE(s.status == QpStatus::optimal);
      const auto& rm = pm.regions[r];
      angles.push_back(s.x.head(rm.bus_ids.size()));
      for (std::size_t k = 0; k < rm.generators.size(); ++k) {
        p_global[rm.generators[k]] = s.x[rm.bus_ids.size() + k];
      }
    }
    CHECK(rec.trace[0].true_mismatch ==
          doctest::Approx(consistency_mismatch(pm, angles)).epsilon(1e-6));
    CHECK(rec.trace[0].objective ==
          doctest::Approx(objective_cost(nc, p_global)).epsilon(1e-6));
    // ideal channel: both mismatch views coincide exactly
    CHECK(rec.trace[0].perceived_mismatch == rec.trace[0].true_mismatch);
  }
}

TEST_CASE("a huge penalty pins shared copies to their targets") {
  const PartitionedModel pm = two_bus_split();
  AlgorithmParams params = admm_params(1e8);
  RegionCoupling c;
  c.lambda = Eigen::VectorXd::Zero(2);
  c.theta_c = Eigen::VectorXd::Zero(2);
  c.theta_c << 0.02, -0.05;
  const dopf::QpSolution s =
      solve_qp(build_region_subproblem(pm, 0, params, c));
  REQUIRE(s.status == QpStatus::optimal);
  // region 0 hosts [bus 1 (local 0), bus 2 (local 1)]; the reference pin
  // overrides the first target
  CHECK(s.x[0] == doctest::Approx(0.0));
  CHECK(s.x[1] == doctest::Approx(-0.05).epsilon(1e-5));
}

TEST_CASE("max_iterations = 0 returns the initial state untouched") {
  const PartitionedModel pm = two_bus_split();
  AlgorithmParams params = admm_params(10.0);
  params.max_iterations = 0;
  ChannelModel ideal;
  const RunRecord rec = run_distributed(pm, params, ideal, 1);
  CHECK(rec.status == RunStatus::iteration_limit);
  CHECK(rec.iterations == 0);
  CHECK(rec.trace.empty());
  CHECK(rec.assembled.theta.cwiseAbs().maxCoeff() == 0.0);
  // generators start at the midpoint of their box: (0 + 4) / 2
  CHECK(rec.assembled.p[0] == 2.0);
  CHECK(rec.seed == 1);
}

TEST_CASE("all three algorithms solve the 2-bus case over an ideal channel") {
  const PartitionedModel pm = two_bus_split();
  const double central = solve_centralized(pm.base).objective;
  REQUIRE(central == doctest::Approx(1.0).epsilon(1e-6));
  ChannelModel ideal;

  for (const AlgorithmParams& params :
       {admm_params(10.0), atc_params(1.1, 2.0), app_params(20.0)}) {
    CAPTURE(to_string(params.kind));
    const RunRecord rec = run_distributed(pm, params, ideal, 7, central);
    CHECK(rec.status == RunStatus::converged);
    CHECK(rec.iterations < 1000);
    CHECK(rec.relative_gap < 0.01);
    CHECK(std::abs(rec.objective - central) / central < 0.01);
    CHECK(rec.trace.back().true_mismatch <= params.tolerance);
    REQUIRE(rec.region_objectives.size() == 2);
    CHECK(rec.region_objectives[0] + rec.region_objectives[1] ==
          doctest::Approx(rec.objective).epsilon(1e-9));
    // final angles close to the centralized ones
    CHECK(std::abs(rec.assembled.theta[1] + 0.1) < 5e-3);
  }
}

TEST_CASE("true mismatch decreases to tolerance on the clean run") {
  const PartitionedModel pm = two_bus_split();
  ChannelModel ideal;
  const RunRecord rec = run_distributed(pm, admm_params(10.0), ideal, 7);
  REQUIRE(rec.status == RunStatus::converged);
  REQUIRE(rec.trace.size() >= 2);
  // monotone tail: the last mismatch is the smallest of the final stretch
  const double last = rec.trace.back().true_mismatch;
  CHECK(last <= 1e-4);
  CHECK(last <= rec.trace[rec.trace.size() / 2].true_mismatch);
}

TEST_CASE("identical seeds give bit-identical runs") {
  const PartitionedModel pm = two_bus_split();
  ChannelModel noisy;
  noisy.kind = ChannelKind::gaussian;
  noisy.sigma_noise = 1e-3;
  AlgorithmParams params = admm_params(10.0);
  params.max_iterations = 40;

  const RunRecord a = run_distributed(pm, params, noisy, 12345);
  const RunRecord b = run_distributed(pm, params, noisy, 12345);
  REQUIRE(a.trace.size() == b.trace.size());
  for (std::size_t k = 0; k < a.trace.size(); ++k) {
    CHECK(a.trace[k].true_mismatch == b.trace[k].true_mismatch);
    CHECK(a.trace[k].perceived_mismatch == b.trace[k].perceived_mismatch);
    CHECK(a.trace[k].objective == b.trace[k].objective);
  }
  CHECK(a.assembled.theta == b.assembled.theta);
  CHECK(a.assembled.p == b.assembled.p);

  const RunRecord c = run_distributed(pm, params, noisy, 54321);
  CHECK(a.trace.back().true_mismatch != c.trace.back().true_mismatch);
}

TEST_CASE("degenerate channels reproduce the ideal run bit for bit") {
  const PartitionedModel pm = two_bus_split();
  AlgorithmParams params = admm_params(10.0);
  ChannelModel ideal;
  const RunRecord base = run_distributed(pm, params, ideal, 31);

  ChannelModel g0;
  g0.kind = ChannelKind::gaussian;
  ChannelModel b0;
  b0.kind = ChannelKind::bad_data;
  ChannelModel l0;
  l0.kind = ChannelKind::intermittent_loss;
  for (const ChannelModel* m : {&g0, &b0, &l0}) {
    const RunRecord rec = run_distributed(pm, params, *m, 31);
    CHECK(rec.status == base.status);
    CHECK(rec.iterations == base.iterations);
    CHECK(rec.assembled.theta == base.assembled.theta);
    CHECK(rec.assembled.p == base.assembled.p);
  }
}

TEST_CASE("noise separates the perceived from the true mismatch") {
  const PartitionedModel pm = two_bus_split();
  ChannelModel noisy;
  noisy.kind = ChannelKind::gaussian;
  noisy.sigma_noise = 0.01;
  AlgorithmParams params = admm_params(10.0);
  params.max_iterations = 10;
  params.tolerance = 1e-15;
  const RunRecord rec = run_distributed(pm, params, noisy, 5);
  REQUIRE(rec.trace.size() == 10);
  bool differs = false;
  for (const auto& s : rec.trace) {
    if (s.perceived_mismatch != s.true_mismatch) differs = true;
  }
  CHECK(differs);
}

TEST_CASE("ATC runs are cut off when beta overflows the cap") {
  const PartitionedModel pm = two_bus_split();
  AlgorithmParams params = atc_params(2.0, 1.0);
  params.beta_cap = 100.0;
  params.tolerance = 1e-16;  // unreachable; force the overflow path
  ChannelModel ideal;
  const RunRecord rec = run_distributed(pm, params, ideal, 3);
  CHECK(rec.beta_overflow);
  CHECK(rec.status == RunStatus::iteration_limit);
  // beta doubles: cap 100 falls after 7 updates
  CHECK(rec.iterations <= 10);
}

TEST_CASE("flat cost rows raise the degenerate-cost flag") {
  std::string text = kTwoBus;
  const std::string needle = "2  0  0  3  0.0001  0  0";
  text.replace(text.find(needle), needle.size(), "2  0  0  3  0  20  0");
  const PartitionedModel pm =
      decompose(parse_case(text), parse_assignment("1 1\n2 2\n"));
  AlgorithmParams params = admm_params(10.0);
  params.max_iterations = 3;
  ChannelModel ideal;
  const RunRecord rec = run_distributed(pm, params, ideal, 1);
  CHECK(rec.degenerate_cost);

  const RunRecord clean = run_distributed(two_bus_split(), params, ideal, 1);
  CHECK(!clean.degenerate_cost);
}

TEST_CASE("relative gap is only priced against a finite centralized cost") {
  const PartitionedModel pm = two_bus_split();
  ChannelModel ideal;
  const RunRecord no_ref = run_distributed(pm, admm_params(10.0), ideal, 7);
  CHECK(std::isnan(no_ref.relative_gap));
  const RunRecord priced =
      run_distributed(pm, admm_params(10.0), ideal, 7, 1.0);
  CHECK(std::isfinite(priced.relative_gap));
  CHECK(priced.relative_gap ==
        doctest::Approx(std::abs(priced.objective - 1.0)).epsilon(1e-9));
}
