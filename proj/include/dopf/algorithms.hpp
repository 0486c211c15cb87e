#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <limits>
#include <string_view>
#include <vector>

#include "dopf/comms.hpp"
#include "dopf/opf.hpp"
#include "dopf/partition.hpp"
#include "dopf/qp.hpp"

namespace dopf {

enum class AlgorithmKind { admm, atc, app };

const char* to_string(AlgorithmKind k);
AlgorithmKind algorithm_kind_from_string(std::string_view s);

// Tuning constants.  alpha is the ADMM penalty weight, the ATC beta growth
// rate, and the APP dual step size; beta is the ATC initial beta and the
// APP proximal weight; gamma is APP's linearized-coupling weight.
struct AlgorithmParams {
  AlgorithmKind kind = AlgorithmKind::admm;
  double alpha = 0.0;
  double beta = 1.0;
  double gamma = 0.0;
  double multiplier_init = 0.0;
  double tolerance = 1e-4;  // radians, on the true consistency mismatch
  int max_iterations = 1000;
  // ATC's geometric beta eventually dwarfs any cost scale; runs are cut
  // off (and flagged) once beta passes this.
  double beta_cap = 1e12;
  double qp_tol = 1e-8;

  void check() const;  // throws std::invalid_argument per kind
};

enum class RunStatus { converged, iteration_limit, subproblem_failure };
const char* to_string(RunStatus s);
RunStatus run_status_from_string(std::string_view s);

struct IterationSample {
  // consistency mismatch of the regions' actual copies (what the harness
  // can see)
  double true_mismatch = 0.0;
  // the same norm through each region's received values (what the regions
  // themselves see; differs under channel faults)
  double perceived_mismatch = 0.0;
  double objective = 0.0;  // summed regional generation cost, $/h
};

struct RunRecord {
  RunStatus status = RunStatus::iteration_limit;
  int iterations = 0;  // completed iterations == trace length
  std::vector<IterationSample> trace;
  std::vector<double> region_objectives;  // final, per region
  OpfSolution assembled;                  // final global state, owner copies
  double objective = std::numeric_limits<double>::quiet_NaN();
  double relative_gap = std::numeric_limits<double>::quiet_NaN();
  bool beta_overflow = false;    // ATC hit beta_cap
  bool degenerate_cost = false;  // some generator has c2 = 0 (flat cost rows)
  std::uint64_t seed = 0;
};

// The consensus value for one shared bus: the stationarity solution of the
// coordinator's unconstrained quadratic, computed from all hosting
// regions' copies and multipliers.
double admm_coordinator_update(const Eigen::VectorXd& copies,
                               const Eigen::VectorXd& multipliers,
                               double alpha);
double atc_coordinator_update(const Eigen::VectorXd& copies,
                              const Eigen::VectorXd& multipliers, double beta);

// Dual ascent steps, elementwise over a region's shared copies.
Eigen::VectorXd admm_multiplier_update(const Eigen::VectorXd& lambda,
                                       double alpha,
                                       const Eigen::VectorXd& theta_c,
                                       const Eigen::VectorXd& theta_m);
Eigen::VectorXd atc_multiplier_update(const Eigen::VectorXd& lambda,
                                      double beta,
                                      const Eigen::VectorXd& theta_c,
                                      const Eigen::VectorXd& theta_m);
double atc_beta_update(double beta, double alpha);
Eigen::VectorXd app_multiplier_update(const Eigen::VectorXd& lambda,
                                      double alpha,
                                      const Eigen::VectorXd& theta_m,
                                      const Eigen::VectorXd& theta_n);

// Coupling state entering one region's local step; one entry per shared
// copy hosted by the region, in shared_buses order.
struct RegionCoupling {
  Eigen::VectorXd lambda;
  Eigen::VectorXd theta_c;       // ADMM/ATC pull target
  Eigen::VectorXd theta_m_prev;  // APP: own copies from the last iteration
  Eigen::VectorXd theta_n_prev;  // APP: neighbor means from the last iteration
  double beta_k = 1.0;           // ATC: beta in effect this iteration
};

// The local step's QP: build_region_qp plus the active algorithm's penalty
// terms on the shared-copy angles.  The iteration engine solves exactly
// this problem (incrementally, via a warm-started workspace); exposed so
// local steps can be cross-checked against one-shot solves.
QpProblem build_region_subproblem(const PartitionedModel& pm, int region,
                                  const AlgorithmParams& params,
                                  const RegionCoupling& c);

// Run one distributed solve to convergence (true mismatch <= tolerance) or
// to the iteration cap.  All shared values travel through per-direction
// links with the given channel model; every random draw is addressed by
// (seed, link, iteration, element), so the result is a pure function of
// the arguments.  central_objective, when finite, prices the final
// relative gap.
RunRecord run_distributed(
    const PartitionedModel& pm, const AlgorithmParams& params,
    const ChannelModel& channel, std::uint64_t seed,
    double central_objective = std::numeric_limits<double>::quiet_NaN());

}  // namespace dopf
