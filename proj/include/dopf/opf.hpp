#pragma once

#include <Eigen/Dense>

#include "dopf/network.hpp"
#include "dopf/qp.hpp"

namespace dopf {

// Centralized DC-OPF solution.  Vectors follow the case element order.
struct OpfSolution {
  Eigen::VectorXd theta;  // bus angles, radians
  Eigen::VectorXd p;      // generator outputs, p.u.
  double objective = 0.0;  // $/h, constant cost terms included
  QpStatus status = QpStatus::iteration_limit;
  int iterations = 0;
};

// Assemble the DC-OPF as a QP over x = [theta | p]: one power-balance
// equality per bus, a reference-angle pin, two-sided flow rows for every
// in-service branch with a finite limit, and generator box bounds.  The
// constant cost offsets (c0) cannot live in the QP objective; use
// objective_cost to price a solution.
QpProblem build_dc_opf(const NetworkCase& nc);

OpfSolution solve_centralized(const NetworkCase& nc, double tol = 1e-8);

// Per-branch flow B_b (theta_from - theta_to); zero for out-of-service
// branches.
Eigen::VectorXd line_flows(const NetworkCase& nc, const Eigen::VectorXd& theta);

// Total generation cost sum_g c2 p^2 + c1 p + c0 in $/h.
double objective_cost(const NetworkCase& nc, const Eigen::VectorXd& p);

}  // namespace dopf
