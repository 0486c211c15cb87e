#include "dopf/opf.hpp"

#include <cmath>
#include <limits>
#include <stdexcept>

namespace dopf {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

void require_valid(const NetworkCase& nc) {
  ValidationReport report = validate_case(nc);
  if (!report.ok()) {
    throw std::invalid_argument("invalid case: " + report.findings.front());
  }
}

}  // namespace

QpProblem build_dc_opf(const NetworkCase& nc) {
  require_valid(nc);

  const Eigen::Index nb = static_cast<Eigen::Index>(nc.buses.size());
  const Eigen::Index ng = static_cast<Eigen::Index>(nc.generators.size());
  const Eigen::Index n = nb + ng;

  QpProblem qp;
  qp.H = Eigen::MatrixXd::Zero(n, n);
  qp.g = Eigen::VectorXd::Zero(n);
  for (Eigen::Index k = 0; k < ng; ++k) {
    qp.H(nb + k, nb + k) = 2.0 * nc.generators[k].c2;
    qp.g(nb + k) = nc.generators[k].c1;
  }

  // Balance rows first (one per bus, in bus order), then the reference pin.
  qp.A_eq = Eigen::MatrixXd::Zero(nb + 1, n);
  qp.b_eq = Eigen::VectorXd::Zero(nb + 1);
  for (Eigen::Index i = 0; i < nb; ++i) qp.b_eq(i) = nc.buses[i].demand;
  for (Eigen::Index k = 0; k < ng; ++k) {
    qp.A_eq(nc.bus_index(nc.generators[k].bus), nb + k) = 1.0;
  }

  Eigen::Index n_flow = 0;
  for (const Branch& br : nc.branches) {
    if (br.in_service && br.flow_limit < kInf) ++n_flow;
  }
  qp.A_in = Eigen::MatrixXd::Zero(n_flow, n);
  qp.lb_in = Eigen::VectorXd::Zero(n_flow);
  qp.ub_in = Eigen::VectorXd::Zero(n_flow);

  Eigen::Index row = 0;
  for (const Branch& br : nc.branches) {
    if (!br.in_service) continue;
    const Eigen::Index f = nc.bus_index(br.from);
    const Eigen::Index t = nc.bus_index(br.to);
    const double b = br.susceptance;
    // p_i - d_i = sum_j B_ij (theta_i - theta_j): the angle block of the
    // balance rows is minus the weighted Laplacian.
    qp.A_eq(f, f) -= b;
    qp.A_eq(f, t) += b;
    qp.A_eq(t, t) -= b;
    qp.A_eq(t, f) += b;
    if (br.flow_limit < kInf) {
      qp.A_in(row, f) = b;
      qp.A_in(row, t) = -b;
      qp.lb_in(row) = -br.flow_limit;
      qp.ub_in(row) = br.flow_limit;
      ++row;
    }
  }
  qp.A_eq(nb, nc.ref_bus_index()) = 1.0;

  qp.lb = Eigen::VectorXd::Constant(n, -kInf);
  qp.ub = Eigen::VectorXd::Constant(n, kInf);
  for (Eigen::Index k = 0; k < ng; ++k) {
    qp.lb(nb + k) = nc.generators[k].p_min;
    qp.ub(nb + k) = nc.generators[k].p_max;
  }
  return qp;
}

OpfSolution solve_centralized(const NetworkCase& nc, double tol) {
  const QpProblem qp = build_dc_opf(nc);
  const QpSolution sol = solve_qp(qp, tol);

  const Eigen::Index nb = static_cast<Eigen::Index>(nc.buses.size());
  const Eigen::Index ng = static_cast<Eigen::Index>(nc.generators.size());

  OpfSolution out;
  out.status = sol.status;
  out.iterations = sol.iterations;
  out.theta = sol.x.head(nb);
  out.p = sol.x.tail(ng);
  out.objective = sol.status == QpStatus::optimal
                      ? objective_cost(nc, out.p)
                      : std::numeric_limits<double>::quiet_NaN();
  return out;
}

Eigen::VectorXd line_flows(const NetworkCase& nc, const Eigen::VectorXd& theta) {
  if (theta.size() != static_cast<Eigen::Index>(nc.buses.size())) {
    throw std::invalid_argument("line_flows: angle vector has " +
                                std::to_string(theta.size()) +
                                " entries for " +
                                std::to_string(nc.buses.size()) + " buses");
  }
  Eigen::VectorXd flows(static_cast<Eigen::Index>(nc.branches.size()));
  for (Eigen::Index b = 0; b < flows.size(); ++b) {
    const Branch& br = nc.branches[b];
    flows(b) = br.in_service ? br.susceptance * (theta(nc.bus_index(br.from)) -
                                                 theta(nc.bus_index(br.to)))
                             : 0.0;
  }
  return flows;
}

double objective_cost(const NetworkCase& nc, const Eigen::VectorXd& p) {
  if (p.size() != static_cast<Eigen::Index>(nc.generators.size())) {
    throw std::invalid_argument("objective_cost: output vector has " +
                                std::to_string(p.size()) + " entries for " +
                                std::to_string(nc.generators.size()) +
                                " generators");
  }
  double cost = 0.0;
  for (Eigen::Index k = 0; k < p.size(); ++k) {
    const Generator& gen = nc.generators[k];
    cost += (gen.c2 * p(k) + gen.c1) * p(k) + gen.c0;
  }
  return cost;
}

}  // namespace dopf
