#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <limits>
#include <vector>

namespace dopf {

// Convex QP in the form
//   minimize    0.5 x'Hx + g'x
//   subject to  A_eq x = b_eq
//               lb_in <= A_in x <= ub_in
//               lb <= x <= ub        (entries may be +-inf)
struct QpProblem {
  Eigen::MatrixXd H;
  Eigen::VectorXd g;
  Eigen::MatrixXd A_eq;
  Eigen::VectorXd b_eq;
  Eigen::MatrixXd A_in;
  Eigen::VectorXd lb_in, ub_in;
  Eigen::VectorXd lb, ub;

  Eigen::Index n() const { return H.rows(); }
  Eigen::Index n_eq() const { return A_eq.rows(); }
  Eigen::Index n_in() const { return A_in.rows(); }

  // Dimension/shape/PSD checks; throws std::invalid_argument on violation.
  void check() const;
};

enum class QpStatus { optimal, infeasible, iteration_limit };
const char* to_string(QpStatus s);

// Dual sign convention: a positive dual pushes against the upper side of
// its constraint, a negative dual against the lower side (so for the
// bound x >= 1 of min x^2 the reported bound dual is -2).
struct QpSolution {
  Eigen::VectorXd x;
  Eigen::VectorXd y_eq;
  Eigen::VectorXd y_in;
  Eigen::VectorXd y_bnd;
  QpStatus status = QpStatus::iteration_limit;
  // max of the scale-normalized KKT residuals; <= tol when status optimal.
  double kkt_residual = std::numeric_limits<double>::infinity();
  // quality of the primal-infeasibility certificate when status infeasible
  double certificate_residual = std::numeric_limits<double>::infinity();
  int iterations = 0;
  double objective = 0.0;
};

struct KktResiduals {
  double stationarity = 0.0;
  double feasibility = 0.0;
  double complementarity = 0.0;
  double max_residual() const;
};

// Raw (unnormalized) KKT residuals, recomputed from scratch out of p and s;
// independent of however s was obtained.
KktResiduals kkt_residuals(const QpProblem& p, const QpSolution& s);

// Reusable solver state for a problem whose gradient (and possibly Hessian)
// changes between solves, as in the per-region subproblems of the
// distributed algorithms.  Solves are warm-started from the previous
// solution and from the previously optimal active set: when the active set
// has not changed, a solve costs one cached back-substitution instead of a
// fresh factorization.  Warm starting never changes the reached optimum,
// only the work needed to get there.
class QpWorkspace {
public:
  explicit QpWorkspace(QpProblem p);

  // Replace the linear cost; keeps all factorization caches.
  void set_gradient(const Eigen::VectorXd& g);
  // Replace the quadratic cost (same dimensions); invalidates caches.
  void set_hessian(const Eigen::MatrixXd& H);

  const QpProblem& problem() const { return p_; }

  QpSolution solve(double tol = 1e-8);

private:
  // stacked-row helpers; rows ordered [equalities | inequalities | bounds]
  Eigen::Index n_rows() const { return C_.rows(); }

  bool polish(const std::vector<std::int8_t>& act, double tol,
              QpSolution& out);
  bool try_active_set_path(double tol, QpSolution& out);
  void run_splitting(double tol, QpSolution& out);
  void prepare_scaling();
  void factorize_splitting();
  QpSolution finish(QpSolution sol, double tol);

  QpProblem p_;
  std::uint64_t h_version_ = 0;

  // unscaled stacked constraints
  Eigen::MatrixXd C_;
  Eigen::VectorXd l_, u_;
  std::vector<std::int8_t> row_kind_;  // 2 = equality, 0 = inequality/bound

  // Ruiz equilibration (lazy)
  bool scaling_ready_ = false;
  Eigen::VectorXd d_, e_;
  double cost_scale_ = 1.0;
  Eigen::MatrixXd Hs_, Cs_;
  Eigen::VectorXd gs_, ls_, us_;

  // splitting state (scaled space)
  bool have_iterate_ = false;
  Eigen::VectorXd x_, z_, y_;
  Eigen::VectorXd rho_;
  bool factor_ready_ = false;
  Eigen::LLT<Eigen::MatrixXd> kkt_llt_;

  // polish cache
  std::vector<std::int8_t> cached_act_;
  bool act_valid_ = false;
  Eigen::PartialPivLU<Eigen::MatrixXd> polish_lu_;
  std::uint64_t polish_h_version_ = ~0ull;
  bool polish_lu_valid_ = false;
};

// One-shot convenience wrapper around QpWorkspace.
QpSolution solve_qp(const QpProblem& p, double tol = 1e-8);

}  // namespace dopf
