#include "dopf/algorithms.hpp"

#include <algorithm>
#include <cmath>
#include <memory>
#include <stdexcept>
#include <string>
#include <utility>

namespace dopf {

namespace {

// Quadratic penalty weight on each shared-copy angle.
double penalty_weight(const AlgorithmParams& params, double beta_k) {
  switch (params.kind) {
    case AlgorithmKind::admm: return params.alpha;
    case AlgorithmKind::atc: return 2.0 * beta_k * beta_k;
    case AlgorithmKind::app: return params.beta;
  }
  return 0.0;
}

// Linear penalty terms.  Together with penalty_weight this encodes, per
// shared copy t = theta(l):
//   ADMM:  lambda (th_c - t) + (alpha/2)(th_c - t)^2
//   ATC:   lambda (th_c - t) + beta^2 (th_c - t)^2
//   APP:   (beta/2)(t - th_m)^2 + gamma t (th_m - th_n) + lambda t
// dropping constants, i.e. the quadratic coefficient is penalty_weight/2
// on t^2 and the gradient below on t.  APP's proximal anchors at the
// region's own previous iterate th_m; with the usual alpha = gamma = beta/2
// choice this cancels the mismatch feed-through and keeps the iteration
// contractive at any penalty scale, which anchoring at the neighbor value
// would not.
void add_penalty_gradient(const AlgorithmParams& params,
                          const RegionCoupling& c,
                          const std::vector<int>& locals, Eigen::VectorXd& g) {
  for (std::size_t i = 0; i < locals.size(); ++i) {
    const Eigen::Index l = locals[i];
    switch (params.kind) {
      case AlgorithmKind::admm:
        g(l) += -params.alpha * c.theta_c(i) - c.lambda(i);
        break;
      case AlgorithmKind::atc:
        g(l) += -2.0 * c.beta_k * c.beta_k * c.theta_c(i) - c.lambda(i);
        break;
      case AlgorithmKind::app:
        g(l) += -params.beta * c.theta_m_prev(i) +
                params.gamma * (c.theta_m_prev(i) - c.theta_n_prev(i)) +
                c.lambda(i);
        break;
    }
  }
}

struct InboxEntry {
  int from = -1;  // sending region index
  double theta = 0.0;
  double lambda = 0.0;
};

struct RegionRunner {
  int region = -1;
  Eigen::Index n_local = 0;        // angle variables
  std::vector<int> shared_ids;     // hosted shared-bus indices, ascending
  std::vector<int> shared_locals;  // matching local angle indices
  Eigen::MatrixXd h_base;          // un-penalized quadratic (ATC rebuilds)
  Eigen::VectorXd g_base;
  std::unique_ptr<QpWorkspace> ws;
  RegionCoupling coupling;
  Eigen::VectorXd theta;  // current local solution
  Eigen::VectorXd p;
  double cost = 0.0;                          // generation cost at p
  std::vector<std::vector<InboxEntry>> inbox;  // per hosted shared bus

  int position_of(int shared_id) const {
    const auto it =
        std::lower_bound(shared_ids.begin(), shared_ids.end(), shared_id);
    return it != shared_ids.end() && *it == shared_id
               ? static_cast<int>(it - shared_ids.begin())
               : -1;
  }
};

struct EngineLink {
  LinkState state;
  int from = -1;
  int to = -1;
  // Payload layout: [angles | multipliers] over the shared buses hosted by
  // both endpoint regions, ascending shared-bus index.
  std::vector<int> sender_pos;    // payload slot -> sender shared position
  std::vector<int> receiver_pos;  // payload slot -> receiver shared position
  std::vector<int> receiver_entry;  // payload slot -> inbox entry index
};

double region_cost(const NetworkCase& nc, const RegionModel& rm,
                   const Eigen::VectorXd& p) {
  double cost = 0.0;
  for (std::size_t k = 0; k < rm.generators.size(); ++k) {
    const Generator& gen = nc.generators[rm.generators[k]];
    const double v = p(static_cast<Eigen::Index>(k));
    cost += (gen.c2 * v + gen.c1) * v + gen.c0;
  }
  return cost;
}

}  // namespace

const char* to_string(AlgorithmKind k) {
  switch (k) {
    case AlgorithmKind::admm: return "admm";
    case AlgorithmKind::atc: return "atc";
    case AlgorithmKind::app: return "app";
  }
  return "?";
}

AlgorithmKind algorithm_kind_from_string(std::string_view s) {
  if (s == "admm") return AlgorithmKind::admm;
  if (s == "atc") return AlgorithmKind::atc;
  if (s == "app") return AlgorithmKind::app;
  throw std::invalid_argument("unknown algorithm '" + std::string(s) + "'");
}

const char* to_string(RunStatus s) {
  switch (s) {
    case RunStatus::converged: return "converged";
    case RunStatus::iteration_limit: return "iteration_limit";
    case RunStatus::subproblem_failure: return "subproblem_failure";
  }
  return "?";
}

RunStatus run_status_from_string(std::string_view s) {
  if (s == "converged") return RunStatus::converged;
  if (s == "iteration_limit") return RunStatus::iteration_limit;
  if (s == "subproblem_failure") return RunStatus::subproblem_failure;
  throw std::invalid_argument("unknown run status '" + std::string(s) + "'");
}

void AlgorithmParams::check() const {
  if (!(alpha > 0.0)) {
    throw std::invalid_argument("alpha must be positive, got " +
                                std::to_string(alpha));
  }
  if (kind == AlgorithmKind::atc) {
    if (!(alpha >= 1.0)) {
      throw std::invalid_argument(
          "atc: alpha is the beta growth rate and must be >= 1, got " +
          std::to_string(alpha));
    }
    if (!(beta > 0.0)) {
      throw std::invalid_argument("atc: initial beta must be positive");
    }
    if (!(beta_cap > beta)) {
      throw std::invalid_argument("atc: beta_cap must exceed initial beta");
    }
  }
  if (kind == AlgorithmKind::app) {
    if (!(gamma > 0.0) || !(beta > 0.0)) {
      throw std::invalid_argument("app: beta and gamma must be positive");
    }
    if (!(alpha < 2.0 * gamma)) {
      throw std::invalid_argument("app: requires alpha < 2*gamma");
    }
    if (!(2.0 * gamma <= beta)) {
      throw std::invalid_argument("app: requires 2*gamma <= beta");
    }
  }
  if (!(tolerance > 0.0)) {
    throw std::invalid_argument("tolerance must be positive");
  }
  if (max_iterations < 0) {
    throw std::invalid_argument("max_iterations must be >= 0");
  }
  if (!(qp_tol > 0.0)) {
    throw std::invalid_argument("qp_tol must be positive");
  }
}

double admm_coordinator_update(const Eigen::VectorXd& copies,
                               const Eigen::VectorXd& multipliers,
                               double alpha) {
  if (copies.size() != multipliers.size() || copies.size() == 0) {
    throw std::invalid_argument("coordinator update: need matching, nonempty "
                                "copy and multiplier vectors");
  }
  const double m = static_cast<double>(copies.size());
  return copies.sum() / m - multipliers.sum() / (alpha * m);
}

double atc_coordinator_update(const Eigen::VectorXd& copies,
                              const Eigen::VectorXd& multipliers,
                              double beta) {
  if (beta == 0.0) {
    throw std::invalid_argument("atc coordinator: beta must be nonzero");
  }
  if (copies.size() != multipliers.size() || copies.size() == 0) {
    throw std::invalid_argument("coordinator update: need matching, nonempty "
                                "copy and multiplier vectors");
  }
  const double m = static_cast<double>(copies.size());
  return copies.sum() / m - multipliers.sum() / (2.0 * beta * beta * m);
}

Eigen::VectorXd admm_multiplier_update(const Eigen::VectorXd& lambda,
                                       double alpha,
                                       const Eigen::VectorXd& theta_c,
                                       const Eigen::VectorXd& theta_m) {
  return lambda + alpha * (theta_c - theta_m);
}

Eigen::VectorXd atc_multiplier_update(const Eigen::VectorXd& lambda,
                                      double beta,
                                      const Eigen::VectorXd& theta_c,
                                      const Eigen::VectorXd& theta_m) {
  return lambda + 2.0 * beta * beta * (theta_c - theta_m);
}

double atc_beta_update(double beta, double alpha) { return alpha * beta; }

Eigen::VectorXd app_multiplier_update(const Eigen::VectorXd& lambda,
                                      double alpha,
                                      const Eigen::VectorXd& theta_m,
                                      const Eigen::VectorXd& theta_n) {
  return lambda + alpha * (theta_m - theta_n);
}

QpProblem build_region_subproblem(const PartitionedModel& pm, int region,
                                  const AlgorithmParams& params,
                                  const RegionCoupling& c) {
  QpProblem qp = build_region_qp(pm, region);
  std::vector<int> locals;
  for (const auto& [shared_id, local] : pm.shared_of_region(region)) {
    locals.push_back(local);
  }
  const double w = penalty_weight(params, c.beta_k);
  for (int l : locals) qp.H(l, l) += w;
  add_penalty_gradient(params, c, locals, qp.g);
  return qp;
}

RunRecord run_distributed(const PartitionedModel& pm,
                          const AlgorithmParams& params,
                          const ChannelModel& channel, std::uint64_t seed,
                          double central_objective) {
  params.check();
  channel.check();

  RunRecord record;
  record.seed = seed;
  for (const Generator& gen : pm.base.generators) {
    if (gen.c2 == 0.0) record.degenerate_cost = true;
  }

  const std::size_t nr = pm.regions.size();
  double beta_k = params.beta;  // ATC's global running beta

  // --- per-region runners ---------------------------------------------
  std::vector<std::unique_ptr<RegionRunner>> runners;
  runners.reserve(nr);
  for (std::size_t r = 0; r < nr; ++r) {
    auto rr = std::make_unique<RegionRunner>();
    rr->region = static_cast<int>(r);
    for (const auto& [shared_id, local] :
         pm.shared_of_region(static_cast<int>(r))) {
      rr->shared_ids.push_back(shared_id);
      rr->shared_locals.push_back(local);
    }
    const Eigen::Index ns = static_cast<Eigen::Index>(rr->shared_ids.size());
    rr->coupling.lambda = Eigen::VectorXd::Constant(ns, params.multiplier_init);
    rr->coupling.theta_c = Eigen::VectorXd::Zero(ns);
    rr->coupling.theta_m_prev = Eigen::VectorXd::Zero(ns);
    rr->coupling.theta_n_prev = Eigen::VectorXd::Zero(ns);
    rr->coupling.beta_k = beta_k;

    QpProblem qp = build_region_qp(pm, static_cast<int>(r));
    rr->n_local = static_cast<Eigen::Index>(pm.regions[r].bus_ids.size());
    rr->g_base = qp.g;
    if (params.kind == AlgorithmKind::atc) rr->h_base = qp.H;
    const double w = penalty_weight(params, beta_k);
    for (int l : rr->shared_locals) qp.H(l, l) += w;
    add_penalty_gradient(params, rr->coupling, rr->shared_locals, qp.g);
    rr->ws = std::make_unique<QpWorkspace>(std::move(qp));

    rr->theta = Eigen::VectorXd::Zero(rr->n_local);
    rr->p = Eigen::VectorXd::Zero(
        static_cast<Eigen::Index>(pm.regions[r].generators.size()));
    for (std::size_t k = 0; k < pm.regions[r].generators.size(); ++k) {
      const Generator& gen = pm.base.generators[pm.regions[r].generators[k]];
      rr->p(static_cast<Eigen::Index>(k)) = 0.5 * (gen.p_min + gen.p_max);
    }
    rr->cost = region_cost(pm.base, pm.regions[r], rr->p);

    rr->inbox.resize(rr->shared_ids.size());
    for (std::size_t q = 0; q < rr->shared_ids.size(); ++q) {
      for (const SharedBusCopy& copy :
           pm.shared_buses[rr->shared_ids[q]].copies) {
        if (copy.region == static_cast<int>(r)) continue;
        rr->inbox[q].push_back({copy.region, 0.0, params.multiplier_init});
      }
    }
    runners.push_back(std::move(rr));
  }

  // --- directed links between adjacent regions ------------------------
  std::vector<EngineLink> links;
  for (const auto& [a, b] : pm.adjacent_region_pairs()) {
    for (const auto& [from, to] : {std::pair{a, b}, std::pair{b, a}}) {
      EngineLink link;
      link.from = from;
      link.to = to;
      for (std::size_t s = 0; s < pm.shared_buses.size(); ++s) {
        const int sp = runners[from]->position_of(static_cast<int>(s));
        const int rp = runners[to]->position_of(static_cast<int>(s));
        if (sp < 0 || rp < 0) continue;
        link.sender_pos.push_back(sp);
        link.receiver_pos.push_back(rp);
        auto& entries = runners[to]->inbox[rp];
        int entry = -1;
        for (std::size_t e = 0; e < entries.size(); ++e) {
          if (entries[e].from == from) entry = static_cast<int>(e);
        }
        link.receiver_entry.push_back(entry);
      }
      const Eigen::Index s = static_cast<Eigen::Index>(link.sender_pos.size());
      Eigen::VectorXd initial(2 * s);
      initial.head(s).setZero();
      initial.tail(s).setConstant(params.multiplier_init);
      const std::uint64_t stream =
          (static_cast<std::uint64_t>(from) << 32) |
          static_cast<std::uint64_t>(to);
      init_link(link.state, seed, stream, initial);
      links.push_back(std::move(link));
    }
  }

  // --- iterate ---------------------------------------------------------
  std::vector<Eigen::VectorXd> thetas(nr);
  Eigen::VectorXd g, payload;
  Eigen::MatrixXd h;
  bool halted = false;
  for (int it = 0; it < params.max_iterations && !halted; ++it) {
    // local steps
    for (auto& rr : runners) {
      rr->coupling.beta_k = beta_k;
      g = rr->g_base;
      add_penalty_gradient(params, rr->coupling, rr->shared_locals, g);
      if (params.kind == AlgorithmKind::atc) {
        h = rr->h_base;
        const double w = penalty_weight(params, beta_k);
        for (int l : rr->shared_locals) h(l, l) += w;
        rr->ws->set_hessian(h);
      }
      rr->ws->set_gradient(g);
      const QpSolution sol = rr->ws->solve(params.qp_tol);
      if (sol.status != QpStatus::optimal) {
        record.status = RunStatus::subproblem_failure;
        halted = true;
        break;
      }
      rr->theta = sol.x.head(rr->n_local);
      rr->p = sol.x.tail(rr->p.size());
      rr->cost = region_cost(pm.base, pm.regions[rr->region], rr->p);
    }
    if (halted) break;

    // true mismatch and objective, before anything touches a channel
    double objective = 0.0;
    for (std::size_t r = 0; r < nr; ++r) {
      thetas[r] = runners[r]->theta;
      objective += runners[r]->cost;
    }
    const double true_mm = consistency_mismatch(pm, thetas);

    // exchange shared values
    for (EngineLink& link : links) {
      const Eigen::Index s =
          static_cast<Eigen::Index>(link.sender_pos.size());
      payload.resize(2 * s);
      const RegionRunner& sender = *runners[link.from];
      for (Eigen::Index k = 0; k < s; ++k) {
        payload(k) = sender.theta(sender.shared_locals[link.sender_pos[k]]);
        payload(s + k) = sender.coupling.lambda(link.sender_pos[k]);
      }
      const Eigen::VectorXd got =
          transmit(link.state, payload, channel,
                   static_cast<std::uint64_t>(it), s);
      RegionRunner& receiver = *runners[link.to];
      for (Eigen::Index k = 0; k < s; ++k) {
        InboxEntry& entry =
            receiver.inbox[link.receiver_pos[k]][link.receiver_entry[k]];
        entry.theta = got(k);
        entry.lambda = got(s + k);
      }
    }

    // perceived mismatch: every (own copy, received copy) pair counted once
    // per direction, halved so it matches true_mm under ideal channels
    double perceived_sq = 0.0;
    for (const auto& rr : runners) {
      for (std::size_t q = 0; q < rr->shared_ids.size(); ++q) {
        const double own = rr->theta(rr->shared_locals[q]);
        for (const InboxEntry& entry : rr->inbox[q]) {
          perceived_sq += (own - entry.theta) * (own - entry.theta);
        }
      }
    }
    const double perceived_mm = std::sqrt(0.5 * perceived_sq);

    record.trace.push_back({true_mm, perceived_mm, objective});
    record.iterations = it + 1;
    if (true_mm <= params.tolerance) {
      record.status = RunStatus::converged;
      break;
    }

    // coordinator + multiplier updates
    if (params.kind == AlgorithmKind::app) {
      for (auto& rr : runners) {
        for (std::size_t q = 0; q < rr->shared_ids.size(); ++q) {
          double nbar = 0.0;
          for (const InboxEntry& entry : rr->inbox[q]) nbar += entry.theta;
          nbar /= static_cast<double>(rr->inbox[q].size());
          const double own = rr->theta(rr->shared_locals[q]);
          rr->coupling.lambda(q) += params.alpha * (own - nbar);
          rr->coupling.theta_m_prev(q) = own;
          rr->coupling.theta_n_prev(q) = nbar;
        }
      }
    } else {
      for (auto& rr : runners) {
        for (std::size_t q = 0; q < rr->shared_ids.size(); ++q) {
          const std::size_t m = rr->inbox[q].size() + 1;
          Eigen::VectorXd copies(static_cast<Eigen::Index>(m));
          Eigen::VectorXd lams(static_cast<Eigen::Index>(m));
          const double own = rr->theta(rr->shared_locals[q]);
          copies(0) = own;
          lams(0) = rr->coupling.lambda(q);
          for (std::size_t e = 0; e < rr->inbox[q].size(); ++e) {
            copies(static_cast<Eigen::Index>(e) + 1) = rr->inbox[q][e].theta;
            lams(static_cast<Eigen::Index>(e) + 1) = rr->inbox[q][e].lambda;
          }
          const double theta_c =
              params.kind == AlgorithmKind::admm
                  ? admm_coordinator_update(copies, lams, params.alpha)
                  : atc_coordinator_update(copies, lams, beta_k);
          rr->coupling.theta_c(q) = theta_c;
          rr->coupling.lambda(q) +=
              (params.kind == AlgorithmKind::admm ? params.alpha
                                                  : 2.0 * beta_k * beta_k) *
              (theta_c - own);
        }
      }
      if (params.kind == AlgorithmKind::atc) {
        beta_k = atc_beta_update(beta_k, params.alpha);
        if (beta_k > params.beta_cap) {
          record.beta_overflow = true;
          break;
        }
      }
    }
  }

  // --- final assembly --------------------------------------------------
  std::vector<RegionSolution> sols(nr);
  record.region_objectives.resize(nr);
  for (std::size_t r = 0; r < nr; ++r) {
    sols[r].theta = runners[r]->theta;
    sols[r].p = runners[r]->p;
    record.region_objectives[r] = runners[r]->cost;
  }
  record.assembled = assemble_global(pm, sols);
  record.objective = record.assembled.objective;
  if (std::isfinite(central_objective) && central_objective != 0.0) {
    record.relative_gap =
        std::abs(record.objective - central_objective) /
        std::abs(central_objective);
  }
  return record;
}

}  // namespace dopf
