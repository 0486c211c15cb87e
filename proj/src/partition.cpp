#include "dopf/partition.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>
#include <limits>
#include <set>
#include <sstream>
#include <stdexcept>

namespace dopf {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

}  // namespace

std::vector<int> RegionAssignment::region_ids() const {
  std::set<int> ids;
  for (const auto& [bus, region] : region_of) ids.insert(region);
  return std::vector<int>(ids.begin(), ids.end());
}

RegionAssignment parse_assignment(std::string_view text) {
  RegionAssignment assign;
  int line_no = 0;
  std::size_t pos = 0;
  while (pos <= text.size()) {
    const std::size_t eol = std::min(text.find('\n', pos), text.size());
    std::string_view line = text.substr(pos, eol - pos);
    ++line_no;
    const std::size_t hash = line.find('#');
    if (hash != std::string_view::npos) line = line.substr(0, hash);

    std::vector<std::pair<long, int>> tokens;  // (value, column)
    std::size_t i = 0;
    while (i < line.size()) {
      if (std::isspace(static_cast<unsigned char>(line[i]))) {
        ++i;
        continue;
      }
      const std::size_t start = i;
      while (i < line.size() &&
             !std::isspace(static_cast<unsigned char>(line[i]))) {
        ++i;
      }
      const std::string tok(line.substr(start, i - start));
      try {
        std::size_t used = 0;
        const long v = std::stol(tok, &used);
        if (used != tok.size()) throw std::invalid_argument(tok);
        tokens.emplace_back(v, static_cast<int>(start) + 1);
      } catch (const std::exception&) {
        throw ParseError("expected integer, got '" + tok + "'", line_no,
                         static_cast<int>(start) + 1);
      }
    }
    if (!tokens.empty()) {
      if (tokens.size() != 2) {
        throw ParseError("expected 'bus_id region_id', got " +
                             std::to_string(tokens.size()) + " tokens",
                         line_no, tokens.front().second);
      }
      const int bus = static_cast<int>(tokens[0].first);
      const int region = static_cast<int>(tokens[1].first);
      if (!assign.region_of.emplace(bus, region).second) {
        throw ParseError("bus " + std::to_string(bus) + " assigned twice",
                         line_no, tokens[0].second);
      }
    }
    if (eol == text.size()) break;
    pos = eol + 1;
  }
  return assign;
}

RegionAssignment load_assignment(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open partition file: " + path);
  std::ostringstream buf;
  buf << in.rdbuf();
  try {
    return parse_assignment(buf.str());
  } catch (const ParseError& e) {
    throw ParseError(path, e);
  }
}

ValidationReport validate_assignment(const NetworkCase& nc,
                                     const RegionAssignment& assign) {
  ValidationReport report;
  auto add = [&report](const std::string& msg) {
    report.findings.push_back(msg);
  };

  for (const Bus& bus : nc.buses) {
    if (!assign.region_of.count(bus.id)) {
      add("bus " + std::to_string(bus.id) + " not assigned to any region");
    }
  }
  for (const auto& [bus, region] : assign.region_of) {
    if (nc.bus_index(bus) < 0) {
      add("assignment names unknown bus " + std::to_string(bus));
    }
  }
  const std::vector<int> ids = assign.region_ids();
  if (ids.size() < 2) {
    add("assignment defines " + std::to_string(ids.size()) +
        " region(s); at least 2 required");
  }

  // A region with no in-service tie line cannot exchange anything.
  std::set<int> tied;
  for (const Branch& br : nc.branches) {
    if (!br.in_service) continue;
    const auto fi = assign.region_of.find(br.from);
    const auto ti = assign.region_of.find(br.to);
    if (fi == assign.region_of.end() || ti == assign.region_of.end()) continue;
    if (fi->second != ti->second) {
      tied.insert(fi->second);
      tied.insert(ti->second);
    }
  }
  if (ids.size() >= 2) {
    for (int id : ids) {
      if (!tied.count(id)) {
        add("region " + std::to_string(id) +
            " has no in-service tie line to any other region");
      }
    }
  }
  return report;
}

int RegionModel::local_index(int bus_id) const {
  for (std::size_t i = 0; i < bus_ids.size(); ++i) {
    if (bus_ids[i] == bus_id) return static_cast<int>(i);
  }
  return -1;
}

int PartitionedModel::region_index(int region_id) const {
  for (std::size_t i = 0; i < regions.size(); ++i) {
    if (regions[i].id == region_id) return static_cast<int>(i);
  }
  return -1;
}

std::vector<std::pair<int, int>> PartitionedModel::shared_of_region(
    int region) const {
  std::vector<std::pair<int, int>> out;
  for (std::size_t s = 0; s < shared_buses.size(); ++s) {
    for (const SharedBusCopy& copy : shared_buses[s].copies) {
      if (copy.region == region) {
        out.emplace_back(static_cast<int>(s), copy.local_index);
      }
    }
  }
  return out;
}

std::vector<std::pair<int, int>> PartitionedModel::adjacent_region_pairs()
    const {
  std::set<std::pair<int, int>> pairs;
  for (const SharedBus& sb : shared_buses) {
    for (std::size_t a = 0; a < sb.copies.size(); ++a) {
      for (std::size_t b = a + 1; b < sb.copies.size(); ++b) {
        const int ra = sb.copies[a].region;
        const int rb = sb.copies[b].region;
        pairs.emplace(std::min(ra, rb), std::max(ra, rb));
      }
    }
  }
  return std::vector<std::pair<int, int>>(pairs.begin(), pairs.end());
}

PartitionedModel decompose(const NetworkCase& nc,
                           const RegionAssignment& assign) {
  const ValidationReport report = validate_assignment(nc, assign);
  if (!report.ok()) {
    throw std::invalid_argument("invalid assignment: " +
                                report.findings.front());
  }

  PartitionedModel pm;
  pm.base = nc;

  const std::vector<int> ids = assign.region_ids();
  pm.regions.resize(ids.size());
  for (std::size_t r = 0; r < ids.size(); ++r) pm.regions[r].id = ids[r];

  auto region_of_bus = [&](int bus_id) {
    return pm.region_index(assign.region_of.at(bus_id));
  };

  // Owned buses first, in case bus order.
  for (const Bus& bus : nc.buses) {
    RegionModel& rm = pm.regions[region_of_bus(bus.id)];
    rm.bus_ids.push_back(bus.id);
    if (bus.is_ref) rm.has_ref = true;
  }
  for (RegionModel& rm : pm.regions) {
    rm.n_owned = static_cast<int>(rm.bus_ids.size());
  }
  pm.ref_region = region_of_bus(nc.buses[nc.ref_bus_index()].id);

  for (std::size_t g = 0; g < nc.generators.size(); ++g) {
    pm.regions[region_of_bus(nc.generators[g].bus)].generators.push_back(
        static_cast<int>(g));
  }

  // Sort branches into internal and tie; out-of-service branches stay out
  // of every region (they are excluded from the flow model anyway).
  std::set<int> shared_ids;  // global bus ids needing duplication
  for (std::size_t b = 0; b < nc.branches.size(); ++b) {
    const Branch& br = nc.branches[b];
    if (!br.in_service) continue;
    const int rf = region_of_bus(br.from);
    const int rt = region_of_bus(br.to);
    if (rf == rt) {
      pm.regions[rf].internal_branches.push_back(static_cast<int>(b));
    } else {
      pm.regions[rf].tie_branches.push_back(static_cast<int>(b));
      pm.regions[rt].tie_branches.push_back(static_cast<int>(b));
      shared_ids.insert(br.from);
      shared_ids.insert(br.to);
    }
  }

  // Phantom copies: for every tie line, the far endpoint's angle is
  // duplicated into this region.  Append in case bus order for a canonical
  // layout.
  std::vector<std::set<int>> phantom(pm.regions.size());
  for (std::size_t r = 0; r < pm.regions.size(); ++r) {
    for (int b : pm.regions[r].tie_branches) {
      const Branch& br = nc.branches[b];
      const int far = region_of_bus(br.from) == static_cast<int>(r) ? br.to
                                                                    : br.from;
      phantom[r].insert(far);
    }
  }
  for (const Bus& bus : nc.buses) {
    for (std::size_t r = 0; r < pm.regions.size(); ++r) {
      if (phantom[r].count(bus.id)) pm.regions[r].bus_ids.push_back(bus.id);
    }
  }

  // Shared-bus table in case bus order, owner copy first, then hosts by
  // ascending region index.
  for (const Bus& bus : nc.buses) {
    if (!shared_ids.count(bus.id)) continue;
    SharedBus sb;
    sb.bus = bus.id;
    sb.owner_region = region_of_bus(bus.id);
    sb.copies.push_back(
        {sb.owner_region, pm.regions[sb.owner_region].local_index(bus.id)});
    for (std::size_t r = 0; r < pm.regions.size(); ++r) {
      if (static_cast<int>(r) == sb.owner_region) continue;
      const int li = pm.regions[r].local_index(bus.id);
      if (li >= 0) sb.copies.push_back({static_cast<int>(r), li});
    }
    for (std::size_t b = 0; b < nc.branches.size(); ++b) {
      const Branch& br = nc.branches[b];
      if (!br.in_service) continue;
      if (br.from != bus.id && br.to != bus.id) continue;
      if (region_of_bus(br.from) != region_of_bus(br.to)) {
        sb.tie_branches.push_back(static_cast<int>(b));
      }
    }
    pm.shared_buses.push_back(std::move(sb));
  }

  // Registry: one entry per (tie line, endpoint), copies restricted to the
  // two regions adjacent to that tie.
  for (std::size_t b = 0; b < nc.branches.size(); ++b) {
    const Branch& br = nc.branches[b];
    if (!br.in_service) continue;
    const int rf = region_of_bus(br.from);
    const int rt = region_of_bus(br.to);
    if (rf == rt) continue;
    for (const int end : {br.from, br.to}) {
      SharedVariable sv;
      sv.branch = static_cast<int>(b);
      sv.bus = end;
      sv.owner_region = region_of_bus(end);
      const int other = sv.owner_region == rf ? rt : rf;
      sv.copies.push_back(
          {sv.owner_region, pm.regions[sv.owner_region].local_index(end)});
      sv.copies.push_back({other, pm.regions[other].local_index(end)});
      pm.registry.push_back(std::move(sv));
    }
  }
  return pm;
}

QpProblem build_region_qp(const PartitionedModel& pm, int region) {
  if (region < 0 || region >= static_cast<int>(pm.regions.size())) {
    throw std::invalid_argument("build_region_qp: no region " +
                                std::to_string(region));
  }
  const NetworkCase& nc = pm.base;
  const RegionModel& rm = pm.regions[region];

  const Eigen::Index nl = static_cast<Eigen::Index>(rm.bus_ids.size());
  const Eigen::Index ng = static_cast<Eigen::Index>(rm.generators.size());
  const Eigen::Index n = nl + ng;

  QpProblem qp;
  qp.H = Eigen::MatrixXd::Zero(n, n);
  qp.g = Eigen::VectorXd::Zero(n);
  for (Eigen::Index k = 0; k < ng; ++k) {
    const Generator& gen = nc.generators[rm.generators[k]];
    qp.H(nl + k, nl + k) = 2.0 * gen.c2;
    qp.g(nl + k) = gen.c1;
  }

  const Eigen::Index n_eq = rm.n_owned + (rm.has_ref ? 1 : 0);
  qp.A_eq = Eigen::MatrixXd::Zero(n_eq, n);
  qp.b_eq = Eigen::VectorXd::Zero(n_eq);
  for (int i = 0; i < rm.n_owned; ++i) {
    qp.b_eq(i) = nc.buses[nc.bus_index(rm.bus_ids[i])].demand;
  }
  for (Eigen::Index k = 0; k < ng; ++k) {
    qp.A_eq(rm.local_index(nc.generators[rm.generators[k]].bus), nl + k) = 1.0;
  }

  auto stamp_branch = [&](int b) {
    const Branch& br = nc.branches[b];
    const int f = rm.local_index(br.from);
    const int t = rm.local_index(br.to);
    // Balance rows exist only for owned buses; a phantom endpoint merely
    // contributes to the owned side's row.
    if (f < rm.n_owned) {
      qp.A_eq(f, f) -= br.susceptance;
      qp.A_eq(f, t) += br.susceptance;
    }
    if (t < rm.n_owned) {
      qp.A_eq(t, t) -= br.susceptance;
      qp.A_eq(t, f) += br.susceptance;
    }
  };
  for (int b : rm.internal_branches) stamp_branch(b);
  for (int b : rm.tie_branches) stamp_branch(b);
  if (rm.has_ref) {
    qp.A_eq(rm.n_owned, rm.local_index(nc.buses[nc.ref_bus_index()].id)) = 1.0;
  }

  std::vector<int> flow_rows;
  for (int b : rm.internal_branches) {
    if (nc.branches[b].flow_limit < kInf) flow_rows.push_back(b);
  }
  for (int b : rm.tie_branches) {
    if (nc.branches[b].flow_limit < kInf) flow_rows.push_back(b);
  }
  qp.A_in = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(flow_rows.size()),
                                  n);
  qp.lb_in = Eigen::VectorXd::Zero(qp.A_in.rows());
  qp.ub_in = Eigen::VectorXd::Zero(qp.A_in.rows());
  for (Eigen::Index r = 0; r < qp.A_in.rows(); ++r) {
    const Branch& br = nc.branches[flow_rows[r]];
    qp.A_in(r, rm.local_index(br.from)) = br.susceptance;
    qp.A_in(r, rm.local_index(br.to)) = -br.susceptance;
    qp.lb_in(r) = -br.flow_limit;
    qp.ub_in(r) = br.flow_limit;
  }

  qp.lb = Eigen::VectorXd::Constant(n, -kInf);
  qp.ub = Eigen::VectorXd::Constant(n, kInf);
  for (Eigen::Index k = 0; k < ng; ++k) {
    qp.lb(nl + k) = nc.generators[rm.generators[k]].p_min;
    qp.ub(nl + k) = nc.generators[rm.generators[k]].p_max;
  }
  return qp;
}

double consistency_mismatch(const PartitionedModel& pm,
                            const std::vector<Eigen::VectorXd>& region_angles) {
  if (region_angles.size() != pm.regions.size()) {
    throw std::invalid_argument("consistency_mismatch: " +
                                std::to_string(region_angles.size()) +
                                " angle vectors for " +
                                std::to_string(pm.regions.size()) + " regions");
  }
  for (std::size_t r = 0; r < pm.regions.size(); ++r) {
    if (region_angles[r].size() !=
        static_cast<Eigen::Index>(pm.regions[r].bus_ids.size())) {
      throw std::invalid_argument(
          "consistency_mismatch: region " + std::to_string(pm.regions[r].id) +
          " angle vector has " + std::to_string(region_angles[r].size()) +
          " entries, expected " +
          std::to_string(pm.regions[r].bus_ids.size()));
    }
  }
  double sq = 0.0;
  for (const SharedBus& sb : pm.shared_buses) {
    for (std::size_t a = 0; a < sb.copies.size(); ++a) {
      for (std::size_t b = a + 1; b < sb.copies.size(); ++b) {
        const double da = region_angles[sb.copies[a].region](
            sb.copies[a].local_index);
        const double db = region_angles[sb.copies[b].region](
            sb.copies[b].local_index);
        sq += (da - db) * (da - db);
      }
    }
  }
  return std::sqrt(sq);
}

OpfSolution assemble_global(const PartitionedModel& pm,
                            const std::vector<RegionSolution>& sols) {
  if (sols.size() != pm.regions.size()) {
    throw std::invalid_argument("assemble_global: " +
                                std::to_string(sols.size()) +
                                " region solutions for " +
                                std::to_string(pm.regions.size()) + " regions");
  }
  const NetworkCase& nc = pm.base;
  OpfSolution out;
  out.theta = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(nc.buses.size()));
  out.p = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(nc.generators.size()));

  for (std::size_t r = 0; r < pm.regions.size(); ++r) {
    const RegionModel& rm = pm.regions[r];
    if (sols[r].theta.size() != static_cast<Eigen::Index>(rm.bus_ids.size()) ||
        sols[r].p.size() != static_cast<Eigen::Index>(rm.generators.size())) {
      throw std::invalid_argument("assemble_global: region " +
                                  std::to_string(rm.id) +
                                  " solution has wrong dimensions");
    }
    // Owner copies only; phantom entries are other regions' business.
    for (int i = 0; i < rm.n_owned; ++i) {
      out.theta(nc.bus_index(rm.bus_ids[i])) = sols[r].theta(i);
    }
    for (std::size_t k = 0; k < rm.generators.size(); ++k) {
      out.p(rm.generators[k]) = sols[r].p(static_cast<Eigen::Index>(k));
    }
  }
  out.objective = objective_cost(nc, out.p);
  out.status = QpStatus::optimal;
  return out;
}

}  // namespace dopf
