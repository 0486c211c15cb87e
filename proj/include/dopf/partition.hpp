#pragma once

#include <Eigen/Dense>

#include <map>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "dopf/network.hpp"
#include "dopf/opf.hpp"
#include "dopf/qp.hpp"

namespace dopf {

// bus id -> region id, as read from a partition file.
struct RegionAssignment {
  std::map<int, int> region_of;

  std::vector<int> region_ids() const;  // distinct region ids, ascending
};

// Partition file format: one "bus_id region_id" pair per line, '#' starts a
// comment.  Throws ParseError with a location on malformed input.
RegionAssignment parse_assignment(std::string_view text);
RegionAssignment load_assignment(const std::string& path);

// Checks the assignment against a case: every bus assigned, no unknown
// buses, at least two regions, no region without an in-service tie line.
ValidationReport validate_assignment(const NetworkCase& nc,
                                     const RegionAssignment& assign);

// One region's slice of the network.  Local angle variables are the owned
// buses (in case bus order) followed by phantom copies of neighbor-owned
// boundary buses (also in case bus order); bus_ids maps local angle index
// to global bus id.  Phantom buses carry no demand and no balance row.
struct RegionModel {
  int id = 0;
  std::vector<int> bus_ids;
  int n_owned = 0;
  std::vector<int> generators;         // indices into the base generator list
  std::vector<int> internal_branches;  // base branch indices, both ends owned
  std::vector<int> tie_branches;       // base branch indices crossing the cut
  bool has_ref = false;

  int local_index(int bus_id) const;  // -1 when the bus has no copy here
};

struct SharedBusCopy {
  int region = 0;  // region index in PartitionedModel::regions
  int local_index = 0;
};

// A boundary bus duplicated by tie-line cutting, with one angle copy per
// hosting region.  copies[0] is always the owner's.
struct SharedBus {
  int bus = 0;
  int owner_region = 0;  // region index
  std::vector<SharedBusCopy> copies;
  std::vector<int> tie_branches;  // base branch indices incident to this bus
};

// Registry view keyed by (tie line, endpoint): each tie line contributes
// two entries, each carrying the endpoint's copies in the two adjacent
// regions (owner first).
struct SharedVariable {
  int branch = 0;  // base branch index
  int bus = 0;
  int owner_region = 0;  // region index
  std::vector<SharedBusCopy> copies;
};

struct PartitionedModel {
  NetworkCase base;
  std::vector<RegionModel> regions;    // ascending region id
  std::vector<SharedBus> shared_buses;  // case bus order
  std::vector<SharedVariable> registry;
  int ref_region = 0;  // region index holding the angle pin

  int region_index(int region_id) const;  // -1 when unknown
  // (shared bus index, local angle index) pairs hosted by a region, in
  // shared_buses order.
  std::vector<std::pair<int, int>> shared_of_region(int region) const;
  // Region index pairs (a < b) hosting at least one common shared bus.
  std::vector<std::pair<int, int>> adjacent_region_pairs() const;
};

// Cut the case along the assignment: every in-service branch whose
// endpoints live in different regions becomes a tie line, and both endpoint
// angles are duplicated into both adjacent regions.  Demand and generation
// stay with the owner region; tie flow limits are enforced on both sides.
// Throws std::invalid_argument when the assignment fails validation.
PartitionedModel decompose(const NetworkCase& nc,
                           const RegionAssignment& assign);

// Region-local DC-OPF over x = [theta_local | p_local]: balance rows for
// the owned buses, the reference pin when the region holds it, flow rows
// for internal and tie branches with finite limits, generator bounds.  No
// consistency terms; the algorithms add those.
QpProblem build_region_qp(const PartitionedModel& pm, int region);

// l2-norm over all shared buses of the pairwise differences between angle
// copies; zero iff full consensus.  region_angles[r] must match region r's
// local layout.
double consistency_mismatch(const PartitionedModel& pm,
                            const std::vector<Eigen::VectorXd>& region_angles);

struct RegionSolution {
  Eigen::VectorXd theta;  // local angles, owned + phantom
  Eigen::VectorXd p;      // outputs of the region's generators
};

// Stitch region solutions into a global one: each bus takes its owner's
// angle copy, outputs scatter back to case generator order, and the
// objective is the plain generation cost (no penalty terms).
OpfSolution assemble_global(const PartitionedModel& pm,
                            const std::vector<RegionSolution>& sols);

}  // namespace dopf
