#pragma once

#include <limits>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace dopf {

// Internal network model, all power quantities in per-unit on base_mva.
// The *_mw / reactance fields keep the numbers exactly as they appeared in
// the source file so that serialization round-trips bit-for-bit (per-unit
// conversion and back is not an identity in floating point).

struct Bus {
  int id = 0;
  double demand = 0.0;  // p.u.
  bool is_ref = false;
  double demand_mw = 0.0;
};

struct Generator {
  int bus = 0;
  double p_min = 0.0;  // p.u.
  double p_max = 0.0;  // p.u.
  // Cost f(p) = c2 p^2 + c1 p + c0 in $/h with p in p.u.
  double c2 = 0.0;
  double c1 = 0.0;
  double c0 = 0.0;
  double p_min_mw = 0.0;
  double p_max_mw = 0.0;
  double c2_mw = 0.0;  // $/MW^2 h as in the file
  double c1_mw = 0.0;  // $/MWh
};

struct Branch {
  int from = 0;
  int to = 0;
  double susceptance = 0.0;  // p.u., = 1/x
  // p.u.; +inf means unlimited (MATPOWER rateA = 0).
  double flow_limit = std::numeric_limits<double>::infinity();
  bool in_service = true;
  double reactance = 0.0;  // p.u. x as in the file
  double rate_mw = 0.0;    // MW as in the file, 0 = unlimited
};

struct NetworkCase {
  std::string name;
  double base_mva = 100.0;
  std::vector<Bus> buses;
  std::vector<Generator> generators;
  std::vector<Branch> branches;

  // Index of the bus with the given id, or -1 when unknown.
  int bus_index(int id) const;
  // Index of the reference bus, or -1 when missing.
  int ref_bus_index() const;
  double total_demand() const;  // p.u.
};

struct ParseError : std::runtime_error {
  ParseError(const std::string& msg, int line_, int column_);
  // Wrap an inner error with a source name: "path: line L, column C: msg".
  ParseError(const std::string& source, const ParseError& inner);
  int line;
  int column;
};

// Parse MATPOWER-style case text (mpc.baseMVA / mpc.bus / mpc.gen /
// mpc.branch / mpc.gencost).  MW quantities are converted to per-unit,
// reactance to susceptance B = 1/x.  Out-of-service branches are kept and
// flagged; out-of-service generators are dropped together with their cost
// rows.  Throws ParseError with a location on any syntactic or semantic
// problem (dangling bus reference, zero reactance, missing reference bus,
// piecewise-linear cost, ...).
NetworkCase parse_case(std::string_view text);

// parse_case on the contents of a file; the path is prefixed to error
// messages.
NetworkCase load_case(const std::string& path);

struct ValidationReport {
  std::vector<std::string> findings;
  bool ok() const { return findings.empty(); }
};

// Check every NetworkCase invariant; one finding per violation, naming the
// offending element.  Never mutates the case.
ValidationReport validate_case(const NetworkCase& nc);

// Canonical MATPOWER-format serialization.  Re-parsing the output yields a
// structurally identical NetworkCase (source-unit fields are emitted with
// shortest round-trip formatting).
std::string serialize_case(const NetworkCase& nc);

}  // namespace dopf
