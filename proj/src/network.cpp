#include "dopf/network.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

namespace dopf {

namespace {

std::string location_message(const std::string& msg, int line, int column) {
  std::ostringstream os;
  os << "line " << line << ", column " << column << ": " << msg;
  return os.str();
}

// Shortest decimal form that parses back to exactly the same double.
std::string format_double(double v) {
  if (std::isinf(v)) return v > 0 ? "Inf" : "-Inf";
  char buf[40];
  const auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

struct MatrixCell {
  double value = 0.0;
};

struct MatrixRow {
  std::vector<double> values;
  int line = 0;  // source line of the first entry, for diagnostics
};

using Matrix = std::vector<MatrixRow>;

// Character cursor over the case text with line/column bookkeeping.  The
// grammar is the small slice of MATLAB that MATPOWER case files use:
// assignments "mpc.<field> = <number|'string'|[matrix]|{cells}>;".
class Scanner {
public:
  explicit Scanner(std::string_view text) : text_(text) {}

  bool at_end() const { return pos_ >= text_.size(); }
  char peek() const { return at_end() ? '\0' : text_[pos_]; }
  int line() const { return line_; }
  int column() const { return column_; }

  [[noreturn]] void fail(const std::string& msg) const {
    throw ParseError(msg, line_, column_);
  }

  char advance() {
    const char c = text_[pos_++];
    if (c == '\n') {
      ++line_;
      column_ = 1;
    } else {
      ++column_;
    }
    return c;
  }

  // Skip whitespace (not newlines when `stop_at_newline`), % comments and
  // ... line continuations.
  void skip_blanks(bool stop_at_newline = false) {
    while (!at_end()) {
      const char c = peek();
      if (c == '%') {
        while (!at_end() && peek() != '\n') advance();
      } else if (c == '.' && text_.compare(pos_, 3, "...") == 0) {
        while (!at_end() && peek() != '\n') advance();
      } else if (c == '\n') {
        if (stop_at_newline) return;
        advance();
      } else if (c == ' ' || c == '\t' || c == '\r' || c == ',') {
        advance();
      } else {
        return;
      }
    }
  }

  bool consume(char c) {
    if (peek() != c) return false;
    advance();
    return true;
  }

  void expect(char c) {
    if (!consume(c)) fail(std::string("expected '") + c + "'");
  }

  std::string identifier() {
    std::string out;
    while (!at_end() && (std::isalnum(static_cast<unsigned char>(peek())) ||
                         peek() == '_')) {
      out += advance();
    }
    if (out.empty()) fail("expected identifier");
    return out;
  }

  double number() {
    skip_blanks();
    const int l = line_, c = column_;
    std::string tok;
    if (peek() == '+' || peek() == '-') tok += advance();
    while (!at_end()) {
      const char ch = peek();
      if (std::isdigit(static_cast<unsigned char>(ch)) || ch == '.' ||
          ch == 'e' || ch == 'E' || ch == 'i' || ch == 'I' || ch == 'n' ||
          ch == 'N' || ch == 'f' || ch == 'F' || ch == 'a' || ch == 'A') {
        tok += advance();
      } else if ((ch == '+' || ch == '-') && !tok.empty() &&
                 (tok.back() == 'e' || tok.back() == 'E')) {
        tok += advance();
      } else {
        break;
      }
    }
    double sign = 1.0;
    std::string_view body = tok;
    if (!body.empty() && (body[0] == '+' || body[0] == '-')) {
      if (body[0] == '-') sign = -1.0;
      body.remove_prefix(1);
    }
    if (body == "Inf" || body == "inf" || body == "INF") {
      return sign * std::numeric_limits<double>::infinity();
    }
    double value = 0.0;
    const auto res =
        std::from_chars(body.data(), body.data() + body.size(), value);
    if (res.ec != std::errc{} || res.ptr != body.data() + body.size()) {
      throw ParseError("malformed number '" + tok + "'", l, c);
    }
    return sign * value;
  }

  // Consume a 'quoted string' and return its contents.
  std::string quoted_string() {
    expect('\'');
    std::string out;
    while (!at_end() && peek() != '\'') out += advance();
    expect('\'');
    return out;
  }

  // Consume a bracketed matrix of numbers.  Rows end at ';' or newline.
  Matrix matrix() {
    expect('[');
    Matrix rows;
    MatrixRow row;
    while (true) {
      skip_blanks(/*stop_at_newline=*/true);
      if (at_end()) fail("unterminated matrix (missing ']')");
      const char c = peek();
      if (c == ']') {
        advance();
        break;
      }
      if (c == ';' || c == '\n') {
        advance();
        if (!row.values.empty()) rows.push_back(std::move(row));
        row = MatrixRow{};
        continue;
      }
      if (row.values.empty()) row.line = line_;
      row.values.push_back(number());
    }
    if (!row.values.empty()) rows.push_back(std::move(row));
    return rows;
  }

  // Skip a value of unknown shape (used for mpc fields we do not model).
  void skip_value() {
    skip_blanks();
    if (peek() == '\'') {
      quoted_string();
      return;
    }
    if (peek() == '[' || peek() == '{') {
      const char open = advance();
      const char close = open == '[' ? ']' : '}';
      int depth = 1;
      while (!at_end() && depth > 0) {
        const char c = peek();
        if (c == '\'') {
          quoted_string();
          continue;
        }
        if (c == open) ++depth;
        if (c == close) --depth;
        advance();
      }
      if (depth != 0) fail("unterminated bracket");
      return;
    }
    number();
  }

private:
  std::string_view text_;
  std::size_t pos_ = 0;
  int line_ = 1;
  int column_ = 1;
};

int as_int(double v, const Scanner& sc, const MatrixRow& row,
           const char* what) {
  const double r = std::round(v);
  if (!(std::abs(v - r) < 1e-9) || std::abs(r) > 1e9) {
    (void)sc;
    throw ParseError(std::string(what) + " must be an integer, got " +
                         format_double(v),
                     row.line, 1);
  }
  return static_cast<int>(r);
}

}  // namespace

ParseError::ParseError(const std::string& msg, int line_, int column_)
    : std::runtime_error(location_message(msg, line_, column_)),
      line(line_),
      column(column_) {}

ParseError::ParseError(const std::string& source, const ParseError& inner)
    : std::runtime_error(source + ": " + inner.what()),
      line(inner.line),
      column(inner.column) {}

int NetworkCase::bus_index(int id) const {
  for (std::size_t i = 0; i < buses.size(); ++i) {
    if (buses[i].id == id) return static_cast<int>(i);
  }
  return -1;
}

int NetworkCase::ref_bus_index() const {
  for (std::size_t i = 0; i < buses.size(); ++i) {
    if (buses[i].is_ref) return static_cast<int>(i);
  }
  return -1;
}

double NetworkCase::total_demand() const {
  double total = 0.0;
  for (const Bus& b : buses) total += b.demand;
  return total;
}

NetworkCase parse_case(std::string_view text) {
  Scanner sc(text);
  NetworkCase nc;
  nc.base_mva = 0.0;

  bool have_base = false;
  Matrix bus_m, gen_m, branch_m, gencost_m;
  bool have_bus = false, have_gen = false, have_branch = false,
       have_gencost = false;

  while (true) {
    sc.skip_blanks();
    if (sc.at_end()) break;
    const int stmt_line = sc.line(), stmt_col = sc.column();
    const std::string head = sc.identifier();
    if (head == "function") {
      // "function mpc = <name>" -- keep the name, ignore the rest.
      sc.skip_blanks();
      sc.identifier();
      sc.skip_blanks();
      sc.expect('=');
      sc.skip_blanks();
      nc.name = sc.identifier();
      continue;
    }
    if (head != "mpc") {
      throw ParseError("unexpected token '" + head + "'", stmt_line, stmt_col);
    }
    sc.expect('.');
    const std::string field = sc.identifier();
    sc.skip_blanks();
    sc.expect('=');
    sc.skip_blanks();
    if (field == "baseMVA") {
      nc.base_mva = sc.number();
      have_base = true;
    } else if (field == "bus") {
      bus_m = sc.matrix();
      have_bus = true;
    } else if (field == "gen") {
      gen_m = sc.matrix();
      have_gen = true;
    } else if (field == "branch") {
      branch_m = sc.matrix();
      have_branch = true;
    } else if (field == "gencost") {
      gencost_m = sc.matrix();
      have_gencost = true;
    } else {
      sc.skip_value();  // version, bus_name, ... -- not modeled
    }
    sc.skip_blanks();
    sc.consume(';');
  }

  if (!have_base) throw ParseError("missing mpc.baseMVA", sc.line(), 1);
  if (!(nc.base_mva > 0)) {
    throw ParseError("baseMVA must be positive", sc.line(), 1);
  }
  if (!have_bus) throw ParseError("missing mpc.bus", sc.line(), 1);
  if (!have_gen) throw ParseError("missing mpc.gen", sc.line(), 1);
  if (!have_branch) throw ParseError("missing mpc.branch", sc.line(), 1);
  if (!have_gencost) throw ParseError("missing mpc.gencost", sc.line(), 1);

  // --- buses -------------------------------------------------------------
  std::set<int> bus_ids;
  for (std::size_t r = 0; r < bus_m.size(); ++r) {
    const MatrixRow& row = bus_m[r];
    if (row.values.size() < 3) {
      throw ParseError("bus row " + std::to_string(r + 1) +
                           " has fewer than 3 columns",
                       row.line, 1);
    }
    Bus b;
    b.id = as_int(row.values[0], sc, row, "bus id");
    const int type = as_int(row.values[1], sc, row, "bus type");
    b.demand_mw = row.values[2];
    b.demand = b.demand_mw / nc.base_mva;
    b.is_ref = type == 3;
    if (!bus_ids.insert(b.id).second) {
      throw ParseError("duplicate bus id " + std::to_string(b.id), row.line,
                       1);
    }
    nc.buses.push_back(b);
  }
  const long ref_count =
      std::count_if(nc.buses.begin(), nc.buses.end(),
                    [](const Bus& b) { return b.is_ref; });
  if (ref_count == 0) {
    throw ParseError("missing reference bus (no bus of type 3)", 1, 1);
  }
  if (ref_count > 1) {
    throw ParseError("multiple reference buses (" + std::to_string(ref_count) +
                         " buses of type 3)",
                     1, 1);
  }

  // --- generators --------------------------------------------------------
  // Out-of-service units are dropped here (the model has no generator
  // status); remember which source rows survive so the matching gencost
  // rows can be selected below.
  std::vector<std::size_t> kept_gen_rows;
  for (std::size_t r = 0; r < gen_m.size(); ++r) {
    const MatrixRow& row = gen_m[r];
    if (row.values.size() < 10) {
      throw ParseError("gen row " + std::to_string(r + 1) +
                           " has fewer than 10 columns",
                       row.line, 1);
    }
    const int status = as_int(row.values[7], sc, row, "gen status");
    if (status <= 0) continue;
    Generator g;
    g.bus = as_int(row.values[0], sc, row, "gen bus");
    if (!bus_ids.count(g.bus)) {
      throw ParseError("gen row " + std::to_string(r + 1) +
                           " references unknown bus " + std::to_string(g.bus),
                       row.line, 1);
    }
    g.p_max_mw = row.values[8];
    g.p_min_mw = row.values[9];
    g.p_max = g.p_max_mw / nc.base_mva;
    g.p_min = g.p_min_mw / nc.base_mva;
    if (g.p_min > g.p_max) {
      throw ParseError("gen row " + std::to_string(r + 1) +
                           " has Pmin > Pmax",
                       row.line, 1);
    }
    kept_gen_rows.push_back(r);
    nc.generators.push_back(g);
  }

  // --- branches ----------------------------------------------------------
  for (std::size_t r = 0; r < branch_m.size(); ++r) {
    const MatrixRow& row = branch_m[r];
    if (row.values.size() < 11) {
      throw ParseError("branch row " + std::to_string(r + 1) +
                           " has fewer than 11 columns",
                       row.line, 1);
    }
    Branch br;
    br.from = as_int(row.values[0], sc, row, "branch from-bus");
    br.to = as_int(row.values[1], sc, row, "branch to-bus");
    for (const int end : {br.from, br.to}) {
      if (!bus_ids.count(end)) {
        throw ParseError("branch row " + std::to_string(r + 1) +
                             " references unknown bus " + std::to_string(end),
                         row.line, 1);
      }
    }
    br.reactance = row.values[3];
    if (br.reactance == 0.0) {
      throw ParseError("branch row " + std::to_string(r + 1) +
                           " has zero reactance",
                       row.line, 1);
    }
    br.susceptance = 1.0 / br.reactance;
    br.rate_mw = row.values[5];
    if (br.rate_mw < 0) {
      throw ParseError("branch row " + std::to_string(r + 1) +
                           " has negative rateA",
                       row.line, 1);
    }
    // MATPOWER convention: rateA = 0 means unlimited.
    br.flow_limit = br.rate_mw == 0.0
                        ? std::numeric_limits<double>::infinity()
                        : br.rate_mw / nc.base_mva;
    br.in_service = as_int(row.values[10], sc, row, "branch status") != 0;
    nc.branches.push_back(br);
  }

  // --- generator costs ---------------------------------------------------
  // MATPOWER allows 2*ngen rows (second half = reactive costs); only the
  // first half applies here.  Row count refers to the source gen table,
  // before out-of-service units were dropped.
  const std::size_t ngen_src = gen_m.size();
  if (gencost_m.size() != ngen_src && gencost_m.size() != 2 * ngen_src) {
    throw ParseError("gencost has " + std::to_string(gencost_m.size()) +
                         " rows for " + std::to_string(ngen_src) +
                         " generators",
                     gencost_m.empty() ? 1 : gencost_m[0].line, 1);
  }
  for (std::size_t k = 0; k < kept_gen_rows.size(); ++k) {
    const MatrixRow& row = gencost_m[kept_gen_rows[k]];
    const std::size_t r = kept_gen_rows[k];
    if (row.values.size() < 4) {
      throw ParseError("gencost row " + std::to_string(r + 1) +
                           " has fewer than 4 columns",
                       row.line, 1);
    }
    const int model = as_int(row.values[0], sc, row, "gencost model");
    if (model == 1) {
      throw ParseError("gencost row " + std::to_string(r + 1) +
                           " uses the piecewise-linear cost model",
                       row.line, 1);
    }
    if (model != 2) {
      throw ParseError("gencost row " + std::to_string(r + 1) +
                           " has unknown cost model " + std::to_string(model),
                       row.line, 1);
    }
    const int ncost = as_int(row.values[3], sc, row, "gencost ncost");
    if (ncost > 3) {
      throw ParseError("gencost row " + std::to_string(r + 1) + " has " +
                           std::to_string(ncost) +
                           " coefficients; at most quadratic (3) is supported",
                       row.line, 1);
    }
    if (ncost < 1 || row.values.size() < 4 + static_cast<std::size_t>(ncost)) {
      throw ParseError("gencost row " + std::to_string(r + 1) +
                           " is missing coefficients",
                       row.line, 1);
    }
    // Coefficients are listed highest degree first.
    double c2_mw = 0.0, c1_mw = 0.0, c0 = 0.0;
    if (ncost == 3) {
      c2_mw = row.values[4];
      c1_mw = row.values[5];
      c0 = row.values[6];
    } else if (ncost == 2) {
      c1_mw = row.values[4];
      c0 = row.values[5];
    } else {
      c0 = row.values[4];
    }
    if (c2_mw < 0) {
      throw ParseError("gencost row " + std::to_string(r + 1) +
                           " has negative quadratic coefficient (nonconvex)",
                       row.line, 1);
    }
    Generator& g = nc.generators[k];
    g.c2_mw = c2_mw;
    g.c1_mw = c1_mw;
    g.c0 = c0;
    // f(p_mw) = c2_mw p_mw^2 + c1_mw p_mw + c0 with p_mw = base * p.
    g.c2 = c2_mw * nc.base_mva * nc.base_mva;
    g.c1 = c1_mw * nc.base_mva;
  }

  return nc;
}

NetworkCase load_case(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open case file: " + path);
  std::ostringstream buf;
  buf << in.rdbuf();
  try {
    NetworkCase nc = parse_case(buf.str());
    if (nc.name.empty()) nc.name = path;
    return nc;
  } catch (const ParseError& e) {
    throw ParseError(path, e);
  }
}

ValidationReport validate_case(const NetworkCase& nc) {
  ValidationReport report;
  auto add = [&report](const std::string& msg) {
    report.findings.push_back(msg);
  };

  std::set<int> ids;
  int refs = 0;
  for (const Bus& b : nc.buses) {
    if (!ids.insert(b.id).second) {
      add("duplicate bus id " + std::to_string(b.id));
    }
    if (b.is_ref) ++refs;
  }
  if (refs == 0) add("missing reference bus");
  if (refs > 1) add("multiple reference buses");
  if (!(nc.base_mva > 0)) add("baseMVA must be positive");

  for (std::size_t i = 0; i < nc.generators.size(); ++i) {
    const Generator& g = nc.generators[i];
    if (!ids.count(g.bus)) {
      add("generator " + std::to_string(i + 1) + " references unknown bus " +
          std::to_string(g.bus));
    }
    if (g.p_min > g.p_max) {
      add("generator " + std::to_string(i + 1) + " has p_min > p_max");
    }
    if (g.c2 < 0) {
      add("generator " + std::to_string(i + 1) +
          " has negative quadratic cost (nonconvex)");
    }
  }
  for (std::size_t i = 0; i < nc.branches.size(); ++i) {
    const Branch& br = nc.branches[i];
    for (const int end : {br.from, br.to}) {
      if (!ids.count(end)) {
        add("branch " + std::to_string(i + 1) + " references unknown bus " +
            std::to_string(end));
      }
    }
    if (br.susceptance == 0.0) {
      add("branch " + std::to_string(i + 1) + " has zero susceptance");
    }
    if (br.in_service && !(br.flow_limit > 0)) {
      add("branch " + std::to_string(i + 1) +
          " is in service with nonpositive flow limit");
    }
  }
  return report;
}

std::string serialize_case(const NetworkCase& nc) {
  std::ostringstream os;
  os << "function mpc = " << (nc.name.empty() ? "mpc_case" : nc.name) << "\n";
  os << "mpc.version = '2';\n";
  os << "mpc.baseMVA = " << format_double(nc.base_mva) << ";\n";

  os << "mpc.bus = [\n";
  for (const Bus& b : nc.buses) {
    os << "\t" << b.id << "\t" << (b.is_ref ? 3 : 1) << "\t"
       << format_double(b.demand_mw) << "\t0\t0\t0\t1\t1\t0\t0\t1\t1.1\t0.9;\n";
  }
  os << "];\n";

  os << "mpc.gen = [\n";
  for (const Generator& g : nc.generators) {
    os << "\t" << g.bus << "\t0\t0\t0\t0\t1\t" << format_double(nc.base_mva)
       << "\t1\t" << format_double(g.p_max_mw) << "\t"
       << format_double(g.p_min_mw) << "\t0\t0\t0\t0\t0\t0\t0\t0\t0\t0\t0;\n";
  }
  os << "];\n";

  os << "mpc.branch = [\n";
  for (const Branch& br : nc.branches) {
    os << "\t" << br.from << "\t" << br.to << "\t0\t"
       << format_double(br.reactance) << "\t0\t" << format_double(br.rate_mw)
       << "\t0\t0\t0\t0\t" << (br.in_service ? 1 : 0) << "\t-360\t360;\n";
  }
  os << "];\n";

  os << "mpc.gencost = [\n";
  for (const Generator& g : nc.generators) {
    os << "\t2\t0\t0\t3\t" << format_double(g.c2_mw) << "\t"
       << format_double(g.c1_mw) << "\t" << format_double(g.c0) << ";\n";
  }
  os << "];\n";
  return os.str();
}

}  // namespace dopf
