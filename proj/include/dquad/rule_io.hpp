#pragma once

#include <iomanip>
#include <istream>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include "dquad/errors.hpp"
#include "dquad/rules.hpp"

namespace dquad {

// Plain-text fully symmetric rule tables.
//
//   # comment lines start with '#'
//   degree 7
//   embedded_degree 5
//   g_1 g_2 ... g_d  weight  embedded_weight
//
// One orbit per data line. Generators live on [-1,1]^d; weights are per node
// on that reference cube, so sum(weight * orbit_size) must equal 2^d. The
// dimension is the number of columns minus two and must agree on every line.

[[nodiscard]] inline RuleTable read_rule_table(std::istream& in, const std::string& name = "custom") {
  int degree = 0;
  int embedded_degree = 0;
  int dim = 0;
  std::vector<Orbit> orbits;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    std::istringstream ls(line);
    std::string first;
    if (!(ls >> first)) continue;
    if (first == "degree" || first == "embedded_degree") {
      int v = 0;
      if (!(ls >> v)) throw FormatError("rule table line " + std::to_string(line_no) + ": missing degree value");
      (first == "degree" ? degree : embedded_degree) = v;
      continue;
    }
    std::vector<double> cols;
    std::istringstream all(line);
    std::string tok;
    while (all >> tok) {
      try {
        std::size_t used = 0;
        cols.push_back(std::stod(tok, &used));
        if (used != tok.size()) throw std::invalid_argument(tok);
      } catch (const std::exception&) {
        throw FormatError("rule table line " + std::to_string(line_no) + ": bad number '" + tok + "'");
      }
    }
    if (cols.size() < 3) throw FormatError("rule table line " + std::to_string(line_no) + ": need d >= 1 coordinates plus two weights");
    const int d = static_cast<int>(cols.size()) - 2;
    if (dim == 0) dim = d;
    if (d != dim) throw FormatError("rule table line " + std::to_string(line_no) + ": inconsistent dimension");
    Orbit o;
    o.generator.assign(cols.begin(), cols.end() - 2);
    o.weight = cols[cols.size() - 2];
    o.embedded_weight = cols.back();
    orbits.push_back(std::move(o));
  }
  if (orbits.empty()) throw FormatError("rule table: no orbits");
  return RuleTable::fully_symmetric(dim, std::move(orbits), degree, embedded_degree, name);
}

inline void write_rule_table(std::ostream& out, const RuleTable& table) {
  if (table.family() != RuleFamily::fully_symmetric) {
    throw ContractViolation("write_rule_table: only fully symmetric tables have a text form");
  }
  out << "# " << table.name() << " d=" << table.dim() << " nodes=" << table.node_count() << '\n';
  out << "degree " << table.degree() << '\n';
  out << "embedded_degree " << table.embedded_degree() << '\n';
  out << std::setprecision(17);
  for (const auto& o : table.orbits()) {
    for (double g : o.generator) out << g << ' ';
    out << o.weight << ' ' << o.embedded_weight << '\n';
  }
}

}  // namespace dquad
