#pragma once

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <string>
#include <string_view>
#include <vector>

#include "hmar/verification/oracles.hpp"

namespace hmar::verify {

enum class Relation { equality, ordering, bound };
std::string_view relation_name(Relation r);

struct OracleCase {
  std::string name;
  std::uint64_t seed = 0;
  std::string params;  // construction parameters, "key=value" separated by spaces
  double tolerance = 0.0;
  Relation relation = Relation::equality;
  std::function<CaseOutcome()> run;
};

struct CaseReport {
  std::string name;
  bool pass = false;
  double deviation = 0.0;
  double ms = 0.0;
  std::string detail;
  std::string params;
  double tolerance = 0.0;
  Relation relation = Relation::equality;
};

// Every registered case, sorted by name.
const std::vector<OracleCase>& registry();

// Cases whose name contains `filter`; an empty filter selects all.
std::vector<const OracleCase*> select_cases(std::string_view filter);

CaseReport run_case(const OracleCase& c);

// Runs the selected cases in name order. A case that throws is reported as
// failed with the exception text.
std::vector<CaseReport> run_all(std::string_view filter);

// {"case", "pass", "deviation", "ms", ...} on one line.
std::string report_json(const CaseReport& r);

// Writes one JSON line per case and returns 0 when all pass, 1 otherwise
// (also 1 when the filter selects nothing).
int run_all_to(std::ostream& os, std::string_view filter);

}  // namespace hmar::verify
