#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace eqgs {

struct CheckResult {
  std::string name;
  bool pass{false};
  std::string detail;
};

// The property suite: equivariance/invariance of the equivariant stack, the
// rank-of-product theorem, full-pipeline gradient checks, similarity-matrix
// contracts, and the metric formula cases.
CheckResult check_equivariance();
CheckResult check_rank_theorem();
CheckResult check_gradients();
CheckResult check_similarity_contracts();
CheckResult check_metric_formulas();

std::vector<CheckResult> run_property_suite();

// Prints one line per check; returns overall pass.
bool run_selfcheck(std::ostream& out);

}  // namespace eqgs
