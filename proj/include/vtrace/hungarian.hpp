#pragma once

#include <vector>

namespace vtrace {

// Minimum-total-cost one-to-one assignment over a dense row-major cost
// matrix (potentials + augmenting shortest paths, O(n^2 m)). Entries at or
// above `forbidden` are unassignable; returns the matched column per row,
// -1 where no feasible column was assigned.
std::vector<int> min_cost_assignment(const std::vector<double>& cost, int n_rows,
                                     int n_cols, double forbidden);

}  // namespace vtrace
