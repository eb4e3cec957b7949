#pragma once

#include <stdexcept>
#include <vector>

#include "udkit/tensor.hpp"

namespace udkit::decode {

// scores is (n + 1) x n: scores(h, d) is the score of head h (0 = root,
// otherwise word h) for word d + 1. Self-arcs scores(d + 1, d) are ignored.
// Returns n heads in [0, n] forming a single-rooted arborescence of maximum
// total score. Ties prefer the lower head index.
std::vector<int> max_arborescence(const Matrix& scores);

// Exhaustive search over all head assignments; same contract. Refuses n > 7.
std::vector<int> brute_force_arborescence(const Matrix& scores);

// Sum of scores(heads[d], d).
double tree_score(const Matrix& scores, const std::vector<int>& heads);

// True when heads form a single-rooted arborescence over words 1..n.
bool is_single_rooted_tree(const std::vector<int>& heads);

}  // namespace udkit::decode
