#pragma once

#include <optional>
#include <vector>

namespace wmprior {

// Pearson correlation; nullopt when either input is constant.
std::optional<double> pearson(const std::vector<double>& x, const std::vector<double>& y);

struct MannWhitneyResult {
    double U = 0.0;  // U statistic of the first group
    double p_two_sided = 1.0;
    int n1 = 0;
    int n2 = 0;
};

// Rank-sum U with midrank tie handling. Exact two-sided p by counting
// subset rank assignments (dynamic programming over the tied rank
// multiset) when both groups have <= 20 observations; otherwise the
// normal approximation with tie correction and continuity correction.
MannWhitneyResult mann_whitney_u(const std::vector<double>& group1,
                                 const std::vector<double>& group2);

}  // namespace wmprior
