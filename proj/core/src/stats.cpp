#include "wmprior/stats.hpp"

#include "wmprior/errors.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <map>

namespace wmprior {

std::optional<double> pearson(const std::vector<double>& x, const std::vector<double>& y) {
    if (x.size() != y.size() || x.size() < 2) return std::nullopt;
    const double n = static_cast<double>(x.size());
    double mx = 0.0, my = 0.0;
    for (size_t i = 0; i < x.size(); ++i) {
        mx += x[i];
        my += y[i];
    }
    mx /= n;
    my /= n;
    double sxy = 0.0, sxx = 0.0, syy = 0.0;
    for (size_t i = 0; i < x.size(); ++i) {
        sxy += (x[i] - mx) * (y[i] - my);
        sxx += (x[i] - mx) * (x[i] - mx);
        syy += (y[i] - my) * (y[i] - my);
    }
    if (sxx <= 0.0 || syy <= 0.0) return std::nullopt;
    return sxy / std::sqrt(sxx * syy);
}

namespace {

// Midranks of the pooled sample, scaled by 2 so everything stays integral.
std::vector<long long> double_midranks(const std::vector<double>& pooled_sorted) {
    const size_t n = pooled_sorted.size();
    std::vector<long long> out(n);
    size_t i = 0;
    while (i < n) {
        size_t j = i;
        while (j + 1 < n && pooled_sorted[j + 1] == pooled_sorted[i]) ++j;
        // ranks i+1 .. j+1 share midrank (i+j+2)/2; doubled: i+j+2
        long long doubled = static_cast<long long>(i + j + 2);
        for (size_t k = i; k <= j; ++k) out[k] = doubled;
        i = j + 1;
    }
    return out;
}

double normal_sf(double z) {
    return 0.5 * std::erfc(z / std::sqrt(2.0));
}

}  // namespace

MannWhitneyResult mann_whitney_u(const std::vector<double>& group1,
                                 const std::vector<double>& group2) {
    const int n1 = static_cast<int>(group1.size());
    const int n2 = static_cast<int>(group2.size());
    if (n1 == 0 || n2 == 0)
        throw data_error("Mann-Whitney U requires two non-empty groups");

    std::vector<double> pooled = group1;
    pooled.insert(pooled.end(), group2.begin(), group2.end());
    std::vector<size_t> order(pooled.size());
    for (size_t i = 0; i < order.size(); ++i) order[i] = i;
    std::sort(order.begin(), order.end(),
              [&](size_t a, size_t b) { return pooled[a] < pooled[b]; });
    std::vector<double> sorted(pooled.size());
    for (size_t i = 0; i < order.size(); ++i) sorted[i] = pooled[order[i]];
    std::vector<long long> dr = double_midranks(sorted);

    // 2 * rank sum of group 1.
    long long r1_doubled = 0;
    std::vector<long long> all_doubled(pooled.size());
    for (size_t i = 0; i < order.size(); ++i) {
        all_doubled[i] = dr[i];
        if (order[i] < static_cast<size_t>(n1)) r1_doubled += dr[i];
    }

    const long long n = n1 + n2;
    // 2U = 2R1 - n1(n1+1)
    const long long u_doubled = r1_doubled - static_cast<long long>(n1) * (n1 + 1);
    const long long mu_doubled = static_cast<long long>(n1) * n2;  // 2 * n1 n2 / 2

    MannWhitneyResult result;
    result.n1 = n1;
    result.n2 = n2;
    result.U = static_cast<double>(u_doubled) / 2.0;

    if (n1 <= 20 && n2 <= 20) {
        // Exact null: count size-n1 subsets of the doubled midranks by sum.
        const long long max_sum = static_cast<long long>(n) * (n + 1);
        std::vector<std::vector<double>> ways(
            static_cast<size_t>(n1 + 1), std::vector<double>(static_cast<size_t>(max_sum + 1), 0.0));
        ways[0][0] = 1.0;
        for (long long value : all_doubled) {
            for (int k = n1; k >= 1; --k) {
                for (long long s = max_sum; s >= value; --s) {
                    double prev = ways[static_cast<size_t>(k - 1)][static_cast<size_t>(s - value)];
                    if (prev > 0.0) ways[static_cast<size_t>(k)][static_cast<size_t>(s)] += prev;
                }
            }
        }
        const long long dev_obs = std::llabs(u_doubled - mu_doubled);
        double favourable = 0.0;
        double total = 0.0;
        for (long long s = 0; s <= max_sum; ++s) {
            double count = ways[static_cast<size_t>(n1)][static_cast<size_t>(s)];
            if (count == 0.0) continue;
            total += count;
            long long u2 = s - static_cast<long long>(n1) * (n1 + 1);
            if (std::llabs(u2 - mu_doubled) >= dev_obs) favourable += count;
        }
        result.p_two_sided = favourable / total;
    } else {
        // Normal approximation with tie and continuity corrections.
        std::map<long long, long long> tie_counts;
        for (long long d : all_doubled) ++tie_counts[d];
        double tie_term = 0.0;
        for (const auto& [value, t] : tie_counts)
            tie_term += static_cast<double>(t) * t * t - t;
        double var = (static_cast<double>(n1) * n2 / 12.0) *
                     ((n + 1) - tie_term / (static_cast<double>(n) * (n - 1)));
        if (var <= 0.0) {
            result.p_two_sided = 1.0;
        } else {
            double dev = std::abs(result.U - static_cast<double>(mu_doubled) / 2.0);
            double z = std::max(0.0, dev - 0.5) / std::sqrt(var);
            result.p_two_sided = std::min(1.0, 2.0 * normal_sf(z));
        }
    }
    if (result.p_two_sided <= 0.0) result.p_two_sided = std::numeric_limits<double>::min();
    return result;
}

}  // namespace wmprior
