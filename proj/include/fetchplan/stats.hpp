#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <optional>
#include <vector>

namespace fetchplan::stats {

inline double mean(const std::vector<double>& xs) {
    if (xs.empty()) return 0.0;
    double sum = 0.0;
    for (double x : xs) sum += x;
    return sum / static_cast<double>(xs.size());
}

/// Sample standard deviation (n-1 denominator). 0.0 when fewer than two
/// samples.
inline double sample_sd(const std::vector<double>& xs) {
    if (xs.size() < 2) return 0.0;
    double m = mean(xs);
    double ss = 0.0;
    for (double x : xs) ss += (x - m) * (x - m);
    return std::sqrt(ss / static_cast<double>(xs.size() - 1));
}

namespace detail {

/// Midranks of the pooled samples, in pooled order (a first, then b).
inline std::vector<double> midranks(const std::vector<double>& pooled) {
    std::size_t n = pooled.size();
    std::vector<std::size_t> order(n);
    for (std::size_t i = 0; i < n; ++i) order[i] = i;
    std::sort(order.begin(), order.end(),
              [&](std::size_t l, std::size_t r) { return pooled[l] < pooled[r]; });

    std::vector<double> ranks(n);
    std::size_t i = 0;
    while (i < n) {
        std::size_t j = i;
        while (j + 1 < n && pooled[order[j + 1]] == pooled[order[i]]) ++j;
        double rank = (static_cast<double>(i + 1) + static_cast<double>(j + 1)) / 2.0;
        for (std::size_t k = i; k <= j; ++k) ranks[order[k]] = rank;
        i = j + 1;
    }
    return ranks;
}

inline double binomial(std::size_t n, std::size_t k) {
    if (k > n) return 0.0;
    k = std::min(k, n - k);
    double result = 1.0;
    for (std::size_t i = 1; i <= k; ++i)
        result = result * static_cast<double>(n - k + i) / static_cast<double>(i);
    return result;
}

/// Exact two-sided tail: enumerate every assignment of the pooled ranks to
/// the first sample and count those at least as far from the null mean
/// nm/2 as the observed statistic.
inline double exact_two_sided_p(const std::vector<double>& ranks, std::size_t n, double u_observed,
                                double null_mean) {
    std::size_t total = ranks.size();
    double observed_dev = std::abs(u_observed - null_mean);
    double n1 = static_cast<double>(n);

    long long extreme = 0;
    long long combos = 0;
    std::vector<std::size_t> pick(n);
    for (std::size_t i = 0; i < n; ++i) pick[i] = i;

    auto evaluate = [&]() {
        double rank_sum = 0.0;
        for (std::size_t idx : pick) rank_sum += ranks[idx];
        double u = rank_sum - n1 * (n1 + 1.0) / 2.0;
        ++combos;
        if (std::abs(u - null_mean) + 1e-12 >= observed_dev) ++extreme;
    };

    evaluate();
    while (true) {
        std::size_t i = n;
        while (i > 0 && pick[i - 1] == total - n + (i - 1)) --i;
        if (i == 0) break;
        ++pick[i - 1];
        for (std::size_t j = i; j < n; ++j) pick[j] = pick[j - 1] + 1;
        evaluate();
    }
    return static_cast<double>(extreme) / static_cast<double>(combos);
}

} // namespace detail

/// How many pooled-sample combinations the exact Mann-Whitney test will
/// enumerate before switching to the normal approximation.
inline constexpr double kExactEnumerationLimit = 200000.0;

/// Two-sided Mann-Whitney U test. Exact permutation enumeration for small
/// samples, normal approximation with tie correction for larger ones.
/// nullopt when either sample has fewer than two values.
inline std::optional<double> mann_whitney_p(const std::vector<double>& a,
                                            const std::vector<double>& b) {
    std::size_t n = a.size();
    std::size_t m = b.size();
    if (n < 2 || m < 2) return std::nullopt;

    std::vector<double> pooled;
    pooled.reserve(n + m);
    pooled.insert(pooled.end(), a.begin(), a.end());
    pooled.insert(pooled.end(), b.begin(), b.end());
    std::vector<double> ranks = detail::midranks(pooled);

    double rank_sum_a = 0.0;
    for (std::size_t i = 0; i < n; ++i) rank_sum_a += ranks[i];
    double nd = static_cast<double>(n);
    double md = static_cast<double>(m);
    double u = rank_sum_a - nd * (nd + 1.0) / 2.0;
    double null_mean = nd * md / 2.0;

    if (detail::binomial(n + m, n) <= kExactEnumerationLimit)
        return detail::exact_two_sided_p(ranks, n, u, null_mean);

    // tie correction: sigma^2 = nm/12 * ((N+1) - sum(t^3-t)/(N(N-1)))
    std::vector<double> sorted = pooled;
    std::sort(sorted.begin(), sorted.end());
    double tie_term = 0.0;
    std::size_t i = 0;
    std::size_t total = sorted.size();
    while (i < total) {
        std::size_t j = i;
        while (j + 1 < total && sorted[j + 1] == sorted[i]) ++j;
        double t = static_cast<double>(j - i + 1);
        tie_term += t * t * t - t;
        i = j + 1;
    }
    double big_n = nd + md;
    double variance = nd * md / 12.0 * ((big_n + 1.0) - tie_term / (big_n * (big_n - 1.0)));
    if (variance <= 0.0) return 1.0; // all values identical

    double z = (std::abs(u - null_mean) - 0.5) / std::sqrt(variance);
    if (z < 0.0) z = 0.0;
    double p = std::erfc(z / std::sqrt(2.0));
    return std::min(1.0, p);
}

} // namespace fetchplan::stats
