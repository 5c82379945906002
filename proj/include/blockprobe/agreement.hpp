#pragma once

#include "error.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <map>
#include <vector>

/**
 * @file agreement.hpp
 *
 * @brief Chance-corrected partition agreement: adjusted Rand index and
 * adjusted mutual information.
 *
 * Labels are arbitrary integers. The HDBSCAN noise label (-1) is scored as one
 * ordinary cluster.
 */

namespace blockprobe {

struct AgreementScores {
    double ari = 0;
    double ami = 0;
};

/// Contingency table between two labelings with row/column marginals.
struct Contingency {
    std::vector<std::int64_t> row_sums;
    std::vector<std::int64_t> col_sums;
    /// Non-zero cells only, as (row, col, count).
    struct Cell {
        std::size_t row;
        std::size_t col;
        std::int64_t count;
    };
    std::vector<Cell> cells;
    std::int64_t n = 0;
};

inline Contingency contingency(const std::vector<int>& a, const std::vector<int>& b) {
    if (a.size() != b.size()) {
        throw DimensionError("labelings differ in length: " + std::to_string(a.size()) + " vs " +
                             std::to_string(b.size()));
    }
    std::map<int, std::size_t> ra, rb;
    for (int x : a) {
        ra.emplace(x, 0);
    }
    for (int x : b) {
        rb.emplace(x, 0);
    }
    std::size_t next = 0;
    for (auto& [k, v] : ra) {
        v = next++;
    }
    next = 0;
    for (auto& [k, v] : rb) {
        v = next++;
    }

    Contingency out;
    out.n = static_cast<std::int64_t>(a.size());
    out.row_sums.assign(ra.size(), 0);
    out.col_sums.assign(rb.size(), 0);
    std::map<std::pair<std::size_t, std::size_t>, std::int64_t> cells;
    for (std::size_t i = 0; i < a.size(); ++i) {
        auto r = ra[a[i]], c = rb[b[i]];
        ++out.row_sums[r];
        ++out.col_sums[c];
        ++cells[{r, c}];
    }
    for (auto& [rc, count] : cells) {
        out.cells.push_back({rc.first, rc.second, count});
    }
    return out;
}

namespace detail {

inline std::int64_t pairs(std::int64_t m) { return m * (m - 1) / 2; }

inline double entropy(const std::vector<std::int64_t>& sums, std::int64_t n) {
    double h = 0;
    for (auto s : sums) {
        if (s > 0) {
            double p = static_cast<double>(s) / n;
            h -= p * std::log(p);
        }
    }
    return h;
}

}  // namespace detail

/**
 * Hubert-Arabie adjusted Rand index,
 * (sum_ij C(n_ij,2) - E) / (M - E) with E = sum_i C(a_i,2) sum_j C(b_j,2) / C(n,2)
 * and M = (sum_i C(a_i,2) + sum_j C(b_j,2)) / 2.
 * Pair counts are exact integers; the quotient is taken in double.
 */
inline double adjusted_rand_index(const std::vector<int>& a, const std::vector<int>& b) {
    auto t = contingency(a, b);
    if (t.n < 2) {
        throw DimensionError("adjusted_rand_index needs at least two points");
    }
    std::int64_t index = 0, sum_a = 0, sum_b = 0;
    for (auto& c : t.cells) {
        index += detail::pairs(c.count);
    }
    for (auto s : t.row_sums) {
        sum_a += detail::pairs(s);
    }
    for (auto s : t.col_sums) {
        sum_b += detail::pairs(s);
    }
    double expected = static_cast<double>(sum_a) * static_cast<double>(sum_b) / static_cast<double>(detail::pairs(t.n));
    double maximum = 0.5 * static_cast<double>(sum_a + sum_b);
    if (maximum == expected) {
        // Only reachable when both sides are a single cluster or both are all singletons.
        return 1.0;
    }
    return (static_cast<double>(index) - expected) / (maximum - expected);
}

/// Mutual information in nats.
inline double mutual_information(const Contingency& t) {
    double mi = 0;
    const double n = static_cast<double>(t.n);
    for (auto& c : t.cells) {
        double nij = static_cast<double>(c.count);
        mi += nij / n * std::log(n * nij / (static_cast<double>(t.row_sums[c.row]) * t.col_sums[c.col]));
    }
    return std::max(mi, 0.0);
}

/**
 * Expected mutual information under the hypergeometric model of random
 * labelings with fixed marginals, summed exactly over all feasible cell
 * counts max(1, a_i + b_j - n) .. min(a_i, b_j).
 */
inline double expected_mutual_information(const Contingency& t) {
    const std::int64_t n = t.n;
    const double nd = static_cast<double>(n);
    const double lg_n = std::lgamma(nd + 1);
    double emi = 0;
    for (auto ai : t.row_sums) {
        for (auto bj : t.col_sums) {
            std::int64_t lo = std::max<std::int64_t>(1, ai + bj - n);
            std::int64_t hi = std::min(ai, bj);
            // log of a_i! b_j! (n-a_i)! (n-b_j)! / n!, the part of the pmf that is fixed per cell
            double fixed = std::lgamma(ai + 1.0) + std::lgamma(bj + 1.0) + std::lgamma(nd - ai + 1) +
                           std::lgamma(nd - bj + 1) - lg_n;
            for (std::int64_t nij = lo; nij <= hi; ++nij) {
                double log_p = fixed - std::lgamma(nij + 1.0) - std::lgamma(ai - nij + 1.0) -
                               std::lgamma(bj - nij + 1.0) - std::lgamma(nd - ai - bj + nij + 1);
                double term = nij / nd * std::log(nd * nij / (static_cast<double>(ai) * bj));
                emi += term * std::exp(log_p);
            }
        }
    }
    return emi;
}

/**
 * Adjusted mutual information, (MI - E[MI]) / (mean(H(a), H(b)) - E[MI]) with
 * the arithmetic mean of the entropies. Two labelings that each have zero
 * entropy agree perfectly (1.0).
 */
inline double adjusted_mutual_info(const std::vector<int>& a, const std::vector<int>& b) {
    auto t = contingency(a, b);
    if (t.n == 0) {
        throw DimensionError("adjusted_mutual_info needs at least one point");
    }
    double ha = detail::entropy(t.row_sums, t.n), hb = detail::entropy(t.col_sums, t.n);
    if (ha == 0 && hb == 0) {
        return 1.0;
    }
    // Both all-singletons: identical partitions, but MI == E[MI] == log n.
    if (t.row_sums.size() == static_cast<std::size_t>(t.n) && t.col_sums.size() == static_cast<std::size_t>(t.n)) {
        return 1.0;
    }
    double mi = mutual_information(t);
    double emi = expected_mutual_information(t);
    double denom = 0.5 * (ha + hb) - emi;
    constexpr double eps = std::numeric_limits<double>::epsilon();
    denom = denom < 0 ? std::min(denom, -eps) : std::max(denom, eps);
    return (mi - emi) / denom;
}

inline AgreementScores agreement(const std::vector<int>& truth, const std::vector<int>& predicted) {
    return {adjusted_rand_index(truth, predicted), adjusted_mutual_info(truth, predicted)};
}

}  // namespace blockprobe
