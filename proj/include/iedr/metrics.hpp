#pragma once

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>
#include <string>
#include <vector>

#include "rng.hpp"

namespace iedr {

/// Candidate list sorted by score descending with exactly one relevant item.
/// Ties are broken by a seeded shuffle applied before the stable sort, so an
/// all-ties list ranks the positive uniformly.
struct RankedList {
    std::vector<std::pair<std::string, double>> entries; // descending scores
    std::size_t positive_pos = 0;                        // 0-based position in entries

    std::size_t positive_rank() const { return positive_pos + 1; } // 1-based
};

inline RankedList make_ranked_list(const std::vector<std::string>& keys,
                                   const std::vector<double>& scores, std::size_t positive_idx,
                                   RngStream& rng) {
    if (keys.size() != scores.size() || positive_idx >= keys.size())
        throw std::invalid_argument("make_ranked_list: bad inputs");
    for (double s : scores)
        if (!std::isfinite(s)) throw std::invalid_argument("make_ranked_list: non-finite score");
    std::vector<std::size_t> order(keys.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    for (std::size_t i = order.size(); i > 1; --i) std::swap(order[i - 1], order[rng.index(i)]);
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });
    RankedList out;
    out.entries.reserve(keys.size());
    for (std::size_t p = 0; p < order.size(); ++p) {
        out.entries.emplace_back(keys[order[p]], scores[order[p]]);
        if (order[p] == positive_idx) out.positive_pos = p;
    }
    return out;
}

/// Single-relevant-item NDCG: 1/log2(1+rank) when rank <= k, else 0.
inline double ndcg_at_k(std::size_t rank_1based, std::size_t k) {
    if (rank_1based == 0) throw std::invalid_argument("ndcg_at_k: rank is 1-based");
    if (rank_1based > k) return 0.0;
    return 1.0 / std::log2(static_cast<double>(rank_1based) + 1.0);
}

/// Hit rate under one relevant item.
inline double recall_at_k(std::size_t rank_1based, std::size_t k) {
    if (rank_1based == 0) throw std::invalid_argument("recall_at_k: rank is 1-based");
    return rank_1based <= k ? 1.0 : 0.0;
}

inline double ndcg_at_k(const RankedList& list, std::size_t k) {
    return ndcg_at_k(list.positive_rank(), k);
}

inline double recall_at_k(const RankedList& list, std::size_t k) {
    return recall_at_k(list.positive_rank(), k);
}

/// Fraction of negatives scored strictly below the positive; ties count 1/2.
inline double auc(double positive_score, const std::vector<double>& negative_scores) {
    if (negative_scores.empty()) throw std::invalid_argument("auc: no negatives");
    double s = 0.0;
    for (double n : negative_scores) {
        if (n < positive_score)
            s += 1.0;
        else if (n == positive_score)
            s += 0.5;
    }
    return s / static_cast<double>(negative_scores.size());
}

struct MetricsReport {
    double ndcg5 = 0, ndcg10 = 0, recall5 = 0, recall10 = 0, auc = 0;
    std::size_t count = 0;
};

/// Kendall rank correlation (tau-a) between two score vectors over the same
/// item set.
inline double kendall_tau(const std::vector<double>& a, const std::vector<double>& b) {
    if (a.size() != b.size() || a.size() < 2)
        throw std::invalid_argument("kendall_tau: need two equal-length vectors of size >= 2");
    long long concordant = 0, discordant = 0;
    for (std::size_t i = 0; i < a.size(); ++i)
        for (std::size_t j = i + 1; j < a.size(); ++j) {
            const double da = a[i] - a[j], db = b[i] - b[j];
            const double prod = da * db;
            if (prod > 0)
                ++concordant;
            else if (prod < 0)
                ++discordant;
        }
    const double total = static_cast<double>(a.size()) * (a.size() - 1) / 2.0;
    return static_cast<double>(concordant - discordant) / total;
}

} // namespace iedr
