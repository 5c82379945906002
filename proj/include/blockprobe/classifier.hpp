#pragma once

#include "embedding.hpp"
#include "error.hpp"
#include "parallel.hpp"
#include "rng.hpp"

#include <algorithm>
#include <cstdint>
#include <map>
#include <numeric>
#include <string>
#include <string_view>
#include <vector>

/**
 * @file classifier.hpp
 *
 * @brief Trainless kNN attribute classification and stratified k-fold evaluation.
 */

namespace blockprobe {

struct KnnConfig {
    int k = 5;
    Metric metric = Metric::euclidean;

    void validate() const {
        if (k < 1) {
            throw ConfigError("k must be >= 1");
        }
    }
};

struct FoldAssignment {
    int n_folds = 0;
    std::vector<int> fold_of;
    std::uint64_t seed = 0;
    /// Classes with fewer members than folds; they are still distributed.
    std::vector<std::string> warnings;
};

struct CVReport {
    std::vector<double> per_fold_accuracy;
    double mean_accuracy = 0;
    int block_index = 0;
    int k = 0;
    int n_folds = 0;
    std::uint64_t seed = 0;
};

namespace detail {

struct Neighbor {
    double distance;
    std::size_t index;
};

/**
 * Majority vote over the k nearest candidates.
 *
 * Candidates are ordered by (distance, image id). A vote tie goes to the class
 * with the smallest summed distance, then to the lexicographically smallest
 * class name.
 */
inline std::string vote(std::vector<Neighbor>& candidates, int k, const std::vector<std::string>& ids,
                        const std::vector<std::string>& labels) {
    auto less = [&](const Neighbor& a, const Neighbor& b) {
        if (a.distance != b.distance) {
            return a.distance < b.distance;
        }
        return ids[a.index] < ids[b.index];
    };
    std::size_t take = std::min<std::size_t>(static_cast<std::size_t>(k), candidates.size());
    std::partial_sort(candidates.begin(), candidates.begin() + static_cast<std::ptrdiff_t>(take), candidates.end(),
                      less);

    struct Tally {
        int votes = 0;
        double distance = 0;
    };
    std::map<std::string_view, Tally> tally;
    for (std::size_t i = 0; i < take; ++i) {
        auto& t = tally[labels[candidates[i].index]];
        ++t.votes;
        t.distance += candidates[i].distance;
    }

    // Map order is lexicographic, so strict comparisons keep the smallest name on full ties.
    auto best = tally.begin();
    for (auto it = std::next(tally.begin()); it != tally.end(); ++it) {
        if (it->second.votes > best->second.votes ||
            (it->second.votes == best->second.votes && it->second.distance < best->second.distance)) {
            best = it;
        }
    }
    return std::string(best->first);
}

}  // namespace detail

/**
 * Predicts the label of `query` from its k nearest rows of `train`.
 *
 * Distances are euclidean on the raw vectors, accumulated in double.
 */
template <typename Float_, typename Query_>
std::string knn_predict(const BasicEmbeddingMatrix<Float_>& train, std::span<const Query_> query,
                        const KnnConfig& cfg = {}) {
    cfg.validate();
    if (train.empty()) {
        throw DimensionError("knn_predict needs a non-empty training set");
    }
    if (query.size() != train.dim) {
        throw DimensionError("query has dim " + std::to_string(query.size()) + ", training set has dim " +
                             std::to_string(train.dim));
    }
    std::vector<detail::Neighbor> candidates(train.rows());
    for (std::size_t i = 0; i < train.rows(); ++i) {
        candidates[i] = {detail::euclidean(train.row(i), query), i};
    }
    return detail::vote(candidates, cfg.k, train.ids, train.labels);
}

/**
 * Assigns rows to folds so that, per class, fold sizes differ by at most one.
 *
 * Each class is canonically sorted by image id, shuffled with a stream seeded
 * from `seed`, and dealt round-robin. The dealing position carries over from
 * one class to the next (classes visited in name order), so total fold sizes
 * are also balanced to within one.
 */
inline FoldAssignment stratified_folds(const std::vector<std::string>& labels, const std::vector<std::string>& ids,
                                       int n_folds, std::uint64_t seed) {
    if (n_folds < 2) {
        throw ConfigError("n_folds must be >= 2");
    }
    if (labels.size() != ids.size()) {
        throw DimensionError("labels and ids differ in length");
    }

    std::map<std::string, std::vector<std::size_t>> by_class;
    for (std::size_t i = 0; i < labels.size(); ++i) {
        by_class[labels[i]].push_back(i);
    }

    FoldAssignment out;
    out.n_folds = n_folds;
    out.seed = seed;
    out.fold_of.assign(labels.size(), 0);

    Rng rng(derive_seed(seed, hash_name("stratified_folds")));
    std::size_t deal = 0;
    for (auto& [name, members] : by_class) {
        if (members.size() < static_cast<std::size_t>(n_folds)) {
            out.warnings.push_back("class '" + name + "' has " + std::to_string(members.size()) +
                                   " members, fewer than " + std::to_string(n_folds) + " folds");
        }
        std::sort(members.begin(), members.end(), [&](std::size_t a, std::size_t b) { return ids[a] < ids[b]; });
        rng.shuffle(members);
        for (auto m : members) {
            out.fold_of[m] = static_cast<int>(deal % static_cast<std::size_t>(n_folds));
            ++deal;
        }
    }
    return out;
}

/**
 * Stratified k-fold cross-validation of the kNN classifier.
 *
 * Each fold is scored with all other folds as the training set; the report
 * holds per-fold accuracy (correct / total) and their arithmetic mean.
 */
template <typename Float_>
CVReport cross_validate(const BasicEmbeddingMatrix<Float_>& matrix, const KnnConfig& cfg, int n_folds,
                        std::uint64_t seed, int threads = 1) {
    cfg.validate();
    if (matrix.rows() < static_cast<std::size_t>(std::max(n_folds, 2))) {
        throw DimensionError("cross-validation needs at least n_folds rows");
    }
    auto folds = stratified_folds(matrix.labels, matrix.ids, n_folds, seed);
    const std::size_t n = matrix.rows();

    std::vector<int> correct(n, 0);
    parallelize(n, threads, [&](std::size_t begin, std::size_t end, int) {
        std::vector<detail::Neighbor> candidates;
        candidates.reserve(n);
        for (std::size_t q = begin; q < end; ++q) {
            candidates.clear();
            auto query = matrix.row(q);
            for (std::size_t i = 0; i < n; ++i) {
                if (folds.fold_of[i] != folds.fold_of[q]) {
                    candidates.push_back({detail::euclidean(matrix.row(i), query), i});
                }
            }
            if (candidates.empty()) {
                continue;
            }
            correct[q] = detail::vote(candidates, cfg.k, matrix.ids, matrix.labels) == matrix.labels[q];
        }
    });

    CVReport report;
    report.block_index = matrix.block_index;
    report.k = cfg.k;
    report.n_folds = n_folds;
    report.seed = seed;
    std::vector<std::size_t> hits(n_folds, 0), totals(n_folds, 0);
    for (std::size_t i = 0; i < n; ++i) {
        ++totals[folds.fold_of[i]];
        hits[folds.fold_of[i]] += correct[i];
    }
    for (int f = 0; f < n_folds; ++f) {
        report.per_fold_accuracy.push_back(totals[f] ? static_cast<double>(hits[f]) / totals[f] : 0.0);
    }
    report.mean_accuracy =
        std::accumulate(report.per_fold_accuracy.begin(), report.per_fold_accuracy.end(), 0.0) / n_folds;
    return report;
}

}  // namespace blockprobe
