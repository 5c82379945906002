#pragma once

#include "error.hpp"

#include <cmath>
#include <cstddef>
#include <span>
#include <string>
#include <unordered_set>
#include <vector>

/**
 * @file embedding.hpp
 *
 * @brief Labeled row-major matrix of embedding vectors.
 */

namespace blockprobe {

/// Distance used by every neighbor computation.
enum class Metric { euclidean };

/**
 * N embedding vectors of a common dimension, each tagged with a unique image
 * id and a class label. The source block index travels with the matrix so
 * stores and reports can name it.
 *
 * @tparam Float_ Storage type of the vector values.
 */
template <typename Float_ = float>
struct BasicEmbeddingMatrix {
    using value_type = Float_;

    int block_index = 0;
    std::size_t dim = 0;
    std::vector<std::string> ids;
    std::vector<std::string> labels;
    std::vector<Float_> values;

    BasicEmbeddingMatrix() = default;
    BasicEmbeddingMatrix(int block, std::size_t dimension) : block_index(block), dim(dimension) {}

    std::size_t rows() const noexcept { return ids.size(); }
    bool empty() const noexcept { return ids.empty(); }

    std::span<const Float_> row(std::size_t i) const { return {values.data() + i * dim, dim}; }
    std::span<Float_> row(std::size_t i) { return {values.data() + i * dim, dim}; }

    template <typename Other_>
    void push_back(std::string id, std::string label, std::span<const Other_> vec) {
        if (vec.size() != dim) {
            throw DimensionError("row for '" + id + "' has " + std::to_string(vec.size()) +
                                 " values, matrix dim is " + std::to_string(dim));
        }
        ids.push_back(std::move(id));
        labels.push_back(std::move(label));
        for (auto v : vec) {
            values.push_back(static_cast<Float_>(v));
        }
    }

    void reserve(std::size_t n) {
        ids.reserve(n);
        labels.reserve(n);
        values.reserve(n * dim);
    }

    /** Throws if the value buffer does not match the row count, ids repeat, or a value is not finite. */
    void validate() const {
        if (labels.size() != ids.size() || values.size() != ids.size() * dim) {
            throw DimensionError("embedding matrix buffers disagree: " + std::to_string(ids.size()) + " ids, " +
                                 std::to_string(labels.size()) + " labels, " + std::to_string(values.size()) +
                                 " values at dim " + std::to_string(dim));
        }
        std::unordered_set<std::string> seen;
        seen.reserve(ids.size());
        for (const auto& id : ids) {
            if (!seen.insert(id).second) {
                throw DuplicateIdError("duplicate image id '" + id + "'");
            }
        }
        for (std::size_t i = 0; i < values.size(); ++i) {
            if (!std::isfinite(static_cast<double>(values[i]))) {
                throw InvalidValueError("non-finite value in row '" + ids[i / dim] + "'");
            }
        }
    }

    bool operator==(const BasicEmbeddingMatrix&) const = default;
};

using EmbeddingMatrix = BasicEmbeddingMatrix<float>;

/** Converts the value type, keeping ids, labels and block index. */
template <typename To_, typename From_>
BasicEmbeddingMatrix<To_> cast_matrix(const BasicEmbeddingMatrix<From_>& in) {
    BasicEmbeddingMatrix<To_> out(in.block_index, in.dim);
    out.ids = in.ids;
    out.labels = in.labels;
    out.values.assign(in.values.begin(), in.values.end());
    return out;
}

/** Returns the rows selected by `order`, in that order. */
template <typename Float_>
BasicEmbeddingMatrix<Float_> select_rows(const BasicEmbeddingMatrix<Float_>& in, std::span<const std::size_t> order) {
    BasicEmbeddingMatrix<Float_> out(in.block_index, in.dim);
    out.reserve(order.size());
    for (auto i : order) {
        out.ids.push_back(in.ids[i]);
        out.labels.push_back(in.labels[i]);
        auto r = in.row(i);
        out.values.insert(out.values.end(), r.begin(), r.end());
    }
    return out;
}

namespace detail {

// Accumulates in double with a fixed left-to-right order, so distances are
// identical whichever thread or call site computes them.
template <typename A_, typename B_>
double squared_euclidean(std::span<const A_> a, std::span<const B_> b) {
    double acc = 0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        double d = static_cast<double>(a[i]) - static_cast<double>(b[i]);
        acc += d * d;
    }
    return acc;
}

template <typename A_, typename B_>
double euclidean(std::span<const A_> a, std::span<const B_> b) {
    return std::sqrt(squared_euclidean(a, b));
}

}  // namespace detail

}  // namespace blockprobe
