#pragma once

#include "embedding.hpp"
#include "error.hpp"
#include "parallel.hpp"
#include "rng.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numeric>
#include <string>
#include <vector>

/**
 * @file reducer.hpp
 *
 * @brief Local-topology-preserving dimensionality reduction (UMAP core).
 *
 * The input is turned into a fuzzy k-nearest-neighbor graph whose edge weights
 * are calibrated per point, then a low-dimensional layout is optimized by SGD
 * with attractive updates along sampled edges and repulsive updates against
 * random points.
 */

namespace blockprobe {

struct ReducerConfig {
    int n_components = 2;
    int n_neighbors = 15;
    double min_dist = 0.1;
    double spread = 1.0;
    int n_epochs = 500;
    int negative_sample_rate = 5;
    double initial_learning_rate = 1.0;
    std::uint64_t seed = 0;

    void validate() const {
        if (n_components < 1) {
            throw ConfigError("n_components must be >= 1");
        }
        if (n_neighbors < 2) {
            throw ConfigError("n_neighbors must be >= 2");
        }
        if (!(min_dist > 0) || !(min_dist < spread)) {
            throw ConfigError("need 0 < min_dist < spread");
        }
        if (n_epochs < 1) {
            throw ConfigError("n_epochs must be >= 1");
        }
        if (negative_sample_rate < 0) {
            throw ConfigError("negative_sample_rate must be >= 0");
        }
        if (!(initial_learning_rate > 0)) {
            throw ConfigError("initial_learning_rate must be > 0");
        }
    }
};

/**
 * Exact k-nearest-neighbor table: for every point, its k nearest other points
 * in ascending distance, ties broken by index.
 */
struct NeighborTable {
    std::size_t n = 0;
    std::size_t k = 0;
    std::vector<std::size_t> ids;
    std::vector<double> distances;

    std::span<const std::size_t> neighbors(std::size_t i) const { return {ids.data() + i * k, k}; }
    std::span<const double> distances_of(std::size_t i) const { return {distances.data() + i * k, k}; }
};

template <typename Float_>
NeighborTable knn_graph(const BasicEmbeddingMatrix<Float_>& points, int n_neighbors, int threads = 1) {
    const std::size_t n = points.rows();
    if (n_neighbors < 1 || n <= static_cast<std::size_t>(n_neighbors)) {
        throw DimensionError("knn graph with " + std::to_string(n_neighbors) + " neighbors needs more than " +
                             std::to_string(n_neighbors) + " points, got " + std::to_string(n));
    }
    NeighborTable out;
    out.n = n;
    out.k = static_cast<std::size_t>(n_neighbors);
    out.ids.resize(n * out.k);
    out.distances.resize(n * out.k);

    parallelize(n, threads, [&](std::size_t begin, std::size_t end, int) {
        std::vector<std::pair<double, std::size_t>> all;
        all.reserve(n);
        for (std::size_t i = begin; i < end; ++i) {
            all.clear();
            for (std::size_t j = 0; j < n; ++j) {
                if (j != i) {
                    all.emplace_back(detail::euclidean(points.row(std::min(i, j)), points.row(std::max(i, j))), j);
                }
            }
            std::partial_sort(all.begin(), all.begin() + static_cast<std::ptrdiff_t>(out.k), all.end());
            for (std::size_t r = 0; r < out.k; ++r) {
                out.distances[i * out.k + r] = all[r].first;
                out.ids[i * out.k + r] = all[r].second;
            }
        }
    });
    return out;
}

struct SmoothKnnResult {
    double rho = 0;
    double sigma = 0;
    /// |sum_j exp(-max(0, d_j - rho) / sigma) - log2(k)| at the returned sigma.
    double residual = 0;
    /// True when sigma was raised to the floor (no usable bisection solution).
    bool clamped = false;
};

inline constexpr double smooth_knn_tolerance = 1e-5;
inline constexpr double sigma_floor_scale = 1e-3;

/**
 * Per-point bandwidth calibration.
 *
 * rho is the nearest non-zero distance; sigma solves
 * sum_j exp(-max(0, d_j - rho) / sigma) = log2(k) by bisection. sigma is
 * floored at 1e-3 times the mean neighbor distance.
 */
inline SmoothKnnResult smooth_knn_dist(std::span<const double> distances) {
    const std::size_t k = distances.size();
    if (k < 2) {
        throw ConfigError("smooth_knn_dist needs at least two neighbor distances");
    }
    const double target = std::log2(static_cast<double>(k));

    SmoothKnnResult out;
    for (double d : distances) {
        if (d > 0) {
            out.rho = d;
            break;
        }
    }

    auto membership_sum = [&](double sigma) {
        double s = 0;
        for (double d : distances) {
            s += std::exp(-std::max(0.0, d - out.rho) / sigma);
        }
        return s;
    };

    double lo = 0, hi = std::numeric_limits<double>::infinity(), mid = 1.0;
    for (int iter = 0; iter < 512; ++iter) {
        double psum = membership_sum(mid);
        if (std::abs(psum - target) < smooth_knn_tolerance) {
            break;
        }
        if (psum > target) {
            hi = mid;
            mid = 0.5 * (lo + hi);
        } else {
            lo = mid;
            mid = std::isinf(hi) ? mid * 2 : 0.5 * (lo + hi);
        }
        if (mid == lo || mid == hi) {
            break;
        }
    }

    double mean = std::accumulate(distances.begin(), distances.end(), 0.0) / static_cast<double>(k);
    double floor = sigma_floor_scale * mean;
    if (!(floor > 0)) {
        floor = sigma_floor_scale;
    }
    out.sigma = mid;
    if (!(out.sigma >= floor)) {
        out.sigma = floor;
        out.clamped = true;
    }
    out.residual = std::abs(membership_sum(out.sigma) - target);
    return out;
}

/// Probabilistic t-conorm a + b - ab.
inline double fuzzy_union(double a, double b) { return a + b - a * b; }

struct FuzzyEdge {
    std::size_t i;
    std::size_t j;
    double weight;
};

/**
 * Fuzzy simplicial set of a neighbor table: calibrated directed memberships
 * symmetrized with the fuzzy union. Each undirected edge is listed once with
 * i < j; weights lie in (0, 1].
 */
struct NeighborGraph {
    NeighborTable knn;
    std::vector<SmoothKnnResult> calibration;
    std::vector<FuzzyEdge> edges;

    std::size_t n() const { return knn.n; }
};

inline NeighborGraph fuzzy_graph(NeighborTable knn) {
    NeighborGraph g;
    g.calibration.resize(knn.n);
    std::vector<FuzzyEdge> directed;
    directed.reserve(knn.n * knn.k);
    for (std::size_t i = 0; i < knn.n; ++i) {
        auto cal = smooth_knn_dist(knn.distances_of(i));
        g.calibration[i] = cal;
        auto nb = knn.neighbors(i);
        auto dist = knn.distances_of(i);
        for (std::size_t r = 0; r < knn.k; ++r) {
            double w = std::exp(-std::max(0.0, dist[r] - cal.rho) / cal.sigma);
            directed.push_back({std::min(i, nb[r]), std::max(i, nb[r]), w});
        }
    }
    std::sort(directed.begin(), directed.end(), [](const FuzzyEdge& a, const FuzzyEdge& b) {
        return a.i != b.i ? a.i < b.i : a.j < b.j;
    });
    for (std::size_t e = 0; e < directed.size();) {
        double w = directed[e].weight;
        std::size_t f = e + 1;
        if (f < directed.size() && directed[f].i == directed[e].i && directed[f].j == directed[e].j) {
            w = fuzzy_union(w, directed[f].weight);
            ++f;
        }
        if (w > 0) {
            g.edges.push_back({directed[e].i, directed[e].j, std::min(w, 1.0)});
        }
        e = f;
    }
    g.knn = std::move(knn);
    return g;
}

/// Parameters of the output-space similarity 1 / (1 + a d^(2b)).
struct CurveParams {
    double a = 0;
    double b = 0;
    /// Max |fit - target| over 301 points on [0, 3 spread].
    double max_residual = 0;
};

inline double curve_target(double x, double min_dist, double spread) {
    return x <= min_dist ? 1.0 : std::exp(-(x - min_dist) / spread);
}

inline double curve_value(double x, double a, double b) { return 1.0 / (1.0 + a * std::pow(x, 2 * b)); }

/**
 * Least-squares fit of 1 / (1 + a x^(2b)) to the min_dist/spread target on
 * 300 points over [0, 3 spread], by Levenberg-Marquardt from (1, 1).
 */
inline CurveParams fit_ab(double min_dist, double spread) {
    if (!(min_dist > 0) || !(min_dist < spread)) {
        throw ConfigError("fit_ab needs 0 < min_dist < spread");
    }
    constexpr int n_fit = 300;
    std::vector<double> xs(n_fit), ys(n_fit);
    for (int i = 0; i < n_fit; ++i) {
        xs[i] = 3 * spread * i / (n_fit - 1);
        ys[i] = curve_target(xs[i], min_dist, spread);
    }

    auto sse = [&](double a, double b) {
        double s = 0;
        for (int i = 0; i < n_fit; ++i) {
            double r = curve_value(xs[i], a, b) - ys[i];
            s += r * r;
        }
        return s;
    };

    double a = 1, b = 1, damping = 1e-3;
    double cost = sse(a, b);
    bool converged = false;
    for (int iter = 0; iter < 1000 && !converged; ++iter) {
        // Normal equations J^T J delta = -J^T r for the 2-parameter model.
        double jaa = 0, jab = 0, jbb = 0, ga = 0, gb = 0;
        for (int i = 0; i < n_fit; ++i) {
            double x = xs[i];
            if (x <= 0) {
                continue;  // f(0) = 1 for every (a, b); zero gradient.
            }
            double u = std::pow(x, 2 * b);
            double denom = 1 + a * u;
            double f = 1 / denom;
            double r = f - ys[i];
            double da = -u / (denom * denom);
            double db = -a * u * 2 * std::log(x) / (denom * denom);
            jaa += da * da;
            jab += da * db;
            jbb += db * db;
            ga += da * r;
            gb += db * r;
        }

        bool stepped = false;
        for (int tries = 0; tries < 60; ++tries) {
            double maa = jaa * (1 + damping), mbb = jbb * (1 + damping);
            double det = maa * mbb - jab * jab;
            if (!(std::abs(det) > 0)) {
                damping *= 10;
                continue;
            }
            double step_a = (-ga * mbb + gb * jab) / det;
            double step_b = (-gb * maa + ga * jab) / det;
            double na = a + step_a, nb = b + step_b;
            if (na > 0 && nb > 0) {
                double ncost = sse(na, nb);
                if (std::isfinite(ncost) && ncost <= cost) {
                    converged = (cost - ncost) <= 1e-15 * std::max(cost, 1e-300) ||
                                (std::abs(step_a) <= 1e-12 * a && std::abs(step_b) <= 1e-12 * b);
                    a = na;
                    b = nb;
                    cost = ncost;
                    damping = std::max(damping / 10, 1e-12);
                    stepped = true;
                    break;
                }
            }
            damping *= 10;
        }
        if (!stepped) {
            converged = true;  // no descent direction left at machine precision
        }
    }

    if (!std::isfinite(a) || !std::isfinite(b) || !std::isfinite(cost)) {
        throw FitError("curve fit diverged for min_dist=" + std::to_string(min_dist) +
                       ", spread=" + std::to_string(spread));
    }

    CurveParams out{a, b, 0};
    for (int i = 0; i <= 300; ++i) {
        double x = 3 * spread * i / 300.0;
        out.max_residual = std::max(out.max_residual, std::abs(curve_value(x, a, b) - curve_target(x, min_dist, spread)));
    }
    return out;
}

struct LayoutDiagnostics {
    /// Largest calibration residual over points where sigma was not clamped.
    double max_calibration_residual = 0;
    std::size_t n_clamped = 0;
    std::size_t n_edges = 0;
    bool deterministic = true;
};

struct ReducedEmbedding {
    int n_components = 0;
    /// Rows aligned with the input; ids, labels and block index carried over.
    BasicEmbeddingMatrix<double> coordinates;
    ReducerConfig config;
    CurveParams curve;
    LayoutDiagnostics diagnostics;

    /// Float32 view for storage and downstream classification.
    EmbeddingMatrix to_matrix() const { return cast_matrix<float>(coordinates); }
};

namespace detail {

inline double clip4(double v) { return std::clamp(v, -4.0, 4.0); }

}  // namespace detail

/**
 * SGD layout of a fuzzy graph; returns n x n_components coordinates, row-major.
 *
 * Both directions of every kept edge are sampled, each every max_w / w epochs
 * (edges below max_w / n_epochs are dropped). An attractive step moves both
 * endpoints; each is followed by negative_sample_rate repulsive steps against
 * uniformly drawn points that move only the head. The learning rate decays
 * linearly to zero and every per-coordinate step is clipped to [-4, 4].
 */
inline std::vector<double> optimize_layout(const NeighborGraph& graph, const ReducerConfig& cfg,
                                           const CurveParams& curve) {
    cfg.validate();
    const std::size_t n = graph.n();
    const std::size_t dim = static_cast<std::size_t>(cfg.n_components);
    const double a = curve.a, b = curve.b;

    std::vector<double> emb(n * dim);
    {
        Rng init(derive_seed(cfg.seed, hash_name("layout-init")));
        for (auto& v : emb) {
            v = init.uniform(-10.0, 10.0);
        }
    }

    double max_w = 0;
    for (auto& e : graph.edges) {
        max_w = std::max(max_w, e.weight);
    }
    struct Sample {
        std::size_t head;
        std::size_t tail;
        double epochs_per_sample;
        double next_sample;
        double epochs_per_negative;
        double next_negative;
    };
    std::vector<Sample> samples;
    samples.reserve(graph.edges.size() * 2);
    const double cutoff = max_w / cfg.n_epochs;
    for (auto& e : graph.edges) {
        if (e.weight < cutoff) {
            continue;
        }
        double eps = max_w / e.weight;
        double neg = cfg.negative_sample_rate > 0 ? eps / cfg.negative_sample_rate : 0;
        samples.push_back({e.i, e.j, eps, eps, neg, neg});
        samples.push_back({e.j, e.i, eps, eps, neg, neg});
    }
    std::sort(samples.begin(), samples.end(), [](const Sample& x, const Sample& y) {
        return x.head != y.head ? x.head < y.head : x.tail < y.tail;
    });

    Rng rng(derive_seed(cfg.seed, hash_name("layout-negative")));
    for (int epoch = 0; epoch < cfg.n_epochs; ++epoch) {
        const double alpha = cfg.initial_learning_rate * (1.0 - static_cast<double>(epoch) / cfg.n_epochs);
        for (auto& s : samples) {
            if (s.next_sample > epoch) {
                continue;
            }
            double* current = emb.data() + s.head * dim;
            double* other = emb.data() + s.tail * dim;

            double dist_sq = 0;
            for (std::size_t d = 0; d < dim; ++d) {
                double diff = current[d] - other[d];
                dist_sq += diff * diff;
            }
            double coeff = 0;
            if (dist_sq > 0) {
                coeff = -2.0 * a * b * std::pow(dist_sq, b - 1.0) / (a * std::pow(dist_sq, b) + 1.0);
            }
            for (std::size_t d = 0; d < dim; ++d) {
                double grad = detail::clip4(coeff * (current[d] - other[d]));
                current[d] += grad * alpha;
                other[d] -= grad * alpha;
            }
            s.next_sample += s.epochs_per_sample;

            if (s.epochs_per_negative <= 0) {
                continue;
            }
            auto n_neg = static_cast<long long>((epoch - s.next_negative) / s.epochs_per_negative);
            for (long long p = 0; p < n_neg; ++p) {
                std::size_t k = rng.below(n);
                if (k == s.head) {
                    continue;
                }
                const double* far = emb.data() + k * dim;
                double dsq = 0;
                for (std::size_t d = 0; d < dim; ++d) {
                    double diff = current[d] - far[d];
                    dsq += diff * diff;
                }
                if (!(dsq > 0)) {
                    continue;
                }
                double rep = 2.0 * b / ((0.001 + dsq) * (a * std::pow(dsq, b) + 1.0));
                for (std::size_t d = 0; d < dim; ++d) {
                    current[d] += detail::clip4(rep * (current[d] - far[d])) * alpha;
                }
            }
            s.next_negative += static_cast<double>(n_neg) * s.epochs_per_negative;
        }
        for (double v : emb) {
            if (!std::isfinite(v)) {
                throw NumericError("layout produced a non-finite coordinate at epoch " + std::to_string(epoch));
            }
        }
    }
    return emb;
}

/**
 * Full reduction of `points` to cfg.n_components dimensions.
 *
 * Rows are processed in canonical image-id order, so permuting the input
 * permutes the output rows and nothing else.
 */
template <typename Float_>
ReducedEmbedding reduce(const BasicEmbeddingMatrix<Float_>& points, const ReducerConfig& cfg, int threads = 1) {
    cfg.validate();
    points.validate();
    const std::size_t n = points.rows();

    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(), [&](std::size_t x, std::size_t y) { return points.ids[x] < points.ids[y]; });
    auto sorted = select_rows(points, order);

    auto graph = fuzzy_graph(knn_graph(sorted, cfg.n_neighbors, threads));
    auto curve = fit_ab(cfg.min_dist, cfg.spread);
    auto coords = optimize_layout(graph, cfg, curve);

    ReducedEmbedding out;
    out.n_components = cfg.n_components;
    out.config = cfg;
    out.curve = curve;
    out.diagnostics.n_edges = graph.edges.size();
    for (auto& cal : graph.calibration) {
        if (cal.clamped) {
            ++out.diagnostics.n_clamped;
        } else {
            out.diagnostics.max_calibration_residual = std::max(out.diagnostics.max_calibration_residual, cal.residual);
        }
    }

    const std::size_t dim = static_cast<std::size_t>(cfg.n_components);
    out.coordinates = BasicEmbeddingMatrix<double>(points.block_index, dim);
    out.coordinates.ids = points.ids;
    out.coordinates.labels = points.labels;
    out.coordinates.values.resize(n * dim);
    for (std::size_t s = 0; s < n; ++s) {
        std::copy_n(coords.begin() + static_cast<std::ptrdiff_t>(s * dim), dim,
                    out.coordinates.values.begin() + static_cast<std::ptrdiff_t>(order[s] * dim));
    }
    return out;
}

namespace detail {

// Rank (1-based, self excluded) of every point in i's distance ordering; ties by index.
template <typename Float_>
std::vector<std::vector<std::size_t>> neighbor_order(const BasicEmbeddingMatrix<Float_>& points, int threads) {
    const std::size_t n = points.rows();
    std::vector<std::vector<std::size_t>> order(n);
    parallelize(n, threads, [&](std::size_t begin, std::size_t end, int) {
        std::vector<std::pair<double, std::size_t>> all;
        for (std::size_t i = begin; i < end; ++i) {
            all.clear();
            for (std::size_t j = 0; j < n; ++j) {
                if (j != i) {
                    all.emplace_back(squared_euclidean(points.row(std::min(i, j)), points.row(std::max(i, j))), j);
                }
            }
            std::sort(all.begin(), all.end());
            order[i].resize(all.size());
            for (std::size_t r = 0; r < all.size(); ++r) {
                order[i][r] = all[r].second;
            }
        }
    });
    return order;
}

}  // namespace detail

/**
 * Trustworthiness of an embedding over k-neighborhoods:
 * 1 - sum_i sum_{j in N_k^low(i)} max(0, r(i, j) - k) / P, where r is the rank
 * in the original space and P is the largest achievable penalty, so the score
 * lies in [0, 1]. For k < n / 2, P = n k (2n - 3k - 1) / 2 (the usual
 * normalization).
 */
template <typename FloatA_, typename FloatB_>
double trustworthiness(const BasicEmbeddingMatrix<FloatA_>& original, const BasicEmbeddingMatrix<FloatB_>& reduced,
                       int k, int threads = 1) {
    const std::size_t n = original.rows();
    if (reduced.rows() != n) {
        throw DimensionError("trustworthiness needs row-aligned matrices");
    }
    if (k < 1 || static_cast<std::size_t>(k) >= n) {
        throw ConfigError("trustworthiness needs 1 <= k < n");
    }
    const std::size_t kk = static_cast<std::size_t>(k);
    auto high = detail::neighbor_order(original, threads);
    auto low = detail::neighbor_order(reduced, threads);

    std::vector<double> penalty(n, 0.0);
    parallelize(n, threads, [&](std::size_t begin, std::size_t end, int) {
        std::vector<std::size_t> rank(n);
        for (std::size_t i = begin; i < end; ++i) {
            for (std::size_t r = 0; r < high[i].size(); ++r) {
                rank[high[i][r]] = r + 1;
            }
            double p = 0;
            for (std::size_t r = 0; r < kk; ++r) {
                auto rr = rank[low[i][r]];
                if (rr > kk) {
                    p += static_cast<double>(rr - kk);
                }
            }
            penalty[i] = p;
        }
    });
    double total = std::accumulate(penalty.begin(), penalty.end(), 0.0);

    double worst = 0;
    for (std::size_t r = 1; r <= kk; ++r) {
        if (n - r > kk) {
            worst += static_cast<double>(n - r - kk);
        }
    }
    worst *= static_cast<double>(n);
    if (worst == 0) {
        return 1.0;
    }
    return 1.0 - total / worst;
}

}  // namespace blockprobe
