#pragma once

#include "embedding.hpp"
#include "error.hpp"
#include "parallel.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <numeric>
#include <vector>

/**
 * @file hdbscan.hpp
 *
 * @brief HDBSCAN density clustering with Excess-of-Mass cluster selection.
 *
 * Pipeline: core distances -> mutual reachability -> minimum spanning tree ->
 * single-linkage dendrogram -> condensed tree -> EOM selection. Everything is
 * exact brute force, which is what the desk-scale datasets need.
 */

namespace blockprobe {

struct HdbscanParams {
    int min_cluster_size = 50;
    int min_samples = 10;
    /// Kept for interface fidelity with tree-accelerated implementations; no effect here.
    int leaf_size = 40;
    Metric metric = Metric::euclidean;

    void validate() const {
        if (min_cluster_size < 2) {
            throw ConfigError("min_cluster_size must be >= 2");
        }
        if (min_samples < 1) {
            throw ConfigError("min_samples must be >= 1");
        }
        if (leaf_size < 1) {
            throw ConfigError("leaf_size must be >= 1");
        }
    }
};

inline constexpr int noise_label = -1;

struct ClusterLabeling {
    std::vector<int> label_of;
    int n_clusters = 0;

    std::size_t n_noise() const {
        return static_cast<std::size_t>(std::count(label_of.begin(), label_of.end(), noise_label));
    }
};

struct WeightedEdge {
    std::size_t u;
    std::size_t v;
    double weight;
};

/**
 * Dense symmetric distance matrix, row-major, double precision.
 */
class DistanceMatrix {
public:
    DistanceMatrix() = default;
    explicit DistanceMatrix(std::size_t n) : n_(n), d_(n * n, 0.0) {}

    template <typename Float_>
    static DistanceMatrix euclidean(const BasicEmbeddingMatrix<Float_>& points, int threads = 1) {
        const std::size_t n = points.rows();
        DistanceMatrix out(n);
        parallelize(n, threads, [&](std::size_t begin, std::size_t end, int) {
            for (std::size_t i = begin; i < end; ++i) {
                for (std::size_t j = 0; j < n; ++j) {
                    if (i != j) {
                        out.d_[i * n + j] = detail::euclidean(points.row(std::min(i, j)), points.row(std::max(i, j)));
                    }
                }
            }
        });
        return out;
    }

    std::size_t size() const { return n_; }
    double operator()(std::size_t i, std::size_t j) const { return d_[i * n_ + j]; }
    double& operator()(std::size_t i, std::size_t j) { return d_[i * n_ + j]; }

private:
    std::size_t n_ = 0;
    std::vector<double> d_;
};

/**
 * Distance from each point to its `min_samples`-th nearest other point.
 */
inline std::vector<double> core_distances(const DistanceMatrix& dist, int min_samples) {
    const std::size_t n = dist.size();
    if (min_samples < 1 || n <= static_cast<std::size_t>(min_samples)) {
        throw DimensionError("core distances need more than min_samples (" + std::to_string(min_samples) +
                             ") points, got " + std::to_string(n));
    }
    std::vector<double> core(n);
    std::vector<double> row;
    for (std::size_t i = 0; i < n; ++i) {
        row.clear();
        for (std::size_t j = 0; j < n; ++j) {
            if (j != i) {
                row.push_back(dist(i, j));
            }
        }
        auto kth = row.begin() + (min_samples - 1);
        std::nth_element(row.begin(), kth, row.end());
        core[i] = *kth;
    }
    return core;
}

template <typename Float_>
std::vector<double> core_distances(const BasicEmbeddingMatrix<Float_>& points, int min_samples, int threads = 1) {
    return core_distances(DistanceMatrix::euclidean(points, threads), min_samples);
}

inline double mutual_reachability(double d_ab, double core_a, double core_b) {
    return std::max({d_ab, core_a, core_b});
}

/**
 * Prim's algorithm on a complete graph with weights from `weight(u, v)`.
 * O(n^2) time, O(n) memory; ties go to the smaller vertex index.
 */
inline std::vector<WeightedEdge> minimum_spanning_tree(std::size_t n,
                                                       const std::function<double(std::size_t, std::size_t)>& weight) {
    if (n < 2) {
        throw DimensionError("minimum spanning tree needs at least two vertices");
    }
    constexpr double inf = std::numeric_limits<double>::infinity();
    std::vector<double> best(n, inf);
    std::vector<std::size_t> from(n, 0);
    std::vector<char> in_tree(n, 0);
    std::vector<WeightedEdge> edges;
    edges.reserve(n - 1);

    std::size_t current = 0;
    in_tree[0] = 1;
    for (std::size_t step = 1; step < n; ++step) {
        std::size_t next = n;
        double next_w = inf;
        for (std::size_t v = 0; v < n; ++v) {
            if (in_tree[v]) {
                continue;
            }
            double w = weight(current, v);
            if (w < best[v]) {
                best[v] = w;
                from[v] = current;
            }
            if (next == n || best[v] < next_w) {
                next = v;
                next_w = best[v];
            }
        }
        in_tree[next] = 1;
        edges.push_back({from[next], next, best[next]});
        current = next;
    }
    return edges;
}

/// Sum of edge weights, added in ascending order so equal weight multisets give equal totals.
inline double total_weight(const std::vector<WeightedEdge>& edges) {
    std::vector<double> w;
    w.reserve(edges.size());
    for (auto& e : edges) {
        w.push_back(e.weight);
    }
    std::sort(w.begin(), w.end());
    return std::accumulate(w.begin(), w.end(), 0.0);
}

/**
 * Single-linkage dendrogram. Leaves 0..n-1 are points; each internal node
 * merges all components joined by MST edges of one identical weight, so
 * simultaneous merges are a single multi-way node rather than an arbitrary
 * binary chain.
 */
struct Dendrogram {
    struct Node {
        std::vector<std::size_t> children;
        double distance = 0;
        std::size_t size = 1;
    };
    std::size_t n_points = 0;
    std::vector<Node> nodes;

    std::size_t root() const { return nodes.size() - 1; }
    bool is_leaf(std::size_t id) const { return id < n_points; }
};

namespace detail {

class DisjointSets {
public:
    explicit DisjointSets(std::size_t n) : parent_(n) { std::iota(parent_.begin(), parent_.end(), 0); }

    std::size_t find(std::size_t x) {
        while (parent_[x] != x) {
            parent_[x] = parent_[parent_[x]];
            x = parent_[x];
        }
        return x;
    }

    /// Keeps the smaller root as representative.
    void unite(std::size_t a, std::size_t b) {
        a = find(a);
        b = find(b);
        if (a != b) {
            parent_[std::max(a, b)] = std::min(a, b);
        }
    }

private:
    std::vector<std::size_t> parent_;
};

}  // namespace detail

inline Dendrogram single_linkage(std::size_t n_points, std::vector<WeightedEdge> edges) {
    if (edges.size() + 1 != n_points) {
        throw DimensionError("a spanning tree over " + std::to_string(n_points) + " points has " +
                             std::to_string(n_points - 1) + " edges, got " + std::to_string(edges.size()));
    }
    std::sort(edges.begin(), edges.end(), [](const WeightedEdge& a, const WeightedEdge& b) {
        if (a.weight != b.weight) {
            return a.weight < b.weight;
        }
        if (std::min(a.u, a.v) != std::min(b.u, b.v)) {
            return std::min(a.u, a.v) < std::min(b.u, b.v);
        }
        return std::max(a.u, a.v) < std::max(b.u, b.v);
    });

    Dendrogram tree;
    tree.n_points = n_points;
    tree.nodes.resize(n_points);

    detail::DisjointSets points(n_points);
    std::vector<std::size_t> node_of_root(n_points);
    std::iota(node_of_root.begin(), node_of_root.end(), 0);

    std::size_t start = 0;
    while (start < edges.size()) {
        std::size_t stop = start;
        while (stop < edges.size() && edges[stop].weight == edges[start].weight) {
            ++stop;
        }

        // Components of the current forest touched by this weight level, merged locally.
        std::vector<std::size_t> touched;
        for (std::size_t e = start; e < stop; ++e) {
            touched.push_back(points.find(edges[e].u));
            touched.push_back(points.find(edges[e].v));
        }
        std::sort(touched.begin(), touched.end());
        touched.erase(std::unique(touched.begin(), touched.end()), touched.end());
        for (std::size_t e = start; e < stop; ++e) {
            points.unite(edges[e].u, edges[e].v);
        }

        std::vector<std::pair<std::size_t, std::size_t>> grouped;  // (new root, old root)
        for (auto old_root : touched) {
            grouped.emplace_back(points.find(old_root), old_root);
        }
        std::sort(grouped.begin(), grouped.end());
        for (std::size_t g = 0; g < grouped.size();) {
            std::size_t h = g;
            Dendrogram::Node node;
            node.distance = edges[start].weight;
            node.size = 0;
            while (h < grouped.size() && grouped[h].first == grouped[g].first) {
                auto child = node_of_root[grouped[h].second];
                node.children.push_back(child);
                node.size += tree.nodes[child].size;
                ++h;
            }
            std::sort(node.children.begin(), node.children.end());
            node_of_root[grouped[g].first] = tree.nodes.size();
            tree.nodes.push_back(std::move(node));
            g = h;
        }
        start = stop;
    }
    if (n_points == 1) {
        tree.nodes[0].size = 1;
    }
    return tree;
}

/**
 * Condensed cluster hierarchy. Cluster 0 is the root and covers all points;
 * child clusters always have larger ids than their parents.
 */
struct CondensedTree {
    struct Cluster {
        int parent = -1;
        double lambda_birth = 0;
        std::size_t size = 0;
        std::vector<int> children;
    };
    /// A point leaving `cluster` at density level `lambda`.
    struct Departure {
        int cluster;
        double lambda;
    };

    std::size_t n_points = 0;
    std::size_t min_cluster_size = 0;
    std::vector<Cluster> clusters;
    /// One entry per point.
    std::vector<Departure> departures;
};

/**
 * Condenses the single-linkage tree built from `mst_edges`.
 *
 * With lambda = 1 / distance, every merge node is a split as lambda grows.
 * Children with at least `min_cluster_size` points survive it: two or more
 * survivors become new child clusters, a lone survivor continues its parent,
 * and the points of non-surviving children depart from the parent at that
 * lambda. A node at distance 0 never splits; its points stay with the cluster
 * and depart at the lambda at which that cluster was last entered.
 */
inline CondensedTree condense_tree(std::size_t n_points, const std::vector<WeightedEdge>& mst_edges,
                                   std::size_t min_cluster_size) {
    const Dendrogram tree = single_linkage(n_points, mst_edges);

    CondensedTree out;
    out.n_points = n_points;
    out.min_cluster_size = min_cluster_size;
    out.departures.assign(n_points, {0, 0.0});
    out.clusters.push_back({-1, 0.0, n_points, {}});

    auto depart_all = [&](std::size_t node, int cluster, double lambda) {
        std::vector<std::size_t> stack{node};
        while (!stack.empty()) {
            auto id = stack.back();
            stack.pop_back();
            if (tree.is_leaf(id)) {
                out.departures[id] = {cluster, lambda};
            } else {
                for (auto c : tree.nodes[id].children) {
                    stack.push_back(c);
                }
            }
        }
    };

    struct Visit {
        std::size_t node;
        int cluster;
        double lambda_enter;
    };
    std::vector<Visit> stack{{tree.root(), 0, 0.0}};
    while (!stack.empty()) {
        auto [node_id, cluster, lambda_enter] = stack.back();
        stack.pop_back();
        const auto& node = tree.nodes[node_id];
        if (tree.is_leaf(node_id) || node.distance <= 0) {
            depart_all(node_id, cluster, lambda_enter);
            continue;
        }

        const double lambda = 1.0 / node.distance;
        std::vector<std::size_t> survivors;
        for (auto c : node.children) {
            if (tree.nodes[c].size >= min_cluster_size) {
                survivors.push_back(c);
            } else {
                depart_all(c, cluster, lambda);
            }
        }
        if (survivors.size() == 1) {
            stack.push_back({survivors[0], cluster, lambda});
        } else if (survivors.size() > 1) {
            // Reverse push so the lowest node id is expanded first and gets the lowest cluster id.
            std::vector<Visit> pending;
            for (auto c : survivors) {
                int id = static_cast<int>(out.clusters.size());
                out.clusters.push_back({cluster, lambda, tree.nodes[c].size, {}});
                out.clusters[cluster].children.push_back(id);
                pending.push_back({c, id, lambda});
            }
            stack.insert(stack.end(), pending.rbegin(), pending.rend());
        }
    }
    return out;
}

/// Excess-of-Mass stability of every cluster: sum over its points of (lambda_leave - lambda_birth).
inline std::vector<double> cluster_stability(const CondensedTree& tree) {
    std::vector<double> stability(tree.clusters.size(), 0.0);
    for (auto& d : tree.departures) {
        stability[d.cluster] += d.lambda - tree.clusters[d.cluster].lambda_birth;
    }
    for (std::size_t c = 1; c < tree.clusters.size(); ++c) {
        const auto& cl = tree.clusters[c];
        stability[cl.parent] += static_cast<double>(cl.size) * (cl.lambda_birth - tree.clusters[cl.parent].lambda_birth);
    }
    return stability;
}

/**
 * Selects the flat clustering maximizing total stability with no selected
 * cluster an ancestor of another. The root is only eligible when it has no
 * child clusters; points whose departure cluster has no selected ancestor
 * are noise. Output cluster ids are ordered by each cluster's smallest
 * member index.
 */
inline ClusterLabeling extract_clusters_eom(const CondensedTree& tree) {
    const std::size_t n_clusters = tree.clusters.size();
    auto stability = cluster_stability(tree);
    std::vector<double> subtree(n_clusters, 0.0);
    std::vector<char> selected(n_clusters, 0);

    for (std::size_t c = n_clusters; c-- > 1;) {
        const auto& cl = tree.clusters[c];
        if (cl.children.empty()) {
            selected[c] = 1;
            subtree[c] = stability[c];
            continue;
        }
        double children_total = 0;
        for (int ch : cl.children) {
            children_total += subtree[ch];
        }
        if (children_total > stability[c]) {
            subtree[c] = children_total;
        } else {
            selected[c] = 1;
            subtree[c] = stability[c];
        }
    }
    if (tree.clusters[0].children.empty() && tree.n_points >= tree.min_cluster_size) {
        selected[0] = 1;
    }

    // Top-down pass: a selected cluster shadows everything beneath it.
    std::vector<int> owner(n_clusters, -1);
    for (std::size_t c = 0; c < n_clusters; ++c) {
        int parent = tree.clusters[c].parent;
        if (parent >= 0 && owner[parent] >= 0) {
            owner[c] = owner[parent];
        } else if (selected[c]) {
            owner[c] = static_cast<int>(c);
        }
    }

    ClusterLabeling out;
    out.label_of.assign(tree.n_points, noise_label);
    std::vector<int> renumber(n_clusters, -1);
    for (std::size_t p = 0; p < tree.n_points; ++p) {
        int o = owner[tree.departures[p].cluster];
        if (o < 0) {
            continue;
        }
        if (renumber[o] < 0) {
            renumber[o] = out.n_clusters++;
        }
        out.label_of[p] = renumber[o];
    }
    return out;
}

/**
 * Mutual-reachability MST over a precomputed distance matrix.
 */
inline std::vector<WeightedEdge> mutual_reachability_mst(const DistanceMatrix& dist, const std::vector<double>& core) {
    return minimum_spanning_tree(dist.size(), [&](std::size_t u, std::size_t v) {
        return mutual_reachability(dist(u, v), core[u], core[v]);
    });
}

inline ClusterLabeling hdbscan(const DistanceMatrix& dist, const HdbscanParams& params) {
    params.validate();
    const std::size_t n = dist.size();
    if (n < static_cast<std::size_t>(params.min_cluster_size) || n <= static_cast<std::size_t>(params.min_samples)) {
        // No candidate cluster can reach min_cluster_size (or core distances are undefined).
        return {std::vector<int>(n, noise_label), 0};
    }
    auto core = core_distances(dist, params.min_samples);
    auto mst = mutual_reachability_mst(dist, core);
    auto tree = condense_tree(n, mst, static_cast<std::size_t>(params.min_cluster_size));
    return extract_clusters_eom(tree);
}

/**
 * HDBSCAN over euclidean distances between the rows of `points`.
 */
template <typename Float_>
ClusterLabeling hdbscan(const BasicEmbeddingMatrix<Float_>& points, const HdbscanParams& params, int threads = 1) {
    params.validate();
    return hdbscan(DistanceMatrix::euclidean(points, threads), params);
}

}  // namespace blockprobe
