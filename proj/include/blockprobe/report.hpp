#pragma once

#include "agreement.hpp"
#include "classifier.hpp"
#include "error.hpp"
#include "hdbscan.hpp"
#include "manifest.hpp"
#include "reducer.hpp"
#include "retrieval.hpp"

#include "json.hpp"

#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <string>
#include <vector>

/**
 * @file report.hpp
 *
 * @brief JSON serialization of pipeline results and the run report envelope.
 */

namespace blockprobe {

inline constexpr const char* tool_version = "0.1.0";

inline nlohmann::json to_json(const CVReport& r) {
    return {{"per_fold_accuracy", r.per_fold_accuracy},
            {"mean_accuracy", r.mean_accuracy},
            {"block_index", r.block_index},
            {"k", r.k},
            {"n_folds", r.n_folds},
            {"seed", r.seed}};
}

inline nlohmann::json to_json(const HdbscanParams& p) {
    return {{"min_cluster_size", p.min_cluster_size},
            {"min_samples", p.min_samples},
            {"leaf_size", p.leaf_size},
            {"metric", "euclidean"}};
}

struct ClusterReport {
    HdbscanParams params;
    int block_index = 0;
    std::size_t n_points = 0;
    int n_clusters = 0;
    std::size_t n_noise = 0;
    AgreementScores scores;
};

/// Clusters `points` and scores the labeling against the stored class labels.
template <typename Float_>
ClusterReport cluster_report(const BasicEmbeddingMatrix<Float_>& points, const HdbscanParams& params, int threads = 1) {
    auto labeling = hdbscan(points, params, threads);
    std::map<std::string, int> class_id;
    for (const auto& l : points.labels) {
        class_id.emplace(l, 0);
    }
    int next = 0;
    for (auto& [name, id] : class_id) {
        id = next++;
    }
    std::vector<int> truth;
    truth.reserve(points.rows());
    for (const auto& l : points.labels) {
        truth.push_back(class_id[l]);
    }
    ClusterReport r;
    r.params = params;
    r.block_index = points.block_index;
    r.n_points = points.rows();
    r.n_clusters = labeling.n_clusters;
    r.n_noise = labeling.n_noise();
    r.scores = agreement(truth, labeling.label_of);
    return r;
}

inline nlohmann::json to_json(const ClusterReport& r) {
    return {{"params", to_json(r.params)}, {"block_index", r.block_index}, {"n_points", r.n_points},
            {"n_clusters", r.n_clusters},  {"n_noise", r.n_noise},         {"ari", r.scores.ari},
            {"ami", r.scores.ami}};
}

inline nlohmann::json to_json(const ReducerConfig& c) {
    return {{"n_components", c.n_components},
            {"n_neighbors", c.n_neighbors},
            {"min_dist", c.min_dist},
            {"spread", c.spread},
            {"n_epochs", c.n_epochs},
            {"negative_sample_rate", c.negative_sample_rate},
            {"initial_learning_rate", c.initial_learning_rate},
            {"seed", c.seed}};
}

inline nlohmann::json to_json(const ReducedEmbedding& e) {
    return {{"n_components", e.n_components},
            {"n_points", e.coordinates.rows()},
            {"block_index", e.coordinates.block_index},
            {"config", to_json(e.config)},
            {"curve", {{"a", e.curve.a}, {"b", e.curve.b}, {"max_residual", e.curve.max_residual}}},
            {"graph",
             {{"n_edges", e.diagnostics.n_edges},
              {"n_clamped", e.diagnostics.n_clamped},
              {"max_calibration_residual", e.diagnostics.max_calibration_residual}}},
            {"deterministic", e.diagnostics.deterministic}};
}

inline nlohmann::json to_json(const RetrievalResult& r) {
    auto [wc, wt] = r.query.effective_weights();
    nlohmann::json hits = nlohmann::json::array();
    for (std::size_t i = 0; i < r.hits.size(); ++i) {
        const auto& h = r.hits[i];
        hits.push_back({{"rank", i + 1},
                        {"image_id", h.image_id},
                        {"color_score", h.color_score},
                        {"texture_score", h.texture_score},
                        {"combined_score", h.combined_score}});
    }
    return {{"query_image_id", r.query.query_image_id},
            {"mode", to_string(r.query.mode)},
            {"weight_color", wc},
            {"weight_texture", wt},
            {"top_k", r.query.top_k},
            {"results", hits}};
}

/// Writes `image_id,label,x,y` for a two-dimensional embedding.
inline void write_coordinates_csv(const ReducedEmbedding& e, const std::filesystem::path& path) {
    if (e.n_components != 2) {
        throw DimensionError("coordinate CSV needs a 2-dimensional embedding, got " + std::to_string(e.n_components));
    }
    std::ofstream out(path, std::ios::binary);
    if (!out) {
        throw IoError("cannot write " + path.string());
    }
    out << "image_id,label,x,y\n";
    char buf[64];
    for (std::size_t i = 0; i < e.coordinates.rows(); ++i) {
        auto r = e.coordinates.row(i);
        std::snprintf(buf, sizeof(buf), "%.9g,%.9g", r[0], r[1]);
        out << detail::csv_field(e.coordinates.ids[i]) << ',' << detail::csv_field(e.coordinates.labels[i]) << ','
            << buf << '\n';
    }
    if (!out) {
        throw IoError("failed writing " + path.string());
    }
}

/**
 * Envelope for every CLI report: the command and its full argument list,
 * configuration echo, seeds, metrics, wall time and tool version.
 */
struct RunReport {
    std::string command;
    std::vector<std::string> argv;
    nlohmann::json config = nlohmann::json::object();
    nlohmann::json seeds = nlohmann::json::object();
    nlohmann::json metrics = nlohmann::json::object();
    std::vector<std::string> warnings;
    double wall_time_s = 0;
};

inline nlohmann::json to_json(const RunReport& r) {
    return {{"tool", "blockprobe"},   {"version", tool_version}, {"command", r.command},
            {"argv", r.argv},         {"config", r.config},      {"seeds", r.seeds},
            {"metrics", r.metrics},   {"warnings", r.warnings},  {"wall_time_s", r.wall_time_s}};
}

}  // namespace blockprobe
