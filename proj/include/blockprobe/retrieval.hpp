#pragma once

#include "embedding.hpp"
#include "error.hpp"

#include <boost/archive/iterators/base64_from_binary.hpp>
#include <boost/archive/iterators/transform_width.hpp>

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <map>
#include <sstream>
#include <string>
#include <unordered_map>
#include <vector>

/**
 * @file retrieval.hpp
 *
 * @brief Combined color + texture retrieval over two feature stores.
 *
 * Raw euclidean distances in each space are min-max normalized per query, then
 * mixed with convex weights. Lower scores are better.
 */

namespace blockprobe {

enum class RetrievalMode { color, texture, both };

inline const char* to_string(RetrievalMode m) {
    switch (m) {
        case RetrievalMode::color:
            return "color";
        case RetrievalMode::texture:
            return "texture";
        default:
            return "both";
    }
}

inline RetrievalMode parse_retrieval_mode(const std::string& s) {
    if (s == "color") {
        return RetrievalMode::color;
    }
    if (s == "texture") {
        return RetrievalMode::texture;
    }
    if (s == "both") {
        return RetrievalMode::both;
    }
    throw ConfigError("unknown retrieval mode '" + s + "'");
}

struct RetrievalQuery {
    std::string query_image_id;
    RetrievalMode mode = RetrievalMode::both;
    double weight_color = 0.5;
    double weight_texture = 0.5;
    int top_k = 20;

    void validate() const {
        if (top_k < 1) {
            throw ConfigError("top_k must be >= 1");
        }
        if (mode == RetrievalMode::both) {
            if (!(weight_color >= 0 && weight_color <= 1 && weight_texture >= 0 && weight_texture <= 1)) {
                throw ConfigError("retrieval weights must lie in [0, 1]");
            }
            if (std::abs(weight_color + weight_texture - 1) > 1e-9) {
                throw ConfigError("retrieval weights must sum to 1");
            }
        }
    }

    /// Weights actually applied: (1, 0) for color, (0, 1) for texture.
    std::pair<double, double> effective_weights() const {
        switch (mode) {
            case RetrievalMode::color:
                return {1.0, 0.0};
            case RetrievalMode::texture:
                return {0.0, 1.0};
            default:
                return {weight_color, weight_texture};
        }
    }
};

struct RetrievalHit {
    std::string image_id;
    double color_score = 0;
    double texture_score = 0;
    double combined_score = 0;
};

struct RetrievalResult {
    RetrievalQuery query;
    /// Nondecreasing combined score; ties by image id; query excluded.
    std::vector<RetrievalHit> hits;
};

/** Euclidean distance from `query` to every corpus row. */
template <typename Float_, typename Query_>
std::vector<double> pairwise_distances(std::span<const Query_> query, const BasicEmbeddingMatrix<Float_>& corpus) {
    if (query.size() != corpus.dim) {
        throw DimensionError("query has dim " + std::to_string(query.size()) + ", corpus has dim " +
                             std::to_string(corpus.dim));
    }
    std::vector<double> out(corpus.rows());
    for (std::size_t i = 0; i < corpus.rows(); ++i) {
        out[i] = detail::euclidean(corpus.row(i), query);
    }
    return out;
}

/** Min-max scaling to [0, 1]; all-equal input maps to all zeros. */
inline std::vector<double> normalize_scores(std::span<const double> distances) {
    if (distances.empty()) {
        throw InvalidValueError("normalize_scores needs at least one value");
    }
    auto [lo, hi] = std::minmax_element(distances.begin(), distances.end());
    double min = *lo, range = *hi - *lo;
    std::vector<double> out(distances.size(), 0.0);
    if (range > 0) {
        for (std::size_t i = 0; i < distances.size(); ++i) {
            out[i] = (distances[i] - min) / range;
        }
    }
    return out;
}

/**
 * Ranks candidates from raw per-attribute distances.
 *
 * `ids`, `color` and `texture` are aligned; the entry whose id equals the
 * query is dropped before normalization, so scores span the candidates only.
 */
inline RetrievalResult rank_from_distances(const RetrievalQuery& query, const std::vector<std::string>& ids,
                                           std::span<const double> color, std::span<const double> texture) {
    query.validate();
    if (color.size() != ids.size() || texture.size() != ids.size()) {
        throw DimensionError("distance lists are not aligned with the id list");
    }

    std::vector<std::size_t> keep;
    keep.reserve(ids.size());
    for (std::size_t i = 0; i < ids.size(); ++i) {
        if (ids[i] != query.query_image_id) {
            keep.push_back(i);
        }
    }

    RetrievalResult out;
    out.query = query;
    if (keep.empty()) {
        return out;
    }

    std::vector<double> cd, td;
    cd.reserve(keep.size());
    td.reserve(keep.size());
    for (auto i : keep) {
        cd.push_back(color[i]);
        td.push_back(texture[i]);
    }
    auto cs = normalize_scores(cd);
    auto ts = normalize_scores(td);
    auto [wc, wt] = query.effective_weights();

    out.hits.reserve(keep.size());
    for (std::size_t r = 0; r < keep.size(); ++r) {
        out.hits.push_back({ids[keep[r]], cs[r], ts[r], wc * cs[r] + wt * ts[r]});
    }
    std::sort(out.hits.begin(), out.hits.end(), [](const RetrievalHit& a, const RetrievalHit& b) {
        if (a.combined_score != b.combined_score) {
            return a.combined_score < b.combined_score;
        }
        return a.image_id < b.image_id;
    });
    out.hits.resize(std::min(out.hits.size(), static_cast<std::size_t>(query.top_k)));
    return out;
}

/**
 * Ranks the corpus against the query image in both stores.
 *
 * Both stores must cover the same id set (row order may differ) and contain
 * the query id.
 */
template <typename Float_>
RetrievalResult combined_rank(const RetrievalQuery& query, const BasicEmbeddingMatrix<Float_>& color_store,
                              const BasicEmbeddingMatrix<Float_>& texture_store) {
    query.validate();
    std::unordered_map<std::string, std::size_t> texture_row;
    texture_row.reserve(texture_store.rows());
    for (std::size_t i = 0; i < texture_store.rows(); ++i) {
        texture_row.emplace(texture_store.ids[i], i);
    }
    if (texture_row.size() != color_store.rows()) {
        throw MismatchError("color store has " + std::to_string(color_store.rows()) + " ids, texture store has " +
                            std::to_string(texture_row.size()));
    }
    std::vector<std::size_t> align(color_store.rows());
    std::size_t query_color = color_store.rows();
    for (std::size_t i = 0; i < color_store.rows(); ++i) {
        auto it = texture_row.find(color_store.ids[i]);
        if (it == texture_row.end()) {
            throw MismatchError("id '" + color_store.ids[i] + "' is in the color store but not the texture store");
        }
        align[i] = it->second;
        if (color_store.ids[i] == query.query_image_id) {
            query_color = i;
        }
    }
    if (query_color == color_store.rows()) {
        throw LookupError("query id '" + query.query_image_id + "' not found in the stores");
    }

    auto cdist = pairwise_distances(color_store.row(query_color), color_store);
    auto tdist_raw = pairwise_distances(texture_store.row(align[query_color]), texture_store);
    std::vector<double> tdist(color_store.rows());
    for (std::size_t i = 0; i < color_store.rows(); ++i) {
        tdist[i] = tdist_raw[align[i]];
    }
    return rank_from_distances(query, color_store.ids, cdist, tdist);
}

namespace detail {

inline std::string base64_encode(const std::string& bytes) {
    using namespace boost::archive::iterators;
    using It = base64_from_binary<transform_width<std::string::const_iterator, 6, 8>>;
    std::string out(It(bytes.begin()), It(bytes.end()));
    out.append((3 - bytes.size() % 3) % 3, '=');
    return out;
}

inline std::string html_escape(const std::string& s) {
    std::string out;
    out.reserve(s.size());
    for (char c : s) {
        switch (c) {
            case '&':
                out += "&amp;";
                break;
            case '<':
                out += "&lt;";
                break;
            case '>':
                out += "&gt;";
                break;
            case '"':
                out += "&quot;";
                break;
            case '\'':
                out += "&#39;";
                break;
            default:
                out += c;
        }
    }
    return out;
}

inline std::string image_mime(const std::filesystem::path& p) {
    auto ext = p.extension().string();
    std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char c) { return std::tolower(c); });
    if (ext == ".jpg" || ext == ".jpeg") {
        return "image/jpeg";
    }
    if (ext == ".bmp") {
        return "image/bmp";
    }
    return "image/png";
}

inline std::string tile(const std::string& id, const std::string& caption,
                        const std::map<std::string, std::filesystem::path>& paths) {
    std::string img;
    auto it = paths.find(id);
    if (it != paths.end()) {
        std::ifstream in(it->second, std::ios::binary);
        if (in) {
            std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
            img = "<img src=\"data:" + image_mime(it->second) + ";base64," + base64_encode(bytes) + "\" alt=\"" +
                  html_escape(id) + "\">";
        }
    }
    if (img.empty()) {
        img = "<div class=\"missing\">no image</div>";
    }
    return "<figure>" + img + "<figcaption>" + caption + "</figcaption></figure>\n";
}

inline std::string format_score(double v) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.4f", v);
    return buf;
}

}  // namespace detail

/**
 * Writes a self-contained HTML page: the query tile first, then the ranked
 * hits row-major with their scores. Images are embedded inline; a missing or
 * unreadable file becomes a placeholder tile. Output depends only on the
 * inputs.
 */
inline void emit_gallery(const RetrievalResult& result, const std::map<std::string, std::filesystem::path>& image_paths,
                         const std::filesystem::path& out) {
    std::ostringstream html;
    html << "<!DOCTYPE html>\n<html>\n<head>\n<meta charset=\"utf-8\">\n<title>retrieval: "
         << detail::html_escape(result.query.query_image_id) << "</title>\n"
         << "<style>\n"
            "body{font-family:sans-serif}\n"
            ".grid{display:grid;grid-template-columns:repeat(5,160px);gap:8px}\n"
            "figure{margin:0}\n"
            "img,.missing{width:160px;height:160px;object-fit:contain;border:1px solid #ccc}\n"
            ".missing{display:flex;align-items:center;justify-content:center;background:#eee;color:#888}\n"
            ".query img,.query .missing{border:3px solid #000}\n"
            "figcaption{font-size:11px}\n"
            "</style>\n</head>\n<body>\n";
    auto [wc, wt] = result.query.effective_weights();
    html << "<p>mode " << to_string(result.query.mode) << ", weights " << detail::format_score(wc) << " / "
         << detail::format_score(wt) << "</p>\n";
    html << "<div class=\"query\">\n"
         << detail::tile(result.query.query_image_id, "query " + detail::html_escape(result.query.query_image_id),
                         image_paths)
         << "</div>\n<div class=\"grid\">\n";
    for (std::size_t r = 0; r < result.hits.size(); ++r) {
        const auto& h = result.hits[r];
        std::string caption = std::to_string(r + 1) + ". " + detail::html_escape(h.image_id) + "<br>c " +
                              detail::format_score(h.color_score) + " t " + detail::format_score(h.texture_score) +
                              " = " + detail::format_score(h.combined_score);
        html << detail::tile(h.image_id, caption, image_paths);
    }
    html << "</div>\n</body>\n</html>\n";

    std::ofstream f(out, std::ios::binary);
    if (!f) {
        throw IoError("cannot write gallery to " + out.string());
    }
    f << html.str();
    if (!f) {
        throw IoError("failed writing gallery to " + out.string());
    }
}

}  // namespace blockprobe
