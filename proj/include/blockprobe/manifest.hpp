#pragma once

#include "error.hpp"

#include <filesystem>
#include <fstream>
#include <string>
#include <unordered_set>
#include <vector>

/**
 * @file manifest.hpp
 *
 * @brief Image manifests: UTF-8 CSV with header `image_id,path,label`.
 *
 * Relative paths are resolved against the directory holding the manifest.
 * Fields may be double-quoted; a quote inside a quoted field is doubled.
 */

namespace blockprobe {

struct ManifestRow {
    std::string image_id;
    std::filesystem::path path;
    std::string label;

    bool operator==(const ManifestRow&) const = default;
};

namespace detail {

inline std::vector<std::string> split_csv_line(const std::string& line, std::size_t line_no) {
    std::vector<std::string> fields(1);
    bool quoted = false;
    for (std::size_t i = 0; i < line.size(); ++i) {
        char c = line[i];
        if (quoted) {
            if (c == '"') {
                if (i + 1 < line.size() && line[i + 1] == '"') {
                    fields.back() += '"';
                    ++i;
                } else {
                    quoted = false;
                }
            } else {
                fields.back() += c;
            }
        } else if (c == '"') {
            quoted = true;
        } else if (c == ',') {
            fields.emplace_back();
        } else {
            fields.back() += c;
        }
    }
    if (quoted) {
        throw ManifestError("unterminated quote on manifest line " + std::to_string(line_no));
    }
    return fields;
}

inline std::string csv_field(const std::string& s) {
    if (s.find_first_of(",\"\n\r") == std::string::npos) {
        return s;
    }
    std::string out = "\"";
    for (char c : s) {
        out += c;
        if (c == '"') {
            out += '"';
        }
    }
    return out + "\"";
}

}  // namespace detail

inline std::vector<ManifestRow> read_manifest(const std::filesystem::path& file) {
    std::ifstream in(file, std::ios::binary);
    if (!in) {
        throw IoError("cannot open manifest " + file.string());
    }
    const auto base = file.parent_path();

    std::vector<ManifestRow> rows;
    std::string line;
    std::size_t line_no = 0;
    bool header_seen = false;
    while (std::getline(in, line)) {
        ++line_no;
        if (!line.empty() && line.back() == '\r') {
            line.pop_back();
        }
        if (line_no == 1 && line.rfind("\xEF\xBB\xBF", 0) == 0) {
            line.erase(0, 3);
        }
        if (line.empty()) {
            continue;
        }
        auto f = detail::split_csv_line(line, line_no);
        if (!header_seen) {
            if (f.size() != 3 || f[0] != "image_id" || f[1] != "path" || f[2] != "label") {
                throw ManifestError("manifest header must be 'image_id,path,label', got '" + line + "'");
            }
            header_seen = true;
            continue;
        }
        if (f.size() != 3) {
            throw ManifestError("manifest line " + std::to_string(line_no) + " has " + std::to_string(f.size()) +
                                " fields, expected 3");
        }
        if (f[0].empty()) {
            throw ManifestError("empty image_id on manifest line " + std::to_string(line_no));
        }
        std::filesystem::path p(f[1]);
        if (p.is_relative()) {
            p = base / p;
        }
        rows.push_back({std::move(f[0]), std::move(p), std::move(f[2])});
    }
    if (!header_seen) {
        throw ManifestError("manifest " + file.string() + " is empty");
    }
    return rows;
}

/// Throws DuplicateIdError on the first repeated image id.
inline void check_unique_ids(const std::vector<ManifestRow>& rows) {
    std::unordered_set<std::string> seen;
    seen.reserve(rows.size());
    for (const auto& r : rows) {
        if (!seen.insert(r.image_id).second) {
            throw DuplicateIdError("duplicate image id '" + r.image_id + "' in manifest");
        }
    }
}

/**
 * Writes `rows`; paths under the manifest's directory are stored relative to
 * it so the dataset can be moved as a whole.
 */
inline void write_manifest(const std::vector<ManifestRow>& rows, const std::filesystem::path& file) {
    std::ofstream out(file, std::ios::binary);
    if (!out) {
        throw IoError("cannot write manifest " + file.string());
    }
    const auto base = file.parent_path();
    out << "image_id,path,label\n";
    for (const auto& r : rows) {
        std::filesystem::path p = r.path;
        if (p.is_absolute() && !base.empty()) {
            auto rel = p.lexically_relative(std::filesystem::absolute(base));
            if (!rel.empty() && *rel.begin() != "..") {
                p = rel;
            }
        } else if (!base.empty()) {
            auto rel = p.lexically_relative(base);
            if (!rel.empty() && *rel.begin() != "..") {
                p = rel;
            }
        }
        out << detail::csv_field(r.image_id) << ',' << detail::csv_field(p.generic_string()) << ','
            << detail::csv_field(r.label) << '\n';
    }
    if (!out) {
        throw IoError("failed writing manifest " + file.string());
    }
}

}  // namespace blockprobe
