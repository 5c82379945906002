// Ranks one image of two feature stores against the rest and writes a gallery.
//
//   rank_stores color.vafs texture.vafs query_id [manifest.csv] [gallery.html]

#include "blockprobe/feature_store.hpp"
#include "blockprobe/manifest.hpp"
#include "blockprobe/retrieval.hpp"

#include <cstdio>
#include <iostream>

using namespace blockprobe;

int main(int argc, char** argv) {
    if (argc < 4) {
        std::cerr << "usage: rank_stores color.vafs texture.vafs query_id [manifest.csv] [gallery.html]\n";
        return 2;
    }
    try {
        auto color = read_store(argv[1]);
        auto texture = read_store(argv[2]);
        for (auto mode : {RetrievalMode::color, RetrievalMode::texture, RetrievalMode::both}) {
            RetrievalQuery q;
            q.query_image_id = argv[3];
            q.mode = mode;
            q.top_k = 5;
            auto result = combined_rank(q, color, texture);
            std::printf("%s:", to_string(mode));
            for (auto& h : result.hits) {
                std::printf(" %s(%.3f)", h.image_id.c_str(), h.combined_score);
            }
            std::printf("\n");
            if (mode == RetrievalMode::both && argc > 5) {
                std::map<std::string, std::filesystem::path> paths;
                for (auto& row : read_manifest(argv[4])) {
                    paths[row.image_id] = row.path;
                }
                emit_gallery(result, paths, argv[5]);
            }
        }
    } catch (const Error& e) {
        std::cerr << "error [" << e.kind() << "]: " << e.what() << "\n";
        return 1;
    }
}
