// Clusters three Gaussian blobs, scores the result, and lays them out in 2-D.
//
//   cluster_and_reduce [points_per_blob] [out.csv]

#include "blockprobe/agreement.hpp"
#include "blockprobe/hdbscan.hpp"
#include "blockprobe/reducer.hpp"
#include "blockprobe/report.hpp"

#include <cstdio>
#include <string>

using namespace blockprobe;

int main(int argc, char** argv) {
    const std::size_t per_blob = argc > 1 ? std::stoul(argv[1]) : 150;
    const std::string out = argc > 2 ? argv[2] : "blobs_2d.csv";

    Rng rng(3);
    BasicEmbeddingMatrix<double> points(0, 16);
    std::vector<int> truth;
    std::vector<double> row(16);
    for (int b = 0; b < 3; ++b) {
        for (std::size_t i = 0; i < per_blob; ++i) {
            for (std::size_t d = 0; d < row.size(); ++d) {
                row[d] = (static_cast<int>(d) == b ? 12.0 : 0.0) + rng.normal();
            }
            char id[32];
            std::snprintf(id, sizeof(id), "p%d_%04zu", b, i);
            points.push_back(id, "blob" + std::to_string(b), std::span<const double>(row));
            truth.push_back(b);
        }
    }

    HdbscanParams params;
    params.min_cluster_size = 30;
    params.min_samples = 10;
    auto labels = hdbscan(points, params, default_threads());
    auto scores = agreement(truth, labels.label_of);
    std::printf("clusters %d, noise %zu, ARI %.4f, AMI %.4f\n", labels.n_clusters, labels.n_noise(), scores.ari,
                scores.ami);

    ReducerConfig cfg;
    cfg.n_components = 2;
    cfg.seed = 42;
    auto layout = reduce(points, cfg, default_threads());
    std::printf("trustworthiness(15) %.4f, curve a=%.3f b=%.3f\n",
                trustworthiness(points, layout.coordinates, 15, default_threads()), layout.curve.a, layout.curve.b);
    write_coordinates_csv(layout, out);
    std::printf("wrote %s\n", out.c_str());
}
