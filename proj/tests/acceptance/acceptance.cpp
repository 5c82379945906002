// Acceptance run: one PASS/FAIL line per criterion P-1..P-8.
//
// The synthetic datasets and their per-block feature stores are cached under
// --work and reused while the model stamp matches, so reruns skip extraction.

#include "blockprobe/blockprobe.hpp"

#include "../oracles.hpp"
#include "../test_support.hpp"

#include "CLI11.hpp"

#include <opencv2/core.hpp>

#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <sstream>

namespace fs = std::filesystem;
using namespace blockprobe;
using nlohmann::json;

namespace {

constexpr std::uint64_t color_seed = 1;
constexpr std::uint64_t texture_seed = 2;
constexpr std::uint64_t cv_seed = 7;
constexpr std::uint64_t reducer_seed = 42;

struct Options {
    fs::path model;
    fs::path sidecar;
    fs::path work = "acceptance_work";
    int threads = default_threads();
};

struct Verdict {
    std::string id;
    bool pass = false;
    std::string detail;
};

std::vector<Verdict> verdicts;

void report(const std::string& id, bool pass, const std::string& detail) {
    verdicts.push_back({id, pass, detail});
    std::cout << id << (pass ? " PASS " : " FAIL ") << detail << std::endl;
}

std::string fmt(double v, int digits = 4) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.*f", digits, v);
    return buf;
}

double now_s() {
    return std::chrono::duration<double>(std::chrono::steady_clock::now().time_since_epoch()).count();
}

template <typename T>
std::string join(const std::vector<T>& v, int digits = 4) {
    std::string out;
    for (std::size_t i = 0; i < v.size(); ++i) {
        out += (i ? "," : "") + fmt(static_cast<double>(v[i]), digits);
    }
    return out;
}

std::size_t argmax(const std::vector<double>& v) {
    return static_cast<std::size_t>(std::max_element(v.begin(), v.end()) - v.begin());
}

// Dataset + per-block stores ---------------------------------------------------

struct Dataset {
    std::string name;
    std::vector<EmbeddingMatrix> blocks;  // index 0 = block 1
    double build_seconds = 0;             // synth + extraction, as measured when built
};

json stamp_of(const Options& o, const SynthSpec& spec) {
    return {{"model", fs::absolute(o.model).string()},
            {"model_bytes", fs::file_size(o.model)},
            {"sidecar", read_sidecar(o.sidecar).extra.value("weights_source", "")},
            {"seed", spec.seed},
            {"per_class", spec.images_per_class},
            {"size", spec.image_size}};
}

Dataset build_dataset(const Options& o, const std::string& name, SynthKind kind, std::uint64_t seed) {
    const auto spec = SynthSpec::defaults(kind, seed);
    const fs::path dir = o.work / name;
    const fs::path stamp_file = o.work / (name + ".stamp.json");
    const json stamp = stamp_of(o, spec);

    Dataset ds;
    ds.name = name;
    if (fs::exists(stamp_file)) {
        json saved;
        std::ifstream(stamp_file) >> saved;
        bool ok = saved.value("stamp", json()) == stamp;
        for (int b = 1; ok && b <= 5; ++b) {
            ok = fs::exists(o.work / (name + ".b" + std::to_string(b) + ".vafs"));
        }
        if (ok) {
            for (int b = 1; b <= 5; ++b) {
                ds.blocks.push_back(read_store(o.work / (name + ".b" + std::to_string(b) + ".vafs")));
            }
            ds.build_seconds = saved.value("build_seconds", 0.0);
            std::cerr << "[" << name << "] reusing cached stores (built in " << fmt(ds.build_seconds, 1) << " s)\n";
            return ds;
        }
    }

    const double t0 = now_s();
    std::cerr << "[" << name << "] rendering " << spec.classes.size() * spec.images_per_class << " images\n";
    auto rows = synth_dataset(spec, dir, o.threads);
    BlockModel model(o.model);
    auto pre = read_sidecar(o.sidecar);
    auto res = extract_dataset(model, rows, {1, 2, 3, 4, 5}, pre, [&](std::size_t done, std::size_t total) {
        if (done % 100 == 0 || done == total) {
            std::cerr << "[" << name << "] extracted " << done << "/" << total << " (" << fmt(now_s() - t0, 1)
                      << " s)\n";
        }
    });
    if (!res.skipped.empty()) {
        throw DecodeError(std::to_string(res.skipped.size()) + " synthetic images failed to decode");
    }
    ds.build_seconds = now_s() - t0;
    ds.blocks = std::move(res.matrices);
    for (int b = 1; b <= 5; ++b) {
        write_store(ds.blocks[b - 1], o.work / (name + ".b" + std::to_string(b) + ".vafs"));
    }
    std::ofstream(stamp_file) << json{{"stamp", stamp}, {"build_seconds", ds.build_seconds}}.dump(2);
    return ds;
}

std::vector<double> block_accuracies(const Dataset& ds, int threads, double* seconds = nullptr) {
    const double t0 = now_s();
    std::vector<double> acc;
    for (const auto& m : ds.blocks) {
        acc.push_back(cross_validate(m, KnnConfig{5}, 5, cv_seed, threads).mean_accuracy);
    }
    if (seconds) {
        *seconds = now_s() - t0;
    }
    std::cerr << "[" << ds.name << "] kNN accuracy per block: " << join(acc) << "\n";
    return acc;
}

std::vector<int> label_codes(const std::vector<std::string>& labels) {
    std::map<std::string, int> code;
    std::vector<int> out;
    for (auto& l : labels) {
        out.push_back(code.emplace(l, static_cast<int>(code.size())).first->second);
    }
    return out;
}

struct BlockScores {
    std::vector<double> ari, ami;
    std::vector<int> n_clusters;
};

BlockScores cluster_blocks(const Dataset& ds, int threads) {
    BlockScores s;
    for (const auto& m : ds.blocks) {
        auto labels = hdbscan(m, HdbscanParams{}, threads);
        auto sc = agreement(label_codes(m.labels), labels.label_of);
        s.ari.push_back(sc.ari);
        s.ami.push_back(sc.ami);
        s.n_clusters.push_back(labels.n_clusters);
    }
    std::cerr << "[" << ds.name << "] HDBSCAN ARI " << join(s.ari) << " AMI " << join(s.ami) << " clusters "
              << join(s.n_clusters, 0) << "\n";
    return s;
}

ReducerConfig reducer_config(int dim) {
    ReducerConfig cfg;
    cfg.n_components = dim;
    cfg.seed = reducer_seed;
    return cfg;
}

// Criteria ---------------------------------------------------------------------

void p1(const Dataset& color, const std::vector<double>& acc, double cv_seconds) {
    const double runtime = color.build_seconds + cv_seconds;
    bool ok = acc[1] >= 0.90 && acc[1] >= acc[4] + 0.05 && acc[1] >= acc[0] && runtime < 15 * 60;
    report("P-1", ok,
           "color kNN acc b1..b5=" + join(acc) + " (need b2>=0.90, b2>=b5+0.05, b2>=b1); runtime " +
               fmt(runtime, 1) + " s (need < 900)");
}

void p2(const std::vector<double>& acc) {
    std::size_t best = argmax(acc) + 1;
    bool ok = best >= 3 && acc[3] >= acc[0] + 0.15 && acc[3] >= 0.85;
    report("P-2", ok,
           "texture kNN acc b1..b5=" + join(acc) + " best=b" + std::to_string(best) +
               " (need best in {3,4,5}, b4>=b1+0.15, b4>=0.85)");
}

void p2b(const BlockScores& color, const BlockScores& texture) {
    std::size_t c_ari = argmax(color.ari) + 1, c_ami = argmax(color.ami) + 1;
    std::size_t t_ari = argmax(texture.ari) + 1, t_ami = argmax(texture.ami) + 1;
    bool color_ok = c_ari <= 3 && c_ami <= 3 && color.ari[c_ari - 1] > color.ari[4] && color.ami[c_ami - 1] > color.ami[4];
    bool texture_ok = t_ari >= 3 && t_ami >= 3;
    report("P-2b", color_ok && texture_ok,
           "color ARI=" + join(color.ari) + " AMI=" + join(color.ami) + " peaks b" + std::to_string(c_ari) + "/b" +
               std::to_string(c_ami) + (color_ok ? " ok" : " bad") + "; texture ARI=" + join(texture.ari) +
               " AMI=" + join(texture.ami) + " peaks b" + std::to_string(t_ari) + "/b" + std::to_string(t_ami) +
               (texture_ok ? " ok" : " bad"));
}

struct ReducedRun {
    std::size_t block = 0;
    double full = 0, dim8 = 0, dim2 = 0;
    double trust8 = 0;
    double residual = 0;
    std::size_t clamped = 0;
};

ReducedRun reduce_winner(const Dataset& ds, const std::vector<double>& acc, int threads) {
    ReducedRun r;
    r.block = argmax(acc);
    const auto& m = ds.blocks[r.block];
    r.full = acc[r.block];
    auto e8 = reduce(m, reducer_config(8), threads);
    auto e2 = reduce(m, reducer_config(2), threads);
    r.dim8 = cross_validate(e8.to_matrix(), KnnConfig{5}, 5, cv_seed, threads).mean_accuracy;
    r.dim2 = cross_validate(e2.to_matrix(), KnnConfig{5}, 5, cv_seed, threads).mean_accuracy;
    r.trust8 = trustworthiness(m, e8.coordinates, 15, threads);
    r.residual = std::max(e8.diagnostics.max_calibration_residual, e2.diagnostics.max_calibration_residual);
    r.clamped = e8.diagnostics.n_clamped;
    std::cerr << "[" << ds.name << "] block " << r.block + 1 << " full=" << fmt(r.full) << " dim8=" << fmt(r.dim8)
              << " dim2=" << fmt(r.dim2) << " T(15)=" << fmt(r.trust8) << "\n";
    return r;
}

void p3(const ReducedRun& color, const ReducedRun& texture) {
    auto one = [](const std::string& name, const ReducedRun& r, bool& ok) {
        bool good = r.dim8 - r.full >= -0.07 && r.dim2 < r.dim8;
        ok = ok && good;
        return name + " b" + std::to_string(r.block + 1) + " full=" + fmt(r.full) + " dim8=" + fmt(r.dim8) +
               " dim2=" + fmt(r.dim2) + (good ? " ok" : " bad");
    };
    bool ok = true;
    auto text = one("color", color, ok) + "; " + one("texture", texture, ok);
    report("P-3", ok, text + " (need dim8-full >= -0.07, dim2 < dim8)");
}

void p4(const ReducedRun& color, const ReducedRun& texture) {
    auto c = fit_ab(0.1, 1.0);
    auto [oa, ob] = oracle::fit_ab(0.1, 1.0);
    bool fit_ok = std::abs(c.a - 1.577) <= 0.01 && std::abs(c.b - 0.895) <= 0.01 && std::abs(c.a - oa) <= 0.01 &&
                  std::abs(c.b - ob) <= 0.01;
    bool trust_ok = color.trust8 >= 0.90 && texture.trust8 >= 0.90;
    bool res_ok = color.residual < 1e-5 && texture.residual < 1e-5;
    report("P-4", fit_ok && trust_ok && res_ok,
           "T(15) dim8 color=" + fmt(color.trust8) + " texture=" + fmt(texture.trust8) +
               " (need >= 0.90); max calibration residual " + fmt(std::max(color.residual, texture.residual), 8) +
               " (need < 1e-5); fit_ab(0.1,1)=(" + fmt(c.a) + "," + fmt(c.b) + ") oracle=(" + fmt(oa) + "," +
               fmt(ob) + ")");
}

void p5() {
    Rng rng(2024);
    double worst_ari = 0, worst_ami = 0;
    for (int inst = 0; inst < 100; ++inst) {
        std::size_t n = 2 + rng.below(49);
        int ka = 1 + static_cast<int>(rng.below(6)), kb = 1 + static_cast<int>(rng.below(6));
        std::vector<int> a(n), b(n);
        for (std::size_t i = 0; i < n; ++i) {
            a[i] = static_cast<int>(rng.below(static_cast<std::uint64_t>(ka)));
            b[i] = static_cast<int>(rng.below(static_cast<std::uint64_t>(kb)));
        }
        worst_ari = std::max(worst_ari, std::abs(adjusted_rand_index(a, b) - oracle::ari_pairs(a, b)));
        worst_ami = std::max(worst_ami, std::abs(adjusted_mutual_info(a, b) - oracle::ami(a, b)));
    }

    int mst_mismatch = 0;
    for (int inst = 0; inst < 50; ++inst) {
        std::size_t n = 2 + rng.below(199);
        auto m = cast_matrix<double>(testing_support::random_matrix(n, 1 + rng.below(6), rng.next()));
        auto dist = DistanceMatrix::euclidean(m);
        auto w = [&](std::size_t u, std::size_t v) { return dist(u, v); };
        if (total_weight(minimum_spanning_tree(n, w)) != oracle::ascending_sum(oracle::prim_weights(n, w))) {
            ++mst_mismatch;
        }
    }

    auto blobs = testing_support::gaussian_blobs(100, 3, 2, 20, 1, 5);
    HdbscanParams params;
    params.min_cluster_size = 30;
    auto labels = hdbscan(blobs, params);
    double blob_ari = adjusted_rand_index(label_codes(blobs.labels), labels.label_of);

    bool ok = worst_ari <= 1e-10 && worst_ami <= 1e-10 && mst_mismatch == 0 && blob_ari == 1.0;
    char buf[256];
    std::snprintf(buf, sizeof(buf),
                  "max |ARI-oracle|=%.2e max |AMI-oracle|=%.2e (need <= 1e-10); MST mismatches %d/50; "
                  "3-blob ARI=%.4f",
                  worst_ari, worst_ami, mst_mismatch, blob_ari);
    report("P-5", ok, buf);
}

void p6() {
    Rng rng(606);
    int mismatches = 0;
    for (int inst = 0; inst < 200; ++inst) {
        std::size_t n = 1 + rng.below(300), d = 1 + rng.below(16);
        int k = 1 + static_cast<int>(rng.below(9));
        int classes = 1 + static_cast<int>(rng.below(4));
        EmbeddingMatrix m(1, d);
        std::vector<float> row(d);
        for (std::size_t i = 0; i < n; ++i) {
            for (auto& v : row) {
                v = static_cast<float>(rng.below(4));
            }
            m.push_back("p" + std::to_string(rng.next() % 1000) + "_" + std::to_string(i),
                        "c" + std::to_string(rng.below(static_cast<std::uint64_t>(classes))),
                        std::span<const float>(row));
        }
        std::vector<double> q(d);
        for (auto& v : q) {
            v = static_cast<double>(rng.below(4));
        }
        if (knn_predict(m, std::span<const double>(q), KnnConfig{k}) !=
            oracle::knn_predict(testing_support::to_points(m), m.ids, m.labels, q, k)) {
            ++mismatches;
        }
    }
    report("P-6", mismatches == 0, "knn_predict vs full-sort oracle: " + std::to_string(mismatches) + "/200 mismatches");
}

void p7(const fs::path& work) {
    Rng rng(707);
    int roundtrip_fail = 0;
    const fs::path p = work / "p7.vafs";
    for (int inst = 0; inst < 1000; ++inst) {
        auto m = testing_support::random_matrix(rng.below(40), 1 + rng.below(64), rng.next(), 1 + inst % 5, -1e3, 1e3);
        m.block_index = 1 + inst % 5;
        write_store(m, p);
        if (!(read_store(p) == m)) {
            ++roundtrip_fail;
        }
    }
    write_store(EmbeddingMatrix(2, 256), p);
    auto empty_size = fs::file_size(p);

    auto bytes = encode_store(testing_support::random_matrix(6, 4, 9));
    auto bad = bytes;
    std::copy_n("XXXX", 4, bad.begin());
    std::string magic_kind, trunc_kind;
    try {
        decode_store(bad);
    } catch (const Error& e) {
        magic_kind = e.kind();
    }
    std::vector<unsigned char> cut(bytes.begin(), bytes.begin() + static_cast<std::ptrdiff_t>(bytes.size() - 7));
    try {
        decode_store(cut);
    } catch (const Error& e) {
        trunc_kind = e.kind();
    }
    fs::remove(p);
    bool ok = roundtrip_fail == 0 && empty_size == store_header_size && store_header_size == 21 &&
              magic_kind == "FormatError" && trunc_kind == "TruncationError";
    report("P-7", ok,
           "round-trip failures " + std::to_string(roundtrip_fail) + "/1000; empty file " +
               std::to_string(empty_size) + " bytes (need 21); bad magic -> " + magic_kind + ", truncation -> " +
               trunc_kind);
}

void p8(const fs::path& work) {
    auto f = testing_support::retrieval_fixture();
    auto run = [&](RetrievalMode mode, double wc, double wt) {
        RetrievalQuery q;
        q.query_image_id = "q";
        q.mode = mode;
        q.weight_color = wc;
        q.weight_texture = wt;
        return combined_rank(q, f.color, f.texture);
    };
    auto ids = [](const RetrievalResult& r) {
        std::string s;
        for (auto& h : r.hits) {
            s += h.image_id;
        }
        return s;
    };
    auto color = run(RetrievalMode::color, 0.5, 0.5);
    auto texture = run(RetrievalMode::texture, 0.5, 0.5);
    auto both = run(RetrievalMode::both, 0.5, 0.5);
    auto unit = run(RetrievalMode::both, 1.0, 0.0);
    std::vector<double> both_scores;
    for (auto& h : both.hits) {
        both_scores.push_back(h.combined_score);
    }
    bool rank_ok = ids(color) == "abcd" && ids(texture) == "cbda" && ids(both) == "bcad" &&
                   both_scores == std::vector<double>{0.25, 0.375, 0.5, 0.75};
    bool unit_ok = ids(color) == ids(unit);
    for (std::size_t i = 0; unit_ok && i < color.hits.size(); ++i) {
        unit_ok = color.hits[i].combined_score == unit.hits[i].combined_score;
    }

    std::map<std::string, fs::path> paths;
    auto color_dir = work / "color" / "red";
    if (fs::exists(color_dir / "000.png")) {
        paths = {{"a", color_dir / "000.png"}, {"b", color_dir / "001.png"}, {"q", color_dir / "002.png"}};
    }
    emit_gallery(both, paths, work / "p8_a.html");
    emit_gallery(both, paths, work / "p8_b.html");
    bool gallery_ok = read_file_bytes(work / "p8_a.html") == read_file_bytes(work / "p8_b.html");

    report("P-8", rank_ok && unit_ok && gallery_ok,
           "color=" + ids(color) + " texture=" + ids(texture) + " both=" + ids(both) + " scores=" +
               join(both_scores, 3) + "; color==weights(1,0) " + (unit_ok ? "yes" : "no") +
               "; gallery byte-identical " + (gallery_ok ? "yes" : "no"));
}

}  // namespace

int main(int argc, char** argv) {
    Options o;
    CLI::App app{"Acceptance criteria P-1..P-8"};
    app.add_option("--model", o.model, "ONNX model (env BLOCKPROBE_MODEL overrides)");
    app.add_option("--sidecar", o.sidecar, "Preprocessing sidecar (env BLOCKPROBE_SIDECAR overrides)");
    app.add_option("--work", o.work, "Cache directory for datasets and stores")->capture_default_str();
    app.add_option("--threads", o.threads)->capture_default_str();
    CLI11_PARSE(app, argc, argv);
    if (const char* m = std::getenv("BLOCKPROBE_MODEL")) {
        o.model = m;
    }
    if (const char* s = std::getenv("BLOCKPROBE_SIDECAR")) {
        o.sidecar = s;
    }
    fs::create_directories(o.work);
    cv::setNumThreads(o.threads);

    const bool have_model = !o.model.empty() && fs::exists(o.model) && !o.sidecar.empty() && fs::exists(o.sidecar);
    try {
        if (have_model) {
            auto color = build_dataset(o, "color", SynthKind::color, color_seed);
            double cv_seconds = 0;
            auto color_acc = block_accuracies(color, o.threads, &cv_seconds);
            p1(color, color_acc, cv_seconds);

            auto texture = build_dataset(o, "texture", SynthKind::texture, texture_seed);
            auto texture_acc = block_accuracies(texture, o.threads);
            p2(texture_acc);

            p2b(cluster_blocks(color, o.threads), cluster_blocks(texture, o.threads));

            auto color_red = reduce_winner(color, color_acc, o.threads);
            auto texture_red = reduce_winner(texture, texture_acc, o.threads);
            p3(color_red, texture_red);
            p4(color_red, texture_red);
        } else {
            for (const char* id : {"P-1", "P-2", "P-2b", "P-3", "P-4"}) {
                report(id, false, "model or sidecar not found (" + o.model.string() + ")");
            }
        }
        p5();
        p6();
        p7(o.work);
        p8(o.work);
    } catch (const Error& e) {
        std::cerr << "error [" << e.kind() << "]: " << e.what() << "\n";
        return 2;
    }

    int failed = 0;
    for (auto& v : verdicts) {
        failed += v.pass ? 0 : 1;
    }
    std::cout << "summary: " << verdicts.size() - static_cast<std::size_t>(failed) << "/" << verdicts.size()
              << " criteria passed" << std::endl;
    return failed == 0 ? 0 : 1;
}
