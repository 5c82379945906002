// Command-line front end: every experiment is a short sequence of subcommands.

#include "blockprobe/blockprobe.hpp"

#include "CLI11.hpp"

#include <opencv2/core.hpp>

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

namespace fs = std::filesystem;
using nlohmann::json;
using namespace blockprobe;

namespace {

struct Globals {
    int threads = default_threads();
    bool pretty = false;
    std::vector<std::string> argv;
};

class Timer {
public:
    double seconds() const {
        return std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
    }

private:
    std::chrono::steady_clock::time_point start_ = std::chrono::steady_clock::now();
};

void emit(RunReport report, const Timer& timer, const std::string& path, const Globals& g,
          const std::string& table) {
    report.argv = g.argv;
    report.wall_time_s = timer.seconds();
    auto text = to_json(report).dump(2) + "\n";
    if (!path.empty()) {
        std::ofstream out(path, std::ios::binary);
        if (!out) {
            throw IoError("cannot write report " + path);
        }
        out << text;
        if (!out) {
            throw IoError("failed writing report " + path);
        }
    }
    if (g.pretty) {
        std::cout << table;
    } else if (path.empty()) {
        std::cout << text;
    }
}

std::string fmt(double v, int digits = 4) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.*f", digits, v);
    return buf;
}

std::vector<int> parse_blocks(const std::string& spec) {
    if (spec == "all") {
        return {1, 2, 3, 4, 5};
    }
    try {
        std::size_t used = 0;
        int b = std::stoi(spec, &used);
        if (used == spec.size()) {
            block_tap(b);
            return {b};
        }
    } catch (const std::logic_error&) {
    }
    throw ConfigError("--block must be 1..5 or 'all', got '" + spec + "'");
}

void progress_counter(std::size_t done, std::size_t total) {
    if (done % 50 == 0 || done == total) {
        std::fprintf(stderr, "extract: %zu/%zu\n", done, total);
    }
}

json skipped_json(const std::vector<SkippedImage>& skipped) {
    json out = json::array();
    for (const auto& s : skipped) {
        out.push_back({{"image_id", s.image_id}, {"path", s.path.string()}, {"reason", s.reason}});
    }
    return out;
}

// synth ---------------------------------------------------------------------

struct SynthArgs {
    std::string kind;
    std::string out;
    std::uint64_t seed = 0;
    int per_class = 100;
    int size = 256;
    std::string report;
};

void run_synth(const SynthArgs& a, const Globals& g) {
    Timer timer;
    SynthKind kind = a.kind == "color" ? SynthKind::color : SynthKind::texture;
    auto spec = SynthSpec::defaults(kind, a.seed);
    spec.images_per_class = a.per_class;
    spec.image_size = a.size;
    auto rows = synth_dataset(spec, a.out, g.threads);

    RunReport r;
    r.command = "synth";
    r.config = {{"kind", a.kind},
                {"classes", spec.classes},
                {"images_per_class", spec.images_per_class},
                {"image_size", spec.image_size},
                {"out", a.out}};
    r.seeds = {{"dataset", a.seed}};
    r.metrics = {{"n_images", rows.size()}, {"manifest", (fs::path(a.out) / "manifest.csv").string()}};
    std::ostringstream t;
    t << "synth " << a.kind << ": " << rows.size() << " images in " << a.out << "\n";
    emit(r, timer, a.report, g, t.str());
}

// extract -------------------------------------------------------------------

struct ExtractArgs {
    std::string model;
    std::string sidecar;
    std::string images;
    std::string block;
    std::string out;
    std::string report;
};

std::string block_suffixed(const std::string& out, int block) { return out + ".b" + std::to_string(block); }

void run_extract(const ExtractArgs& a, const Globals& g) {
    Timer timer;
    auto blocks = parse_blocks(a.block);
    auto spec = read_sidecar(a.sidecar);
    auto manifest = read_manifest(a.images);
    check_unique_ids(manifest);
    BlockModel model(a.model);
    auto res = extract_dataset(model, manifest, blocks, spec, progress_counter);

    json outputs = json::array();
    std::ostringstream t;
    for (std::size_t i = 0; i < blocks.size(); ++i) {
        std::string path = a.block == "all" ? block_suffixed(a.out, blocks[i]) : a.out;
        write_store(res.matrices[i], path);
        outputs.push_back({{"block", blocks[i]}, {"path", path}, {"rows", res.matrices[i].rows()},
                           {"dim", res.matrices[i].dim}});
        t << "block " << blocks[i] << ": " << res.matrices[i].rows() << " x " << res.matrices[i].dim << " -> " << path
          << "\n";
    }
    t << "skipped: " << res.skipped.size() << "\n";

    RunReport r;
    r.command = "extract";
    r.config = {{"model", a.model}, {"sidecar", a.sidecar}, {"preprocessing", to_json(spec)},
                {"images", a.images}, {"block", a.block}, {"out", a.out}};
    r.metrics = {{"n_manifest", manifest.size()}, {"outputs", outputs}, {"skipped", skipped_json(res.skipped)}};
    for (const auto& s : res.skipped) {
        r.warnings.push_back("skipped " + s.image_id + ": " + s.reason);
    }
    emit(r, timer, a.report, g, t.str());
}

// classify ------------------------------------------------------------------

struct ClassifyArgs {
    std::string features;
    int k = 5;
    int folds = 5;
    std::uint64_t seed = 0;
    std::string report;
};

std::string cv_table(const std::vector<CVReport>& reports) {
    std::ostringstream t;
    t << "block  accuracy  folds\n";
    for (const auto& c : reports) {
        t << "  " << c.block_index << "    " << fmt(c.mean_accuracy) << " ";
        for (double f : c.per_fold_accuracy) {
            t << " " << fmt(f, 3);
        }
        t << "\n";
    }
    return t.str();
}

void run_classify(const ClassifyArgs& a, const Globals& g) {
    Timer timer;
    auto m = read_store(a.features);
    KnnConfig cfg{a.k, Metric::euclidean};
    auto rep = cross_validate(m, cfg, a.folds, a.seed, g.threads);
    auto folds = stratified_folds(m.labels, m.ids, a.folds, a.seed);

    RunReport r;
    r.command = "classify";
    r.config = {{"features", a.features}, {"k", a.k}, {"folds", a.folds}, {"metric", "euclidean"}};
    r.seeds = {{"folds", a.seed}};
    r.metrics = to_json(rep);
    r.warnings = folds.warnings;
    emit(r, timer, a.report, g, cv_table({rep}));
}

// cluster -------------------------------------------------------------------

struct ClusterArgs {
    std::string features;
    bool labels_from_store = false;
    HdbscanParams params;
    std::string report;
};

void run_cluster(const ClusterArgs& a, const Globals& g) {
    Timer timer;
    auto m = read_store(a.features);
    RunReport r;
    r.command = "cluster";
    r.config = {{"features", a.features}, {"labels_from_store", a.labels_from_store}, {"params", to_json(a.params)}};
    std::ostringstream t;
    if (a.labels_from_store) {
        auto rep = cluster_report(m, a.params, g.threads);
        r.metrics = to_json(rep);
        t << "block " << rep.block_index << ": clusters " << rep.n_clusters << ", noise " << rep.n_noise << ", ARI "
          << fmt(rep.scores.ari) << ", AMI " << fmt(rep.scores.ami) << "\n";
    } else {
        auto lab = hdbscan(m, a.params, g.threads);
        r.metrics = {{"params", to_json(a.params)}, {"block_index", m.block_index}, {"n_points", m.rows()},
                     {"n_clusters", lab.n_clusters}, {"n_noise", lab.n_noise()}, {"labels", lab.label_of}};
        t << "block " << m.block_index << ": clusters " << lab.n_clusters << ", noise " << lab.n_noise() << "\n";
    }
    emit(r, timer, a.report, g, t.str());
}

// reduce --------------------------------------------------------------------

struct ReduceArgs {
    std::string features;
    ReducerConfig cfg;
    std::string out;
    std::string csv;
    int trust_k = 0;
    std::string report;
};

void run_reduce(const ReduceArgs& a, const Globals& g) {
    Timer timer;
    auto m = read_store(a.features);
    if (!a.csv.empty() && a.cfg.n_components != 2) {
        throw ConfigError("--csv needs --dim 2");
    }
    auto red = reduce(m, a.cfg, g.threads);
    write_store(red.to_matrix(), a.out);
    if (!a.csv.empty()) {
        write_coordinates_csv(red, a.csv);
    }

    RunReport r;
    r.command = "reduce";
    r.config = {{"features", a.features}, {"reducer", to_json(a.cfg)}, {"out", a.out}, {"csv", a.csv}};
    r.seeds = {{"reducer", a.cfg.seed}};
    r.metrics = to_json(red);
    std::ostringstream t;
    t << "reduced " << m.rows() << " x " << m.dim << " -> " << red.n_components << " dims (a " << fmt(red.curve.a)
      << ", b " << fmt(red.curve.b) << ")\n";
    if (a.trust_k > 0) {
        double tw = trustworthiness(m, red.coordinates, a.trust_k, g.threads);
        r.metrics["trustworthiness"] = {{"k", a.trust_k}, {"value", tw}};
        t << "trustworthiness(k=" << a.trust_k << ") " << fmt(tw) << "\n";
    }
    emit(r, timer, a.report, g, t.str());
}

// retrieve ------------------------------------------------------------------

struct RetrieveArgs {
    std::string color;
    std::string texture;
    RetrievalQuery query;
    std::string mode = "both";
    std::string report;
    std::string gallery;
    std::string images;
};

void run_retrieve(RetrieveArgs a, const Globals& g) {
    Timer timer;
    a.query.mode = parse_retrieval_mode(a.mode);
    auto cs = read_store(a.color);
    auto ts = read_store(a.texture);
    auto res = combined_rank(a.query, cs, ts);

    if (!a.gallery.empty()) {
        std::map<std::string, fs::path> paths;
        if (!a.images.empty()) {
            for (auto& row : read_manifest(a.images)) {
                paths.emplace(row.image_id, row.path);
            }
        }
        emit_gallery(res, paths, a.gallery);
    }

    RunReport r;
    r.command = "retrieve";
    r.config = {{"color", a.color},       {"texture", a.texture}, {"color_block", cs.block_index},
                {"texture_block", ts.block_index}, {"gallery", a.gallery}, {"images", a.images}};
    r.metrics = to_json(res);
    std::ostringstream t;
    t << "query " << res.query.query_image_id << " (" << a.mode << ")\n";
    for (std::size_t i = 0; i < res.hits.size(); ++i) {
        const auto& h = res.hits[i];
        t << "  " << i + 1 << ". " << h.image_id << "  c " << fmt(h.color_score) << "  t " << fmt(h.texture_score)
          << "  = " << fmt(h.combined_score) << "\n";
    }
    emit(r, timer, a.report, g, t.str());
}

// sweep-blocks --------------------------------------------------------------

struct SweepArgs {
    std::string model;
    std::string sidecar;
    std::string images;
    std::string task;
    std::string cache;
    int k = 5;
    int folds = 5;
    std::uint64_t seed = 0;
    HdbscanParams params;
    std::string report;
};

void run_sweep(const SweepArgs& a, const Globals& g) {
    Timer timer;
    std::vector<EmbeddingMatrix> matrices;
    std::vector<SkippedImage> skipped;

    auto cached = [&](int b) { return fs::path(a.cache) / ("features.b" + std::to_string(b)); };
    bool have_cache = !a.cache.empty();
    for (int b = 1; b <= 5 && have_cache; ++b) {
        have_cache = fs::exists(cached(b));
    }
    if (have_cache) {
        for (int b = 1; b <= 5; ++b) {
            matrices.push_back(read_store(cached(b)));
        }
    } else {
        auto spec = read_sidecar(a.sidecar);
        auto manifest = read_manifest(a.images);
        BlockModel model(a.model);
        auto res = extract_dataset(model, manifest, {1, 2, 3, 4, 5}, spec, progress_counter);
        matrices = std::move(res.matrices);
        skipped = std::move(res.skipped);
        if (!a.cache.empty()) {
            fs::create_directories(a.cache);
            for (int b = 1; b <= 5; ++b) {
                write_store(matrices[b - 1], cached(b));
            }
        }
    }

    RunReport r;
    r.command = "sweep-blocks";
    r.config = {{"model", a.model}, {"sidecar", a.sidecar}, {"images", a.images}, {"task", a.task},
                {"cache", a.cache}, {"used_cache", have_cache}};
    json per_block = json::array();
    std::ostringstream t;
    if (a.task == "classify") {
        r.config["k"] = a.k;
        r.config["folds"] = a.folds;
        r.seeds = {{"folds", a.seed}};
        std::vector<CVReport> reps;
        for (const auto& m : matrices) {
            reps.push_back(cross_validate(m, KnnConfig{a.k, Metric::euclidean}, a.folds, a.seed, g.threads));
            per_block.push_back(to_json(reps.back()));
        }
        t << cv_table(reps);
    } else {
        r.config["params"] = to_json(a.params);
        t << "block  clusters  noise  ARI     AMI\n";
        for (const auto& m : matrices) {
            auto rep = cluster_report(m, a.params, g.threads);
            per_block.push_back(to_json(rep));
            t << "  " << rep.block_index << "    " << rep.n_clusters << "  " << rep.n_noise << "  "
              << fmt(rep.scores.ari) << "  " << fmt(rep.scores.ami) << "\n";
        }
    }
    r.metrics = {{"blocks", per_block}, {"skipped", skipped_json(skipped)}};
    emit(r, timer, a.report, g, t.str());
}

}  // namespace

int main(int argc, char** argv) {
    Globals g;
    g.argv.assign(argv, argv + argc);

    CLI::App app{"blockprobe: block-wise ResNet-50 feature probing, kNN attributes, clustering, reduction and retrieval"};
    app.require_subcommand(1);
    app.add_option("--threads", g.threads, "Worker threads (default: BLOCKPROBE_THREADS or all cores)")
        ->check(CLI::PositiveNumber);
    app.add_flag("--pretty", g.pretty, "Print a human-readable table instead of JSON on stdout");
    app.set_version_flag("--version", tool_version);

    SynthArgs synth;
    auto* s = app.add_subcommand("synth", "Generate a synthetic color or texture dataset");
    s->add_option("--kind", synth.kind, "Dataset kind")->required()->check(CLI::IsMember({"color", "texture"}));
    s->add_option("--out", synth.out, "Output directory")->required();
    s->add_option("--seed", synth.seed, "Dataset seed")->required();
    s->add_option("--per-class", synth.per_class, "Images per class")->capture_default_str();
    s->add_option("--size", synth.size, "Image side in pixels")->capture_default_str();
    s->add_option("--report", synth.report, "Write the JSON report here");

    ExtractArgs ext;
    auto* e = app.add_subcommand("extract", "Pool block activations for every manifest image");
    e->add_option("--model", ext.model, "ONNX model with outputs block1..block5")->required()->check(CLI::ExistingFile);
    e->add_option("--sidecar", ext.sidecar, "Preprocessing sidecar JSON")->required()->check(CLI::ExistingFile);
    e->add_option("--images", ext.images, "Manifest CSV (image_id,path,label)")->required()->check(CLI::ExistingFile);
    e->add_option("--block", ext.block, "Block 1..5 or 'all'")->required();
    e->add_option("--out", ext.out, "Feature store path ('all' appends .b1..b5)")->required();
    e->add_option("--report", ext.report, "Write the JSON report here");

    ClassifyArgs cls;
    auto* c = app.add_subcommand("classify", "Stratified k-fold kNN accuracy of one feature store");
    c->add_option("--features", cls.features, "Feature store")->required()->check(CLI::ExistingFile);
    c->add_option("--k", cls.k, "Neighbors")->capture_default_str()->check(CLI::PositiveNumber);
    c->add_option("--folds", cls.folds, "Folds")->capture_default_str()->check(CLI::Range(2, 1000));
    c->add_option("--seed", cls.seed, "Fold seed")->capture_default_str();
    c->add_option("--report", cls.report, "Write the JSON report here");

    ClusterArgs clu;
    auto* u = app.add_subcommand("cluster", "HDBSCAN clustering of one feature store");
    u->add_option("--features", clu.features, "Feature store")->required()->check(CLI::ExistingFile);
    u->add_flag("--labels-from-store", clu.labels_from_store, "Score ARI/AMI against the stored labels");
    u->add_option("--min-cluster-size", clu.params.min_cluster_size)->capture_default_str();
    u->add_option("--min-samples", clu.params.min_samples)->capture_default_str();
    u->add_option("--leaf-size", clu.params.leaf_size, "Accepted for compatibility; no effect")->capture_default_str();
    u->add_option("--report", clu.report, "Write the JSON report here");

    ReduceArgs red;
    auto* d = app.add_subcommand("reduce", "Reduce a feature store with the fuzzy-graph SGD layout");
    d->add_option("--features", red.features, "Feature store")->required()->check(CLI::ExistingFile);
    d->add_option("--dim", red.cfg.n_components, "Output dimensions")->required()->check(CLI::Range(1, 1024));
    d->add_option("--n-neighbors", red.cfg.n_neighbors)->capture_default_str();
    d->add_option("--min-dist", red.cfg.min_dist)->capture_default_str();
    d->add_option("--spread", red.cfg.spread)->capture_default_str();
    d->add_option("--epochs", red.cfg.n_epochs)->capture_default_str();
    d->add_option("--negative-sample-rate", red.cfg.negative_sample_rate)->capture_default_str();
    d->add_option("--learning-rate", red.cfg.initial_learning_rate)->capture_default_str();
    d->add_option("--seed", red.cfg.seed, "Layout seed")->capture_default_str();
    d->add_option("--out", red.out, "Output feature store")->required();
    d->add_option("--csv", red.csv, "Also write image_id,label,x,y (dim 2 only)");
    d->add_option("--trustworthiness-k", red.trust_k, "Also report trustworthiness at this k");
    d->add_option("--report", red.report, "Write the JSON report here");

    RetrieveArgs ret;
    auto* q = app.add_subcommand("retrieve", "Rank the corpus against one query image");
    q->add_option("--color", ret.color, "Color feature store")->required()->check(CLI::ExistingFile);
    q->add_option("--texture", ret.texture, "Texture feature store")->required()->check(CLI::ExistingFile);
    q->add_option("--query", ret.query.query_image_id, "Query image id")->required();
    q->add_option("--mode", ret.mode, "color, texture or both")
        ->capture_default_str()
        ->check(CLI::IsMember({"color", "texture", "both"}));
    q->add_option("--wc", ret.query.weight_color, "Color weight (mode both)")->capture_default_str();
    q->add_option("--wt", ret.query.weight_texture, "Texture weight (mode both)")->capture_default_str();
    q->add_option("--topk", ret.query.top_k, "Results to return")->capture_default_str();
    q->add_option("--report", ret.report, "Write the JSON report here");
    q->add_option("--gallery", ret.gallery, "Write a static HTML gallery here");
    q->add_option("--images", ret.images, "Manifest used to find gallery images")->check(CLI::ExistingFile);

    SweepArgs sw;
    auto* w = app.add_subcommand("sweep-blocks", "Classify or cluster every block from one extraction pass");
    w->add_option("--model", sw.model, "ONNX model")->required()->check(CLI::ExistingFile);
    w->add_option("--sidecar", sw.sidecar, "Preprocessing sidecar JSON")->required()->check(CLI::ExistingFile);
    w->add_option("--images", sw.images, "Manifest CSV")->required()->check(CLI::ExistingFile);
    w->add_option("--task", sw.task, "classify or cluster")->required()->check(CLI::IsMember({"classify", "cluster"}));
    w->add_option("--cache", sw.cache, "Directory for reusable per-block feature stores");
    w->add_option("--k", sw.k)->capture_default_str();
    w->add_option("--folds", sw.folds)->capture_default_str();
    w->add_option("--seed", sw.seed)->capture_default_str();
    w->add_option("--min-cluster-size", sw.params.min_cluster_size)->capture_default_str();
    w->add_option("--min-samples", sw.params.min_samples)->capture_default_str();
    w->add_option("--leaf-size", sw.params.leaf_size)->capture_default_str();
    w->add_option("--report", sw.report, "Write the JSON report here");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& ex) {
        return app.exit(ex);
    } catch (const CLI::CallForVersion& ex) {
        return app.exit(ex);
    } catch (const CLI::ParseError& ex) {
        app.exit(ex);
        return 2;
    }

    try {
        cv::setNumThreads(g.threads);
        if (s->parsed()) {
            run_synth(synth, g);
        } else if (e->parsed()) {
            run_extract(ext, g);
        } else if (c->parsed()) {
            run_classify(cls, g);
        } else if (u->parsed()) {
            run_cluster(clu, g);
        } else if (d->parsed()) {
            run_reduce(red, g);
        } else if (q->parsed()) {
            run_retrieve(ret, g);
        } else if (w->parsed()) {
            run_sweep(sw, g);
        }
    } catch (const Error& ex) {
        std::cerr << "error [" << ex.kind() << "]: " << ex.what() << "\n";
        return 1;
    } catch (const std::exception& ex) {
        std::cerr << "error [InternalError]: " << ex.what() << "\n";
        return 1;
    }
    return 0;
}
