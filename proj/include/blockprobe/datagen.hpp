#pragma once

#include "error.hpp"
#include "manifest.hpp"
#include "parallel.hpp"
#include "rng.hpp"

#include <opencv2/core.hpp>
#include <opencv2/imgcodecs.hpp>
#include <opencv2/imgproc.hpp>

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <numbers>
#include <string>
#include <vector>

/**
 * @file datagen.hpp
 *
 * @brief Deterministic synthetic clothing-like images for color and texture
 * attribute experiments.
 *
 * Every image draws from its own stream seeded by (seed, class, index), so
 * generation order and thread count do not affect the output.
 */

namespace blockprobe {

enum class SynthKind { color, texture };

inline const std::vector<std::string>& color_class_names() {
    static const std::vector<std::string> names{"red",  "black", "blue",   "green",  "yellow",
                                                "gray", "brown", "pink",   "purple", "orange"};
    return names;
}

inline const std::vector<std::string>& texture_class_names() {
    static const std::vector<std::string> names{"striped", "squared", "polka", "argyle", "leopard", "basic"};
    return names;
}

struct SynthSpec {
    SynthKind kind = SynthKind::color;
    std::vector<std::string> classes;
    int images_per_class = 100;
    int image_size = 256;
    std::uint64_t seed = 0;

    static SynthSpec defaults(SynthKind kind, std::uint64_t seed) {
        SynthSpec s;
        s.kind = kind;
        s.classes = kind == SynthKind::color ? color_class_names() : texture_class_names();
        s.seed = seed;
        return s;
    }

    void validate() const {
        if (classes.empty()) {
            throw ConfigError("synthetic spec needs at least one class");
        }
        const auto& known = kind == SynthKind::color ? color_class_names() : texture_class_names();
        for (const auto& c : classes) {
            if (std::find(known.begin(), known.end(), c) == known.end()) {
                throw ConfigError("unknown " + std::string(kind == SynthKind::color ? "color" : "texture") +
                                  " class '" + c + "'");
            }
        }
        if (images_per_class < 1) {
            throw ConfigError("images_per_class must be >= 1");
        }
        if (image_size < 32) {
            throw ConfigError("image_size must be >= 32");
        }
    }
};

/// HSV box for a color class; hue in degrees, s and v in [0, 1].
struct HsvRange {
    std::vector<std::pair<double, double>> hue;
    double s_lo, s_hi;
    double v_lo, v_hi;
};

inline const HsvRange& color_range(const std::string& name) {
    static const std::vector<std::pair<std::string, HsvRange>> table{
        {"red", {{{0, 12}, {348, 360}}, 0.6, 1.0, 0.5, 1.0}},
        {"orange", {{{20, 35}}, 0.7, 1.0, 0.7, 1.0}},
        {"yellow", {{{50, 62}}, 0.6, 1.0, 0.8, 1.0}},
        {"green", {{{90, 150}}, 0.5, 1.0, 0.35, 0.9}},
        {"blue", {{{200, 240}}, 0.5, 1.0, 0.4, 1.0}},
        {"purple", {{{265, 295}}, 0.4, 0.9, 0.35, 0.8}},
        {"pink", {{{320, 345}}, 0.25, 0.55, 0.85, 1.0}},
        {"brown", {{{18, 35}}, 0.5, 0.9, 0.25, 0.5}},
        {"gray", {{{0, 360}}, 0.0, 0.1, 0.3, 0.8}},
        {"black", {{{0, 360}}, 0.0, 0.3, 0.0, 0.15}},
    };
    for (const auto& [n, r] : table) {
        if (n == name) {
            return r;
        }
    }
    throw ConfigError("unknown color class '" + name + "'");
}

/// RGB in [0, 1] from hue in degrees and s, v in [0, 1].
inline std::array<double, 3> hsv_to_rgb(double h, double s, double v) {
    h = std::fmod(h, 360.0);
    if (h < 0) {
        h += 360;
    }
    double c = v * s;
    double hp = h / 60.0;
    double x = c * (1 - std::abs(std::fmod(hp, 2.0) - 1));
    double r = 0, g = 0, b = 0;
    switch (static_cast<int>(hp)) {
        case 0:
            r = c, g = x;
            break;
        case 1:
            r = x, g = c;
            break;
        case 2:
            g = c, b = x;
            break;
        case 3:
            g = x, b = c;
            break;
        case 4:
            r = x, b = c;
            break;
        default:
            r = c, b = x;
    }
    double m = v - c;
    return {r + m, g + m, b + m};
}

struct Hsv {
    double h, s, v;
};

inline Hsv sample_color(const HsvRange& range, Rng& rng) {
    double total = 0;
    for (auto& [lo, hi] : range.hue) {
        total += hi - lo;
    }
    double pick = rng.uniform(0, total);
    double h = range.hue.back().second;
    for (auto& [lo, hi] : range.hue) {
        if (pick < hi - lo) {
            h = lo + pick;
            break;
        }
        pick -= hi - lo;
    }
    return {std::fmod(h, 360.0), rng.uniform(range.s_lo, range.s_hi), rng.uniform(range.v_lo, range.v_hi)};
}

/**
 * Binary silhouette of a random garment (t-shirt, dress, skirt or hat) built
 * from polygons and ellipses, with jittered scale, position and rotation.
 */
inline cv::Mat garment_mask(int size, Rng& rng) {
    cv::Mat mask(size, size, CV_8U, cv::Scalar(0));
    const int kind = static_cast<int>(rng.below(4));
    const double scale = rng.uniform(0.55, 0.85) * size;
    const double cx = size * (0.5 + rng.uniform(-0.06, 0.06));
    const double cy = size * (0.5 + rng.uniform(-0.06, 0.06));
    const double angle = rng.uniform(-15, 15) * std::numbers::pi / 180;
    const double stretch = rng.uniform(0.85, 1.15);
    const double ca = std::cos(angle), sa = std::sin(angle);

    // Shapes are drawn in a unit box centered at the origin.
    auto to_px = [&](double x, double y) {
        x *= scale * stretch;
        y *= scale;
        return cv::Point(static_cast<int>(std::lround(cx + ca * x - sa * y)),
                         static_cast<int>(std::lround(cy + sa * x + ca * y)));
    };
    auto poly = [&](std::initializer_list<std::pair<double, double>> pts) {
        std::vector<cv::Point> p;
        for (auto [x, y] : pts) {
            p.push_back(to_px(x, y));
        }
        cv::fillPoly(mask, std::vector<std::vector<cv::Point>>{p}, cv::Scalar(255), cv::LINE_8);
    };
    auto ellipse = [&](double x, double y, double rx, double ry) {
        cv::ellipse(mask, to_px(x, y),
                    cv::Size(static_cast<int>(rx * scale * stretch), static_cast<int>(ry * scale)),
                    angle * 180 / std::numbers::pi, 0, 360, cv::Scalar(255), cv::FILLED, cv::LINE_8);
    };

    switch (kind) {
        case 0: {  // t-shirt
            double w = rng.uniform(0.28, 0.36), sl = rng.uniform(0.18, 0.26);
            poly({{-w, -0.4}, {w, -0.4}, {w, 0.45}, {-w, 0.45}});
            poly({{-w, -0.4}, {-w - sl, -0.15}, {-w - sl + 0.08, -0.02}, {-w, -0.18}});
            poly({{w, -0.4}, {w + sl, -0.15}, {w + sl - 0.08, -0.02}, {w, -0.18}});
            break;
        }
        case 1: {  // dress
            double top = rng.uniform(0.14, 0.2), hem = rng.uniform(0.35, 0.46);
            poly({{-top, -0.45}, {top, -0.45}, {top + 0.02, -0.15}, {-top - 0.02, -0.15}});
            poly({{-top - 0.02, -0.15}, {top + 0.02, -0.15}, {hem, 0.46}, {-hem, 0.46}});
            break;
        }
        case 2: {  // skirt
            double waist = rng.uniform(0.18, 0.26), hem = rng.uniform(0.36, 0.46);
            poly({{-waist, -0.3}, {waist, -0.3}, {hem, 0.35}, {-hem, 0.35}});
            break;
        }
        default: {  // hat
            double brim = rng.uniform(0.4, 0.47), crown = rng.uniform(0.22, 0.3);
            ellipse(0, 0.12, brim, rng.uniform(0.08, 0.13));
            ellipse(0, -0.05, crown, rng.uniform(0.2, 0.28));
            break;
        }
    }
    return mask;
}

namespace detail {

inline cv::Vec3b to_bgr8(const std::array<double, 3>& rgb, double gain) {
    auto q = [&](double c) { return static_cast<unsigned char>(std::lround(std::clamp(c * gain, 0.0, 1.0) * 255)); };
    return {q(rgb[2]), q(rgb[1]), q(rgb[0])};
}

inline double frac(double x) { return x - std::floor(x); }

// Pattern layer per pixel: 0 = background color, 1 = foreground, 2 = accent.
using PatternFn = int (*)(double u, double v, const std::array<double, 8>& p);

inline int striped(double u, double, const std::array<double, 8>& p) { return frac(u / p[0] + p[2]) < p[1] ? 1 : 0; }

inline int squared(double u, double v, const std::array<double, 8>& p) {
    return (frac(u / p[0] + p[2]) < p[1] || frac(v / p[0] + p[3]) < p[1]) ? 1 : 0;
}

inline int polka(double u, double v, const std::array<double, 8>& p) {
    double gy = v / p[0] + p[3];
    double row = std::floor(gy);
    double gx = u / p[0] + p[2] + (static_cast<long long>(row) % 2 == 0 ? 0.0 : 0.5);
    double dx = frac(gx) - 0.5, dy = frac(gy) - 0.5;
    return dx * dx + dy * dy < p[1] * p[1] ? 1 : 0;
}

inline int argyle(double u, double v, const std::array<double, 8>& p) {
    double a = (u + v * p[4]) / p[0] + p[2];
    double b = (u - v * p[4]) / p[0] + p[3];
    double la = std::abs(frac(a) - 0.5), lb = std::abs(frac(b) - 0.5);
    if (la < p[1] || lb < p[1]) {
        return 2;
    }
    return (static_cast<long long>(std::floor(a)) + static_cast<long long>(std::floor(b))) % 2 == 0 ? 1 : 0;
}

}  // namespace detail

/**
 * One color-class image: a garment filled with a color drawn from the class's
 * HSV box, brightness jittered per pixel by up to 8%, on white.
 */
inline cv::Mat render_color_image(const std::string& cls, int size, Rng& rng) {
    const auto& range = color_range(cls);
    auto c = sample_color(range, rng);
    auto base = hsv_to_rgb(c.h, c.s, 1.0);
    cv::Mat mask = garment_mask(size, rng);
    cv::Mat img(size, size, CV_8UC3, cv::Scalar(255, 255, 255));
    for (int y = 0; y < size; ++y) {
        const auto* m = mask.ptr<unsigned char>(y);
        auto* px = img.ptr<cv::Vec3b>(y);
        for (int x = 0; x < size; ++x) {
            double gain = c.v * (1 + rng.uniform(-0.08, 0.08));
            if (m[x]) {
                px[x] = detail::to_bgr8(base, gain);
            }
        }
    }
    return img;
}

/// Palette for texture images: any hue, s in [0.2, 1], v in [0.25, 1].
inline Hsv sample_texture_color(Rng& rng) {
    return {rng.uniform(0, 360), rng.uniform(0.2, 1.0), rng.uniform(0.25, 1.0)};
}

/**
 * Three palette colors with visible contrast between every pair. The
 * acceptance rule is symmetric and the roles are assigned by a random
 * permutation, so foreground, background and accent share one marginal
 * distribution whatever the pattern.
 */
inline std::array<Hsv, 3> sample_texture_colors(Rng& rng) {
    auto contrast = [](const Hsv& a, const Hsv& b) {
        double dh = std::abs(a.h - b.h);
        dh = std::min(dh, 360 - dh);
        return std::abs(a.v - b.v) >= 0.2 || (dh >= 60 && a.s >= 0.4 && b.s >= 0.4);
    };
    std::array<Hsv, 3> c;
    for (;;) {
        for (auto& x : c) {
            x = sample_texture_color(rng);
        }
        if (contrast(c[0], c[1]) && contrast(c[0], c[2]) && contrast(c[1], c[2])) {
            break;
        }
    }
    std::vector<int> perm{0, 1, 2};
    rng.shuffle(perm);
    return {c[perm[0]], c[perm[1]], c[perm[2]]};
}

/**
 * One texture-class image: the pattern rendered inside a garment silhouette
 * with random palette colors, plus 3% per-pixel brightness noise, on white.
 */
inline cv::Mat render_texture_image(const std::string& cls, int size, Rng& rng) {
    const double unit = size / 256.0;
    auto colors = sample_texture_colors(rng);
    std::array<std::array<double, 3>, 3> rgb;
    for (int i = 0; i < 3; ++i) {
        rgb[i] = hsv_to_rgb(colors[i].h, colors[i].s, colors[i].v);
    }
    cv::Mat mask = garment_mask(size, rng);

    const double theta = rng.uniform(0, std::numbers::pi);
    const double ct = std::cos(theta), st = std::sin(theta);
    std::array<double, 8> p{};
    p[2] = rng.uniform();
    p[3] = rng.uniform();
    detail::PatternFn fn = nullptr;

    // Leopard rosettes: a jittered lattice of rings around accent cores.
    struct Spot {
        double x, y, rx, ry, phase;
    };
    std::vector<Spot> spots;
    double cell = 0;

    if (cls == "striped") {
        p[0] = rng.uniform(12, 30) * unit;
        p[1] = rng.uniform(0.35, 0.65);
        fn = detail::striped;
    } else if (cls == "squared") {
        p[0] = rng.uniform(18, 36) * unit;
        p[1] = rng.uniform(0.15, 0.3);
        fn = detail::squared;
    } else if (cls == "polka") {
        p[0] = rng.uniform(16, 32) * unit;
        p[1] = rng.uniform(0.2, 0.32);
        fn = detail::polka;
    } else if (cls == "argyle") {
        p[0] = rng.uniform(28, 48) * unit;
        p[1] = rng.uniform(0.025, 0.05);
        p[4] = rng.uniform(0.6, 0.8);
        fn = detail::argyle;
    } else if (cls == "leopard") {
        cell = rng.uniform(22, 34) * unit;
        int cells = static_cast<int>(std::ceil(size * 1.5 / cell)) + 2;
        for (int gy = -1; gy < cells; ++gy) {
            for (int gx = -1; gx < cells; ++gx) {
                double r = rng.uniform(0.28, 0.42) * cell;
                spots.push_back({(gx + rng.uniform(0.2, 0.8)) * cell - size * 0.25,
                                 (gy + rng.uniform(0.2, 0.8)) * cell - size * 0.25, r * rng.uniform(0.8, 1.25),
                                 r * rng.uniform(0.8, 1.25), rng.uniform(0, 2 * std::numbers::pi)});
            }
        }
    } else if (cls != "basic") {
        throw ConfigError("unknown texture class '" + cls + "'");
    }
    const int cells = cell > 0 ? static_cast<int>(std::ceil(size * 1.5 / cell)) + 3 : 0;

    auto leopard = [&](double x, double y) {
        int gx = static_cast<int>(std::floor((x + size * 0.25) / cell)) + 1;
        int gy = static_cast<int>(std::floor((y + size * 0.25) / cell)) + 1;
        int layer = 0;
        for (int dy = -1; dy <= 1; ++dy) {
            for (int dx = -1; dx <= 1; ++dx) {
                int ix = gx + dx, iy = gy + dy;
                if (ix < 0 || iy < 0 || ix >= cells || iy >= cells) {
                    continue;
                }
                const auto& s = spots[static_cast<std::size_t>(iy) * cells + ix];
                double ex = (x - s.x) / s.rx, ey = (y - s.y) / s.ry;
                double rho = std::sqrt(ex * ex + ey * ey);
                if (rho < 0.62) {
                    layer = 2;
                } else if (rho < 1.0) {
                    double phi = std::atan2(ey, ex);
                    if (std::sin(3 * phi + s.phase) < 0.55) {
                        return 1;
                    }
                }
            }
        }
        return layer;
    };

    cv::Mat img(size, size, CV_8UC3, cv::Scalar(255, 255, 255));
    for (int y = 0; y < size; ++y) {
        const auto* m = mask.ptr<unsigned char>(y);
        auto* px = img.ptr<cv::Vec3b>(y);
        for (int x = 0; x < size; ++x) {
            double gain = 1 + rng.uniform(-0.03, 0.03);
            if (!m[x]) {
                continue;
            }
            int layer = 1;
            if (fn) {
                double u = ct * x + st * y, v = -st * x + ct * y;
                layer = fn(u, v, p);
            } else if (cell > 0) {
                // Rosettes are laid out in image coordinates, rotated about the center.
                double rx = ct * (x - size / 2.0) + st * (y - size / 2.0) + size / 2.0;
                double ry = -st * (x - size / 2.0) + ct * (y - size / 2.0) + size / 2.0;
                layer = leopard(rx, ry);
            }
            px[x] = detail::to_bgr8(rgb[layer], gain);
        }
    }
    return img;
}

inline std::string synth_image_id(const std::string& cls, int index) {
    char buf[16];
    std::snprintf(buf, sizeof(buf), "%03d", index);
    return cls + "_" + buf;
}

/**
 * Renders the dataset to out_dir/<class>/NNN.png and writes
 * out_dir/manifest.csv (classes in the order given, images by index). Returns the
 * manifest rows with absolute paths.
 */
inline std::vector<ManifestRow> synth_dataset(const SynthSpec& spec, const std::filesystem::path& out_dir,
                                              int threads = 1) {
    spec.validate();
    std::error_code ec;
    std::filesystem::create_directories(out_dir, ec);
    for (const auto& cls : spec.classes) {
        std::filesystem::create_directories(out_dir / cls, ec);
        if (ec) {
            throw IoError("cannot create " + (out_dir / cls).string() + ": " + ec.message());
        }
    }

    const std::size_t per = static_cast<std::size_t>(spec.images_per_class);
    std::vector<ManifestRow> rows(spec.classes.size() * per);
    const auto abs_dir = std::filesystem::absolute(out_dir);
    parallelize(rows.size(), threads, [&](std::size_t begin, std::size_t end, int) {
        const std::vector<int> png{cv::IMWRITE_PNG_COMPRESSION, 3};
        for (std::size_t r = begin; r < end; ++r) {
            const auto& cls = spec.classes[r / per];
            const int index = static_cast<int>(r % per);
            Rng rng(derive_seed(spec.seed, hash_name(cls), static_cast<std::uint64_t>(index)));
            cv::Mat img = spec.kind == SynthKind::color ? render_color_image(cls, spec.image_size, rng)
                                                        : render_texture_image(cls, spec.image_size, rng);
            auto id = synth_image_id(cls, index);
            auto file = abs_dir / cls / (id.substr(cls.size() + 1) + ".png");
            if (!cv::imwrite(file.string(), img, png)) {
                throw IoError("cannot write " + file.string());
            }
            rows[r] = {id, file, cls};
        }
    });
    write_manifest(rows, abs_dir / "manifest.csv");
    return rows;
}

}  // namespace blockprobe
