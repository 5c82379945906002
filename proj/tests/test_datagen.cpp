#include "blockprobe/datagen.hpp"
#include "blockprobe/feature_store.hpp"

#include "test_support.hpp"

#include <boost/math/distributions/chi_squared.hpp>
#include <gtest/gtest.h>
#include <opencv2/imgproc.hpp>

#include <cmath>
#include <numbers>

using namespace blockprobe;
using testing_support::TempDir;

namespace {

bool is_background(const cv::Vec3b& p) { return p[0] == 255 && p[1] == 255 && p[2] == 255; }

double hue_degrees(const cv::Vec3b& bgr) {
    cv::Mat px(1, 1, CV_8UC3, cv::Scalar(bgr[0], bgr[1], bgr[2])), hsv;
    cv::Mat f;
    px.convertTo(f, CV_32F, 1.0 / 255);
    cv::cvtColor(f, hsv, cv::COLOR_BGR2HSV);
    return hsv.at<cv::Vec3f>(0, 0)[0];
}

bool in_red_range(double h) { return (h >= 0 && h <= 12) || (h >= 348 && h <= 360); }

}  // namespace

TEST(Datagen, CountsAndLayout) {
    TempDir dir("synth");
    auto spec = SynthSpec::defaults(SynthKind::texture, 3);
    spec.images_per_class = 4;
    spec.image_size = 64;
    auto rows = synth_dataset(spec, dir.path(), 2);
    ASSERT_EQ(rows.size(), 24u);
    EXPECT_EQ(rows[0].image_id, "striped_000");
    EXPECT_EQ(rows[5].image_id, "squared_001");
    EXPECT_EQ(rows[5].label, "squared");
    EXPECT_TRUE(std::filesystem::exists(dir / "squared" / "001.png"));
    auto back = read_manifest(dir / "manifest.csv");
    ASSERT_EQ(back.size(), rows.size());
    for (std::size_t i = 0; i < rows.size(); ++i) {
        EXPECT_EQ(back[i].image_id, rows[i].image_id);
        EXPECT_EQ(std::filesystem::weakly_canonical(back[i].path), std::filesystem::weakly_canonical(rows[i].path));
    }
}

TEST(Datagen, DefaultClassCounts) {
    EXPECT_EQ(SynthSpec::defaults(SynthKind::color, 0).classes.size(), 10u);
    EXPECT_EQ(SynthSpec::defaults(SynthKind::texture, 0).classes.size(), 6u);
    EXPECT_EQ(SynthSpec::defaults(SynthKind::color, 0).images_per_class, 100);
}

TEST(Datagen, ByteIdenticalAcrossRunsAndThreads) {
    TempDir a("synth_a"), b("synth_b");
    for (auto kind : {SynthKind::color, SynthKind::texture}) {
        auto spec = SynthSpec::defaults(kind, 11);
        spec.images_per_class = 2;
        spec.image_size = 48;
        auto ra = synth_dataset(spec, a.path(), 1);
        auto rb = synth_dataset(spec, b.path(), 4);
        ASSERT_EQ(ra.size(), rb.size());
        for (std::size_t i = 0; i < ra.size(); ++i) {
            EXPECT_EQ(read_file_bytes(ra[i].path), read_file_bytes(rb[i].path)) << ra[i].image_id;
        }
        EXPECT_EQ(read_file_bytes(a / "manifest.csv"), read_file_bytes(b / "manifest.csv"));
    }
}

TEST(Datagen, SeedChangesImages) {
    Rng r1(derive_seed(1, hash_name("red"), 0)), r2(derive_seed(2, hash_name("red"), 0));
    cv::Mat x = render_color_image("red", 64, r1), y = render_color_image("red", 64, r2);
    EXPECT_GT(cv::norm(x, y, cv::NORM_L1), 0);
}

TEST(Datagen, RedForegroundHueInRange) {
    for (int i = 0; i < 20; ++i) {
        Rng rng(derive_seed(5, hash_name("red"), static_cast<std::uint64_t>(i)));
        cv::Mat img = render_color_image("red", 96, rng);
        double sx = 0, sy = 0;
        long count = 0;
        for (int y = 0; y < img.rows; ++y) {
            for (int x = 0; x < img.cols; ++x) {
                auto p = img.at<cv::Vec3b>(y, x);
                if (!is_background(p)) {
                    double h = hue_degrees(p) * std::numbers::pi / 180;
                    sx += std::cos(h);
                    sy += std::sin(h);
                    ++count;
                }
            }
        }
        ASSERT_GT(count, 500);
        double mean = std::atan2(sy, sx) * 180 / std::numbers::pi;
        if (mean < 0) {
            mean += 360;
        }
        EXPECT_TRUE(in_red_range(mean)) << "image " << i << " mean hue " << mean;
    }
}

TEST(Datagen, EveryColorClassSamplesInsideItsBox) {
    Rng rng(9);
    for (const auto& cls : color_class_names()) {
        const auto& r = color_range(cls);
        for (int i = 0; i < 200; ++i) {
            auto c = sample_color(r, rng);
            bool hue_ok = false;
            for (auto [lo, hi] : r.hue) {
                hue_ok = hue_ok || (c.h >= lo && c.h <= hi) || (hi == 360 && c.h == 0);
            }
            EXPECT_TRUE(hue_ok) << cls;
            EXPECT_GE(c.s, r.s_lo);
            EXPECT_LE(c.s, r.s_hi);
            EXPECT_GE(c.v, r.v_lo);
            EXPECT_LE(c.v, r.v_hi);
        }
    }
    EXPECT_THROW(color_range("teal"), ConfigError);
}

TEST(Datagen, TextureColorIndependentOfClass) {
    // One garment pixel per image keeps observations independent.
    constexpr int per_class = 200, bins = 6;
    const auto& classes = texture_class_names();
    std::vector<std::array<double, bins>> counts(classes.size());
    Rng pick(77);
    for (std::size_t c = 0; c < classes.size(); ++c) {
        counts[c].fill(0);
        for (int i = 0; i < per_class; ++i) {
            Rng rng(derive_seed(13, hash_name(classes[c]), static_cast<std::uint64_t>(i)));
            cv::Mat img = render_texture_image(classes[c], 64, rng);
            std::vector<cv::Vec3b> fg;
            for (int y = 0; y < img.rows; ++y) {
                for (int x = 0; x < img.cols; ++x) {
                    if (!is_background(img.at<cv::Vec3b>(y, x))) {
                        fg.push_back(img.at<cv::Vec3b>(y, x));
                    }
                }
            }
            ASSERT_FALSE(fg.empty());
            double h = hue_degrees(fg[pick.below(fg.size())]);
            counts[c][std::min(bins - 1, static_cast<int>(h / (360.0 / bins)))] += 1;
        }
    }
    std::array<double, bins> col{};
    double total = 0;
    for (auto& row : counts) {
        for (int b = 0; b < bins; ++b) {
            col[b] += row[b];
            total += row[b];
        }
    }
    double stat = 0;
    for (auto& row : counts) {
        for (int b = 0; b < bins; ++b) {
            double expected = per_class * col[b] / total;
            stat += (row[b] - expected) * (row[b] - expected) / expected;
        }
    }
    boost::math::chi_squared dist(static_cast<double>((classes.size() - 1) * (bins - 1)));
    double p = boost::math::cdf(boost::math::complement(dist, stat));
    EXPECT_GT(p, 0.01) << "chi2 " << stat;
}

TEST(Datagen, TexturePatternsDiffer) {
    for (const auto& cls : texture_class_names()) {
        Rng rng(derive_seed(1, hash_name(cls), 0));
        cv::Mat img = render_texture_image(cls, 64, rng);
        EXPECT_EQ(img.type(), CV_8UC3);
        EXPECT_EQ(img.rows, 64);
    }
    Rng rng(1);
    EXPECT_THROW(render_texture_image("paisley", 64, rng), ConfigError);
}

TEST(Datagen, RejectsBadSpec) {
    auto spec = SynthSpec::defaults(SynthKind::color, 0);
    spec.classes = {"teal"};
    EXPECT_THROW(spec.validate(), ConfigError);
    spec = SynthSpec::defaults(SynthKind::texture, 0);
    spec.images_per_class = 0;
    EXPECT_THROW(spec.validate(), ConfigError);
    spec = SynthSpec::defaults(SynthKind::texture, 0);
    spec.classes.clear();
    EXPECT_THROW(spec.validate(), ConfigError);
}
