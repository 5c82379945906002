#include "blockprobe/retrieval.hpp"

#include "test_support.hpp"

#include <gtest/gtest.h>

#include <fstream>
#include <sstream>

using namespace blockprobe;
using testing_support::retrieval_fixture;
using testing_support::TempDir;

namespace {

std::vector<std::string> ids_of(const RetrievalResult& r) {
    std::vector<std::string> out;
    for (auto& h : r.hits) {
        out.push_back(h.image_id);
    }
    return out;
}

RetrievalQuery query(RetrievalMode mode, double wc = 0.5, double wt = 0.5) {
    RetrievalQuery q;
    q.query_image_id = "q";
    q.mode = mode;
    q.weight_color = wc;
    q.weight_texture = wt;
    return q;
}

std::string slurp(const std::filesystem::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::ostringstream s;
    s << in.rdbuf();
    return s.str();
}

}  // namespace

TEST(PairwiseDistances, Basics) {
    EmbeddingMatrix m(1, 1);
    for (float x : {0.0f, 3.0f}) {
        m.push_back(std::to_string(x), "l", std::span<const float>(&x, 1));
    }
    std::vector<float> q{1};
    EXPECT_EQ(pairwise_distances(std::span<const float>(q), m), (std::vector<double>{1, 2}));
    std::vector<float> q3{3};
    EXPECT_EQ(pairwise_distances(std::span<const float>(q3), m)[1], 0);
    std::vector<float> bad{1, 2};
    EXPECT_THROW(pairwise_distances(std::span<const float>(bad), m), DimensionError);
}

TEST(NormalizeScores, MinMax) {
    std::vector<double> d{2, 4, 6};
    EXPECT_EQ(normalize_scores(d), (std::vector<double>{0, 0.5, 1}));
    std::vector<double> same{3, 3, 3};
    EXPECT_EQ(normalize_scores(same), (std::vector<double>{0, 0, 0}));
    std::vector<double> none;
    EXPECT_THROW(normalize_scores(none), InvalidValueError);
}

TEST(CombinedRank, FixtureColor) {
    auto f = retrieval_fixture();
    auto r = combined_rank(query(RetrievalMode::color), f.color, f.texture);
    EXPECT_EQ(ids_of(r), (std::vector<std::string>{"a", "b", "c", "d"}));
    EXPECT_DOUBLE_EQ(r.hits[1].color_score, 0.25);
    EXPECT_DOUBLE_EQ(r.hits[2].color_score, 0.75);
}

TEST(CombinedRank, FixtureTexture) {
    auto f = retrieval_fixture();
    auto r = combined_rank(query(RetrievalMode::texture), f.color, f.texture);
    EXPECT_EQ(ids_of(r), (std::vector<std::string>{"c", "b", "d", "a"}));
}

TEST(CombinedRank, FixtureBoth) {
    auto f = retrieval_fixture();
    auto r = combined_rank(query(RetrievalMode::both), f.color, f.texture);
    EXPECT_EQ(ids_of(r), (std::vector<std::string>{"b", "c", "a", "d"}));
    std::vector<double> scores;
    for (auto& h : r.hits) {
        scores.push_back(h.combined_score);
    }
    EXPECT_EQ(scores, (std::vector<double>{0.25, 0.375, 0.5, 0.75}));
}

TEST(CombinedRank, ColorModeEqualsUnitWeights) {
    auto f = retrieval_fixture();
    auto a = combined_rank(query(RetrievalMode::color), f.color, f.texture);
    auto b = combined_rank(query(RetrievalMode::both, 1, 0), f.color, f.texture);
    EXPECT_EQ(ids_of(a), ids_of(b));
    for (std::size_t i = 0; i < a.hits.size(); ++i) {
        EXPECT_EQ(a.hits[i].combined_score, b.hits[i].combined_score);
    }
}

TEST(CombinedRank, TopKTruncates) {
    auto f = retrieval_fixture();
    auto q = query(RetrievalMode::both);
    q.top_k = 2;
    EXPECT_EQ(ids_of(combined_rank(q, f.color, f.texture)), (std::vector<std::string>{"b", "c"}));
}

TEST(CombinedRank, IdenticalItemRanksFirstWithZero) {
    auto f = retrieval_fixture();
    std::vector<float> zero{0, 0};
    f.color.push_back("twin", "x", std::span<const float>(zero));
    f.texture.push_back("twin", "x", std::span<const float>(zero));
    auto r = combined_rank(query(RetrievalMode::both), f.color, f.texture);
    EXPECT_EQ(r.hits.front().image_id, "twin");
    EXPECT_EQ(r.hits.front().combined_score, 0);
}

TEST(CombinedRank, Errors) {
    auto f = retrieval_fixture();
    auto q = query(RetrievalMode::both);
    q.query_image_id = "missing";
    EXPECT_THROW(combined_rank(q, f.color, f.texture), LookupError);
    auto g = retrieval_fixture();
    g.texture.ids[0] = "zz";
    EXPECT_THROW(combined_rank(query(RetrievalMode::both), g.color, g.texture), MismatchError);
    auto h = retrieval_fixture();
    std::vector<float> v{1, 1};
    h.color.push_back("extra", "x", std::span<const float>(v));
    EXPECT_THROW(combined_rank(query(RetrievalMode::both), h.color, h.texture), MismatchError);
    EXPECT_THROW(query(RetrievalMode::both, 0.7, 0.7).validate(), ConfigError);
    EXPECT_THROW(query(RetrievalMode::both, -0.5, 1.5).validate(), ConfigError);
    EXPECT_THROW(parse_retrieval_mode("shape"), ConfigError);
}

TEST(RankFromDistances, AffineRescalingPreservesScores) {
    Rng rng(3);
    std::vector<std::string> ids;
    std::vector<double> c, t;
    for (int i = 0; i < 50; ++i) {
        ids.push_back("i" + std::to_string(i));
        c.push_back(rng.uniform(0, 10));
        t.push_back(rng.uniform(0, 3));
    }
    RetrievalQuery q = query(RetrievalMode::both, 0.3, 0.7);
    q.query_image_id = "i0";
    q.top_k = 100;
    auto a = rank_from_distances(q, ids, c, t);
    for (auto& x : c) {
        x = 4.5 * x + 2;
    }
    for (auto& x : t) {
        x = 0.1 * x + 7;
    }
    auto b = rank_from_distances(q, ids, c, t);
    ASSERT_EQ(a.hits.size(), 49u);
    EXPECT_EQ(ids_of(a), ids_of(b));
    for (std::size_t i = 0; i < a.hits.size(); ++i) {
        EXPECT_NEAR(a.hits[i].combined_score, b.hits[i].combined_score, 1e-9);
    }
}

TEST(RankFromDistances, SingleModeTopIsArgmin) {
    Rng rng(4);
    std::vector<std::string> ids;
    std::vector<double> c, t;
    for (int i = 0; i < 30; ++i) {
        ids.push_back("i" + std::to_string(i));
        c.push_back(rng.uniform(1, 10));
        t.push_back(rng.uniform(1, 10));
    }
    auto q = query(RetrievalMode::texture);
    q.query_image_id = "none";
    auto r = rank_from_distances(q, ids, c, t);
    auto best = std::min_element(t.begin(), t.end()) - t.begin();
    EXPECT_EQ(r.hits.front().image_id, ids[static_cast<std::size_t>(best)]);
    for (std::size_t i = 1; i < r.hits.size(); ++i) {
        EXPECT_LE(r.hits[i - 1].combined_score, r.hits[i].combined_score);
    }
}

TEST(Gallery, ByteIdenticalAndOrdered) {
    TempDir dir("gallery");
    auto png = dir / "a.png";
    {
        std::ofstream f(png, std::ios::binary);
        f << "\x89PNG fake bytes";
    }
    auto f = retrieval_fixture();
    auto r = combined_rank(query(RetrievalMode::both), f.color, f.texture);
    std::map<std::string, std::filesystem::path> paths{{"a", png}, {"b", dir / "missing.png"}};
    emit_gallery(r, paths, dir / "g1.html");
    emit_gallery(r, paths, dir / "g2.html");
    auto html = slurp(dir / "g1.html");
    EXPECT_EQ(html, slurp(dir / "g2.html"));
    auto pos_b = html.find("1. b"), pos_c = html.find("2. c"), pos_a = html.find("3. a"), pos_d = html.find("4. d");
    ASSERT_NE(pos_b, std::string::npos);
    EXPECT_LT(pos_b, pos_c);
    EXPECT_LT(pos_c, pos_a);
    EXPECT_LT(pos_a, pos_d);
    EXPECT_NE(html.find("data:image/png;base64," + detail::base64_encode("\x89PNG fake bytes")), std::string::npos);
    EXPECT_NE(html.find("no image"), std::string::npos);
}

TEST(Gallery, EmptyResultShowsQueryOnly) {
    TempDir dir("gallery");
    RetrievalResult r;
    r.query = query(RetrievalMode::color);
    emit_gallery(r, {}, dir / "g.html");
    auto html = slurp(dir / "g.html");
    EXPECT_NE(html.find("query q"), std::string::npos);
    EXPECT_EQ(html.find("1. "), std::string::npos);
}

TEST(Gallery, HelpersEscapeAndEncode) {
    EXPECT_EQ(detail::base64_encode("Man"), "TWFu");
    EXPECT_EQ(detail::base64_encode("Ma"), "TWE=");
    EXPECT_EQ(detail::base64_encode("M"), "TQ==");
    EXPECT_EQ(detail::base64_encode(""), "");
    EXPECT_EQ(detail::html_escape("<a&\"'>"), "&lt;a&amp;&quot;&#39;&gt;");
}
