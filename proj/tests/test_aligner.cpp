#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>

#include "core/aligner.hpp"
#include "testutil.hpp"

using namespace xmbt;
using testutil::grad_check;
using testutil::rel_err;

namespace {

// independent density oracle for the score values
double density_oracle(double x, double mu, double sigma) {
    const double pi = 3.14159265358979323846;
    double diff = x - mu;
    return (1.0 / (sigma * std::sqrt(2.0 * pi))) * std::exp(-diff * diff / (2.0 * sigma * sigma));
}

struct RowStats {
    double min_c = 1e300, max_a = -1e300, max_o = -1e300;
    bool has_c = false, has_a = false, has_o = false;
};

RowStats row_stats(const AlignmentMatrix& am, int64_t i) {
    RowStats s;
    for (int64_t j = 0; j < am.assignment.n_in; ++j) {
        double w = am.weights.at2(i, j);
        switch (am.assignment.label(i, j)) {
            case WindowLabel::Current:
                s.min_c = std::min(s.min_c, w);
                s.has_c = true;
                break;
            case WindowLabel::Adjacent:
                s.max_a = std::max(s.max_a, w);
                s.has_a = true;
                break;
            case WindowLabel::Other:
                s.max_o = std::max(s.max_o, w);
                s.has_o = true;
                break;
        }
    }
    return s;
}

}  // namespace

TEST_CASE("partition: six inputs over four outputs gives window size two") {
    WindowAssignment wa = partition_windows(6, 4);
    CHECK(wa.window_size == 2);
    CHECK(wa.positions(0, WindowLabel::Current) == std::vector<int64_t>{0, 1});
    CHECK(wa.positions(1, WindowLabel::Current) == std::vector<int64_t>{2, 3});
    // every output row keeps a non-empty current window
    for (int64_t i = 0; i < 4; ++i) CHECK(!wa.positions(i, WindowLabel::Current).empty());
    // each (i,j) carries exactly one label by construction; adjacency flanks the current window
    CHECK(wa.positions(0, WindowLabel::Adjacent) == std::vector<int64_t>{2, 3});
}

TEST_CASE("partition: equal lengths is the diagonal") {
    for (int64_t k : {1, 2, 5, 9}) {
        WindowAssignment wa = partition_windows(k, k);
        CHECK(wa.window_size == 1);
        for (int64_t i = 0; i < k; ++i) {
            CHECK(wa.positions(i, WindowLabel::Current) == std::vector<int64_t>{i});
        }
    }
}

TEST_CASE("partition: five inputs over two outputs, hand-enumerated") {
    WindowAssignment wa = partition_windows(5, 2);
    CHECK(wa.window_size == 3);
    CHECK(wa.positions(0, WindowLabel::Current) == std::vector<int64_t>{0, 1, 2});
    CHECK(wa.positions(1, WindowLabel::Current) == std::vector<int64_t>{3, 4});
}

TEST_CASE("partition: upsampling gives one source position per output") {
    WindowAssignment wa = partition_windows(3, 7);
    for (int64_t i = 0; i < 7; ++i) {
        auto c = wa.positions(i, WindowLabel::Current);
        REQUIRE(c.size() == 1);
        CHECK(c[0] == (i * 3) / 7);
    }
    CHECK_THROWS(partition_windows(0, 3));
    CHECK_THROWS(partition_windows(3, 0));
}

TEST_CASE("beta scores match the direct density oracle") {
    WindowAssignment wa = partition_windows(6, 4);
    Tensor beta = beta_scores(wa, 0.0, 1.0);
    double bc = 0, ba = 0, bo = 0;
    for (int64_t j = 0; j < 6; ++j) {
        double v = beta.at2(0, j);
        switch (wa.label(0, j)) {
            case WindowLabel::Current: bc = v; break;
            case WindowLabel::Adjacent: ba = v; break;
            case WindowLabel::Other: bo = v; break;
        }
    }
    CHECK(std::abs(bc - 0.3989) < 1e-4);
    CHECK(std::abs(ba - 0.2420) < 1e-4);
    CHECK(std::abs(bo - 0.0540) < 1e-4);
    CHECK(rel_err(bc, density_oracle(0.0, 0.0, 1.0)) < 1e-12);
    CHECK(rel_err(ba, density_oracle(1.0, 0.0, 1.0)) < 1e-12);
    CHECK(rel_err(bo, density_oracle(2.0, 0.0, 1.0)) < 1e-12);

    // ordering holds for arbitrary mu, sigma
    Rng rng(11);
    for (int rep = 0; rep < 20; ++rep) {
        double mu = rng.uniform(-3, 3), sigma = rng.uniform(0.05, 4.0);
        double c = gaussian_density(mu, mu, sigma);
        double a = gaussian_density(mu + sigma, mu, sigma);
        double o = gaussian_density(mu + 2 * sigma, mu, sigma);
        CHECK(c > a);
        CHECK(a > o);
    }
    CHECK_THROWS(beta_scores(wa, 0.0, 0.0));
}

TEST_CASE("single output window gives a constant score row") {
    WindowAssignment wa = partition_windows(4, 1);
    Tensor beta = beta_scores(wa, 0.0, 1.0);
    for (int64_t j = 1; j < 4; ++j) CHECK(beta.at2(0, j) == beta.at2(0, 0));
}

TEST_CASE("soft alignment: row-stochastic, ordered, local") {
    Rng rng(5);
    for (int rep = 0; rep < 60; ++rep) {
        int64_t n_in = rng.uniform_int(1, 24);
        int64_t n_out = rng.uniform_int(1, 24);
        AlignmentMatrix am = soft_alignment(n_in, n_out, 0.0, 1.0);
        for (int64_t i = 0; i < n_out; ++i) {
            double sum = 0;
            double best = -1;
            int64_t argmax = -1;
            for (int64_t j = 0; j < n_in; ++j) {
                double w = am.weights.at2(i, j);
                CHECK(w >= 0.0);
                CHECK(w <= 1.0);
                sum += w;
                if (w > best) {
                    best = w;
                    argmax = j;
                }
            }
            CHECK(std::abs(sum - 1.0) < 1e-6);
            RowStats s = row_stats(am, i);
            REQUIRE(s.has_c);
            if (s.has_a) CHECK(s.min_c > s.max_a);
            if (s.has_a && s.has_o) CHECK(s.max_a > s.max_o);
            if (!s.has_a && s.has_o) CHECK(s.min_c > s.max_o);
            CHECK(am.assignment.label(i, argmax) == WindowLabel::Current);
        }
    }
}

TEST_CASE("hard alignment: exact zeros outside, uniform inside") {
    Rng rng(6);
    for (int rep = 0; rep < 40; ++rep) {
        int64_t n_in = rng.uniform_int(1, 20);
        int64_t n_out = rng.uniform_int(1, 20);
        AlignmentMatrix am = hard_alignment(n_in, n_out);
        for (int64_t i = 0; i < n_out; ++i) {
            auto cur = am.assignment.positions(i, WindowLabel::Current);
            REQUIRE(!cur.empty());
            double want = 1.0 / static_cast<double>(cur.size());
            double sum = 0;
            for (int64_t j = 0; j < n_in; ++j) {
                double w = am.weights.at2(i, j);
                sum += w;
                if (am.assignment.label(i, j) == WindowLabel::Current)
                    CHECK(w == want);
                else
                    CHECK(w == 0.0);
            }
            CHECK(std::abs(sum - 1.0) < 1e-9);
        }
    }
}

namespace {
ModelConfig small_cfg() {
    ModelConfig c = ModelConfig::defaults();
    c.d_text = 6;
    c.d_video = 4;
    c.d_code = 3;
    c.text_heads = 2;
    c.prior_heads = 2;
    c.pooling_max_text = 8;
    c.pooling_max_video = 16;
    return c;
}
}  // namespace

TEST_CASE("length map: convexity sends constant rows to constant rows") {
    ModelConfig cfg = small_cfg();
    ParamGroup g{"mapper"};
    Rng rng(7);
    SlidingWindowAligner al(cfg, g, rng);
    Tensor src({5, 4});
    for (int64_t i = 0; i < 5; ++i)
        for (int64_t j = 0; j < 4; ++j) src.at2(i, j) = 3.25 - 0.5 * static_cast<double>(j);
    for (AlignerMode mode : {AlignerMode::Soft, AlignerMode::Hard}) {
        Var out = al.length_map(constant(src), 3, mode, true);
        for (int64_t i = 0; i < 3; ++i)
            for (int64_t j = 0; j < 4; ++j) CHECK(rel_err(out->val.at2(i, j), src.at2(0, j)) < 1e-12);
    }
}

TEST_CASE("length map hard mode averages the current window") {
    ModelConfig cfg = small_cfg();
    ParamGroup g{"mapper"};
    Rng rng(8);
    SlidingWindowAligner al(cfg, g, rng);
    Tensor src = randn({6, 4}, rng);
    Var out = al.length_map(constant(src), 4, AlignerMode::Hard, true);
    for (int64_t j = 0; j < 4; ++j) {
        double want = 0.5 * (src.at2(0, j) + src.at2(1, j));
        CHECK(rel_err(out->val.at2(0, j), want) < 1e-12);
    }
}

TEST_CASE("length map soft mode: intra-window permutation invariance") {
    ModelConfig cfg = small_cfg();
    ParamGroup g{"mapper"};
    Rng rng(9);
    SlidingWindowAligner al(cfg, g, rng);
    Tensor src = randn({6, 4}, rng);
    Var out1 = al.length_map(constant(src), 3, AlignerMode::Soft, true);
    // windows of size 2: swap rows 0 and 1 (both inside window 0)
    Tensor swapped = src;
    for (int64_t j = 0; j < 4; ++j) std::swap(swapped.at2(0, j), swapped.at2(1, j));
    Var out2 = al.length_map(constant(swapped), 3, AlignerMode::Soft, true);
    for (int64_t i = 0; i < out1->val.numel(); ++i) CHECK(rel_err(out1->val.at(i), out2->val.at(i)) < 1e-12);
}

TEST_CASE("pooling mode: learned transform, length guards") {
    ModelConfig cfg = small_cfg();
    ParamGroup g{"mapper"};
    Rng rng(10);
    SlidingWindowAligner al(cfg, g, rng);
    Tensor src = randn({5, 4}, rng);
    Var out = al.length_map(constant(src), 12, AlignerMode::Pooling, true);
    CHECK(out->val.shape() == Shape{12, 4});
    CHECK_THROWS(al.length_map(constant(randn({9, 4}, rng)), 3, AlignerMode::Pooling, true));   // 9 > max_text
    CHECK_THROWS(al.length_map(constant(randn({4, 4}, rng)), 17, AlignerMode::Pooling, true));  // 17 > max_video
}

TEST_CASE("dimension map composition: shapes and zero propagation") {
    ModelConfig cfg = small_cfg();
    ParamGroup g{"mapper"};
    Rng rng(11);
    SlidingWindowAligner al(cfg, g, rng);
    Var et = constant(randn({6, cfg.d_text}, rng));
    Var dv = al.map_text_to_video(et, 4, AlignerMode::Soft);
    CHECK(dv->val.shape() == Shape{4, cfg.d_video});
    Var ev = constant(randn({16, cfg.d_code}, rng));
    Var dt = al.map_video_to_text(ev, 6, AlignerMode::Soft);
    CHECK(dt->val.shape() == Shape{6, cfg.d_text});

    // zero input through the bias-free part of the map stays zero once the
    // bias is cleared
    ParamGroup g2{"mapper"};
    Rng rng2(12);
    SlidingWindowAligner al2(cfg, g2, rng2);
    for (auto& v : g2.vars) std::fill(v->val.data(), v->val.data() + v->val.numel(), 0.0);
    Var zero_out = al2.map_text_to_video(constant(Tensor::zeros({6, cfg.d_text})), 4, AlignerMode::Soft);
    for (int64_t i = 0; i < zero_out->val.numel(); ++i) CHECK(zero_out->val.at(i) == 0.0);
}

TEST_CASE("full text-to-video composition gradient matches finite differences") {
    ModelConfig cfg = small_cfg();
    ParamGroup g{"mapper"};
    Rng rng(13);
    SlidingWindowAligner al(cfg, g, rng);
    Var et = parameter(randn({4, cfg.d_text}, rng));
    Var target = constant(randn({8, cfg.d_video}, rng));
    auto fwd = [&] { return mse_loss(al.map_text_to_video(et, 8, AlignerMode::Soft), target); };
    CHECK(grad_check(et, fwd) < 1e-4);
    CHECK(grad_check(al.dim_text_to_video().w, fwd) < 1e-4);
    CHECK(grad_check(al.dim_text_to_video().b, fwd) < 1e-4);

    auto fwd_pool = [&] { return mse_loss(al.map_text_to_video(et, 8, AlignerMode::Pooling), target); };
    CHECK(grad_check(et, fwd_pool) < 1e-4);
}

TEST_CASE("length round trip text -> video -> text keeps the length") {
    ModelConfig cfg = small_cfg();
    ParamGroup g{"mapper"};
    Rng rng(14);
    SlidingWindowAligner al(cfg, g, rng);
    Var et = constant(randn({6, cfg.d_text}, rng));
    Var dv = al.map_text_to_video(et, 16, AlignerMode::Soft);
    // pretend the 16 video-space rows came back as code embeddings
    Var ev = constant(randn({16, cfg.d_code}, rng));
    Var dt = al.map_video_to_text(ev, 6, AlignerMode::Soft);
    CHECK(dv->val.rows() == 16);
    CHECK(dt->val.rows() == 6);
}

TEST_CASE("alignment csv export has one row per output position") {
    AlignmentMatrix am = soft_alignment(4, 3, 0.0, 1.0);
    std::string csv = alignment_to_csv(am);
    CHECK(std::count(csv.begin(), csv.end(), '\n') == 3);
    CHECK(std::count(csv.begin(), csv.end(), ',') == 3 * 3);
}
