#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "scope/detection.hpp"
#include "scope/rng.hpp"

using namespace scope;

namespace {

GridSpec small_grid() {
    GridSpec g;
    g.x_min = -3.2;
    g.x_max = 3.2;
    g.y_min = -3.2;
    g.y_max = 3.2;
    g.voxel = 0.4;
    g.channels = 8;
    return g;
}

Box7 make_box(double cx, double cy, double l, double w, double yaw) {
    Box7 b;
    b.cx = cx;
    b.cy = cy;
    b.cz = 0.5;
    b.length = l;
    b.width = w;
    b.height = 1.0;
    b.yaw = yaw;
    return b;
}

}  // namespace

TEST_CASE("decode_heads shapes and bias response") {
    const int C = 8;
    Conv2d reg(7, C, 1, 1, 0), cls(2, C, 1, 1, 0);
    for (int i = 0; i < 7; ++i) reg.b.val[i] = 0.1 * (i + 1);
    cls.b.val = {0.4, -0.4};

    const FeatureGrid zero(C, 6, 6);
    const HeadOutput out = decode_heads(zero, reg, cls);
    CHECK(out.reg.channels == 7);
    CHECK(out.cls.channels == 2);
    CHECK(out.reg.height == 6);
    CHECK(out.cls.width == 6);
    for (int c = 0; c < 7; ++c)
        for (int i = 0; i < 36; ++i)
            CHECK(out.reg.data[c * 36 + i] == doctest::Approx(0.1 * (c + 1)).epsilon(1e-15));

    Conv2d bad(5, C, 1, 1, 0);
    CHECK_THROWS_AS(decode_heads(zero, bad, cls), ShapeError);

    // seeded case matches the conv directly
    Rng rng(5);
    FeatureGrid g(C, 6, 6);
    for (double& v : g.data) v = rng.uniform(-1.0, 1.0);
    reg.init(6, "reg");
    const HeadOutput out2 = decode_heads(g, reg, cls);
    const FeatureGrid expect = reg.forward(g);
    for (std::size_t i = 0; i < expect.data.size(); ++i) CHECK(out2.reg.data[i] == expect.data[i]);
}

TEST_CASE("extract_boxes background-only and identity decoding") {
    const GridSpec spec = small_grid();
    HeadOutput out{FeatureGrid(7, 16, 16), FeatureGrid(2, 16, 16)};

    // background logits dominate everywhere: nothing extracted
    for (int i = 0; i < 256; ++i) {
        out.cls.data[i] = 8.0;        // background
        out.cls.data[256 + i] = -8.0; // foreground
    }
    CHECK(extract_boxes(out, spec, 0.25, 0.15).empty());

    // one confident cell with zero regression decodes to the cell center
    const int y = 5, x = 11;
    out.cls.at(0, y, x) = -8.0;
    out.cls.at(1, y, x) = 8.0;
    const std::vector<Detection> dets = extract_boxes(out, spec, 0.25, 0.15);
    REQUIRE(dets.size() == 1);
    CHECK(dets[0].score > 0.99);
    CHECK(dets[0].box.cx == doctest::Approx(spec.x_min + (x + 0.5) * spec.voxel).epsilon(1e-12));
    CHECK(dets[0].box.cy == doctest::Approx(spec.y_min + (y + 0.5) * spec.voxel).epsilon(1e-12));
    CHECK(dets[0].box.length == doctest::Approx(1.0).epsilon(1e-12));  // exp(0)
    CHECK(dets[0].box.width == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(dets[0].box.height == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(dets[0].box.yaw == 0.0);
}

TEST_CASE("extract_boxes suppresses the overlapping lower score") {
    const GridSpec spec = small_grid();
    HeadOutput out{FeatureGrid(7, 16, 16), FeatureGrid(2, 16, 16)};
    for (int i = 0; i < 256; ++i) {
        out.cls.data[i] = 6.0;
        out.cls.data[256 + i] = -6.0;
    }
    // two adjacent cells predicting nearly the same box
    out.cls.at(0, 8, 8) = -4.0;
    out.cls.at(1, 8, 8) = 4.0;  // stronger
    out.cls.at(0, 8, 9) = -2.0;
    out.cls.at(1, 8, 9) = 2.0;  // weaker, shifted onto the same spot
    out.reg.at(0, 8, 9) = -spec.voxel;  // dx pulls it back onto cell (8,8)

    const std::vector<Detection> dets = extract_boxes(out, spec, 0.25, 0.15);
    REQUIRE(dets.size() == 1);
    CHECK(dets[0].score == doctest::Approx(1.0 / (1.0 + std::exp(-8.0))).epsilon(1e-9));

    // reference: the kept box is the higher-score one at cell (8,8)
    CHECK(dets[0].box.cx == doctest::Approx(spec.x_min + 8.5 * spec.voxel).epsilon(1e-12));
}

TEST_CASE("smooth_l1 values and branch continuity") {
    CHECK(smooth_l1({1.0, 2.0}, {1.0, 2.0}, 1.0) == 0.0);
    // |d| = beta evaluates to 0.5*beta from both branches
    const double beta = 0.7;
    const double quad = 0.5 * beta * beta / beta;
    const double lin = beta - 0.5 * beta;
    CHECK(quad == doctest::Approx(lin).epsilon(1e-15));
    CHECK(smooth_l1({beta}, {0.0}, beta) == doctest::Approx(0.5 * beta).epsilon(1e-12));

    // d = 3, beta = 1 -> 2.5
    CHECK(smooth_l1({3.0}, {0.0}, 1.0) == doctest::Approx(2.5).epsilon(1e-12));

    // derivative is continuous at the joint: slope approaches 1 from both sides
    const double e = 1e-7;
    const double left = (smooth_l1({1.0}, {0.0}, 1.0) - smooth_l1({1.0 - e}, {0.0}, 1.0)) / e;
    const double right = (smooth_l1({1.0 + e}, {0.0}, 1.0) - smooth_l1({1.0}, {0.0}, 1.0)) / e;
    CHECK(left == doctest::Approx(1.0).epsilon(1e-5));
    CHECK(right == doctest::Approx(1.0).epsilon(1e-5));

    CHECK_THROWS_AS(smooth_l1({1.0}, {1.0, 2.0}, 1.0), ShapeError);
    CHECK_THROWS_AS(smooth_l1({1.0}, {1.0}, 0.0), DomainError);
}

TEST_CASE("focal_loss reference values and monotonicity") {
    // gamma = 0, alpha = 0.5 halves the cross entropy
    FeatureGrid logits(2, 1, 1);
    logits.data = {0.3, 1.1};
    const std::vector<std::uint8_t> fg{1};
    const double p1 = 1.0 / (1.0 + std::exp(-(1.1 - 0.3)));
    CHECK(focal_loss(logits, fg, 0.5, 0.0) == doctest::Approx(-0.5 * std::log(p1)).epsilon(1e-12));

    // p_t = 0.9, gamma = 2, alpha_t = 1 -> 0.00105361
    // alpha_t = 1 for a foreground cell means alpha = 1
    FeatureGrid l2(2, 1, 1);
    const double logit_gap = std::log(0.9 / 0.1);
    l2.data = {0.0, logit_gap};
    CHECK(focal_loss(l2, fg, 1.0, 2.0) == doctest::Approx(0.00105361).epsilon(1e-4));

    // perfectly confident correct prediction drives the loss to zero
    FeatureGrid l3(2, 1, 1);
    l3.data = {-30.0, 30.0};
    CHECK(focal_loss(l3, fg, 0.25, 2.0) < 1e-12);

    // monotone decreasing in p_t
    double prev = 1e9;
    for (double gap = -2.0; gap <= 6.0; gap += 0.5) {
        FeatureGrid l(2, 1, 1);
        l.data = {0.0, gap};
        const double v = focal_loss(l, fg, 0.25, 2.0);
        CHECK(v >= 0.0);
        CHECK(v < prev);
        prev = v;
    }

    CHECK_THROWS_AS(focal_loss(logits, std::vector<std::uint8_t>{1, 0}, 0.25, 2.0), ShapeError);
    CHECK_THROWS_AS(focal_loss(logits, fg, 1.5, 2.0), DomainError);
}

TEST_CASE("evaluate_ap on trivial and hand-computed cases") {
    const std::vector<Box7> gts{make_box(0, 0, 2, 2, 0), make_box(5, 5, 2, 2, 0.4),
                                make_box(-5, 3, 3, 1.5, -0.6)};

    // perfect detections at any scores
    std::vector<Detection> perfect;
    double s = 0.31;
    for (const Box7& b : gts) perfect.push_back({b, s += 0.17});
    CHECK(evaluate_ap(perfect, gts, 0.5) == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(evaluate_ap({}, gts, 0.5) == 0.0);
    CHECK(evaluate_ap(perfect, {}, 0.5) == 0.0);

    // 3 GTs; detections score 0.9 (TP), 0.8 (FP), 0.7 (TP):
    // precision envelope integrates to 1/3 + (1/3)(2/3) = 0.5556
    const std::vector<Detection> mixed{{gts[0], 0.9},
                                       {make_box(20, 20, 2, 2, 0), 0.8},
                                       {gts[1], 0.7}};
    CHECK(evaluate_ap(mixed, gts, 0.5) == doctest::Approx(0.5556).epsilon(2e-4));

    CHECK_THROWS_AS(evaluate_ap(mixed, gts, 0.0), DomainError);
}

TEST_CASE("evaluate_ap order invariance and monotonicity") {
    Rng rng(17);
    std::vector<Box7> gts;
    for (int i = 0; i < 6; ++i)
        gts.push_back(make_box(6.0 * i, 0, rng.uniform(2, 4), rng.uniform(1, 2),
                               rng.uniform(-kPi, kPi)));
    std::vector<Detection> dets;
    for (int i = 0; i < 6; ++i) {
        Box7 b = gts[i];
        b.cx += rng.uniform(-0.4, 0.4);
        b.cy += rng.uniform(-0.4, 0.4);
        dets.push_back({b, rng.uniform01()});
    }
    dets.push_back({make_box(100, 100, 2, 2, 0), 0.5});  // stray FP

    const double base = evaluate_ap(dets, gts, 0.5);
    std::vector<Detection> shuffled = dets;
    std::reverse(shuffled.begin(), shuffled.end());
    CHECK(evaluate_ap(shuffled, gts, 0.5) == doctest::Approx(base).epsilon(1e-12));

    // AP at 0.7 is never above AP at 0.5
    CHECK(evaluate_ap(dets, gts, 0.7) <= base + 1e-12);

    // adding a top-scored true positive never decreases AP
    std::vector<Box7> gts_plus = gts;
    gts_plus.push_back(make_box(0, 20, 3, 2, 0.2));
    std::vector<Detection> dets_plus = dets;
    dets_plus.push_back({gts_plus.back(), 0.999});
    CHECK(evaluate_ap(dets_plus, gts_plus, 0.5) >= evaluate_ap(dets, gts_plus, 0.5) - 1e-12);
}

TEST_CASE("assign_targets marks cells inside ground-truth rectangles") {
    const GridSpec spec = small_grid();
    const std::vector<Box7> gts{make_box(0.0, 0.0, 1.6, 0.8, 0.0)};
    const CellTargets t = assign_targets(gts, spec);

    CHECK(t.fg_count > 0);
    const int H = spec.height(), W = spec.width();
    const std::size_t hw = static_cast<std::size_t>(H) * W;
    for (int y = 0; y < H; ++y)
        for (int x = 0; x < W; ++x) {
            const double cx = spec.x_min + (x + 0.5) * spec.voxel;
            const double cy = spec.y_min + (y + 0.5) * spec.voxel;
            const bool inside = std::fabs(cx) <= 0.8 && std::fabs(cy) <= 0.4;
            CHECK(t.labels[y * W + x] == (inside ? 1 : 0));
            if (inside) {
                const std::size_t i = static_cast<std::size_t>(y) * W + x;
                CHECK(t.reg[0 * hw + i] == doctest::Approx(-cx).epsilon(1e-12));
                CHECK(t.reg[3 * hw + i] == doctest::Approx(std::log(1.6)).epsilon(1e-12));
                CHECK(t.reg[6 * hw + i] == 0.0);
            }
        }
}

TEST_CASE("detection_loss decreases as heads approach the targets") {
    const GridSpec spec = small_grid();
    const std::vector<Box7> gts{make_box(0.4, -0.8, 2.0, 1.2, 0.3)};
    const CellTargets t = assign_targets(gts, spec);
    const LossWeights lw;

    HeadOutput far{FeatureGrid(7, 16, 16), FeatureGrid(2, 16, 16)};
    const DetectionLoss l_far = detection_loss(far, t, lw);

    // near-perfect heads: regression at the targets, confident classification
    HeadOutput near = far;
    const std::size_t hw = 256;
    for (std::size_t i = 0; i < hw; ++i) {
        for (int c = 0; c < 7; ++c) near.reg.data[c * hw + i] = t.reg[c * hw + i];
        near.cls.data[i] = t.labels[i] ? -6.0 : 6.0;
        near.cls.data[hw + i] = t.labels[i] ? 6.0 : -6.0;
    }
    const DetectionLoss l_near = detection_loss(near, t, lw);
    CHECK(l_near.total < 0.05 * l_far.total);
    CHECK(l_near.reg == 0.0);
}
