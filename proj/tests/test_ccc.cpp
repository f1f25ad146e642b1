#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "scope/ccc.hpp"
#include "scope/gradcheck.hpp"
#include "scope/numerics_check.hpp"
#include "scope/rng.hpp"

using namespace scope;

namespace {

FeatureGrid random_grid(int c, int h, int w, std::uint64_t seed, double lo = -1.0, double hi = 1.0) {
    Rng rng(seed);
    FeatureGrid g(c, h, w);
    for (double& v : g.data) v = rng.uniform(lo, hi);
    return g;
}

SpatialMap const_map(int h, int w, double v) { return SpatialMap(h, w, v); }

}  // namespace

TEST_CASE("confidence_map zero case, range and composition oracle") {
    Conv2d gen(2, 4, 1, 1, 0);  // zero weights, zero bias
    const ConfidenceMap flat = confidence_map(FeatureGrid(4, 6, 6), gen);
    for (double v : flat.data) CHECK(v == 0.5);

    gen.init(3, "gen");
    const FeatureGrid g = random_grid(4, 6, 6, 5);
    const ConfidenceMap conf = confidence_map(g, gen);
    for (double v : conf.data) {
        CHECK(v >= 0.0);
        CHECK(v <= 1.0);
    }

    // conv -> sigmoid -> channel max, step by step
    const FeatureGrid logits = gen.forward(g);
    for (int y = 0; y < 6; ++y)
        for (int x = 0; x < 6; ++x) {
            double m = 0.0;
            for (int c = 0; c < 2; ++c)
                m = std::max(m, 1.0 / (1.0 + std::exp(-logits.at(c, y, x))));
            CHECK(conf.at(y, x) == doctest::Approx(m).epsilon(1e-14));
        }
}

TEST_CASE("select_and_pack thresholds") {
    const FeatureGrid g = random_grid(3, 4, 4, 9);
    SpatialMap conf(4, 4);
    Rng rng(10);
    for (double& v : conf.data) v = rng.uniform01();

    auto [mask_all, msg_all] = select_and_pack(g, conf, {0.0, -1}, 1, 0);
    CHECK(mask_all.count() == 16);
    CHECK(msg_all.entries.size() == 16);

    SpatialMap low(4, 4, 0.9);
    auto [mask_none, msg_none] = select_and_pack(g, low, {1.0, -1}, 1, 0);
    CHECK(mask_none.count() == 0);
    CHECK(msg_none.entries.empty());
    CHECK(msg_none.wire_bytes() == kMessageHeaderBytes);

    // exactly 7 cells at or above the default threshold
    SpatialMap seven(4, 4, 0.05);
    for (int i = 0; i < 7; ++i) seven.data[2 * i] = 0.1 + 0.01 * i;
    auto [mask7, msg7] = select_and_pack(g, seven, {0.1, -1}, 1, 0);
    CHECK(mask7.count() == 7);
    CHECK(msg7.entries.size() == 7);

    CHECK_THROWS_AS(select_and_pack(g, conf, {1.5, -1}, 1, 0), ConfigError);
}

TEST_CASE("select_and_pack budget is exactly k-bounded with row-major ties") {
    const FeatureGrid g = random_grid(2, 4, 4, 11);
    SpatialMap conf(4, 4, 0.5);  // all tied
    auto [mask, msg] = select_and_pack(g, conf, {0.1, 5}, 2, 3);
    CHECK(mask.count() == 5);
    REQUIRE(msg.entries.size() == 5);
    // ties broken by row-major order: first five cells
    for (int i = 0; i < 5; ++i) {
        CHECK(msg.entries[i].h == i / 4);
        CHECK(msg.entries[i].w == i % 4);
    }

    // packed values are the f32 round of the shared columns
    for (const MessageEntry& e : msg.entries)
        for (int c = 0; c < 2; ++c)
            CHECK(e.values[c] == static_cast<float>(g.at(c, e.h, e.w)));
}

TEST_CASE("message bytes are non-increasing in threshold") {
    const FeatureGrid g = random_grid(4, 8, 8, 13);
    SpatialMap conf(8, 8);
    Rng rng(14);
    for (double& v : conf.data) v = rng.uniform01();

    std::size_t prev = static_cast<std::size_t>(-1);
    for (int i = 0; i <= 20; ++i) {
        const double thr = i / 20.0;
        auto [mask, msg] = select_and_pack(g, conf, {thr, -1}, 0, 0);
        CHECK(msg.wire_bytes() <= prev);
        prev = msg.wire_bytes();
    }
}

TEST_CASE("message wire format is exact and round-trips") {
    const int C = 3;
    FeatureGrid g(C, 4, 4);
    Rng rng(15);
    for (double& v : g.data) v = rng.uniform(-2.0, 2.0);
    SpatialMap conf(4, 4, 0.0);
    conf.at(1, 2) = 0.9;
    conf.at(3, 0) = 0.8;

    auto [mask, msg] = select_and_pack(g, conf, {0.5, -1}, 42, 1000, 2);
    REQUIRE(msg.entries.size() == 2);
    CHECK(msg.payload_bytes() == 2 * C * 4);
    CHECK(msg.wire_bytes() == kMessageHeaderBytes + 2 * (4 + C * 4));

    const std::vector<std::uint8_t> bytes = serialize_message(msg);
    REQUIRE(bytes.size() == msg.wire_bytes());
    // normative header layout
    CHECK(bytes[0] == 'S');
    CHECK(bytes[1] == 'C');
    CHECK(bytes[2] == 'M');
    CHECK(bytes[3] == 'G');
    CHECK(bytes[4] == 1);     // version u16 lo
    CHECK(bytes[5] == 0);     // version u16 hi
    CHECK(bytes[6] == 42);    // agent id u32
    CHECK(bytes[10] == 232);  // frame 1000 = 0x3E8
    CHECK(bytes[11] == 3);
    CHECK(bytes[14] == 2);  // scale u8
    CHECK(bytes[15] == 2);  // count u32
    // first entry is row-major first: (h=1, w=2)
    CHECK(bytes[19] == 1);
    CHECK(bytes[21] == 2);

    const PackedMessage parsed = parse_message(bytes, C);
    CHECK(parsed.agent_id == 42);
    CHECK(parsed.frame_idx == 1000);
    CHECK(parsed.scale == 2);
    REQUIRE(parsed.entries.size() == 2);
    for (std::size_t e = 0; e < 2; ++e)
        for (int c = 0; c < C; ++c) CHECK(parsed.entries[e].values[c] == msg.entries[e].values[c]);

    const FeatureGrid rec = reconstruct_grid(parsed, C, 4, 4);
    for (int c = 0; c < C; ++c) {
        CHECK(rec.at(c, 1, 2) == static_cast<double>(static_cast<float>(g.at(c, 1, 2))));
        CHECK(rec.at(c, 0, 0) == 0.0);
    }

    std::vector<std::uint8_t> bad = bytes;
    bad[0] = 'X';
    CHECK_THROWS_AS(parse_message(bad, C), IoError);
    std::vector<std::uint8_t> trunc(bytes.begin(), bytes.end() - 3);
    CHECK_THROWS_AS(parse_message(trunc, C), IoError);
}

TEST_CASE("build_pyramid shapes and confidence peaks") {
    CccParams p;
    p.build(4, 3, 2, 3, 1, false, 17);

    const FeatureGrid g = random_grid(4, 64, 64, 18);
    const ConfidenceMap conf = const_map(64, 64, 0.37);
    const ScalePyramid pyr = build_pyramid(g, conf, p);
    REQUIRE(pyr.levels.size() == 3);
    CHECK(pyr.levels[0].feat.height == 64);
    CHECK(pyr.levels[1].feat.height == 32);
    CHECK(pyr.levels[2].feat.height == 16);
    CHECK(pyr.levels[1].feat.width == 32);
    CHECK(pyr.levels[2].feat.width == 16);

    // constant confidence stays constant under max pooling
    for (const ScaleLevel& l : pyr.levels)
        for (double v : l.conf.data) CHECK(v == 0.37);

    // a single peak survives to every level
    ConfidenceMap peak(64, 64, 0.01);
    peak.at(37, 11) = 0.9;
    const ScalePyramid pyr2 = build_pyramid(g, peak, p);
    for (const ScaleLevel& l : pyr2.levels) {
        double m = 0.0;
        for (double v : l.conf.data) m = std::max(m, v);
        CHECK(m == 0.9);
    }

    CHECK_THROWS_AS(build_pyramid(FeatureGrid(4, 2, 2), const_map(2, 2, 0.5), p), ShapeError);
}

TEST_CASE("propose_reference_points thresholding") {
    const ConfidenceMap zero = const_map(4, 4, 0.0);
    CHECK(propose_reference_points({&zero}, 0.1).empty());

    const ConfidenceMap half = const_map(4, 4, 0.5);
    CHECK(propose_reference_points({&half}, 0.1).size() == 16);

    // two constructed maps: the sum crosses the threshold on hand-picked cells
    ConfidenceMap a(3, 3, 0.0), b(3, 3, 0.0);
    a.at(0, 1) = 0.06;
    b.at(0, 1) = 0.05;  // sum 0.11 -> selected
    a.at(1, 1) = 0.04;
    b.at(1, 1) = 0.05;  // sum 0.09 -> not selected
    a.at(2, 2) = 0.10;  // sum 0.10 -> selected (>=)
    const ReferencePointSet refs = propose_reference_points({&a, &b}, 0.1);
    REQUIRE(refs.size() == 2);
    CHECK(refs[0].h == 0);
    CHECK(refs[0].w == 1);
    CHECK(refs[1].h == 2);
    CHECK(refs[1].w == 2);

    const ConfidenceMap odd = const_map(4, 3, 0.5);
    CHECK_THROWS_AS(propose_reference_points({&half, &odd}, 0.1), ShapeError);
}

TEST_CASE("DCM degenerate single-sample case copies the collaborator") {
    const int C = 4;
    DcmParams p;
    p.build(C, 1, 1, 1, false, 23, "t.dcm");
    // identity output projection, offsets already zero-initialized
    std::fill(p.head[0].out_proj.w.val.begin(), p.head[0].out_proj.w.val.end(), 0.0);
    for (int c = 0; c < C; ++c) p.head[0].out_proj.w.val[c * C + c] = 1.0;

    const FeatureGrid ego = random_grid(C, 6, 6, 24);
    const FeatureGrid collab = random_grid(C, 6, 6, 25);
    const ReferencePointSet refs{{2, 3}, {5, 1}};
    const FeatureGrid out = deformable_cross_attention(ego, {&collab}, refs, p);

    for (const RefPoint& q : refs)
        for (int c = 0; c < C; ++c)
            CHECK(out.at(c, q.h, q.w) == doctest::Approx(collab.at(c, q.h, q.w)).epsilon(1e-14));

    // the filling operation: everything else is bit-identical to the ego grid
    for (int c = 0; c < C; ++c)
        for (int y = 0; y < 6; ++y)
            for (int x = 0; x < 6; ++x) {
                const bool is_ref = (y == 2 && x == 3) || (y == 5 && x == 1);
                if (!is_ref) CHECK(out.at(c, y, x) == ego.at(c, y, x));
            }

    // no collaborators: the ego grid passes through unchanged
    const FeatureGrid none = deformable_cross_attention(ego, {}, refs, p);
    for (std::size_t i = 0; i < ego.data.size(); ++i) CHECK(none.data[i] == ego.data[i]);
}

TEST_CASE("DCM matches a naive loop oracle") {
    const int C = 4, M = 3, A = 2, K = 2;
    DcmParams p;
    p.build(C, A, M, K, false, 29, "t.dcm");
    Rng rng(30);
    for (DcmHead& h : p.head) {
        for (double& v : h.offset.w.val) v = rng.uniform(-0.3, 0.3);
        for (double& v : h.offset.b.val) v = rng.uniform(-1.2, 1.2);
    }

    const FeatureGrid ego = random_grid(C, 8, 8, 31);
    const FeatureGrid c0 = random_grid(C, 8, 8, 32);
    const FeatureGrid c1 = random_grid(C, 8, 8, 33);
    const std::vector<const FeatureGrid*> collabs{&c0, &c1};
    const ReferencePointSet refs{{0, 0}, {3, 4}, {7, 7}, {5, 2}};

    DcmRec rec;
    const FeatureGrid out = deformable_cross_attention(ego, collabs, refs, p, &rec);

    // independent reimplementation with naive loops
    auto naive_sample = [&](const FeatureGrid& g, double x, double y, int c) {
        const int x0 = static_cast<int>(std::floor(x)), y0 = static_cast<int>(std::floor(y));
        const double fx = x - x0, fy = y - y0;
        auto get = [&](int yy, int xx) {
            if (xx < 0 || xx >= g.width || yy < 0 || yy >= g.height) return 0.0;
            return g.at(c, yy, xx);
        };
        return (1 - fx) * (1 - fy) * get(y0, x0) + fx * (1 - fy) * get(y0, x0 + 1) +
               (1 - fx) * fy * get(y0 + 1, x0) + fx * fy * get(y0 + 1, x0 + 1);
    };

    for (const RefPoint& q : refs) {
        std::vector<double> qf(C), query(C);
        for (int c = 0; c < C; ++c) qf[c] = ego.at(c, q.h, q.w);
        const double coords[2] = {static_cast<double>(q.h) / 8.0, static_cast<double>(q.w) / 8.0};
        for (int o = 0; o < C; ++o) {
            double acc = p.query.b.val[o];
            for (int i = 0; i < C; ++i) acc += p.query.w.val[o * C + i] * qf[i];
            double pacc = p.pos.b.val[o];
            for (int i = 0; i < 2; ++i) pacc += p.pos.w.val[o * 2 + i] * coords[i];
            query[o] = acc + pacc;
        }
        std::vector<double> expect(C, 0.0);
        for (int a = 0; a < A; ++a) {
            std::vector<double> logits(K * M), weights(K * M);
            std::vector<std::array<double, 2>> offs(K * M);
            for (int k = 0; k < K; ++k)
                for (int m = 0; m < M; ++m) {
                    const int idx = k * M + m;
                    double lg = p.head[a].logit.b.val[idx];
                    for (int i = 0; i < C; ++i) lg += p.head[a].logit.w.val[idx * C + i] * query[i];
                    logits[idx] = lg;
                    for (int d = 0; d < 2; ++d) {
                        double ov = p.head[a].offset.b.val[2 * idx + d];
                        for (int i = 0; i < C; ++i)
                            ov += p.head[a].offset.w.val[(2 * idx + d) * C + i] * query[i];
                        offs[idx][d] = ov;
                    }
                }
            double mx = logits[0];
            for (double v : logits) mx = std::max(mx, v);
            double sum = 0.0;
            for (int i = 0; i < K * M; ++i) {
                weights[i] = std::exp(logits[i] - mx);
                sum += weights[i];
            }
            for (double& v : weights) v /= sum;

            std::vector<double> head_out(C, 0.0);
            for (int k = 0; k < K; ++k)
                for (int m = 0; m < M; ++m) {
                    const int idx = k * M + m;
                    for (int c = 0; c < C; ++c)
                        head_out[c] += weights[idx] * naive_sample(*collabs[k], q.w + offs[idx][0],
                                                                   q.h + offs[idx][1], c);
                }
            for (int o = 0; o < C; ++o) {
                double acc = 0.0;
                for (int i = 0; i < C; ++i) acc += p.head[a].out_proj.w.val[o * C + i] * head_out[i];
                expect[o] += acc;
            }
        }
        for (int c = 0; c < C; ++c) CHECK(std::fabs(out.at(c, q.h, q.w) - expect[c]) < 1e-12);
    }

    // per-head attention weights are a distribution at every reference point
    for (std::size_t qi = 0; qi < refs.size(); ++qi)
        for (int a = 0; a < A; ++a) {
            double sum = 0.0;
            for (int i = 0; i < K * M; ++i) {
                const double w = rec.weights[(qi * A + a) * (K * M) + i];
                CHECK(w >= 0.0);
                sum += w;
            }
            CHECK(std::fabs(sum - 1.0) < 1e-12);
        }
}

TEST_CASE("DCM is equivariant to collaborator permutation with tied predictors") {
    const int C = 4;
    DcmParams p;
    p.build(C, 2, 3, 2, /*tie=*/true, 37, "t.dcm");
    Rng rng(38);
    for (DcmHead& h : p.head)
        for (double& v : h.offset.b.val) v = rng.uniform(-0.8, 0.8);

    const FeatureGrid ego = random_grid(C, 6, 6, 39);
    const FeatureGrid c0 = random_grid(C, 6, 6, 40);
    const FeatureGrid c1 = random_grid(C, 6, 6, 41);
    ReferencePointSet refs;
    for (int y = 0; y < 6; ++y)
        for (int x = 0; x < 6; ++x) refs.push_back({y, x});

    const FeatureGrid ab = deformable_cross_attention(ego, {&c0, &c1}, refs, p);
    const FeatureGrid ba = deformable_cross_attention(ego, {&c1, &c0}, refs, p);
    for (std::size_t i = 0; i < ab.data.size(); ++i)
        CHECK(std::fabs(ab.data[i] - ba.data[i]) < 1e-12);
}

TEST_CASE("masked-out positions contribute exactly zero to DCM samples") {
    const int C = 3;
    DcmParams p;
    p.build(C, 1, 1, 1, false, 43, "t.dcm");
    // identity projection; integer offset landing exactly on a masked cell
    std::fill(p.head[0].out_proj.w.val.begin(), p.head[0].out_proj.w.val.end(), 0.0);
    for (int c = 0; c < C; ++c) p.head[0].out_proj.w.val[c * C + c] = 1.0;
    p.head[0].offset.zero_init();
    p.head[0].offset.b.val = {1.0, 0.0};  // sample at (w+1, h)

    FeatureGrid collab = random_grid(C, 5, 5, 44, 0.5, 1.5);
    SelectionMask mask(5, 5);
    for (auto& v : mask.data) v = 1;
    mask.at(2, 3) = 0;  // the sampled cell
    const FeatureGrid masked = apply_mask(collab, mask);

    const FeatureGrid ego = random_grid(C, 5, 5, 45);
    const ReferencePointSet refs{{2, 2}};
    const FeatureGrid out = deformable_cross_attention(ego, {&masked}, refs, p);
    for (int c = 0; c < C; ++c) CHECK(out.at(c, 2, 2) == 0.0);
}

TEST_CASE("fuse_scales passthrough and composition oracle") {
    // one-scale config with an identity 1x1 conv is the identity
    CccParams p1;
    p1.build(3, 1, 1, 1, 1, false, 47);
    std::fill(p1.fuse.w.val.begin(), p1.fuse.w.val.end(), 0.0);
    for (int c = 0; c < 3; ++c) p1.fuse.w.val[c * 3 + c] = 1.0;
    std::fill(p1.fuse.b.val.begin(), p1.fuse.b.val.end(), 0.0);
    const FeatureGrid z0 = random_grid(3, 8, 8, 48);
    const FeatureGrid same = fuse_scales({z0}, p1);
    for (std::size_t i = 0; i < z0.data.size(); ++i) CHECK(same.data[i] == z0.data[i]);

    // three scales: upsample, concat, 1x1 conv
    CccParams p3;
    p3.build(3, 3, 1, 1, 1, false, 49);
    const std::vector<FeatureGrid> levels{random_grid(3, 8, 8, 50), random_grid(3, 4, 4, 51),
                                          random_grid(3, 2, 2, 52)};
    const FeatureGrid out = fuse_scales(levels, p3);
    CHECK(out.channels == 3);
    CHECK(out.height == 8);
    CHECK(out.width == 8);

    const FeatureGrid u1 = resize_bilinear(levels[1], 8, 8);
    const FeatureGrid u2 = resize_bilinear(levels[2], 8, 8);
    const FeatureGrid cat = concat_channels({&levels[0], &u1, &u2});
    const FeatureGrid expect = p3.fuse.forward(cat);
    for (std::size_t i = 0; i < out.data.size(); ++i)
        CHECK(std::fabs(out.data[i] - expect.data[i]) < 1e-12);

    CHECK_THROWS_AS(fuse_scales({z0}, p3), ShapeError);
}

TEST_CASE("ccc_forward bypasses without collaborators") {
    CccParams p;
    p.build(4, 2, 2, 3, 1, false, 53);
    const FeatureGrid ego = random_grid(4, 8, 8, 54);
    const ConfidenceMap conf = const_map(8, 8, 0.5);
    const FeatureGrid out = ccc_forward(ego, conf, {}, p, {}, 0.1);
    for (std::size_t i = 0; i < ego.data.size(); ++i) CHECK(out.data[i] == ego.data[i]);
}

TEST_CASE("ccc_forward full parameter gradient matches finite differences") {
    const int C = 4;
    CccParams p;
    p.build(C, 2, 2, 2, 1, false, 59);
    Rng rng(60);
    for (DcmParams& d : p.dcm)
        for (DcmHead& h : d.head)
            for (double& v : h.offset.b.val) v = rng.uniform(0.2, 0.45);  // off the bilinear kinks

    const FeatureGrid ego = random_grid(C, 8, 8, 61);
    const FeatureGrid collab_raw = random_grid(C, 8, 8, 62);
    const ConfidenceMap ego_conf = const_map(8, 8, 0.4);
    const ConfidenceMap collab_conf = const_map(8, 8, 0.35);
    const std::vector<CollabInput> collabs{{&collab_raw, &collab_conf}};
    const CccToggles toggles;

    GradProbe probe;
    std::vector<Tensor*> tensors;
    p.visit("ccc", [&](const std::string&, Tensor& t, bool) {
        probe.add(t);
        tensors.push_back(&t);
    });

    const GradCheckReport rep = grad_check(
        [&](const std::vector<double>& x) {
            probe.load(x);
            const FeatureGrid out = ccc_forward(ego, ego_conf, collabs, p, toggles, 0.1);
            double acc = 0.0;
            for (double v : out.data) acc += v;
            return acc;
        },
        [&](const std::vector<double>& x) {
            probe.load(x);
            for (Tensor* t : tensors) t->zero_grad();
            CccRec rec;
            ccc_forward(ego, ego_conf, collabs, p, toggles, 0.1, &rec);
            FeatureGrid ones(C, 8, 8, 1.0);
            ccc_backward(p, rec, ones, nullptr);
            std::vector<double> g;
            for (Tensor* t : tensors) g.insert(g.end(), t->grad.begin(), t->grad.end());
            return g;
        },
        probe.snapshot(), 1e-5);
    INFO("max_rel_err=", rep.max_rel_err, " at ", rep.worst_index);
    CHECK(rep.max_rel_err < 1e-4);
}

TEST_CASE("ccc_forward base fusion path (DCM off) gradient check") {
    const int C = 3;
    CccParams p;
    p.build(C, 2, 1, 1, 2, false, 67);

    const FeatureGrid ego = random_grid(C, 8, 8, 68);
    const FeatureGrid collab_raw = random_grid(C, 8, 8, 69);
    const ConfidenceMap conf = const_map(8, 8, 0.5);
    const std::vector<CollabInput> collabs{{&collab_raw, &conf}};
    const CccToggles toggles{false, false};

    GradProbe probe;
    std::vector<Tensor*> tensors;
    p.visit("ccc", [&](const std::string&, Tensor& t, bool) {
        probe.add(t);
        tensors.push_back(&t);
    });
    const GradCheckReport rep = grad_check(
        [&](const std::vector<double>& x) {
            probe.load(x);
            const FeatureGrid out = ccc_forward(ego, conf, collabs, p, toggles, 0.1);
            double acc = 0.0;
            for (double v : out.data) acc += v;
            return acc;
        },
        [&](const std::vector<double>& x) {
            probe.load(x);
            for (Tensor* t : tensors) t->zero_grad();
            CccRec rec;
            ccc_forward(ego, conf, collabs, p, toggles, 0.1, &rec);
            FeatureGrid ones(C, 8, 8, 1.0);
            ccc_backward(p, rec, ones, nullptr);
            std::vector<double> g;
            for (Tensor* t : tensors) g.insert(g.end(), t->grad.begin(), t->grad.end());
            return g;
        },
        probe.snapshot(), 1e-5);
    CHECK(rep.max_rel_err < 1e-4);
}
