#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "scope/pipeline.hpp"
#include "scope/report.hpp"

using namespace scope;

namespace {

// compact desk-style configuration for fast frame tests
RunConfig small_cfg(int agents = 2, int objects = 3) {
    RunConfig cfg;
    cfg.seed = 7;
    cfg.scenario.world.x_extent = 12.8;
    cfg.scenario.world.y_extent = 12.8;
    cfg.scenario.world.object_count = objects;
    cfg.scenario.world.speed_min = 0.0;
    cfg.scenario.world.speed_max = 3.0;
    if (agents >= 1) cfg.scenario.world.agents.push_back({Pose2D(-4.0, -4.0, 0.4), 20.0, 0});
    if (agents >= 2) cfg.scenario.world.agents.push_back({Pose2D(4.0, 4.0, -2.2), 20.0, 1});
    if (agents >= 3) cfg.scenario.world.agents.push_back({Pose2D(-4.0, 4.0, -0.8), 20.0, 2});
    cfg.scenario.grid = GridSpec{-6.4, 6.4, -6.4, 6.4, 0.4, 8};
    cfg.scenario.frames = 4;
    cfg.scenario.dt = 0.1;
    cfg.scenario.sensor.rays = 240;
    cfg.scenario.sensor.beams = 4;
    cfg.model.tau = 2;
    cfg.model.heads = 2;
    cfg.model.keypoints = 4;
    cfg.model.lstm_scales = 2;
    return cfg;
}

bool detections_equal(const std::vector<Detection>& a, const std::vector<Detection>& b) {
    if (a.size() != b.size()) return false;
    for (std::size_t i = 0; i < a.size(); ++i) {
        if (a[i].score != b[i].score || a[i].box.cx != b[i].box.cx || a[i].box.cy != b[i].box.cy ||
            a[i].box.cz != b[i].box.cz || a[i].box.length != b[i].box.length ||
            a[i].box.width != b[i].box.width || a[i].box.height != b[i].box.height ||
            a[i].box.yaw != b[i].box.yaw)
            return false;
    }
    return true;
}

std::string read_file(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    std::stringstream ss;
    ss << f.rdbuf();
    return ss.str();
}

}  // namespace

TEST_CASE("volume accounting: sentinel, full-grid arithmetic, halving") {
    const VolumeReport zero = volume_from_bytes(0);
    CHECK(zero.bytes == 0);
    CHECK(zero.zero);
    CHECK(zero.log2_bytes == 0.0);

    // full 100 x 384 mask at 64 channels: payload 100*384*64*4 bytes
    const std::size_t cells = 100 * 384;
    PackedMessage msg;
    msg.channels = 64;
    msg.entries.resize(cells);
    for (auto& e : msg.entries) e.values.resize(64);
    CHECK(msg.payload_bytes() == 9830400);
    CHECK(std::fabs(std::log2(static_cast<double>(msg.payload_bytes())) - 23.23) < 0.01);
    CHECK(msg.wire_bytes() == 9830400 + cells * 4 + kMessageHeaderBytes);

    // halving the selected cells drops the payload log2 by exactly one
    PackedMessage half = msg;
    half.entries.resize(cells / 2);
    CHECK(std::log2(static_cast<double>(msg.payload_bytes())) -
              std::log2(static_cast<double>(half.payload_bytes())) ==
          doctest::Approx(1.0).epsilon(1e-12));

    AgentFrame af;
    af.message = msg;
    af.has_message = true;
    AgentFrame ego;  // no message
    const VolumeReport vol = message_volume({ego, af});
    CHECK(vol.bytes == msg.wire_bytes());
}

TEST_CASE("single-agent scope with tau=0 is bit-identical to no_fusion") {
    RunConfig cfg = small_cfg(1);
    cfg.model.tau = 0;
    cfg.scenario.frames = 2;
    ModelWeights w;
    w.build(cfg);

    const std::vector<World> worlds = simulate_worlds(cfg.scenario, cfg.scenario_seed());
    const std::vector<World> history(worlds.begin(), worlds.begin() + 2);

    RunConfig scope_cfg = cfg;
    scope_cfg.mode = FusionMode::Scope;
    RunConfig nf_cfg = cfg;
    nf_cfg.mode = FusionMode::NoFusion;

    const FrameResult a = run_frame(history, 1, scope_cfg, w);
    const FrameResult b = run_frame(history, 1, nf_cfg, w);
    CHECK(detections_equal(a.detections, b.detections));
    CHECK(a.metrics.ap50 == b.metrics.ap50);
    CHECK(a.metrics.bytes == 0);
    CHECK(a.metrics.zero_bytes);

    // the same holds with every component toggled off
    RunConfig base_cfg = scope_cfg;
    base_cfg.toggles = {false, false, false, false, false};
    const FrameResult c = run_frame(history, 1, base_cfg, w);
    CHECK(detections_equal(c.detections, b.detections));
}

TEST_CASE("run_frame is deterministic for a fixed config and seed") {
    const RunConfig cfg = small_cfg();
    ModelWeights w;
    w.build(cfg);

    const std::vector<FrameResult> a = run_scenario(cfg, w);
    const std::vector<FrameResult> b = run_scenario(cfg, w);
    REQUIRE(a.size() == b.size());
    for (std::size_t i = 0; i < a.size(); ++i) {
        CHECK(detections_equal(a[i].detections, b[i].detections));
        CHECK(a[i].metrics.ap50 == b[i].metrics.ap50);
        CHECK(a[i].metrics.ap70 == b[i].metrics.ap70);
        CHECK(a[i].metrics.bytes == b[i].metrics.bytes);
    }
}

TEST_CASE("all fusion modes run and report volume correctly") {
    RunConfig cfg = small_cfg();
    ModelWeights w;
    w.build(cfg);

    for (FusionMode m : {FusionMode::Scope, FusionMode::NoFusion, FusionMode::LateFusion,
                         FusionMode::EarlyFusion}) {
        RunConfig c = cfg;
        c.mode = m;
        const std::vector<FrameResult> frames = run_scenario(c, w);
        CHECK(frames.size() == 2);  // frames 2 and 3 of 4 with tau = 2
        for (const FrameResult& fr : frames) {
            CHECK(fr.metrics.ap50 >= 0.0);
            CHECK(fr.metrics.ap50 <= 1.0);
            CHECK(fr.metrics.zero_bytes == (fr.metrics.bytes == 0));
            if (m == FusionMode::NoFusion) CHECK(fr.metrics.bytes == 0);
            if (m == FusionMode::EarlyFusion) CHECK(fr.metrics.bytes > 0);
        }
    }
}

TEST_CASE("raw clouds cost more than masked features on the desk scenario") {
    // desk-scale configuration: 64x64 grid at 16 channels, dense sensor
    RunConfig cfg;
    cfg.seed = 7;
    cfg.scenario.world.x_extent = 25.6;
    cfg.scenario.world.y_extent = 25.6;
    cfg.scenario.world.object_count = 5;
    cfg.scenario.world.speed_max = 5.0;
    cfg.scenario.world.agents = {{Pose2D(-8.0, -8.0, 0.5), 30.0, 0},
                                 {Pose2D(8.0, 8.0, -2.0), 30.0, 1}};
    cfg.scenario.grid = GridSpec{-12.8, 12.8, -12.8, 12.8, 0.4, 16};
    cfg.scenario.frames = 3;
    cfg.model.tau = 2;
    ModelWeights w;
    w.build(cfg);

    const std::vector<World> worlds = simulate_worlds(cfg.scenario, cfg.scenario_seed());

    RunConfig scope_cfg = cfg;
    scope_cfg.mode = FusionMode::Scope;
    RunConfig early_cfg = cfg;
    early_cfg.mode = FusionMode::EarlyFusion;

    const FrameResult s = run_frame(worlds, 2, scope_cfg, w);
    const FrameResult e = run_frame(worlds, 2, early_cfg, w);
    INFO("scope bytes=", s.metrics.bytes, " early bytes=", e.metrics.bytes);
    CHECK(s.metrics.bytes > 0);
    CHECK(e.metrics.bytes > s.metrics.bytes);
}

TEST_CASE("history handling: shorter than tau bypasses, strict flag throws") {
    RunConfig cfg = small_cfg();
    cfg.model.tau = 2;
    ModelWeights w;
    w.build(cfg);
    const std::vector<World> worlds = simulate_worlds(cfg.scenario, cfg.scenario_seed());

    // only the current world: effective tau is zero, still runs
    const std::vector<World> shallow{worlds[0]};
    const FrameResult fr = run_frame(shallow, 0, cfg, w);
    CHECK(fr.metrics.ap50 >= 0.0);

    RunConfig strict = cfg;
    strict.eval.strict_history = true;
    CHECK_THROWS_AS(run_frame(shallow, 0, strict, w), ConfigError);
}

TEST_CASE("training: zero learning rate keeps the loss constant") {
    RunConfig cfg = small_cfg();
    cfg.scenario.frames = 3;  // one usable frame
    ModelWeights w;
    w.build(cfg);

    const TrainResult res = train_toy(cfg, w, 3, 0.0);
    REQUIRE(res.loss.size() == 3);
    CHECK(res.loss[0] == res.loss[1]);
    CHECK(res.loss[1] == res.loss[2]);
    CHECK(res.final_loss == res.loss[0]);
}

TEST_CASE("training loss gradient matches finite differences on sampled parameters") {
    RunConfig cfg = small_cfg();
    cfg.scenario.world.object_count = 1;
    cfg.scenario.frames = 3;
    cfg.model.tau = 1;
    cfg.scenario.grid = GridSpec{-3.2, 3.2, -3.2, 3.2, 0.4, 6};
    cfg.scenario.world.x_extent = 6.4;
    cfg.scenario.world.y_extent = 6.4;
    cfg.scenario.world.agents = {{Pose2D(-2.0, -2.0, 0.7), 12.0, 0},
                                 {Pose2D(2.0, 2.0, -2.0), 12.0, 1}};
    cfg.scenario.sensor.rays = 180;
    cfg.scenario.sensor.beams = 2;
    ModelWeights w;
    w.build(cfg);
    // fractional sampling offsets keep the check away from bilinear kinks
    Rng orng(99);
    for (DcmParams& d : w.ccc.dcm)
        for (DcmHead& h : d.head)
            for (double& v : h.offset.b.val) v = orng.uniform(0.2, 0.45);

    const LossWeights lw;
    const std::vector<TrainFrame> frames = build_train_frames(cfg, w);
    REQUIRE(frames.size() == 1);
    const TrainFrame& tf = frames[0];
    REQUIRE(tf.targets.fg_count > 0);

    NamedParams trainable = w.trainable_params();
    for (auto& [name, t] : trainable) t->zero_grad();
    train_forward_backward(tf, cfg, w, lw);

    Rng rng(123);
    const double eps = 1e-5;
    int checked = 0;
    double max_rel = 0.0;
    while (checked < 10) {
        auto& [name, t] = trainable[rng.next_u64() % trainable.size()];
        if (t->val.empty()) continue;
        const std::size_t i = rng.next_u64() % t->val.size();
        const double orig = t->val[i];
        t->val[i] = orig + eps;
        const double fp = train_forward(tf, cfg, w, lw).total;
        t->val[i] = orig - eps;
        const double fm = train_forward(tf, cfg, w, lw).total;
        t->val[i] = orig;
        const double numeric = (fp - fm) / (2.0 * eps);
        const double analytic = t->grad[i];
        const double rel = std::fabs(analytic - numeric) /
                           std::max({std::fabs(analytic), std::fabs(numeric), 1e-8});
        INFO(name, "[", i, "]: analytic=", analytic, " numeric=", numeric);
        CHECK(rel < 1e-3);
        max_rel = std::max(max_rel, rel);
        ++checked;
    }
    INFO("max_rel=", max_rel);
}

TEST_CASE("ablation battery schema and determinism") {
    RunConfig cfg = small_cfg();
    cfg.scenario.frames = 3;
    ModelWeights w;
    w.build(cfg);

    const std::vector<AblationVariant> battery = standard_ablation_battery(cfg);
    REQUIRE(battery.size() >= 15);
    CHECK(battery.front().name == "base");

    // run a focused subset: base, full, and a duplicate of full
    std::vector<AblationVariant> subset{battery[0], battery[5], battery[5]};
    const std::vector<AblationRow> rows = ablation_run(subset, w, 1);
    REQUIRE(rows.size() == 3);
    CHECK(rows[0].name == "base");
    CHECK_FALSE(rows[0].toggles.pl);
    CHECK(rows[1].toggles.pl);
    CHECK(rows[1].toggles.iaf);
    // duplicate variants give identical rows
    CHECK(rows[1].metrics.ap50 == rows[2].metrics.ap50);
    CHECK(rows[1].metrics.ap70 == rows[2].metrics.ap70);
    CHECK(rows[1].metrics.bytes == rows[2].metrics.bytes);
}

TEST_CASE("sweep axes: identity at zero noise, extremes on bandwidth") {
    RunConfig cfg = small_cfg();
    cfg.scenario.frames = 3;
    ModelWeights w;
    w.build(cfg);

    // a zero-noise grid point reproduces the plain run
    const SuiteMetrics plain = evaluate_scenarios(cfg, w, 1);
    const std::vector<SweepPoint> noise = sweep(cfg, w, SweepAxis::NoiseXyz, {0.0}, 1);
    REQUIRE(noise.size() == 1);
    CHECK(noise[0].metrics.ap50 == plain.ap50);
    CHECK(noise[0].metrics.bytes == plain.bytes);

    // bandwidth extremes: threshold 0 shares everything, threshold 1 nothing
    const std::vector<SweepPoint> bw = sweep(cfg, w, SweepAxis::Bandwidth, {0.0, 1.0}, 1);
    REQUIRE(bw.size() == 2);
    CHECK(bw[0].metrics.bytes > bw[1].metrics.bytes);
    const std::size_t hw = 32 * 32;
    // threshold 0: both frames share the full grid from the one collaborator
    CHECK(bw[0].metrics.bytes == 2 * (kMessageHeaderBytes + hw * (4 + 8 * 4)));
    // threshold 1: nothing selected, nothing transmitted
    CHECK(bw[1].metrics.bytes == 0);
    CHECK(bw[1].metrics.zero_bytes);

    CHECK_THROWS_AS(sweep(cfg, w, SweepAxis::NoiseXyz, {0.7}, 1), ConfigError);
    CHECK_THROWS_AS(sweep(cfg, w, SweepAxis::NoiseHeading, {1.5}, 1), ConfigError);
    CHECK_THROWS_AS(sweep(cfg, w, SweepAxis::Bandwidth, {}, 1), ConfigError);
}

TEST_CASE("bandwidth sweep volume is non-increasing in the threshold") {
    RunConfig cfg = small_cfg();
    cfg.scenario.frames = 3;
    ModelWeights w;
    w.build(cfg);

    std::vector<double> grid;
    for (int i = 0; i <= 20; ++i) grid.push_back(i / 20.0);
    const std::vector<SweepPoint> pts = sweep(cfg, w, SweepAxis::Bandwidth, grid, 1);
    for (std::size_t i = 1; i < pts.size(); ++i)
        CHECK(pts[i].metrics.bytes <= pts[i - 1].metrics.bytes);
}

TEST_CASE("metric files are deterministic and carry provenance") {
    RunConfig cfg = small_cfg();
    cfg.scenario.frames = 3;
    ModelWeights w;
    w.build(cfg);
    const std::vector<FrameResult> frames = run_scenario(cfg, w);

    const std::string p1 = "/tmp/scope_test_metrics1.csv";
    const std::string p2 = "/tmp/scope_test_metrics2.csv";
    write_metrics_csv(p1, cfg, w.hash(), frames);
    write_metrics_csv(p2, cfg, w.hash(), frames);
    const std::string a = read_file(p1), b = read_file(p2);
    CHECK(a == b);
    CHECK(a.rfind("# config_hash=", 0) == 0);
    CHECK(a.find("weights_hash=") != std::string::npos);
    CHECK(a.find("seed=7") != std::string::npos);

    const std::string pj = "/tmp/scope_test_metrics.json";
    write_metrics_json(pj, cfg, w.hash(), frames);
    const std::string j = read_file(pj);
    CHECK(j.find("\"provenance\"") != std::string::npos);

    write_detections_csv("/tmp/scope_test_dets.csv", cfg, w.hash(), frames);
    const std::string d = read_file("/tmp/scope_test_dets.csv");
    CHECK(d.find("frame,score,cx,cy,cz,length,width,height,yaw") != std::string::npos);

    for (const char* p : {"/tmp/scope_test_metrics1.csv", "/tmp/scope_test_metrics2.csv",
                          "/tmp/scope_test_metrics.json", "/tmp/scope_test_dets.csv"})
        std::remove(p);
}

TEST_CASE("attention dumps are emitted when requested") {
    RunConfig cfg = small_cfg();
    cfg.scenario.frames = 3;
    ModelWeights w;
    w.build(cfg);

    FrameOptions opt;
    opt.want_dumps = true;
    const std::vector<FrameResult> frames = run_scenario(cfg, w, opt);
    REQUIRE(!frames.empty());
    const FrameResult& fr = frames.front();
    REQUIRE(fr.fusion_attention.size() == 3);
    for (const SpatialMap& m : fr.fusion_attention) {
        CHECK(m.height == 32);
        CHECK(m.width == 32);
    }
    REQUIRE(!fr.dcm_attention.empty());
    for (const DcmAttentionDump& d : fr.dcm_attention)
        CHECK(d.weights.size() == d.refs.size() * d.heads * d.samples);

    write_frame_dumps("/tmp", fr);
    const std::string side = read_file("/tmp/frame_2_fusion_attention.json");
    CHECK(side.find("\"shape\"") != std::string::npos);
    std::remove("/tmp/frame_2_fusion_attention.bin");
    std::remove("/tmp/frame_2_fusion_attention.json");
    for (const DcmAttentionDump& d : fr.dcm_attention) {
        std::remove(("/tmp/frame_2_dcm_scale" + std::to_string(d.scale) + ".bin").c_str());
        std::remove(("/tmp/frame_2_dcm_scale" + std::to_string(d.scale) + ".json").c_str());
    }
}
