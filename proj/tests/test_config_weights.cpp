#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstdio>
#include <fstream>

#include "scope/config.hpp"
#include "scope/model.hpp"
#include "scope/weights.hpp"

using namespace scope;

namespace {

const char* kMinimalConfig = R"json({
  "seed": 7,
  "scenario": {
    "world": {
      "bounds": {"x": 25.6, "y": 25.6},
      "objects": {"count": 5},
      "speed": {"min": 0.0, "max": 5.0}
    },
    "agents": [
      {"pose": [-8.0, -8.0, 0.5], "range": 30.0},
      {"pose": [8.0, 8.0, -2.0], "range": 30.0}
    ],
    "grid": {"x": [-12.8, 12.8], "y": [-12.8, 12.8], "voxel": 0.4, "channels": 16},
    "frames": 4,
    "dt": 0.1
  }
})json";

std::string temp_path(const char* name) {
    return std::string("/tmp/scope_test_") + name;
}

}  // namespace

TEST_CASE("config defaults follow the reference settings") {
    const RunConfig cfg = parse_run_config(kMinimalConfig);
    CHECK(cfg.seed == 7);
    CHECK(cfg.model.tau == 2);
    CHECK(cfg.model.heads == 8);
    CHECK(cfg.model.keypoints == 15);
    CHECK(cfg.comm.threshold == 0.1);
    CHECK(cfg.eval.ref_threshold == 0.1);
    CHECK(cfg.mode == FusionMode::Scope);
    CHECK(cfg.iaf_strategy == FusionStrategy::Adaptive);
    CHECK(cfg.toggles.pl);
    CHECK(cfg.toggles.iaf);
    CHECK(cfg.scenario_seed() == 7);  // falls back to the run seed
    CHECK(cfg.noise_seed() == 7);
    CHECK(cfg.scenario.grid.height() == 64);
    CHECK(cfg.collaborator_slots() == 1);
}

TEST_CASE("config rejects unknown keys at every level") {
    CHECK_THROWS_AS(parse_run_config(R"({"seed": 1, "scenari": {}})"), ConfigError);

    std::string bad1 = kMinimalConfig;
    bad1.replace(bad1.find("\"frames\""), 8, "\"framez\"");
    CHECK_THROWS_AS(parse_run_config(bad1), ConfigError);

    std::string bad2 = kMinimalConfig;
    bad2.replace(bad2.find("\"count\""), 7, "\"n\"");
    CHECK_THROWS_AS(parse_run_config(bad2), ConfigError);

    CHECK_THROWS_AS(parse_run_config("{not json"), ConfigError);
    CHECK_THROWS_AS(parse_run_config(R"({"seed": 1})"), ConfigError);  // missing scenario
}

TEST_CASE("config validates ranges") {
    const char* no_agents = R"({"seed": 1, "scenario": {"agents": [], "frames": 3}})";
    CHECK_THROWS_AS(parse_run_config(no_agents), ConfigError);

    std::string bad_grid = kMinimalConfig;
    bad_grid.replace(bad_grid.find("\"voxel\": 0.4"), 12, "\"voxel\": 0.3");
    CHECK_THROWS_AS(parse_run_config(bad_grid), ConfigError);
}

TEST_CASE("config hash is stable and sensitive") {
    const RunConfig a = parse_run_config(kMinimalConfig);
    const RunConfig b = parse_run_config(kMinimalConfig);
    CHECK(config_hash(a) == config_hash(b));

    RunConfig c = a;
    c.comm.threshold = 0.2;
    CHECK(config_hash(c) != config_hash(a));
}

TEST_CASE("weight snapshot round trip preserves every value") {
    const RunConfig cfg = parse_run_config(kMinimalConfig);
    ModelWeights w1, w2;
    w1.build(cfg);
    w2.build(cfg);

    // same seed: identical initialization
    CHECK(w1.hash() == w2.hash());

    RunConfig cfg2 = cfg;
    cfg2.seed = 8;
    ModelWeights w3;
    w3.build(cfg2);
    CHECK(w3.hash() != w1.hash());

    const std::string path = temp_path("weights.scwt");
    save_weights(path, w1.named_params());
    // perturb, then restore from the snapshot
    for (auto& [name, t] : w3.named_params()) (void)name;
    load_weights(path, w3.named_params());
    CHECK(w3.hash() == w1.hash());
    std::remove(path.c_str());
}

TEST_CASE("weight snapshot layout is the normative container") {
    Tensor t({2, 3});
    for (int i = 0; i < 6; ++i) t.val[i] = i + 0.5;
    NamedParams params{{"layer.w", &t}};
    const std::vector<std::uint8_t> bytes = serialize_weights(params);

    // magic, version u32
    CHECK(bytes[0] == 'S');
    CHECK(bytes[1] == 'C');
    CHECK(bytes[2] == 'W');
    CHECK(bytes[3] == 'T');
    CHECK(bytes[4] == 1);
    CHECK(bytes[5] == 0);
    // name length u32 = 7, then the name
    CHECK(bytes[8] == 7);
    CHECK(std::string(bytes.begin() + 12, bytes.begin() + 19) == "layer.w");
    // rank u32 = 2, dims u64 = {2, 3}
    CHECK(bytes[19] == 2);
    CHECK(bytes[23] == 2);
    CHECK(bytes[31] == 3);
    // then 6 little-endian doubles
    CHECK(bytes.size() == 39 + 6 * 8);
    double v0;
    std::memcpy(&v0, bytes.data() + 39, 8);
    CHECK(v0 == 0.5);
}

TEST_CASE("weight snapshot load rejects malformed streams") {
    Tensor t({2});
    t.val = {1.0, 2.0};
    NamedParams params{{"p", &t}};
    const std::string path = temp_path("weights_bad.scwt");
    save_weights(path, params);

    Tensor wrong_shape({3});
    NamedParams bad{{"p", &wrong_shape}};
    CHECK_THROWS_AS(load_weights(path, bad), IoError);

    Tensor missing({2});
    NamedParams miss{{"q", &missing}};
    CHECK_THROWS_AS(load_weights(path, miss), IoError);

    {
        std::ofstream f(path, std::ios::binary);
        f << "SCXT garbage";
    }
    CHECK_THROWS_AS(load_weights(path, params), IoError);
    std::remove(path.c_str());
}

TEST_CASE("parameter initialization is independent of visit order") {
    const RunConfig cfg = parse_run_config(kMinimalConfig);
    ModelWeights w;
    w.build(cfg);

    // the name-keyed streams give each tensor its own reproducible draw
    Conv2d probe(2, 16, 1, 1, 0);
    probe.init(cfg.seed, "dec.cls");
    for (std::size_t i = 0; i < probe.w.val.size(); ++i)
        CHECK(probe.w.val[i] == w.dec_cls.w.val[i]);
}

TEST_CASE("model trainable set excludes the frozen encoder") {
    const RunConfig cfg = parse_run_config(kMinimalConfig);
    ModelWeights w;
    w.build(cfg);
    for (const auto& [name, t] : w.trainable_params())
        CHECK(name.rfind("encoder", 0) == std::string::npos);
    bool encoder_in_snapshot = false;
    for (const auto& [name, t] : w.named_params())
        if (name.rfind("encoder", 0) == 0) encoder_in_snapshot = true;
    CHECK(encoder_in_snapshot);
}
