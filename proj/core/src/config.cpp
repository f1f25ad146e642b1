#include "scope/config.hpp"

#include <fstream>
#include <set>
#include <sstream>

#include <json.hpp>

#include "scope/rng.hpp"

namespace scope {

using nlohmann::json;
using ordered_json = nlohmann::ordered_json;

std::string to_string(FusionMode m) {
    switch (m) {
        case FusionMode::Scope: return "scope";
        case FusionMode::NoFusion: return "no_fusion";
        case FusionMode::LateFusion: return "late_fusion";
        default: return "early_fusion";
    }
}

FusionMode fusion_mode_from_string(const std::string& s) {
    if (s == "scope") return FusionMode::Scope;
    if (s == "no_fusion") return FusionMode::NoFusion;
    if (s == "late_fusion") return FusionMode::LateFusion;
    if (s == "early_fusion") return FusionMode::EarlyFusion;
    throw ConfigError("unknown fusion mode: " + s);
}

std::string to_string(FusionStrategy s) {
    switch (s) {
        case FusionStrategy::Adaptive: return "adaptive";
        case FusionStrategy::Summation: return "summation";
        case FusionStrategy::Maximum: return "maximum";
        default: return "average";
    }
}

FusionStrategy fusion_strategy_from_string(const std::string& s) {
    if (s == "adaptive") return FusionStrategy::Adaptive;
    if (s == "summation") return FusionStrategy::Summation;
    if (s == "maximum") return FusionStrategy::Maximum;
    if (s == "average") return FusionStrategy::Average;
    throw ConfigError("unknown fusion strategy: " + s);
}

namespace {

void check_keys(const json& obj, const std::string& ctx, const std::set<std::string>& allowed) {
    if (!obj.is_object()) throw ConfigError(ctx + ": expected an object");
    for (const auto& [key, _] : obj.items())
        if (!allowed.count(key)) throw ConfigError(ctx + ": unknown key '" + key + "'");
}

template <typename T>
T get_or(const json& obj, const char* key, T fallback) {
    if (!obj.contains(key)) return fallback;
    return obj.at(key).get<T>();
}

void parse_world(const json& j, WorldConfig& w) {
    check_keys(j, "scenario.world", {"bounds", "objects", "speed"});
    if (j.contains("bounds")) {
        check_keys(j.at("bounds"), "scenario.world.bounds", {"x", "y"});
        w.x_extent = get_or(j.at("bounds"), "x", w.x_extent);
        w.y_extent = get_or(j.at("bounds"), "y", w.y_extent);
    }
    if (j.contains("objects")) {
        check_keys(j.at("objects"), "scenario.world.objects", {"count"});
        w.object_count = get_or(j.at("objects"), "count", w.object_count);
    }
    if (j.contains("speed")) {
        check_keys(j.at("speed"), "scenario.world.speed", {"min", "max"});
        w.speed_min = get_or(j.at("speed"), "min", w.speed_min);
        w.speed_max = get_or(j.at("speed"), "max", w.speed_max);
    }
}

void parse_agents(const json& j, WorldConfig& w) {
    if (!j.is_array()) throw ConfigError("scenario.agents: expected an array");
    w.agents.clear();
    int id = 0;
    for (const json& a : j) {
        check_keys(a, "scenario.agents[]", {"pose", "range"});
        if (!a.contains("pose") || !a.at("pose").is_array() || a.at("pose").size() != 3)
            throw ConfigError("scenario.agents[]: pose must be [x, y, heading]");
        WorldAgent agent;
        agent.pose = Pose2D(a.at("pose")[0].get<double>(), a.at("pose")[1].get<double>(),
                            a.at("pose")[2].get<double>());
        agent.range = get_or(a, "range", 30.0);
        agent.id = id++;
        w.agents.push_back(agent);
    }
}

void parse_grid(const json& j, GridSpec& g) {
    check_keys(j, "scenario.grid", {"x", "y", "voxel", "channels"});
    if (j.contains("x")) {
        if (!j.at("x").is_array() || j.at("x").size() != 2)
            throw ConfigError("scenario.grid.x: expected [min, max]");
        g.x_min = j.at("x")[0].get<double>();
        g.x_max = j.at("x")[1].get<double>();
    }
    if (j.contains("y")) {
        if (!j.at("y").is_array() || j.at("y").size() != 2)
            throw ConfigError("scenario.grid.y: expected [min, max]");
        g.y_min = j.at("y")[0].get<double>();
        g.y_max = j.at("y")[1].get<double>();
    }
    g.voxel = get_or(j, "voxel", g.voxel);
    g.channels = get_or(j, "channels", g.channels);
    g.validate();
}

void parse_scenario(const json& j, ScenarioConfig& s) {
    check_keys(j, "scenario", {"world", "agents", "grid", "frames", "dt", "seed", "sensor"});
    if (j.contains("world")) parse_world(j.at("world"), s.world);
    if (j.contains("agents")) parse_agents(j.at("agents"), s.world);
    if (j.contains("grid")) parse_grid(j.at("grid"), s.grid);
    s.frames = get_or(j, "frames", s.frames);
    s.dt = get_or(j, "dt", s.dt);
    if (j.contains("seed")) {
        s.seed = j.at("seed").get<std::uint64_t>();
        s.seed_set = true;
    }
    if (j.contains("sensor")) {
        check_keys(j.at("sensor"), "scenario.sensor", {"rays", "beams", "jitter"});
        s.sensor.rays = get_or(j.at("sensor"), "rays", s.sensor.rays);
        s.sensor.beams = get_or(j.at("sensor"), "beams", s.sensor.beams);
        s.sensor.range_jitter = get_or(j.at("sensor"), "jitter", s.sensor.range_jitter);
        if (s.sensor.rays < 1 || s.sensor.beams < 1)
            throw ConfigError("scenario.sensor: rays and beams must be >= 1");
    }
    if (s.frames < 1) throw ConfigError("scenario.frames must be >= 1");
    if (s.dt <= 0.0) throw ConfigError("scenario.dt must be positive");
    if (s.world.agents.empty()) throw ConfigError("scenario.agents: at least one agent required");
}

void parse_model(const json& j, ModelConfig& m) {
    check_keys(j, "model",
               {"tau", "heads", "keypoints", "ccc_scales", "lstm_scales", "lstm_ksize",
                "tie_agents", "iaf_shared_generator", "selection_variant"});
    m.tau = get_or(j, "tau", m.tau);
    m.heads = get_or(j, "heads", m.heads);
    m.keypoints = get_or(j, "keypoints", m.keypoints);
    m.ccc_scales = get_or(j, "ccc_scales", m.ccc_scales);
    m.lstm_scales = get_or(j, "lstm_scales", m.lstm_scales);
    m.lstm_ksize = get_or(j, "lstm_ksize", m.lstm_ksize);
    m.tie_agents = get_or(j, "tie_agents", m.tie_agents);
    m.iaf_shared_generator = get_or(j, "iaf_shared_generator", m.iaf_shared_generator);
    if (j.contains("selection_variant")) {
        const std::string v = j.at("selection_variant").get<std::string>();
        if (v == "sum_pairs") m.selection_variant = SelectionVariant::SumPairs;
        else if (v == "concat4") m.selection_variant = SelectionVariant::Concat4;
        else throw ConfigError("model.selection_variant: expected sum_pairs or concat4");
    }
    if (m.tau < 0) throw ConfigError("model.tau must be >= 0");
    if (m.heads < 1 || m.keypoints < 1) throw ConfigError("model.heads/keypoints must be >= 1");
    if (m.ccc_scales < 1 || m.lstm_scales < 1) throw ConfigError("model scales must be >= 1");
}

void parse_fusion(const json& j, RunConfig& cfg) {
    check_keys(j, "fusion", {"mode", "toggles", "iaf_strategy", "features"});
    if (j.contains("mode")) cfg.mode = fusion_mode_from_string(j.at("mode").get<std::string>());
    if (j.contains("toggles")) {
        const json& t = j.at("toggles");
        check_keys(t, "fusion.toggles", {"pl", "sif", "dcm", "rpp", "iaf"});
        cfg.toggles.pl = get_or(t, "pl", cfg.toggles.pl);
        cfg.toggles.sif = get_or(t, "sif", cfg.toggles.sif);
        cfg.toggles.dcm = get_or(t, "dcm", cfg.toggles.dcm);
        cfg.toggles.rpp = get_or(t, "rpp", cfg.toggles.rpp);
        cfg.toggles.iaf = get_or(t, "iaf", cfg.toggles.iaf);
    }
    if (j.contains("iaf_strategy"))
        cfg.iaf_strategy = fusion_strategy_from_string(j.at("iaf_strategy").get<std::string>());
    if (j.contains("features")) {
        if (!j.at("features").is_array()) throw ConfigError("fusion.features: expected an array");
        cfg.features = {false, false, false};
        for (const json& f : j.at("features")) {
            const std::string v = f.get<std::string>();
            if (v == "context") cfg.features.context = true;
            else if (v == "collab") cfg.features.collab = true;
            else if (v == "ego") cfg.features.ego = true;
            else throw ConfigError("fusion.features: unknown feature '" + v + "'");
        }
        if (!cfg.features.context && !cfg.features.collab && !cfg.features.ego)
            throw ConfigError("fusion.features: at least one source required");
    }
}

}  // namespace

RunConfig parse_run_config(const std::string& json_text) {
    json j;
    try {
        j = json::parse(json_text);
    } catch (const json::parse_error& e) {
        throw ConfigError(std::string("config: invalid JSON: ") + e.what());
    }
    check_keys(j, "config", {"seed", "scenario", "model", "fusion", "comm", "noise", "eval"});

    RunConfig cfg;
    cfg.seed = get_or(j, "seed", cfg.seed);
    if (j.contains("scenario")) parse_scenario(j.at("scenario"), cfg.scenario);
    else throw ConfigError("config: missing 'scenario'");
    if (j.contains("model")) parse_model(j.at("model"), cfg.model);
    if (j.contains("fusion")) parse_fusion(j.at("fusion"), cfg);
    if (j.contains("comm")) {
        const json& c = j.at("comm");
        check_keys(c, "comm", {"threshold", "budget"});
        cfg.comm.threshold = get_or(c, "threshold", cfg.comm.threshold);
        cfg.comm.budget = get_or(c, "budget", cfg.comm.budget);
        if (cfg.comm.threshold < 0.0 || cfg.comm.threshold > 1.0)
            throw ConfigError("comm.threshold outside [0,1]");
    }
    if (j.contains("noise")) {
        const json& n = j.at("noise");
        check_keys(n, "noise",
                   {"sigma_xyz", "sigma_heading", "seed", "apply_to_collaborators",
                    "apply_to_history"});
        cfg.noise.sigma_xyz = get_or(n, "sigma_xyz", cfg.noise.sigma_xyz);
        cfg.noise.sigma_heading = get_or(n, "sigma_heading", cfg.noise.sigma_heading);
        if (n.contains("seed")) {
            cfg.noise.seed = n.at("seed").get<std::uint64_t>();
            cfg.noise.seed_set = true;
        }
        cfg.noise.apply_to_collaborators =
            get_or(n, "apply_to_collaborators", cfg.noise.apply_to_collaborators);
        cfg.noise.apply_to_history = get_or(n, "apply_to_history", cfg.noise.apply_to_history);
        if (cfg.noise.sigma_xyz < 0.0 || cfg.noise.sigma_heading < 0.0)
            throw ConfigError("noise sigmas must be >= 0");
    }
    if (j.contains("eval")) {
        const json& e = j.at("eval");
        check_keys(e, "eval", {"score_threshold", "nms_iou", "ref_threshold", "strict_history"});
        cfg.eval.score_threshold = get_or(e, "score_threshold", cfg.eval.score_threshold);
        cfg.eval.nms_iou = get_or(e, "nms_iou", cfg.eval.nms_iou);
        cfg.eval.ref_threshold = get_or(e, "ref_threshold", cfg.eval.ref_threshold);
        cfg.eval.strict_history = get_or(e, "strict_history", cfg.eval.strict_history);
    }
    return cfg;
}

RunConfig load_run_config(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw ConfigError("cannot open config: " + path);
    std::stringstream ss;
    ss << f.rdbuf();
    return parse_run_config(ss.str());
}

std::string config_canonical_json(const RunConfig& cfg) {
    ordered_json j;
    j["seed"] = cfg.seed;
    ordered_json sc;
    sc["world"]["bounds"] = {{"x", cfg.scenario.world.x_extent}, {"y", cfg.scenario.world.y_extent}};
    sc["world"]["objects"] = {{"count", cfg.scenario.world.object_count}};
    sc["world"]["speed"] = {{"min", cfg.scenario.world.speed_min},
                            {"max", cfg.scenario.world.speed_max}};
    sc["agents"] = ordered_json::array();
    for (const WorldAgent& a : cfg.scenario.world.agents)
        sc["agents"].push_back({{"pose", {a.pose.x, a.pose.y, a.pose.heading}},
                                {"range", a.range}});
    sc["grid"] = {{"x", {cfg.scenario.grid.x_min, cfg.scenario.grid.x_max}},
                  {"y", {cfg.scenario.grid.y_min, cfg.scenario.grid.y_max}},
                  {"voxel", cfg.scenario.grid.voxel},
                  {"channels", cfg.scenario.grid.channels}};
    sc["frames"] = cfg.scenario.frames;
    sc["dt"] = cfg.scenario.dt;
    sc["seed"] = cfg.scenario_seed();
    sc["sensor"] = {{"rays", cfg.scenario.sensor.rays},
                    {"beams", cfg.scenario.sensor.beams},
                    {"jitter", cfg.scenario.sensor.range_jitter}};
    j["scenario"] = sc;
    j["model"] = {{"tau", cfg.model.tau},
                  {"heads", cfg.model.heads},
                  {"keypoints", cfg.model.keypoints},
                  {"ccc_scales", cfg.model.ccc_scales},
                  {"lstm_scales", cfg.model.lstm_scales},
                  {"lstm_ksize", cfg.model.lstm_ksize},
                  {"tie_agents", cfg.model.tie_agents},
                  {"iaf_shared_generator", cfg.model.iaf_shared_generator},
                  {"selection_variant",
                   cfg.model.selection_variant == SelectionVariant::SumPairs ? "sum_pairs"
                                                                             : "concat4"}};
    j["fusion"] = {{"mode", to_string(cfg.mode)},
                   {"toggles",
                    {{"pl", cfg.toggles.pl},
                     {"sif", cfg.toggles.sif},
                     {"dcm", cfg.toggles.dcm},
                     {"rpp", cfg.toggles.rpp},
                     {"iaf", cfg.toggles.iaf}}},
                   {"iaf_strategy", to_string(cfg.iaf_strategy)},
                   {"features",
                    {{"context", cfg.features.context},
                     {"collab", cfg.features.collab},
                     {"ego", cfg.features.ego}}}};
    j["comm"] = {{"threshold", cfg.comm.threshold}, {"budget", cfg.comm.budget}};
    j["noise"] = {{"sigma_xyz", cfg.noise.sigma_xyz},
                  {"sigma_heading", cfg.noise.sigma_heading},
                  {"seed", cfg.noise_seed()},
                  {"apply_to_collaborators", cfg.noise.apply_to_collaborators},
                  {"apply_to_history", cfg.noise.apply_to_history}};
    j["eval"] = {{"score_threshold", cfg.eval.score_threshold},
                 {"nms_iou", cfg.eval.nms_iou},
                 {"ref_threshold", cfg.eval.ref_threshold},
                 {"strict_history", cfg.eval.strict_history}};
    return j.dump();
}

std::uint64_t config_hash(const RunConfig& cfg) {
    const std::string canon = config_canonical_json(cfg);
    return fnv1a64(canon.data(), canon.size());
}

}  // namespace scope
