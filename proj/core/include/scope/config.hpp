#pragma once

#include <cstdint>
#include <string>

#include "scope/ccc.hpp"
#include "scope/cia.hpp"
#include "scope/geometry.hpp"
#include "scope/iaf.hpp"
#include "scope/scenario.hpp"

namespace scope {

enum class FusionMode { Scope, NoFusion, LateFusion, EarlyFusion };

std::string to_string(FusionMode m);
FusionMode fusion_mode_from_string(const std::string& s);
std::string to_string(FusionStrategy s);
FusionStrategy fusion_strategy_from_string(const std::string& s);

struct ComponentToggles {
    bool pl = true;   // pyramid LSTM
    bool sif = true;  // selective information filtering
    bool dcm = true;  // deformable cross-attention
    bool rpp = true;  // reference point proposal
    bool iaf = true;  // importance-aware fusion
};

// Which sources enter the final fusion (feature-removal studies).
struct FeatureSet {
    bool context = true;  // H
    bool collab = true;   // Z
    bool ego = true;      // F
};

struct ModelConfig {
    int tau = 2;
    int heads = 8;
    int keypoints = 15;
    int ccc_scales = 3;
    int lstm_scales = 3;
    int lstm_ksize = 3;
    bool tie_agents = false;
    bool iaf_shared_generator = true;
    SelectionVariant selection_variant = SelectionVariant::SumPairs;
};

struct ScenarioConfig {
    WorldConfig world;
    GridSpec grid;
    int frames = 10;
    double dt = 0.1;
    std::uint64_t seed = 0;
    bool seed_set = false;  // falls back to the run seed when unset
    SensorParams sensor;
};

struct CommConfig {
    double threshold = 0.1;
    long long budget = -1;
};

struct NoiseConfig {
    double sigma_xyz = 0.0;      // meters
    double sigma_heading = 0.0;  // degrees
    std::uint64_t seed = 0;
    bool seed_set = false;
    bool apply_to_collaborators = true;
    bool apply_to_history = true;
};

struct EvalConfig {
    double score_threshold = 0.25;
    double nms_iou = 0.15;
    double ref_threshold = 0.1;
    bool strict_history = false;
};

struct RunConfig {
    std::uint64_t seed = 7;
    ScenarioConfig scenario;
    ModelConfig model;
    FusionMode mode = FusionMode::Scope;
    ComponentToggles toggles;
    FusionStrategy iaf_strategy = FusionStrategy::Adaptive;
    FeatureSet features;
    CommConfig comm;
    NoiseConfig noise;
    EvalConfig eval;

    std::uint64_t scenario_seed() const { return scenario.seed_set ? scenario.seed : seed; }
    std::uint64_t noise_seed() const { return noise.seed_set ? noise.seed : seed; }
    int collaborator_slots() const {
        return std::max(1, static_cast<int>(scenario.world.agents.size()) - 1);
    }
};

// Strict parser: unknown keys anywhere in the document are rejected.
RunConfig parse_run_config(const std::string& json_text);
RunConfig load_run_config(const std::string& path);

// Canonical dump (sorted keys, fixed formatting); basis of the config hash
// recorded in every output header.
std::string config_canonical_json(const RunConfig& cfg);
std::uint64_t config_hash(const RunConfig& cfg);

}  // namespace scope
