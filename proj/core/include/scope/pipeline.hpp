#pragma once

#include <cstdint>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include "scope/ccc.hpp"
#include "scope/cia.hpp"
#include "scope/config.hpp"
#include "scope/detection.hpp"
#include "scope/iaf.hpp"
#include "scope/message.hpp"
#include "scope/model.hpp"

namespace scope {

// One agent's view of one frame: poses, observation, encoded features and
// (for collaborators) the transmitted share.
struct AgentFrame {
    int agent_id = 0;
    Pose2D true_pose;
    Pose2D believed_pose;
    ObservationCloud cloud;   // own frame
    FeatureGrid features;     // ego-aligned encoder output
    ConfidenceMap confidence;
    SelectionMask mask;
    PackedMessage message;
    bool has_message = false;
};

struct VolumeReport {
    std::size_t bytes = 0;
    double log2_bytes = 0.0;  // 0 sentinel when bytes == 0
    bool zero = false;
};

VolumeReport volume_from_bytes(std::size_t bytes);
// Sums the exact wire size of every present message.
VolumeReport message_volume(const std::vector<AgentFrame>& frames);

struct FrameMetrics {
    double ap50 = 0.0;
    double ap70 = 0.0;
    std::size_t bytes = 0;
    double log2_bytes = 0.0;
    bool zero_bytes = false;
    // reported, never asserted; excluded from deterministic metric files
    double ms_observe = 0.0, ms_encode = 0.0, ms_cia = 0.0, ms_ccc = 0.0, ms_fuse = 0.0,
           ms_decode = 0.0;
};

struct DcmAttentionDump {
    int scale = 0;
    int heads = 0;
    int samples = 0;  // K*M per head
    ReferencePointSet refs;
    std::vector<double> weights;  // refs x heads x samples
};

struct FrameResult {
    int frame_idx = 0;
    std::vector<Detection> detections;  // ego frame
    std::vector<Box7> gts;              // ego frame, inside the BEV grid
    FrameMetrics metrics;
    std::vector<AgentFrame> agent_frames;      // kept when requested
    std::vector<SpatialMap> fusion_attention;  // kept when requested
    std::vector<DcmAttentionDump> dcm_attention;
};

struct FrameOptions {
    bool keep_agent_frames = false;
    bool want_dumps = false;
};

// ---- per-frame inputs shared by inference and training ----

struct FrameInputs {
    int frame_idx = 0;
    Pose2D ego_pose;
    ObservationCloud ego_cloud;  // ego frame
    FeatureGrid f_current;
    std::vector<FeatureGrid> history;  // aligned to the current ego frame, oldest first
    std::vector<int> collab_ids;
    std::vector<Pose2D> collab_true_pose;
    std::vector<Pose2D> collab_believed_pose;
    std::vector<ObservationCloud> collab_clouds_own;  // each in its own frame
    std::vector<FeatureGrid> collab_feats;            // ego-aligned encodings
    std::vector<Box7> gts;
};

FrameInputs build_frame_inputs(const std::vector<World>& history, int frame_idx,
                               const RunConfig& cfg, const EncoderStack& enc);

// ---- fused forward (the intermediate-fusion path) ----

struct ScopeRec {
    bool bypass = false;
    AggregateRec agg;
    CccRec ccc;
    ImportanceRec imp;
    FuseRecIaf fuse;
    FeatureGrid h, z;
    ConfidenceMap ego_conf;
    std::vector<ConfidenceMap> collab_confs;
    std::vector<FeatureGrid> collab_grids;  // message-reconstructed shares
    FeatureGrid iaf_cat;                    // IAF-off concat input
    std::vector<FeatureGrid> zero_sources;  // placeholders for removed features
    std::vector<int> source_kinds;          // 0 = context, 1 = collab, 2 = ego
    bool ran_cia = false, ran_ccc = false;
};

// Runs context aggregation, collaboration and fusion for the ego agent.
// Collaborator shares are packed and reconstructed through the wire
// format, so the 32-bit transmission precision is part of the forward
// semantics. With no collaborators and an empty history the ego feature
// passes through bit-identically.
FeatureGrid scope_fuse(const FeatureGrid& f_current, const TemporalBuffer& buffer,
                       const std::vector<const FeatureGrid*>& collab_feats,
                       const std::vector<int>& collab_ids, int frame_idx, const RunConfig& cfg,
                       const ModelWeights& w, ScopeRec* rec = nullptr,
                       std::vector<AgentFrame>* collab_frames = nullptr);
void scope_fuse_backward(const RunConfig& cfg, ModelWeights& w, const ScopeRec& rec,
                         const FeatureGrid& grad_fused);

// ---- frame execution ----

FrameResult run_frame(const std::vector<World>& history, int frame_idx, const RunConfig& cfg,
                      const ModelWeights& w, const FrameOptions& opt = {});

// Generates the scenario worlds: one seeded world advanced frame by frame.
std::vector<World> simulate_worlds(const ScenarioConfig& sc, std::uint64_t seed);

// Runs frames tau .. frames-1 of the configured scenario.
std::vector<FrameResult> run_scenario(const RunConfig& cfg, const ModelWeights& w,
                                      const FrameOptions& opt = {});

struct SuiteMetrics {
    double ap50 = 0.0;
    double ap70 = 0.0;
    std::size_t bytes = 0;
    double log2_bytes = 0.0;
    bool zero_bytes = false;
    std::size_t frames = 0;
};

// Pools detections across `n_scenarios` seeded scenarios (seeds base,
// base+1, ...) into one PR curve per IoU threshold.
SuiteMetrics evaluate_scenarios(const RunConfig& cfg, const ModelWeights& w, int n_scenarios);

// ---- toy training ----

struct TrainFrame {
    FrameInputs inputs;
    CellTargets targets;
};

std::vector<TrainFrame> build_train_frames(const RunConfig& cfg, const ModelWeights& w);

DetectionLoss train_forward(const TrainFrame& tf, const RunConfig& cfg, const ModelWeights& w,
                            const LossWeights& lw);
// Forward plus gradient accumulation into the trainable parameters.
DetectionLoss train_forward_backward(const TrainFrame& tf, const RunConfig& cfg, ModelWeights& w,
                                     const LossWeights& lw);

struct TrainResult {
    std::vector<double> loss;  // loss at the weights before each step
    double initial_loss = 0.0;
    double final_loss = 0.0;  // after the last update
};

// Plain full-batch gradient descent over the usable frames of the
// configured scenario. Aborts with TrainError on a non-finite loss.
TrainResult train_toy(const RunConfig& cfg, ModelWeights& w, int steps, double lr,
                      std::ostream* log = nullptr);

// ---- studies ----

struct AblationVariant {
    std::string name;
    RunConfig cfg;
    bool rebuild_weights = false;  // parameter shapes depend on tau / keypoints
};

struct AblationRow {
    std::string name;
    ComponentToggles toggles;
    SuiteMetrics metrics;
};

std::vector<AblationVariant> standard_ablation_battery(const RunConfig& base);
std::vector<AblationRow> ablation_run(const std::vector<AblationVariant>& variants,
                                      const ModelWeights& base_weights, int n_scenarios);

enum class SweepAxis { NoiseXyz, NoiseHeading, Bandwidth };

SweepAxis sweep_axis_from_string(const std::string& s);
std::string to_string(SweepAxis a);

struct SweepPoint {
    double value = 0.0;
    SuiteMetrics metrics;
};

// Noise axes perturb collaborator (and history) poses within the ranges
// sigma_xyz in [0, 0.5] m and sigma_heading in [0, 1] degrees; the
// bandwidth axis drives the selection threshold.
std::vector<SweepPoint> sweep(const RunConfig& cfg, const ModelWeights& w, SweepAxis axis,
                              const std::vector<double>& values, int n_scenarios);

}  // namespace scope
