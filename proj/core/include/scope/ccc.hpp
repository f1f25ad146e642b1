#pragma once

#include <cstdint>
#include <utility>
#include <vector>

#include "scope/grid.hpp"
#include "scope/message.hpp"
#include "scope/ops.hpp"
#include "scope/tensor.hpp"

namespace scope {

using ConfidenceMap = SpatialMap;  // values in [0,1]

struct SelectionMask {
    int height = 0;
    int width = 0;
    std::vector<std::uint8_t> data;  // 0/1

    SelectionMask() = default;
    SelectionMask(int h, int w) : height(h), width(w), data(static_cast<std::size_t>(h) * w, 0) {}
    std::uint8_t& at(int y, int x) { return data[static_cast<std::size_t>(y) * width + x]; }
    std::uint8_t at(int y, int x) const { return data[static_cast<std::size_t>(y) * width + x]; }
    std::size_t count() const;
};

// Classification-decoder confidence: conv, sigmoid, channel max.
ConfidenceMap confidence_map(const FeatureGrid& grid, const Conv2d& gen);

struct ConfidencePolicy {
    double threshold = 0.1;
    long long budget = -1;  // top-k cap on selected cells; < 0 disables
};

// Threshold (then optional top-k by confidence, ties by row-major order)
// and pack the selected feature columns.
std::pair<SelectionMask, PackedMessage> select_and_pack(const FeatureGrid& grid,
                                                        const ConfidenceMap& conf,
                                                        const ConfidencePolicy& policy,
                                                        std::uint32_t agent_id,
                                                        std::uint32_t frame_idx,
                                                        std::uint8_t scale = 0);

// Applies a selection mask: kept columns keep their values, the rest zero.
FeatureGrid apply_mask(const FeatureGrid& grid, const SelectionMask& mask);

// ---- multi-scale structures ----

struct ScaleLevel {
    FeatureGrid feat;
    ConfidenceMap conf;
};

struct ScalePyramid {
    std::vector<ScaleLevel> levels;  // level 0 is input resolution
};

struct RefPoint {
    int h = 0;
    int w = 0;
};
using ReferencePointSet = std::vector<RefPoint>;

struct DcmHead {
    Linear offset;    // query -> 2*K*M cell offsets (zero-initialized)
    Linear logit;     // query -> K*M attention logits
    Linear out_proj;  // C -> C head projection
};

struct DcmParams {
    int channels = 16;
    int heads = 8;      // A
    int keypoints = 15; // M
    int k_max = 1;      // collaborator slots the predictors are sized for
    bool tie_agents = false;  // share offset/logit predictors across collaborators

    Linear query;  // C -> C
    Linear pos;    // (h/H, w/W) -> C
    std::vector<DcmHead> head;

    void build(int channels_, int heads_, int keypoints_, int k_max_, bool tie,
               std::uint64_t seed, const std::string& name);
    void visit(const std::string& prefix, const ParamFn& fn);
    int slots() const { return tie_agents ? 1 : k_max; }
};

struct CccToggles {
    bool dcm = true;  // deformable cross-attention (off: concat + 1x1 fusion)
    bool rpp = true;  // reference point proposal (off: attend everywhere)
};

struct CccParams {
    int channels = 16;
    int scales = 3;

    std::vector<Conv2d> down;       // scales-1 stride-2 feature downsamplers
    std::vector<DcmParams> dcm;     // one per scale
    Conv2d fuse;                    // 1x1 (scales*C -> C)
    std::vector<Conv2d> base_fuse;  // per scale, DCM-off path ((k_max+1)C -> C)

    void build(int channels_, int scales_, int heads, int keypoints, int k_max, bool tie,
               std::uint64_t seed);
    void visit(const std::string& prefix, const ParamFn& fn);
};

// ---- operations ----

struct PyramidRec {
    std::vector<FeatureGrid> feat_in;  // inputs of each down conv
};

// Features are coarsened by stride-2 convs, confidence maps by 2x2 max
// pooling so peaks survive to every level.
ScalePyramid build_pyramid(const FeatureGrid& grid, const ConfidenceMap& conf,
                           const CccParams& p, PyramidRec* rec = nullptr);
void build_pyramid_backward(CccParams& p, const PyramidRec& rec,
                            const std::vector<FeatureGrid>& grad_levels, FeatureGrid* grad_in);

// Positions where the elementwise sum of the given confidence maps
// reaches the threshold, row-major.
ReferencePointSet propose_reference_points(const std::vector<const ConfidenceMap*>& confs,
                                           double threshold);

struct DcmRec {
    const FeatureGrid* ego = nullptr;
    std::vector<const FeatureGrid*> collabs;
    ReferencePointSet refs;
    int k_used = 0;
    // per reference point: query vector (C), then per head: softmax
    // weights (K*M) and sampling offsets (K*M x 2) in cell units
    std::vector<double> query;
    std::vector<double> weights;
    std::vector<double> offsets;
};

// Eq-style deformable cross-attention: per reference point a query from
// the ego feature plus a position embedding predicts per-head sampling
// offsets and attention logits; collaborator features are bilinearly
// sampled at q + offset, softmax-combined per head and projected. The
// result overwrites the ego grid at the reference points only.
FeatureGrid deformable_cross_attention(const FeatureGrid& ego,
                                       const std::vector<const FeatureGrid*>& collabs,
                                       const ReferencePointSet& refs, const DcmParams& p,
                                       DcmRec* rec = nullptr);
void deformable_cross_attention_backward(DcmParams& p, const DcmRec& rec,
                                         const FeatureGrid& grad_out, FeatureGrid* grad_ego,
                                         std::vector<FeatureGrid>* grad_collabs);

struct FuseRec {
    FeatureGrid concat_in;
    std::vector<std::pair<int, int>> level_dims;  // pre-upsample (h, w)
};

// Upsamples every level to level-0 resolution, concatenates channels and
// fuses with a 1x1 conv.
FeatureGrid fuse_scales(const std::vector<FeatureGrid>& z_levels, const CccParams& p,
                        FuseRec* rec = nullptr);
void fuse_scales_backward(CccParams& p, const FuseRec& rec, const FeatureGrid& grad_out,
                          std::vector<FeatureGrid>* grad_levels);

// ---- component orchestration ----

struct CollabInput {
    const FeatureGrid* feat = nullptr;  // reconstructed share, ego-aligned
    const ConfidenceMap* conf = nullptr;
};

struct CccRec {
    bool bypass = false;
    CccToggles toggles;
    PyramidRec ego_pyr_rec;
    std::vector<PyramidRec> collab_pyr_recs;
    ScalePyramid ego_pyr;
    std::vector<ScalePyramid> collab_pyrs;
    std::vector<DcmRec> dcm_recs;            // per scale (DCM path)
    std::vector<FeatureGrid> base_concat;    // per scale (base path)
    std::vector<ReferencePointSet> refs;     // per scale
    FuseRec fuse_rec;
    std::vector<FeatureGrid> z_levels;
};

// Full collaboration pass producing the collaboration feature. With no
// collaborators the ego feature passes through unchanged.
FeatureGrid ccc_forward(const FeatureGrid& ego, const ConfidenceMap& ego_conf,
                        const std::vector<CollabInput>& collabs, const CccParams& p,
                        const CccToggles& toggles, double ref_threshold, CccRec* rec = nullptr);
void ccc_backward(CccParams& p, const CccRec& rec, const FeatureGrid& grad_out,
                  FeatureGrid* grad_ego);

}  // namespace scope
