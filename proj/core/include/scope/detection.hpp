#pragma once

#include <cstdint>
#include <vector>

#include "scope/geometry.hpp"
#include "scope/grid.hpp"
#include "scope/scenario.hpp"
#include "scope/tensor.hpp"

namespace scope {

struct HeadOutput {
    FeatureGrid reg;  // 7 x H x W: dx, dy, z, log l, log w, log h, yaw
    FeatureGrid cls;  // 2 x H x W logits: background, foreground
};

struct Detection {
    Box7 box;
    double score = 0.0;
};

// Two independent 1x1 decoder convs on the fused feature.
HeadOutput decode_heads(const FeatureGrid& fused, const Conv2d& reg, const Conv2d& cls);

// Anchor scheme: one anchor per cell at the cell center with unit extent
// and zero yaw; regression holds center offsets, raw z, log extents and
// raw yaw. Scores come from the 2-way softmax. Candidates above the score
// threshold go through rotated NMS (pre-NMS capped at the top
// `pre_nms_limit` by score for tractability).
std::vector<Detection> extract_boxes(const HeadOutput& out, const GridSpec& spec,
                                     double score_threshold, double nms_threshold,
                                     int pre_nms_limit = 1024);

double smooth_l1(const std::vector<double>& pred, const std::vector<double>& target, double beta);

// Focal loss over the 2-way softmax foreground probability, mean over
// cells; labels are 1 for foreground cells.
double focal_loss(const FeatureGrid& logits, const std::vector<std::uint8_t>& labels,
                  double alpha, double gamma);

// Greedy one-to-one matching at the IoU threshold, then area under the
// all-point interpolated precision/recall curve.
double evaluate_ap(const std::vector<Detection>& dets, const std::vector<Box7>& gts,
                   double iou_threshold);

// ---- training support ----

struct CellTargets {
    std::vector<std::uint8_t> labels;   // H*W, 1 = foreground
    std::vector<double> reg;            // 7 x H x W, valid where foreground
    int fg_count = 0;
};

// A cell is foreground when its center lies inside a ground-truth BEV
// rectangle (nearest box center wins when several contain it).
CellTargets assign_targets(const std::vector<Box7>& gts, const GridSpec& spec);

struct DetectionLoss {
    double reg = 0.0;
    double cls = 0.0;
    double total = 0.0;
};

struct LossWeights {
    double reg = 2.0;
    double cls = 1.0;
    double beta = 1.0;    // smooth-L1 transition
    double alpha = 0.25;  // focal foreground weight
    double gamma = 2.0;   // focal focusing power
};

DetectionLoss detection_loss(const HeadOutput& out, const CellTargets& targets,
                             const LossWeights& w);
// Writes d loss / d head outputs (same shapes as the heads).
void detection_loss_backward(const HeadOutput& out, const CellTargets& targets,
                             const LossWeights& w, FeatureGrid* grad_reg, FeatureGrid* grad_cls);

// Pooled AP across frames: detections matched per frame, one PR curve.
struct ApSample {
    double score;
    bool tp;
};
void match_detections(const std::vector<Detection>& dets, const std::vector<Box7>& gts,
                      double iou_threshold, std::vector<ApSample>& samples);
double ap_from_samples(std::vector<ApSample> samples, std::size_t gt_count);

}  // namespace scope
