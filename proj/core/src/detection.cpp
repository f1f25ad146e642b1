#include "scope/detection.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "scope/ops.hpp"

namespace scope {

HeadOutput decode_heads(const FeatureGrid& fused, const Conv2d& reg, const Conv2d& cls) {
    if (reg.out_channels() != 7 || cls.out_channels() != 2)
        throw ShapeError("decode_heads: expected 7-channel regression and 2-channel classification");
    return {reg.forward(fused), cls.forward(fused)};
}

namespace {

inline double clamp_exp(double v) { return std::exp(std::clamp(v, -10.0, 10.0)); }

}  // namespace

std::vector<Detection> extract_boxes(const HeadOutput& out, const GridSpec& spec,
                                     double score_threshold, double nms_threshold,
                                     int pre_nms_limit) {
    if (score_threshold < 0.0 || score_threshold > 1.0 || nms_threshold < 0.0 ||
        nms_threshold > 1.0)
        throw ConfigError("extract_boxes: thresholds outside [0,1]");
    const int h = out.cls.height, w = out.cls.width;
    const std::size_t hw = static_cast<std::size_t>(h) * w;

    std::vector<Detection> cands;
    std::vector<int> cand_cells;
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            const double l0 = out.cls.at(0, y, x);
            const double l1 = out.cls.at(1, y, x);
            const double m = std::max(l0, l1);
            const double e0 = std::exp(l0 - m), e1 = std::exp(l1 - m);
            const double score = e1 / (e0 + e1);
            if (score < score_threshold) continue;

            Detection d;
            d.score = score;
            const double cx = spec.x_min + (x + 0.5) * spec.voxel;
            const double cy = spec.y_min + (y + 0.5) * spec.voxel;
            d.box.cx = cx + out.reg.at(0, y, x);
            d.box.cy = cy + out.reg.at(1, y, x);
            d.box.cz = out.reg.at(2, y, x);
            d.box.length = clamp_exp(out.reg.at(3, y, x));
            d.box.width = clamp_exp(out.reg.at(4, y, x));
            d.box.height = clamp_exp(out.reg.at(5, y, x));
            d.box.yaw = normalize_angle(out.reg.at(6, y, x));
            cands.push_back(d);
            cand_cells.push_back(y * w + x);
        }
    }
    (void)hw;

    std::vector<int> order(cands.size());
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(), [&](int a, int b) {
        if (cands[a].score != cands[b].score) return cands[a].score > cands[b].score;
        return cand_cells[a] < cand_cells[b];
    });
    if (pre_nms_limit > 0 && static_cast<int>(order.size()) > pre_nms_limit)
        order.resize(pre_nms_limit);

    std::vector<Box7> boxes;
    std::vector<double> scores;
    for (int i : order) {
        boxes.push_back(cands[i].box);
        scores.push_back(cands[i].score);
    }
    const std::vector<int> kept = nms_rotated(boxes, scores, nms_threshold);

    std::vector<Detection> dets;
    dets.reserve(kept.size());
    for (int i : kept) dets.push_back({boxes[i], scores[i]});
    return dets;
}

double smooth_l1(const std::vector<double>& pred, const std::vector<double>& target, double beta) {
    if (pred.size() != target.size()) throw ShapeError("smooth_l1: length mismatch");
    if (beta <= 0.0) throw DomainError("smooth_l1: beta must be positive");
    if (pred.empty()) return 0.0;
    double acc = 0.0;
    for (std::size_t i = 0; i < pred.size(); ++i) {
        const double d = std::fabs(pred[i] - target[i]);
        acc += d < beta ? 0.5 * d * d / beta : d - 0.5 * beta;
    }
    return acc / static_cast<double>(pred.size());
}

double focal_loss(const FeatureGrid& logits, const std::vector<std::uint8_t>& labels,
                  double alpha, double gamma) {
    if (alpha < 0.0 || alpha > 1.0) throw DomainError("focal_loss: alpha outside [0,1]");
    if (gamma < 0.0) throw DomainError("focal_loss: gamma must be >= 0");
    const std::size_t hw = static_cast<std::size_t>(logits.height) * logits.width;
    if (labels.size() != hw) throw ShapeError("focal_loss: label count mismatch");

    double acc = 0.0;
    for (std::size_t i = 0; i < hw; ++i) {
        const double l0 = logits.data[i];
        const double l1 = logits.data[hw + i];
        const double m = std::max(l0, l1);
        const double e0 = std::exp(l0 - m), e1 = std::exp(l1 - m);
        const double p1 = e1 / (e0 + e1);
        const double pt = labels[i] ? p1 : 1.0 - p1;
        const double at = labels[i] ? alpha : 1.0 - alpha;
        acc += -at * std::pow(1.0 - pt, gamma) * std::log(std::max(pt, 1e-12));
    }
    return acc / static_cast<double>(hw);
}

void match_detections(const std::vector<Detection>& dets, const std::vector<Box7>& gts,
                      double iou_threshold, std::vector<ApSample>& samples) {
    std::vector<int> order(dets.size());
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(), [&](int a, int b) {
        if (dets[a].score != dets[b].score) return dets[a].score > dets[b].score;
        return a < b;
    });

    std::vector<char> used(gts.size(), 0);
    for (int i : order) {
        double best_iou = 0.0;
        int best_g = -1;
        for (std::size_t g = 0; g < gts.size(); ++g) {
            if (used[g]) continue;
            const double iou = rotated_iou_bev(dets[i].box, gts[g]);
            if (iou > best_iou) {
                best_iou = iou;
                best_g = static_cast<int>(g);
            }
        }
        const bool tp = best_g >= 0 && best_iou >= iou_threshold;
        if (tp) used[best_g] = 1;
        samples.push_back({dets[i].score, tp});
    }
}

double ap_from_samples(std::vector<ApSample> samples, std::size_t gt_count) {
    if (gt_count == 0) return 0.0;
    if (samples.empty()) return 0.0;
    std::stable_sort(samples.begin(), samples.end(),
                     [](const ApSample& a, const ApSample& b) { return a.score > b.score; });

    std::vector<double> precision(samples.size()), recall(samples.size());
    std::size_t tp = 0;
    for (std::size_t i = 0; i < samples.size(); ++i) {
        if (samples[i].tp) ++tp;
        precision[i] = static_cast<double>(tp) / static_cast<double>(i + 1);
        recall[i] = static_cast<double>(tp) / static_cast<double>(gt_count);
    }
    // precision envelope from the right
    for (int i = static_cast<int>(samples.size()) - 2; i >= 0; --i)
        precision[i] = std::max(precision[i], precision[i + 1]);

    double ap = 0.0, prev_recall = 0.0;
    for (std::size_t i = 0; i < samples.size(); ++i) {
        if (recall[i] > prev_recall) {
            ap += (recall[i] - prev_recall) * precision[i];
            prev_recall = recall[i];
        }
    }
    return ap;
}

double evaluate_ap(const std::vector<Detection>& dets, const std::vector<Box7>& gts,
                   double iou_threshold) {
    if (iou_threshold <= 0.0 || iou_threshold > 1.0)
        throw DomainError("evaluate_ap: threshold outside (0,1]");
    std::vector<ApSample> samples;
    match_detections(dets, gts, iou_threshold, samples);
    return ap_from_samples(std::move(samples), gts.size());
}

CellTargets assign_targets(const std::vector<Box7>& gts, const GridSpec& spec) {
    const int h = spec.height(), w = spec.width();
    CellTargets t;
    t.labels.assign(static_cast<std::size_t>(h) * w, 0);
    t.reg.assign(7 * static_cast<std::size_t>(h) * w, 0.0);
    const std::size_t hw = static_cast<std::size_t>(h) * w;

    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            const double cx = spec.x_min + (x + 0.5) * spec.voxel;
            const double cy = spec.y_min + (y + 0.5) * spec.voxel;
            int best = -1;
            double best_dist = 0.0;
            for (std::size_t g = 0; g < gts.size(); ++g) {
                const Box7& b = gts[g];
                const double c = std::cos(b.yaw), s = std::sin(b.yaw);
                const double dx = cx - b.cx, dy = cy - b.cy;
                const double lx = c * dx + s * dy;
                const double ly = -s * dx + c * dy;
                if (std::fabs(lx) <= 0.5 * b.length && std::fabs(ly) <= 0.5 * b.width) {
                    const double dist = dx * dx + dy * dy;
                    if (best < 0 || dist < best_dist) {
                        best = static_cast<int>(g);
                        best_dist = dist;
                    }
                }
            }
            if (best < 0) continue;
            const Box7& b = gts[best];
            const std::size_t i = static_cast<std::size_t>(y) * w + x;
            t.labels[i] = 1;
            ++t.fg_count;
            t.reg[0 * hw + i] = b.cx - cx;
            t.reg[1 * hw + i] = b.cy - cy;
            t.reg[2 * hw + i] = b.cz;
            t.reg[3 * hw + i] = std::log(b.length);
            t.reg[4 * hw + i] = std::log(b.width);
            t.reg[5 * hw + i] = std::log(b.height);
            t.reg[6 * hw + i] = b.yaw;
        }
    }
    return t;
}

DetectionLoss detection_loss(const HeadOutput& out, const CellTargets& targets,
                             const LossWeights& w) {
    const std::size_t hw = static_cast<std::size_t>(out.cls.height) * out.cls.width;
    DetectionLoss loss;

    if (targets.fg_count > 0) {
        double acc = 0.0;
        for (std::size_t i = 0; i < hw; ++i) {
            if (!targets.labels[i]) continue;
            for (int c = 0; c < 7; ++c) {
                const double d = std::fabs(out.reg.data[c * hw + i] - targets.reg[c * hw + i]);
                acc += d < w.beta ? 0.5 * d * d / w.beta : d - 0.5 * w.beta;
            }
        }
        loss.reg = acc / (7.0 * targets.fg_count);
    }
    loss.cls = focal_loss(out.cls, targets.labels, w.alpha, w.gamma);
    loss.total = w.reg * loss.reg + w.cls * loss.cls;
    return loss;
}

void detection_loss_backward(const HeadOutput& out, const CellTargets& targets,
                             const LossWeights& w, FeatureGrid* grad_reg, FeatureGrid* grad_cls) {
    const std::size_t hw = static_cast<std::size_t>(out.cls.height) * out.cls.width;

    if (grad_reg && targets.fg_count > 0) {
        const double scale = w.reg / (7.0 * targets.fg_count);
        for (std::size_t i = 0; i < hw; ++i) {
            if (!targets.labels[i]) continue;
            for (int c = 0; c < 7; ++c) {
                const double d = out.reg.data[c * hw + i] - targets.reg[c * hw + i];
                const double g = std::fabs(d) < w.beta ? d / w.beta : (d > 0.0 ? 1.0 : -1.0);
                grad_reg->data[c * hw + i] += scale * g;
            }
        }
    }

    if (grad_cls) {
        const double scale = w.cls / static_cast<double>(hw);
        for (std::size_t i = 0; i < hw; ++i) {
            const double l0 = out.cls.data[i];
            const double l1 = out.cls.data[hw + i];
            const double m = std::max(l0, l1);
            const double e0 = std::exp(l0 - m), e1 = std::exp(l1 - m);
            const double p1 = e1 / (e0 + e1);
            const double pt = targets.labels[i] ? p1 : 1.0 - p1;
            const double at = targets.labels[i] ? w.alpha : 1.0 - w.alpha;
            const double pt_c = std::max(pt, 1e-12);
            // d/dpt of -at (1-pt)^g log(pt)
            const double dldpt = -at * (-w.gamma * std::pow(1.0 - pt, std::max(0.0, w.gamma - 1.0)) *
                                            std::log(pt_c) +
                                        std::pow(1.0 - pt, w.gamma) / pt_c);
            const double dp1 = p1 * (1.0 - p1);
            const double dptdl1 = targets.labels[i] ? dp1 : -dp1;
            grad_cls->data[hw + i] += scale * dldpt * dptdl1;
            grad_cls->data[i] += scale * dldpt * -dptdl1;
        }
    }
}

}  // namespace scope
