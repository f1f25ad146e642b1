#include "scope/geometry.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <tuple>

#include "scope/rng.hpp"

namespace scope {

double normalize_angle(double a) {
    a = std::fmod(a, 2.0 * kPi);
    if (a <= -kPi) a += 2.0 * kPi;
    if (a > kPi) a -= 2.0 * kPi;
    return a;
}

Vec2 to_ego_frame(const Vec2& p, const Pose2D& source, const Pose2D& ego) {
    // world = R(source) p + t_source; ego = R(ego)^T (world - t_ego)
    const double cs = std::cos(source.heading), ss = std::sin(source.heading);
    const double wx = cs * p.x - ss * p.y + source.x;
    const double wy = ss * p.x + cs * p.y + source.y;
    const double ce = std::cos(ego.heading), se = std::sin(ego.heading);
    const double dx = wx - ego.x, dy = wy - ego.y;
    return {ce * dx + se * dy, -se * dx + ce * dy};
}

Pose2D to_ego_frame(const Pose2D& source, const Pose2D& ego) {
    const Vec2 t = to_ego_frame(Vec2{0.0, 0.0}, source, ego);
    return Pose2D(t.x, t.y, source.heading - ego.heading);
}

Box7 to_ego_frame(const Box7& b, const Pose2D& source, const Pose2D& ego) {
    const Vec2 c = to_ego_frame(Vec2{b.cx, b.cy}, source, ego);
    Box7 out = b;
    out.cx = c.x;
    out.cy = c.y;
    out.yaw = normalize_angle(b.yaw + source.heading - ego.heading);
    return out;
}

Pose2D perturb_pose(const Pose2D& pose, const NoiseModel& noise, int agent_id, int frame_idx) {
    Rng rng(noise.seed, 0x706f7365ULL, static_cast<std::uint64_t>(agent_id),
            static_cast<std::uint64_t>(frame_idx));
    const double nx = rng.normal(), ny = rng.normal(), nh = rng.normal();
    return Pose2D(pose.x + noise.sigma_xyz * nx, pose.y + noise.sigma_xyz * ny,
                  pose.heading + deg_to_rad(noise.sigma_heading) * nh);
}

std::array<Vec2, 4> box_corners_bev(const Box7& b) {
    const double c = std::cos(b.yaw), s = std::sin(b.yaw);
    const double hl = 0.5 * b.length, hw = 0.5 * b.width;
    // counter-clockwise starting at front-left (+l, +w)
    const std::array<Vec2, 4> local{{{hl, hw}, {-hl, hw}, {-hl, -hw}, {hl, -hw}}};
    std::array<Vec2, 4> out;
    for (int i = 0; i < 4; ++i)
        out[i] = {b.cx + c * local[i].x - s * local[i].y, b.cy + s * local[i].x + c * local[i].y};
    return out;
}

namespace {

double shoelace_area(const std::vector<Vec2>& poly) {
    const std::size_t n = poly.size();
    if (n < 3) return 0.0;
    double acc = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        const Vec2& p = poly[i];
        const Vec2& q = poly[(i + 1) % n];
        acc += p.x * q.y - q.x * p.y;
    }
    return 0.5 * std::fabs(acc);
}

// Sutherland-Hodgman: clips `subject` against the half-plane on the left
// of edge a->b (clip polygon must be counter-clockwise).
std::vector<Vec2> clip_edge(const std::vector<Vec2>& subject, const Vec2& a, const Vec2& b) {
    std::vector<Vec2> out;
    out.reserve(subject.size() + 1);
    const double ex = b.x - a.x, ey = b.y - a.y;
    auto inside = [&](const Vec2& p) { return ex * (p.y - a.y) - ey * (p.x - a.x) >= 0.0; };
    auto intersect = [&](const Vec2& p, const Vec2& q) {
        const double dpx = q.x - p.x, dpy = q.y - p.y;
        const double denom = ex * dpy - ey * dpx;
        const double t = (ey * (p.x - a.x) - ex * (p.y - a.y)) / denom;
        return Vec2{p.x + t * dpx, p.y + t * dpy};
    };
    for (std::size_t i = 0; i < subject.size(); ++i) {
        const Vec2& cur = subject[i];
        const Vec2& prev = subject[(i + subject.size() - 1) % subject.size()];
        const bool cin = inside(cur), pin = inside(prev);
        if (cin) {
            if (!pin) out.push_back(intersect(prev, cur));
            out.push_back(cur);
        } else if (pin) {
            out.push_back(intersect(prev, cur));
        }
    }
    return out;
}

double intersection_area(const Box7& a, const Box7& b) {
    const std::array<Vec2, 4> ca = box_corners_bev(a);
    const std::array<Vec2, 4> cb = box_corners_bev(b);
    std::vector<Vec2> poly(ca.begin(), ca.end());
    for (int i = 0; i < 4 && !poly.empty(); ++i)
        poly = clip_edge(poly, cb[i], cb[(i + 1) % 4]);
    return shoelace_area(poly);
}

std::tuple<double, double, double, double, double, double, double> box_key(const Box7& b) {
    return {b.cx, b.cy, b.cz, b.length, b.width, b.height, b.yaw};
}

}  // namespace

double rotated_iou_bev(const Box7& a, const Box7& b) {
    const double area_a = a.length * a.width;
    const double area_b = b.length * b.width;
    if (!(area_a > 0.0) || !(area_b > 0.0))
        throw DomainError("rotated_iou_bev: degenerate zero-area box");
    // Canonical argument order makes iou(a,b) bit-identical to iou(b,a).
    const bool swap = box_key(b) < box_key(a);
    const double inter = swap ? intersection_area(b, a) : intersection_area(a, b);
    const double uni = area_a + area_b - inter;
    const double iou = inter / uni;
    return std::clamp(iou, 0.0, 1.0);
}

std::vector<int> nms_rotated(const std::vector<Box7>& boxes, const std::vector<double>& scores,
                             double iou_threshold) {
    if (boxes.size() != scores.size()) throw ShapeError("nms_rotated: length mismatch");
    std::vector<int> order(boxes.size());
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(), [&](int i, int j) {
        if (scores[i] != scores[j]) return scores[i] > scores[j];
        return i < j;
    });
    std::vector<int> kept;
    std::vector<char> removed(boxes.size(), 0);
    for (std::size_t oi = 0; oi < order.size(); ++oi) {
        const int i = order[oi];
        if (removed[i]) continue;
        kept.push_back(i);
        for (std::size_t oj = oi + 1; oj < order.size(); ++oj) {
            const int j = order[oj];
            if (removed[j]) continue;
            if (rotated_iou_bev(boxes[i], boxes[j]) > iou_threshold) removed[j] = 1;
        }
    }
    return kept;
}

}  // namespace scope
