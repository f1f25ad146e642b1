#pragma once

#include <array>
#include <cstdint>
#include <vector>

#include "scope/errors.hpp"

namespace scope {

inline constexpr double kPi = 3.14159265358979323846;

// Wraps an angle into (-pi, pi].
double normalize_angle(double a);
inline double deg_to_rad(double deg) { return deg * kPi / 180.0; }

struct Vec2 {
    double x = 0.0;
    double y = 0.0;
};

// Planar pose: position in meters, heading in radians in (-pi, pi].
struct Pose2D {
    double x = 0.0;
    double y = 0.0;
    double heading = 0.0;

    Pose2D() = default;
    Pose2D(double x_, double y_, double heading_) : x(x_), y(y_), heading(normalize_angle(heading_)) {}
};

// 3D detection box: center, extents (strictly positive), yaw about z.
struct Box7 {
    double cx = 0.0, cy = 0.0, cz = 0.0;
    double length = 1.0, width = 1.0, height = 1.0;
    double yaw = 0.0;
};

// Maps a point expressed in `source` coordinates into `ego` coordinates.
Vec2 to_ego_frame(const Vec2& p, const Pose2D& source, const Pose2D& ego);
// Re-expresses a pose given in world coordinates relative to `ego`.
Pose2D to_ego_frame(const Pose2D& source, const Pose2D& ego);
// Transforms a box from `source` coordinates into `ego` coordinates
// (center moves rigidly, yaw shifts by the heading difference).
Box7 to_ego_frame(const Box7& b, const Pose2D& source, const Pose2D& ego);

// Gaussian pose perturbation; reproducible per (seed, agent, frame).
struct NoiseModel {
    double sigma_xyz = 0.0;        // meters
    double sigma_heading = 0.0;    // degrees
    std::uint64_t seed = 0;
};

Pose2D perturb_pose(const Pose2D& pose, const NoiseModel& noise, int agent_id, int frame_idx);

// BEV corners of the yawed rectangle, counter-clockwise.
std::array<Vec2, 4> box_corners_bev(const Box7& b);

// IoU of two yawed rectangles in the BEV plane: convex clipping plus
// shoelace area. Ignores z extent. Symmetric in its arguments.
double rotated_iou_bev(const Box7& a, const Box7& b);

// Greedy descending-score suppression; returns kept indices ordered by
// score (ties broken by lower index).
std::vector<int> nms_rotated(const std::vector<Box7>& boxes, const std::vector<double>& scores,
                             double iou_threshold);

}  // namespace scope
