#pragma once

#include <array>
#include <cstdint>
#include <vector>

#include "scope/geometry.hpp"
#include "scope/grid.hpp"
#include "scope/tensor.hpp"

namespace scope {

// BEV grid geometry. Ranges are expressed in the observing agent's frame;
// the derived cell counts must come out integral.
struct GridSpec {
    double x_min = -12.8, x_max = 12.8;
    double y_min = -12.8, y_max = 12.8;
    double voxel = 0.4;
    int channels = 16;

    int height() const;  // rows, along y
    int width() const;   // columns, along x
    void validate() const;
};

struct WorldObject {
    Box7 box;
    double vx = 0.0, vy = 0.0;
    int id = 0;
};

struct WorldAgent {
    Pose2D pose;
    double range = 30.0;
    int id = 0;
};

struct World {
    double x_extent = 25.6, y_extent = 25.6;
    std::vector<WorldObject> objects;
    std::vector<WorldAgent> agents;
    double time = 0.0;

    const WorldAgent& agent(int id) const;
};

struct WorldConfig {
    double x_extent = 25.6, y_extent = 25.6;
    int object_count = 5;
    double speed_min = 0.0, speed_max = 5.0;
    std::vector<WorldAgent> agents;
};

// Deterministic synthesis; objects are placed with pairwise BEV IoU of
// exactly zero (up to 1000 attempts each, else GenerationError).
World generate_world(const WorldConfig& cfg, std::uint64_t seed);

// Constant-velocity advance; yaw follows the velocity direction for
// moving objects, agents stay put.
World step_world(const World& w, double dt);

struct SensorParams {
    int rays = 720;              // azimuth steps
    int beams = 24;              // vertical fan per azimuth hit
    double range_jitter = 0.02;  // meters, 1-sigma
};

struct ObservationCloud {
    std::vector<std::array<double, 3>> points;  // in the observing agent's frame
    double timestamp = 0.0;
};

// BEV ray cast: each azimuth keeps the nearest box-face hit within sensor
// range, which yields occlusion for free, and emits a vertical fan of
// `beams` returns with height sampled on the hit box and Gaussian range
// jitter. Deterministic per (seed, agent, ray).
ObservationCloud observe(const World& w, int agent_id, const SensorParams& sp, std::uint64_t seed);

// Stage 1 of the observation encoder: per-cell occupancy count, mean z,
// max z and mean range. Points outside the grid ranges are dropped.
FeatureGrid rasterize_cloud(const ObservationCloud& cloud, const GridSpec& spec);

// Fixed two-conv (3x3, ReLU) stack mapping the 4 raster channels to C.
// Input scaling is folded into the first kernel so raw counts and ranges
// enter at comparable magnitudes. Not trained.
struct EncoderStack {
    Conv2d c1;
    Conv2d c2;
    void build(const GridSpec& spec, std::uint64_t seed);
    void visit(const std::string& prefix, const ParamFn& fn);
};

FeatureGrid encode_bev(const ObservationCloud& cloud, const GridSpec& spec,
                       const EncoderStack& enc);

}  // namespace scope
