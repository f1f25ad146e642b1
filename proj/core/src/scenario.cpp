#include "scope/scenario.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "scope/ops.hpp"
#include "scope/rng.hpp"

namespace scope {

namespace {

int derived_cells(double lo, double hi, double voxel, const char* axis) {
    const double n = (hi - lo) / voxel;
    const double r = std::round(n);
    if (r < 1.0 || std::fabs(n - r) > 1e-9)
        throw ConfigError(std::string("grid: ") + axis + " range is not an integer number of voxels");
    return static_cast<int>(r);
}

}  // namespace

int GridSpec::height() const { return derived_cells(y_min, y_max, voxel, "y"); }
int GridSpec::width() const { return derived_cells(x_min, x_max, voxel, "x"); }

void GridSpec::validate() const {
    if (voxel <= 0.0) throw ConfigError("grid: voxel size must be positive");
    if (channels < 1) throw ConfigError("grid: channels must be >= 1");
    (void)height();
    (void)width();
}

const WorldAgent& World::agent(int id) const {
    for (const WorldAgent& a : agents)
        if (a.id == id) return a;
    throw DomainError("world: no agent with id " + std::to_string(id));
}

World generate_world(const WorldConfig& cfg, std::uint64_t seed) {
    if (cfg.object_count < 0) throw ConfigError("world: negative object count");
    if (cfg.speed_max < cfg.speed_min || cfg.speed_min < 0.0)
        throw ConfigError("world: invalid speed range");

    World w;
    w.x_extent = cfg.x_extent;
    w.y_extent = cfg.y_extent;
    w.agents = cfg.agents;
    w.time = 0.0;

    Rng rng(seed, 0x776f726cULL);
    for (int i = 0; i < cfg.object_count; ++i) {
        bool placed = false;
        for (int attempt = 0; attempt < 1000 && !placed; ++attempt) {
            WorldObject obj;
            obj.id = i;
            obj.box.length = 4.6 * rng.uniform(0.9, 1.1);
            obj.box.width = 2.0 * rng.uniform(0.9, 1.1);
            obj.box.height = 1.7 * rng.uniform(0.9, 1.1);
            obj.box.cz = 0.5 * obj.box.height;

            const double margin = 0.5 * std::hypot(obj.box.length, obj.box.width);
            obj.box.cx = rng.uniform(-0.5 * cfg.x_extent + margin, 0.5 * cfg.x_extent - margin);
            obj.box.cy = rng.uniform(-0.5 * cfg.y_extent + margin, 0.5 * cfg.y_extent - margin);

            const double speed = rng.uniform(cfg.speed_min, cfg.speed_max);
            const double dir = rng.uniform(-kPi, kPi);
            obj.vx = speed * std::cos(dir);
            obj.vy = speed * std::sin(dir);
            obj.box.yaw = speed > 1e-9 ? dir : rng.uniform(-kPi, kPi);

            bool overlaps = false;
            for (const WorldObject& other : w.objects) {
                if (rotated_iou_bev(obj.box, other.box) > 0.0) {
                    overlaps = true;
                    break;
                }
            }
            if (!overlaps) {
                w.objects.push_back(obj);
                placed = true;
            }
        }
        if (!placed)
            throw GenerationError("generate_world: could not place object " + std::to_string(i) +
                                  " without overlap in 1000 attempts");
    }
    return w;
}

World step_world(const World& w, double dt) {
    if (dt <= 0.0) throw DomainError("step_world: dt must be positive");
    World out = w;
    out.time = w.time + dt;
    for (WorldObject& obj : out.objects) {
        obj.box.cx += obj.vx * dt;
        obj.box.cy += obj.vy * dt;
        if (std::hypot(obj.vx, obj.vy) > 1e-9) obj.box.yaw = std::atan2(obj.vy, obj.vx);
    }
    return out;
}

namespace {

// Smallest positive ray parameter t where origin + t*dir crosses an edge
// of the box's BEV rectangle; +inf when the ray misses.
double ray_box_distance(const Vec2& origin, double dx, double dy, const Box7& box) {
    const std::array<Vec2, 4> c = box_corners_bev(box);
    double best = std::numeric_limits<double>::infinity();
    for (int i = 0; i < 4; ++i) {
        const Vec2& p1 = c[i];
        const Vec2& p2 = c[(i + 1) % 4];
        const double ex = p2.x - p1.x, ey = p2.y - p1.y;
        const double denom = dx * ey - dy * ex;
        if (std::fabs(denom) < 1e-12) continue;
        const double rx = p1.x - origin.x, ry = p1.y - origin.y;
        const double t = (rx * ey - ry * ex) / denom;
        const double u = (rx * dy - ry * dx) / denom;
        if (t > 1e-9 && u >= 0.0 && u <= 1.0) best = std::min(best, t);
    }
    return best;
}

}  // namespace

ObservationCloud observe(const World& w, int agent_id, const SensorParams& sp, std::uint64_t seed) {
    const WorldAgent& agent = w.agent(agent_id);
    ObservationCloud cloud;
    cloud.timestamp = w.time;

    const Vec2 origin{agent.pose.x, agent.pose.y};
    const Pose2D world_frame(0.0, 0.0, 0.0);
    for (int r = 0; r < sp.rays; ++r) {
        const double angle = agent.pose.heading + 2.0 * kPi * r / sp.rays;
        const double dx = std::cos(angle), dy = std::sin(angle);

        double best_t = std::numeric_limits<double>::infinity();
        const WorldObject* hit = nullptr;
        for (const WorldObject& obj : w.objects) {
            const double t = ray_box_distance(origin, dx, dy, obj.box);
            if (t < best_t) {
                best_t = t;
                hit = &obj;
            }
        }
        if (!hit || best_t > agent.range) continue;

        Rng ray_rng(seed, static_cast<std::uint64_t>(agent_id), static_cast<std::uint64_t>(r));
        for (int b = 0; b < sp.beams; ++b) {
            const double z = ray_rng.uniform(hit->box.cz - 0.5 * hit->box.height,
                                             hit->box.cz + 0.5 * hit->box.height);
            const double t = std::max(1e-3, best_t + sp.range_jitter * ray_rng.normal());
            const Vec2 world_pt{origin.x + t * dx, origin.y + t * dy};
            const Vec2 local = to_ego_frame(world_pt, world_frame, agent.pose);
            cloud.points.push_back({local.x, local.y, z});
        }
    }
    return cloud;
}

FeatureGrid rasterize_cloud(const ObservationCloud& cloud, const GridSpec& spec) {
    spec.validate();
    const int h = spec.height(), w = spec.width();
    FeatureGrid out(4, h, w);
    std::vector<double> sum_z(static_cast<std::size_t>(h) * w, 0.0);
    std::vector<double> max_z(static_cast<std::size_t>(h) * w, 0.0);
    std::vector<double> sum_r(static_cast<std::size_t>(h) * w, 0.0);
    std::vector<int> count(static_cast<std::size_t>(h) * w, 0);

    for (const auto& p : cloud.points) {
        const int col = static_cast<int>(std::floor((p[0] - spec.x_min) / spec.voxel));
        const int row = static_cast<int>(std::floor((p[1] - spec.y_min) / spec.voxel));
        if (col < 0 || col >= w || row < 0 || row >= h) continue;
        const std::size_t i = static_cast<std::size_t>(row) * w + col;
        if (count[i] == 0 || p[2] > max_z[i]) max_z[i] = p[2];
        count[i] += 1;
        sum_z[i] += p[2];
        sum_r[i] += std::hypot(p[0], p[1]);
    }

    const std::size_t hw = static_cast<std::size_t>(h) * w;
    for (std::size_t i = 0; i < hw; ++i) {
        if (count[i] == 0) continue;
        out.data[0 * hw + i] = count[i];
        out.data[1 * hw + i] = sum_z[i] / count[i];
        out.data[2 * hw + i] = max_z[i];
        out.data[3 * hw + i] = sum_r[i] / count[i];
    }
    return out;
}

void EncoderStack::build(const GridSpec& spec, std::uint64_t seed) {
    const int c_out = spec.channels;
    c1 = Conv2d(c_out, 4, 3, 1, 1);
    c2 = Conv2d(c_out, c_out, 3, 1, 1);
    c1.init(seed, "encoder.c1");
    c2.init(seed, "encoder.c2");

    // Raw raster channels span very different magnitudes (counts of tens,
    // ranges of tens of meters); fold a per-channel scaling into the first
    // kernel so the stack sees O(1) inputs.
    const double half_diag = 0.5 * std::hypot(spec.x_max - spec.x_min, spec.y_max - spec.y_min);
    const double scales[4] = {0.125, 0.5, 0.5, 1.0 / std::max(1.0, half_diag)};
    const int k = c1.ksize();
    for (int oc = 0; oc < c_out; ++oc)
        for (int ic = 0; ic < 4; ++ic)
            for (int i = 0; i < k * k; ++i)
                c1.w.val[((static_cast<std::size_t>(oc) * 4 + ic) * k) * k + i] *= scales[ic];
}

void EncoderStack::visit(const std::string& prefix, const ParamFn& fn) {
    c1.visit(prefix + ".c1", fn, /*trainable=*/false);
    c2.visit(prefix + ".c2", fn, /*trainable=*/false);
}

FeatureGrid encode_bev(const ObservationCloud& cloud, const GridSpec& spec,
                       const EncoderStack& enc) {
    const FeatureGrid raster = rasterize_cloud(cloud, spec);
    FeatureGrid h1 = enc.c1.forward(raster);
    activate_span(h1.data.data(), h1.data.data(), h1.size(), Activation::Relu);
    FeatureGrid h2 = enc.c2.forward(h1);
    activate_span(h2.data.data(), h2.data.data(), h2.size(), Activation::Relu);
    return h2;
}

}  // namespace scope
