#pragma once

#include <cstddef>
#include <vector>

#include "scope/errors.hpp"

namespace scope {

// Dense C x H x W feature map, row-major (c, y, x), 64-bit values.
// The universal currency of the pipeline: encoder outputs, temporal
// context, collaboration features and fused features all live here.
struct FeatureGrid {
    int channels = 0;
    int height = 0;
    int width = 0;
    std::vector<double> data;

    FeatureGrid() = default;
    FeatureGrid(int c, int h, int w, double fill = 0.0)
        : channels(c), height(h), width(w),
          data(static_cast<std::size_t>(c) * h * w, fill) {
        if (c < 1 || h < 1 || w < 1) throw ShapeError("FeatureGrid: non-positive dims");
    }

    std::size_t size() const { return data.size(); }
    std::size_t index(int c, int y, int x) const {
        return (static_cast<std::size_t>(c) * height + y) * width + x;
    }
    double& at(int c, int y, int x) { return data[index(c, y, x)]; }
    double at(int c, int y, int x) const { return data[index(c, y, x)]; }

    bool same_shape(const FeatureGrid& o) const {
        return channels == o.channels && height == o.height && width == o.width;
    }
    bool all_finite() const;

    void fill(double v) { data.assign(data.size(), v); }
};

// Dense H x W map. Confidence, selection and attention maps live here.
struct SpatialMap {
    int height = 0;
    int width = 0;
    std::vector<double> data;

    SpatialMap() = default;
    SpatialMap(int h, int w, double fill = 0.0)
        : height(h), width(w), data(static_cast<std::size_t>(h) * w, fill) {
        if (h < 1 || w < 1) throw ShapeError("SpatialMap: non-positive dims");
    }

    std::size_t size() const { return data.size(); }
    double& at(int y, int x) { return data[static_cast<std::size_t>(y) * width + x]; }
    double at(int y, int x) const { return data[static_cast<std::size_t>(y) * width + x]; }

    bool same_shape(const SpatialMap& o) const {
        return height == o.height && width == o.width;
    }
    bool all_finite() const;
};

// Stacks n grids with identical spatial dims along the channel axis.
FeatureGrid concat_channels(const std::vector<const FeatureGrid*>& grids);

// Elementwise helpers shared by the fusion modules.
void add_inplace(FeatureGrid& dst, const FeatureGrid& src, double scale = 1.0);
void add_inplace(SpatialMap& dst, const SpatialMap& src, double scale = 1.0);

}  // namespace scope
