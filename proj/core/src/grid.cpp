#include "scope/grid.hpp"

#include <cmath>

namespace scope {

bool FeatureGrid::all_finite() const {
    for (double v : data)
        if (!std::isfinite(v)) return false;
    return true;
}

bool SpatialMap::all_finite() const {
    for (double v : data)
        if (!std::isfinite(v)) return false;
    return true;
}

FeatureGrid concat_channels(const std::vector<const FeatureGrid*>& grids) {
    if (grids.empty()) throw ShapeError("concat_channels: empty input");
    int h = grids[0]->height, w = grids[0]->width, ctot = 0;
    for (const FeatureGrid* g : grids) {
        if (g->height != h || g->width != w)
            throw ShapeError("concat_channels: spatial dims differ");
        ctot += g->channels;
    }
    FeatureGrid out(ctot, h, w);
    std::size_t off = 0;
    for (const FeatureGrid* g : grids) {
        std::copy(g->data.begin(), g->data.end(), out.data.begin() + off);
        off += g->data.size();
    }
    return out;
}

void add_inplace(FeatureGrid& dst, const FeatureGrid& src, double scale) {
    if (!dst.same_shape(src)) throw ShapeError("add_inplace: shape mismatch");
    for (std::size_t i = 0; i < dst.data.size(); ++i) dst.data[i] += scale * src.data[i];
}

void add_inplace(SpatialMap& dst, const SpatialMap& src, double scale) {
    if (!dst.same_shape(src)) throw ShapeError("add_inplace: shape mismatch");
    for (std::size_t i = 0; i < dst.data.size(); ++i) dst.data[i] += scale * src.data[i];
}

}  // namespace scope
