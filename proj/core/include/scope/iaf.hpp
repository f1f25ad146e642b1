#pragma once

#include <array>
#include <string>
#include <vector>

#include "scope/grid.hpp"
#include "scope/ops.hpp"
#include "scope/tensor.hpp"

namespace scope {

enum class FusionStrategy { Adaptive, Summation, Maximum, Average };

struct IafParams {
    int channels = 16;
    bool shared_generator = true;

    Conv2d gen;                      // detection-decoder-style 1x1 conv -> 2 channels
    std::vector<Conv2d> per_source;  // per-source variant, one per fused input

    void build(int channels_, bool shared, int max_sources, std::uint64_t seed);
    void visit(const std::string& prefix, const ParamFn& fn);
    const Conv2d& generator(std::size_t source_idx) const {
        return shared_generator ? gen : per_source[source_idx];
    }
    Conv2d& generator(std::size_t source_idx) {
        return shared_generator ? gen : per_source[source_idx];
    }
};

struct ImportanceRec {
    std::vector<const FeatureGrid*> sources;
    std::vector<FeatureGrid> conv_out;
    std::vector<SpatialMap> pooled;
    std::vector<SpatialMap> maps;
};

// Per source: generator conv, channel max pooling, sigmoid -> one
// importance map in [0,1] each.
std::vector<SpatialMap> importance_maps_n(const std::vector<const FeatureGrid*>& sources,
                                          const IafParams& p, ImportanceRec* rec = nullptr);
void importance_maps_backward(IafParams& p, const ImportanceRec& rec,
                              const std::vector<SpatialMap>& grad_maps,
                              std::vector<FeatureGrid>* grad_sources);

struct FuseRecIaf {
    std::vector<const FeatureGrid*> sources;
    std::vector<SpatialMap> attention;  // softmax of the importance maps
    FusionStrategy strategy = FusionStrategy::Adaptive;
};

// Adaptive: softmax the importance maps across sources and apply the
// attention as a channel-broadcast weighted sum. The other strategies
// ignore the maps (sum / elementwise max / mean).
FeatureGrid fuse_sources(const std::vector<const FeatureGrid*>& sources,
                         const std::vector<SpatialMap>& maps, FusionStrategy strategy,
                         FuseRecIaf* rec = nullptr);
void fuse_sources_backward(const FuseRecIaf& rec, const FeatureGrid& grad_out,
                           std::vector<FeatureGrid>* grad_sources,
                           std::vector<SpatialMap>* grad_maps);

// Three-source wrappers matching the component contract
// (context H, collaboration Z, ego F).
std::array<SpatialMap, 3> importance_maps(const FeatureGrid& h, const FeatureGrid& z,
                                          const FeatureGrid& f, const IafParams& p);
FeatureGrid adaptive_fuse(const FeatureGrid& h, const FeatureGrid& z, const FeatureGrid& f,
                          const std::array<SpatialMap, 3>& maps);

}  // namespace scope
