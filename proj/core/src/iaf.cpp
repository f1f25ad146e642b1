#include "scope/iaf.hpp"

namespace scope {

void IafParams::build(int channels_, bool shared, int max_sources, std::uint64_t seed) {
    channels = channels_;
    shared_generator = shared;
    gen = Conv2d(2, channels, 1, 1, 0);
    gen.init(seed, "iaf.gen");
    per_source.clear();
    if (!shared) {
        for (int s = 0; s < max_sources; ++s) {
            per_source.emplace_back(2, channels, 1, 1, 0);
            per_source.back().init(seed, "iaf.gen" + std::to_string(s));
        }
    }
}

void IafParams::visit(const std::string& prefix, const ParamFn& fn) {
    if (shared_generator) {
        gen.visit(prefix + ".gen", fn);
    } else {
        for (std::size_t s = 0; s < per_source.size(); ++s)
            per_source[s].visit(prefix + ".gen" + std::to_string(s), fn);
    }
}

std::vector<SpatialMap> importance_maps_n(const std::vector<const FeatureGrid*>& sources,
                                          const IafParams& p, ImportanceRec* rec) {
    if (sources.empty()) throw ShapeError("importance_maps: no sources");
    for (const FeatureGrid* s : sources)
        if (!s->same_shape(*sources[0])) throw ShapeError("importance_maps: shape mismatch");

    std::vector<SpatialMap> maps;
    if (rec) {
        rec->sources = sources;
        rec->conv_out.clear();
        rec->pooled.clear();
        rec->maps.clear();
    }
    for (std::size_t i = 0; i < sources.size(); ++i) {
        FeatureGrid y = p.generator(i).forward(*sources[i]);
        SpatialMap mx = pool_channels(y, PoolMode::Max);
        SpatialMap map = activate(mx, Activation::Sigmoid);
        if (rec) {
            rec->conv_out.push_back(std::move(y));
            rec->pooled.push_back(std::move(mx));
            rec->maps.push_back(map);
        }
        maps.push_back(std::move(map));
    }
    return maps;
}

void importance_maps_backward(IafParams& p, const ImportanceRec& rec,
                              const std::vector<SpatialMap>& grad_maps,
                              std::vector<FeatureGrid>* grad_sources) {
    for (std::size_t i = 0; i < rec.sources.size(); ++i) {
        const SpatialMap& map = rec.maps[i];
        SpatialMap g_mx(map.height, map.width);
        for (std::size_t j = 0; j < map.size(); ++j)
            g_mx.data[j] = grad_maps[i].data[j] * map.data[j] * (1.0 - map.data[j]);

        FeatureGrid g_conv(rec.conv_out[i].channels, map.height, map.width);
        pool_channels_backward(rec.conv_out[i], PoolMode::Max, g_mx, g_conv);
        p.generator(i).backward(*rec.sources[i], g_conv,
                                grad_sources ? &(*grad_sources)[i] : nullptr);
    }
}

FeatureGrid fuse_sources(const std::vector<const FeatureGrid*>& sources,
                         const std::vector<SpatialMap>& maps, FusionStrategy strategy,
                         FuseRecIaf* rec) {
    if (sources.empty()) throw ShapeError("fuse_sources: no sources");
    for (const FeatureGrid* s : sources)
        if (!s->same_shape(*sources[0])) throw ShapeError("fuse_sources: shape mismatch");

    const int ch = sources[0]->channels;
    const std::size_t hw = static_cast<std::size_t>(sources[0]->height) * sources[0]->width;
    FeatureGrid out(ch, sources[0]->height, sources[0]->width);

    if (rec) {
        rec->sources = sources;
        rec->strategy = strategy;
        rec->attention.clear();
    }

    switch (strategy) {
        case FusionStrategy::Adaptive: {
            if (maps.size() != sources.size())
                throw ShapeError("fuse_sources: need one importance map per source");
            std::vector<SpatialMap> att = softmax_stack(maps);
            for (std::size_t i = 0; i < sources.size(); ++i) {
                for (int c = 0; c < ch; ++c) {
                    const double* sp = &sources[i]->data[c * hw];
                    double* op = &out.data[c * hw];
                    const double* ap = att[i].data.data();
                    for (std::size_t j = 0; j < hw; ++j) op[j] += ap[j] * sp[j];
                }
            }
            if (rec) rec->attention = std::move(att);
            break;
        }
        case FusionStrategy::Summation:
            for (const FeatureGrid* s : sources) add_inplace(out, *s);
            break;
        case FusionStrategy::Average: {
            for (const FeatureGrid* s : sources) add_inplace(out, *s);
            const double inv = 1.0 / sources.size();
            for (double& v : out.data) v *= inv;
            break;
        }
        case FusionStrategy::Maximum:
            out = *sources[0];
            for (std::size_t i = 1; i < sources.size(); ++i)
                for (std::size_t j = 0; j < out.data.size(); ++j)
                    out.data[j] = std::max(out.data[j], sources[i]->data[j]);
            break;
    }
    return out;
}

void fuse_sources_backward(const FuseRecIaf& rec, const FeatureGrid& grad_out,
                           std::vector<FeatureGrid>* grad_sources,
                           std::vector<SpatialMap>* grad_maps) {
    const std::size_t n = rec.sources.size();
    const int ch = rec.sources[0]->channels;
    const std::size_t hw = static_cast<std::size_t>(rec.sources[0]->height) *
                           rec.sources[0]->width;

    switch (rec.strategy) {
        case FusionStrategy::Adaptive: {
            std::vector<SpatialMap> g_att(n, SpatialMap(rec.sources[0]->height,
                                                        rec.sources[0]->width));
            for (std::size_t i = 0; i < n; ++i) {
                for (int c = 0; c < ch; ++c) {
                    const double* gp = &grad_out.data[c * hw];
                    const double* sp = &rec.sources[i]->data[c * hw];
                    const double* ap = rec.attention[i].data.data();
                    double* gs = grad_sources ? &(*grad_sources)[i].data[c * hw] : nullptr;
                    for (std::size_t j = 0; j < hw; ++j) {
                        g_att[i].data[j] += gp[j] * sp[j];
                        if (gs) gs[j] += gp[j] * ap[j];
                    }
                }
            }
            if (grad_maps) softmax_stack_backward(rec.attention, g_att, *grad_maps);
            break;
        }
        case FusionStrategy::Summation:
            if (grad_sources)
                for (std::size_t i = 0; i < n; ++i) add_inplace((*grad_sources)[i], grad_out);
            break;
        case FusionStrategy::Average:
            if (grad_sources)
                for (std::size_t i = 0; i < n; ++i)
                    add_inplace((*grad_sources)[i], grad_out, 1.0 / n);
            break;
        case FusionStrategy::Maximum:
            if (grad_sources) {
                for (std::size_t j = 0; j < grad_out.data.size(); ++j) {
                    std::size_t best = 0;
                    double bv = rec.sources[0]->data[j];
                    for (std::size_t i = 1; i < n; ++i)
                        if (rec.sources[i]->data[j] > bv) { bv = rec.sources[i]->data[j]; best = i; }
                    (*grad_sources)[best].data[j] += grad_out.data[j];
                }
            }
            break;
    }
}

std::array<SpatialMap, 3> importance_maps(const FeatureGrid& h, const FeatureGrid& z,
                                          const FeatureGrid& f, const IafParams& p) {
    std::vector<SpatialMap> maps = importance_maps_n({&h, &z, &f}, p);
    return {std::move(maps[0]), std::move(maps[1]), std::move(maps[2])};
}

FeatureGrid adaptive_fuse(const FeatureGrid& h, const FeatureGrid& z, const FeatureGrid& f,
                          const std::array<SpatialMap, 3>& maps) {
    return fuse_sources({&h, &z, &f}, {maps[0], maps[1], maps[2]}, FusionStrategy::Adaptive);
}

}  // namespace scope
