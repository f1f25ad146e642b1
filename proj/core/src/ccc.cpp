#include "scope/ccc.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace scope {

std::size_t SelectionMask::count() const {
    std::size_t n = 0;
    for (std::uint8_t v : data) n += v;
    return n;
}

ConfidenceMap confidence_map(const FeatureGrid& grid, const Conv2d& gen) {
    if (gen.out_channels() < 1) throw ShapeError("confidence_map: generator needs >= 1 channel");
    FeatureGrid logits = gen.forward(grid);
    FeatureGrid probs = activate(logits, Activation::Sigmoid);
    return pool_channels(probs, PoolMode::Max);
}

std::pair<SelectionMask, PackedMessage> select_and_pack(const FeatureGrid& grid,
                                                        const ConfidenceMap& conf,
                                                        const ConfidencePolicy& policy,
                                                        std::uint32_t agent_id,
                                                        std::uint32_t frame_idx,
                                                        std::uint8_t scale) {
    if (policy.threshold < 0.0 || policy.threshold > 1.0)
        throw ConfigError("select_and_pack: threshold outside [0,1]");
    if (conf.height != grid.height || conf.width != grid.width)
        throw ShapeError("select_and_pack: confidence shape mismatch");

    std::vector<std::size_t> selected;
    for (std::size_t i = 0; i < conf.size(); ++i)
        if (conf.data[i] >= policy.threshold) selected.push_back(i);

    if (policy.budget >= 0 && selected.size() > static_cast<std::size_t>(policy.budget)) {
        std::sort(selected.begin(), selected.end(), [&](std::size_t a, std::size_t b) {
            if (conf.data[a] != conf.data[b]) return conf.data[a] > conf.data[b];
            return a < b;  // ties by row-major order
        });
        selected.resize(static_cast<std::size_t>(policy.budget));
        std::sort(selected.begin(), selected.end());
    }

    SelectionMask mask(grid.height, grid.width);
    for (std::size_t i : selected) mask.data[i] = 1;

    PackedMessage msg;
    msg.agent_id = agent_id;
    msg.frame_idx = frame_idx;
    msg.scale = scale;
    msg.channels = grid.channels;
    msg.entries.reserve(selected.size());
    for (std::size_t i : selected) {
        MessageEntry e;
        e.h = static_cast<std::uint16_t>(i / grid.width);
        e.w = static_cast<std::uint16_t>(i % grid.width);
        e.values.resize(grid.channels);
        for (int c = 0; c < grid.channels; ++c)
            e.values[c] = static_cast<float>(grid.at(c, e.h, e.w));
        msg.entries.push_back(std::move(e));
    }
    return {std::move(mask), std::move(msg)};
}

FeatureGrid apply_mask(const FeatureGrid& grid, const SelectionMask& mask) {
    if (mask.height != grid.height || mask.width != grid.width)
        throw ShapeError("apply_mask: shape mismatch");
    FeatureGrid out = grid;
    const std::size_t hw = mask.data.size();
    for (int c = 0; c < grid.channels; ++c) {
        double* p = &out.data[c * hw];
        for (std::size_t i = 0; i < hw; ++i)
            if (!mask.data[i]) p[i] = 0.0;
    }
    return out;
}

namespace {

SpatialMap maxpool2(const SpatialMap& in) {
    const int oh = (in.height + 1) / 2, ow = (in.width + 1) / 2;
    SpatialMap out(oh, ow);
    for (int y = 0; y < oh; ++y) {
        for (int x = 0; x < ow; ++x) {
            double m = in.at(2 * y, 2 * x);
            if (2 * x + 1 < in.width) m = std::max(m, in.at(2 * y, 2 * x + 1));
            if (2 * y + 1 < in.height) {
                m = std::max(m, in.at(2 * y + 1, 2 * x));
                if (2 * x + 1 < in.width) m = std::max(m, in.at(2 * y + 1, 2 * x + 1));
            }
            out.at(y, x) = m;
        }
    }
    return out;
}

}  // namespace

void DcmParams::build(int channels_, int heads_, int keypoints_, int k_max_, bool tie,
                      std::uint64_t seed, const std::string& name) {
    channels = channels_;
    heads = heads_;
    keypoints = keypoints_;
    k_max = k_max_;
    tie_agents = tie;
    if (heads < 1 || keypoints < 1 || k_max < 1) throw ConfigError("dcm: A, M, K must be >= 1");

    query = Linear(channels, channels);
    query.init(seed, name + ".query");
    pos = Linear(channels, 2);
    pos.init(seed, name + ".pos");

    head.assign(heads, DcmHead{});
    for (int a = 0; a < heads; ++a) {
        const std::string hp = name + ".head" + std::to_string(a);
        head[a].offset = Linear(2 * slots() * keypoints, channels);
        head[a].offset.zero_init();  // start sampling exactly at the reference point
        head[a].logit = Linear(slots() * keypoints, channels);
        head[a].logit.init(seed, hp + ".logit");
        head[a].out_proj = Linear(channels, channels, /*bias=*/false);
        head[a].out_proj.init(seed, hp + ".out_proj");
    }
}

void DcmParams::visit(const std::string& prefix, const ParamFn& fn) {
    query.visit(prefix + ".query", fn);
    pos.visit(prefix + ".pos", fn);
    for (std::size_t a = 0; a < head.size(); ++a) {
        const std::string hp = prefix + ".head" + std::to_string(a);
        head[a].offset.visit(hp + ".offset", fn);
        head[a].logit.visit(hp + ".logit", fn);
        head[a].out_proj.visit(hp + ".out_proj", fn);
    }
}

void CccParams::build(int channels_, int scales_, int heads, int keypoints, int k_max, bool tie,
                      std::uint64_t seed) {
    channels = channels_;
    scales = scales_;
    if (scales < 1) throw ConfigError("ccc: scale count must be >= 1");

    down.clear();
    for (int l = 1; l < scales; ++l) {
        down.emplace_back(channels, channels, 3, 2, 1);
        down.back().init(seed, "ccc.down" + std::to_string(l));
    }
    dcm.assign(scales, DcmParams{});
    for (int l = 0; l < scales; ++l)
        dcm[l].build(channels, heads, keypoints, k_max, tie, seed, "ccc.dcm" + std::to_string(l));
    fuse = Conv2d(channels, scales * channels, 1, 1, 0);
    fuse.init(seed, "ccc.fuse");
    base_fuse.clear();
    for (int l = 0; l < scales; ++l) {
        base_fuse.emplace_back(channels, (k_max + 1) * channels, 1, 1, 0);
        base_fuse.back().init(seed, "ccc.base_fuse" + std::to_string(l));
    }
}

void CccParams::visit(const std::string& prefix, const ParamFn& fn) {
    for (std::size_t l = 0; l < down.size(); ++l)
        down[l].visit(prefix + ".down" + std::to_string(l + 1), fn);
    for (std::size_t l = 0; l < dcm.size(); ++l)
        dcm[l].visit(prefix + ".dcm" + std::to_string(l), fn);
    fuse.visit(prefix + ".fuse", fn);
    for (std::size_t l = 0; l < base_fuse.size(); ++l)
        base_fuse[l].visit(prefix + ".base_fuse" + std::to_string(l), fn);
}

ScalePyramid build_pyramid(const FeatureGrid& grid, const ConfidenceMap& conf,
                           const CccParams& p, PyramidRec* rec) {
    if (grid.height < 4 || grid.width < 4) throw ShapeError("build_pyramid: grid too small");
    if (conf.height != grid.height || conf.width != grid.width)
        throw ShapeError("build_pyramid: confidence shape mismatch");

    ScalePyramid pyr;
    pyr.levels.push_back({grid, conf});
    if (rec) rec->feat_in.clear();
    for (int l = 1; l < p.scales; ++l) {
        const ScaleLevel& prev = pyr.levels.back();
        if (rec) rec->feat_in.push_back(prev.feat);
        ScaleLevel next;
        next.feat = p.down[l - 1].forward(prev.feat);
        next.conf = maxpool2(prev.conf);
        pyr.levels.push_back(std::move(next));
    }
    return pyr;
}

void build_pyramid_backward(CccParams& p, const PyramidRec& rec,
                            const std::vector<FeatureGrid>& grad_levels, FeatureGrid* grad_in) {
    FeatureGrid g = grad_levels.back();
    for (int l = static_cast<int>(grad_levels.size()) - 1; l >= 1; --l) {
        FeatureGrid gprev(rec.feat_in[l - 1].channels, rec.feat_in[l - 1].height,
                          rec.feat_in[l - 1].width);
        p.down[l - 1].backward(rec.feat_in[l - 1], g, &gprev);
        if (l - 1 < static_cast<int>(grad_levels.size()) - 1) add_inplace(gprev, grad_levels[l - 1]);
        g = std::move(gprev);
    }
    if (grad_in) add_inplace(*grad_in, g);
}

ReferencePointSet propose_reference_points(const std::vector<const ConfidenceMap*>& confs,
                                           double threshold) {
    if (confs.empty()) return {};
    const int h = confs[0]->height, w = confs[0]->width;
    for (const ConfidenceMap* c : confs)
        if (c->height != h || c->width != w)
            throw ShapeError("propose_reference_points: map shape mismatch");

    ReferencePointSet refs;
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            double sum = 0.0;
            for (const ConfidenceMap* c : confs) sum += c->at(y, x);
            if (sum >= threshold) refs.push_back({y, x});
        }
    }
    return refs;
}

FeatureGrid deformable_cross_attention(const FeatureGrid& ego,
                                       const std::vector<const FeatureGrid*>& collabs,
                                       const ReferencePointSet& refs, const DcmParams& p,
                                       DcmRec* rec) {
    FeatureGrid out = ego;
    const int k_used = static_cast<int>(collabs.size());
    if (k_used == 0) {
        if (rec) { rec->k_used = 0; rec->refs.clear(); }
        return out;
    }
    if (!p.tie_agents && k_used > p.k_max)
        throw ConfigError("dcm: more collaborators than predictor slots");
    for (const FeatureGrid* c : collabs)
        if (!c->same_shape(ego)) throw ShapeError("dcm: collaborator shape mismatch");

    const int C = ego.channels, M = p.keypoints, A = p.heads;
    const int km = k_used * M;
    if (rec) {
        rec->ego = &ego;
        rec->collabs = collabs;
        rec->refs = refs;
        rec->k_used = k_used;
        rec->query.assign(refs.size() * C, 0.0);
        rec->weights.assign(refs.size() * A * km, 0.0);
        rec->offsets.assign(refs.size() * A * km * 2, 0.0);
    }

    std::vector<double> query(C), coords(2), off_raw, logit_raw, logits(km), wts(km);
    std::vector<double> sample(C), head_out(C), proj(C);
    for (std::size_t qi = 0; qi < refs.size(); ++qi) {
        const RefPoint& q = refs[qi];
        if (q.h < 0 || q.h >= ego.height || q.w < 0 || q.w >= ego.width)
            throw ShapeError("dcm: reference point out of bounds");

        std::vector<double> qf(C);
        for (int c = 0; c < C; ++c) qf[c] = ego.at(c, q.h, q.w);
        coords[0] = static_cast<double>(q.h) / ego.height;
        coords[1] = static_cast<double>(q.w) / ego.width;
        p.query.forward(qf.data(), query.data());
        std::vector<double> pe(C);
        p.pos.forward(coords.data(), pe.data());
        for (int c = 0; c < C; ++c) query[c] += pe[c];
        if (rec) std::copy(query.begin(), query.end(), rec->query.begin() + qi * C);

        std::vector<double> out_q(C, 0.0);
        for (int a = 0; a < A; ++a) {
            off_raw.assign(p.head[a].offset.out_dim(), 0.0);
            logit_raw.assign(p.head[a].logit.out_dim(), 0.0);
            p.head[a].offset.forward(query.data(), off_raw.data());
            p.head[a].logit.forward(query.data(), logit_raw.data());

            for (int k = 0; k < k_used; ++k) {
                for (int m = 0; m < M; ++m) {
                    const int idx = k * M + m;
                    const int pidx = p.tie_agents ? m : idx;
                    logits[idx] = logit_raw[pidx];
                }
            }
            softmax_span(logits.data(), wts.data(), km);

            std::fill(head_out.begin(), head_out.end(), 0.0);
            for (int k = 0; k < k_used; ++k) {
                for (int m = 0; m < M; ++m) {
                    const int idx = k * M + m;
                    const int pidx = p.tie_agents ? m : idx;
                    const double dx = off_raw[2 * pidx];
                    const double dy = off_raw[2 * pidx + 1];
                    sample_bilinear(*collabs[k], q.w + dx, q.h + dy, sample.data());
                    const double wgt = wts[idx];
                    for (int c = 0; c < C; ++c) head_out[c] += wgt * sample[c];
                    if (rec) {
                        const std::size_t base = (qi * A + a) * km + idx;
                        rec->weights[base] = wgt;
                        rec->offsets[2 * base] = dx;
                        rec->offsets[2 * base + 1] = dy;
                    }
                }
            }
            p.head[a].out_proj.forward(head_out.data(), proj.data());
            for (int c = 0; c < C; ++c) out_q[c] += proj[c];
        }
        for (int c = 0; c < C; ++c) out.at(c, q.h, q.w) = out_q[c];
    }
    return out;
}

void deformable_cross_attention_backward(DcmParams& p, const DcmRec& rec,
                                         const FeatureGrid& grad_out, FeatureGrid* grad_ego,
                                         std::vector<FeatureGrid>* grad_collabs) {
    const FeatureGrid& ego = *rec.ego;
    const int C = ego.channels, M = p.keypoints, A = p.heads;
    const int k_used = rec.k_used;

    // pass-through gradient everywhere except the overwritten positions
    std::vector<char> is_ref(static_cast<std::size_t>(ego.height) * ego.width, 0);
    for (const RefPoint& q : rec.refs) is_ref[static_cast<std::size_t>(q.h) * ego.width + q.w] = 1;
    if (grad_ego) {
        const std::size_t hw = is_ref.size();
        for (int c = 0; c < C; ++c)
            for (std::size_t i = 0; i < hw; ++i)
                if (!is_ref[i]) grad_ego->data[c * hw + i] += grad_out.data[c * hw + i];
    }
    if (k_used == 0) return;

    const int km = k_used * M;
    std::vector<double> g_q(C), query(C), g_query(C), head_out(C), g_head_out(C);
    std::vector<double> sample(C), g_sample(C), g_wts(km), g_logits(km);
    std::vector<double> off_raw, g_off_raw, g_logit_raw, coords(2), qf(C), g_qf(C);

    for (std::size_t qi = 0; qi < rec.refs.size(); ++qi) {
        const RefPoint& q = rec.refs[qi];
        for (int c = 0; c < C; ++c) g_q[c] = grad_out.at(c, q.h, q.w);
        std::copy(rec.query.begin() + qi * C, rec.query.begin() + (qi + 1) * C, query.begin());
        std::fill(g_query.begin(), g_query.end(), 0.0);

        for (int a = 0; a < A; ++a) {
            const std::size_t base0 = (qi * A + a) * km;
            // rebuild head_out from stored weights and offsets
            std::fill(head_out.begin(), head_out.end(), 0.0);
            for (int idx = 0; idx < km; ++idx) {
                const int k = idx / M;
                const double dx = rec.offsets[2 * (base0 + idx)];
                const double dy = rec.offsets[2 * (base0 + idx) + 1];
                sample_bilinear(*rec.collabs[k], q.w + dx, q.h + dy, sample.data());
                const double wgt = rec.weights[base0 + idx];
                for (int c = 0; c < C; ++c) head_out[c] += wgt * sample[c];
            }
            std::fill(g_head_out.begin(), g_head_out.end(), 0.0);
            p.head[a].out_proj.backward(head_out.data(), g_q.data(), g_head_out.data());

            g_off_raw.assign(p.head[a].offset.out_dim(), 0.0);
            g_logit_raw.assign(p.head[a].logit.out_dim(), 0.0);
            for (int idx = 0; idx < km; ++idx) {
                const int k = idx / M, m = idx % M;
                const int pidx = p.tie_agents ? m : idx;
                const double dx = rec.offsets[2 * (base0 + idx)];
                const double dy = rec.offsets[2 * (base0 + idx) + 1];
                const double x = q.w + dx, y = q.h + dy;
                sample_bilinear(*rec.collabs[k], x, y, sample.data());
                double dot = 0.0;
                const double wgt = rec.weights[base0 + idx];
                for (int c = 0; c < C; ++c) {
                    dot += g_head_out[c] * sample[c];
                    g_sample[c] = wgt * g_head_out[c];
                }
                g_wts[idx] = dot;
                double gx = 0.0, gy = 0.0;
                sample_bilinear_backward(*rec.collabs[k], x, y, g_sample.data(),
                                         grad_collabs ? &(*grad_collabs)[k] : nullptr, &gx, &gy);
                g_off_raw[2 * pidx] += gx;
                g_off_raw[2 * pidx + 1] += gy;
            }
            std::fill(g_logits.begin(), g_logits.end(), 0.0);
            softmax_backward_span(&rec.weights[base0], g_wts.data(), g_logits.data(), km);
            for (int idx = 0; idx < km; ++idx) {
                const int pidx = p.tie_agents ? idx % M : idx;
                g_logit_raw[pidx] += g_logits[idx];
            }
            p.head[a].logit.backward(query.data(), g_logit_raw.data(), g_query.data());
            p.head[a].offset.backward(query.data(), g_off_raw.data(), g_query.data());
        }

        for (int c = 0; c < C; ++c) qf[c] = ego.at(c, q.h, q.w);
        coords[0] = static_cast<double>(q.h) / ego.height;
        coords[1] = static_cast<double>(q.w) / ego.width;
        std::fill(g_qf.begin(), g_qf.end(), 0.0);
        p.query.backward(qf.data(), g_query.data(), g_qf.data());
        p.pos.backward(coords.data(), g_query.data(), nullptr);
        if (grad_ego)
            for (int c = 0; c < C; ++c) grad_ego->at(c, q.h, q.w) += g_qf[c];
    }
}

FeatureGrid fuse_scales(const std::vector<FeatureGrid>& z_levels, const CccParams& p,
                        FuseRec* rec) {
    if (static_cast<int>(z_levels.size()) != p.scales)
        throw ShapeError("fuse_scales: expected " + std::to_string(p.scales) + " levels");
    const int h0 = z_levels[0].height, w0 = z_levels[0].width;

    std::vector<FeatureGrid> up;
    up.reserve(z_levels.size());
    std::vector<const FeatureGrid*> parts;
    if (rec) rec->level_dims.clear();
    for (const FeatureGrid& z : z_levels) {
        if (rec) rec->level_dims.emplace_back(z.height, z.width);
        up.push_back(resize_bilinear(z, h0, w0));
        parts.push_back(&up.back());
    }
    FeatureGrid cat = concat_channels(parts);
    FeatureGrid out = p.fuse.forward(cat);
    if (rec) rec->concat_in = std::move(cat);
    return out;
}

void fuse_scales_backward(CccParams& p, const FuseRec& rec, const FeatureGrid& grad_out,
                          std::vector<FeatureGrid>* grad_levels) {
    FeatureGrid grad_cat(rec.concat_in.channels, rec.concat_in.height, rec.concat_in.width);
    p.fuse.backward(rec.concat_in, grad_out, &grad_cat);
    if (!grad_levels) return;

    const int C = p.channels;
    const std::size_t block = static_cast<std::size_t>(C) * rec.concat_in.height *
                              rec.concat_in.width;
    for (std::size_t l = 0; l < rec.level_dims.size(); ++l) {
        FeatureGrid g_up(C, rec.concat_in.height, rec.concat_in.width);
        std::copy(grad_cat.data.begin() + l * block, grad_cat.data.begin() + (l + 1) * block,
                  g_up.data.begin());
        resize_bilinear_backward(rec.level_dims[l].first, rec.level_dims[l].second, g_up,
                                 (*grad_levels)[l]);
    }
}

FeatureGrid ccc_forward(const FeatureGrid& ego, const ConfidenceMap& ego_conf,
                        const std::vector<CollabInput>& collabs, const CccParams& p,
                        const CccToggles& toggles, double ref_threshold, CccRec* rec) {
    if (collabs.empty()) {
        if (rec) rec->bypass = true;
        return ego;
    }

    CccRec local;
    CccRec& r = rec ? *rec : local;
    r.bypass = false;
    r.toggles = toggles;

    r.ego_pyr = build_pyramid(ego, ego_conf, p, rec ? &r.ego_pyr_rec : nullptr);
    r.collab_pyrs.clear();
    if (rec) r.collab_pyr_recs.assign(collabs.size(), PyramidRec{});
    for (std::size_t k = 0; k < collabs.size(); ++k)
        r.collab_pyrs.push_back(build_pyramid(*collabs[k].feat, *collabs[k].conf, p,
                                              rec ? &r.collab_pyr_recs[k] : nullptr));

    r.z_levels.clear();
    r.refs.assign(p.scales, {});
    if (rec) {
        r.dcm_recs.assign(p.scales, DcmRec{});
        r.base_concat.assign(p.scales, FeatureGrid());
    }

    std::vector<FeatureGrid> zero_slots;  // DCM-off path, absent collaborator slots
    if (!toggles.dcm)
        zero_slots.reserve(static_cast<std::size_t>(p.scales) *
                           (p.base_fuse[0].in_channels() / p.channels));
    for (int l = 0; l < p.scales; ++l) {
        const FeatureGrid& ego_l = r.ego_pyr.levels[l].feat;
        std::vector<const FeatureGrid*> collab_feats;
        for (const ScalePyramid& cp : r.collab_pyrs) collab_feats.push_back(&cp.levels[l].feat);

        if (toggles.dcm) {
            ReferencePointSet refs;
            if (toggles.rpp) {
                std::vector<const ConfidenceMap*> confs{&r.ego_pyr.levels[l].conf};
                for (const ScalePyramid& cp : r.collab_pyrs) confs.push_back(&cp.levels[l].conf);
                refs = propose_reference_points(confs, ref_threshold);
            } else {
                for (int y = 0; y < ego_l.height; ++y)
                    for (int x = 0; x < ego_l.width; ++x) refs.push_back({y, x});
            }
            r.refs[l] = refs;
            r.z_levels.push_back(deformable_cross_attention(ego_l, collab_feats, refs, p.dcm[l],
                                                            rec ? &r.dcm_recs[l] : nullptr));
        } else {
            const int k_max = p.base_fuse[l].in_channels() / p.channels - 1;
            if (static_cast<int>(collab_feats.size()) > k_max)
                throw ConfigError("ccc: more collaborators than fusion slots");
            std::vector<const FeatureGrid*> parts{&ego_l};
            for (const FeatureGrid* f : collab_feats) parts.push_back(f);
            for (int k = static_cast<int>(collab_feats.size()); k < k_max; ++k) {
                zero_slots.emplace_back(p.channels, ego_l.height, ego_l.width);
                parts.push_back(&zero_slots.back());
            }
            FeatureGrid cat = concat_channels(parts);
            r.z_levels.push_back(p.base_fuse[l].forward(cat));
            if (rec) r.base_concat[l] = std::move(cat);
        }
    }
    return fuse_scales(r.z_levels, p, rec ? &r.fuse_rec : nullptr);
}

void ccc_backward(CccParams& p, const CccRec& rec, const FeatureGrid& grad_out,
                  FeatureGrid* grad_ego) {
    if (rec.bypass) {
        if (grad_ego) add_inplace(*grad_ego, grad_out);
        return;
    }

    std::vector<FeatureGrid> grad_z(p.scales);
    for (int l = 0; l < p.scales; ++l) {
        const FeatureGrid& z = rec.z_levels[l];
        grad_z[l] = FeatureGrid(z.channels, z.height, z.width);
    }
    fuse_scales_backward(p, rec.fuse_rec, grad_out, &grad_z);

    const std::size_t n_collab = rec.collab_pyrs.size();
    std::vector<FeatureGrid> grad_ego_levels(p.scales);
    std::vector<std::vector<FeatureGrid>> grad_collab_levels(n_collab,
                                                             std::vector<FeatureGrid>(p.scales));
    for (int l = 0; l < p.scales; ++l) {
        const FeatureGrid& ego_l = rec.ego_pyr.levels[l].feat;
        grad_ego_levels[l] = FeatureGrid(ego_l.channels, ego_l.height, ego_l.width);
        for (std::size_t k = 0; k < n_collab; ++k) {
            const FeatureGrid& f = rec.collab_pyrs[k].levels[l].feat;
            grad_collab_levels[k][l] = FeatureGrid(f.channels, f.height, f.width);
        }
    }

    for (int l = 0; l < p.scales; ++l) {
        if (rec.toggles.dcm) {
            std::vector<FeatureGrid>* gc = nullptr;
            std::vector<FeatureGrid> slot;
            slot.reserve(n_collab);
            for (std::size_t k = 0; k < n_collab; ++k) slot.push_back(std::move(grad_collab_levels[k][l]));
            deformable_cross_attention_backward(p.dcm[l], rec.dcm_recs[l], grad_z[l],
                                                &grad_ego_levels[l], &slot);
            for (std::size_t k = 0; k < n_collab; ++k) grad_collab_levels[k][l] = std::move(slot[k]);
            (void)gc;
        } else {
            FeatureGrid grad_cat(rec.base_concat[l].channels, rec.base_concat[l].height,
                                 rec.base_concat[l].width);
            p.base_fuse[l].backward(rec.base_concat[l], grad_z[l], &grad_cat);
            const std::size_t block = static_cast<std::size_t>(p.channels) *
                                      rec.base_concat[l].height * rec.base_concat[l].width;
            std::copy(grad_cat.data.begin(), grad_cat.data.begin() + block,
                      grad_ego_levels[l].data.begin());
            for (std::size_t k = 0; k < n_collab; ++k)
                std::copy(grad_cat.data.begin() + (k + 1) * block,
                          grad_cat.data.begin() + (k + 2) * block,
                          grad_collab_levels[k][l].data.begin());
        }
    }

    build_pyramid_backward(p, rec.ego_pyr_rec, grad_ego_levels, grad_ego);
    for (std::size_t k = 0; k < n_collab; ++k)
        build_pyramid_backward(p, rec.collab_pyr_recs[k], grad_collab_levels[k], nullptr);
}

}  // namespace scope
