#include "scope/cia.hpp"

#include <cmath>

namespace scope {

namespace {

FeatureGrid concat2(const FeatureGrid& a, const FeatureGrid& b) {
    return concat_channels({&a, &b});
}

FeatureGrid map_as_grid(const SpatialMap& m) {
    FeatureGrid g(1, m.height, m.width);
    g.data = m.data;
    return g;
}

}  // namespace

void GateStack::build(int channels, int scales_, int ksize, std::uint64_t seed,
                      const std::string& name) {
    scales = scales_;
    conv_a.clear();
    conv_b.clear();
    norm_a.clear();
    norm_b.clear();
    lateral.clear();
    const int pad = ksize / 2;
    for (int s = 0; s < scales; ++s) {
        const int in_ch = s == 0 ? 2 * channels : channels;
        const int stride = s == 0 ? 1 : 2;
        conv_a.emplace_back(channels, in_ch, ksize, stride, pad);
        conv_b.emplace_back(channels, channels, ksize, 1, pad);
        norm_a.emplace_back(channels);
        norm_b.emplace_back(channels);
        conv_a.back().init(seed, name + ".s" + std::to_string(s) + ".conv_a");
        conv_b.back().init(seed, name + ".s" + std::to_string(s) + ".conv_b");
    }
    for (int s = 0; s + 1 < scales; ++s) {
        lateral.emplace_back(channels, channels, 1, 1, 0);
        lateral.back().init(seed, name + ".s" + std::to_string(s) + ".lateral");
    }
}

void GateStack::visit(const std::string& prefix, const ParamFn& fn) {
    for (int s = 0; s < scales; ++s) {
        const std::string sp = prefix + ".s" + std::to_string(s);
        conv_a[s].visit(sp + ".conv_a", fn);
        norm_a[s].visit(sp + ".norm_a", fn);
        conv_b[s].visit(sp + ".conv_b", fn);
        norm_b[s].visit(sp + ".norm_b", fn);
        if (s + 1 < scales) lateral[s].visit(sp + ".lateral", fn);
    }
}

FeatureGrid GateStack::forward(const FeatureGrid& z, Rec* rec) const {
    std::vector<FeatureGrid> feats;
    feats.reserve(scales);
    if (rec) {
        rec->in = z;
        rec->a_pre.clear(); rec->a_aff.clear(); rec->a_act.clear();
        rec->b_pre.clear(); rec->b_aff.clear(); rec->b_act.clear();
        rec->topdown.clear();
    }
    const FeatureGrid* cur = &z;
    for (int s = 0; s < scales; ++s) {
        FeatureGrid a_pre = conv_a[s].forward(*cur);
        FeatureGrid a_aff = norm_a[s].forward(a_pre);
        FeatureGrid a_act = activate(a_aff, Activation::Relu);
        FeatureGrid b_pre = conv_b[s].forward(a_act);
        FeatureGrid b_aff = norm_b[s].forward(b_pre);
        FeatureGrid b_act = activate(b_aff, Activation::Relu);
        if (rec) {
            rec->a_pre.push_back(std::move(a_pre));
            rec->a_aff.push_back(std::move(a_aff));
            rec->a_act.push_back(std::move(a_act));
            rec->b_pre.push_back(std::move(b_pre));
            rec->b_aff.push_back(std::move(b_aff));
            rec->b_act.push_back(b_act);
        }
        feats.push_back(std::move(b_act));
        cur = &feats.back();
    }

    FeatureGrid top = feats[scales - 1];
    if (rec) rec->topdown.assign(scales, FeatureGrid());
    if (rec) rec->topdown[scales - 1] = top;
    for (int s = scales - 2; s >= 0; --s) {
        FeatureGrid lat = lateral[s].forward(feats[s]);
        FeatureGrid up = resize_bilinear(top, feats[s].height, feats[s].width);
        add_inplace(lat, up);
        top = std::move(lat);
        if (rec) rec->topdown[s] = top;
    }
    return top;
}

void GateStack::backward(const Rec& rec, const FeatureGrid& grad_out, FeatureGrid* grad_in) {
    // top-down lateral chain
    std::vector<FeatureGrid> grad_feat(scales);
    for (int s = 0; s < scales; ++s)
        grad_feat[s] = FeatureGrid(rec.b_act[s].channels, rec.b_act[s].height, rec.b_act[s].width);

    FeatureGrid g = grad_out;
    for (int s = 0; s < scales - 1; ++s) {
        lateral[s].backward(rec.b_act[s], g, &grad_feat[s]);
        FeatureGrid g_next(rec.topdown[s + 1].channels, rec.topdown[s + 1].height,
                           rec.topdown[s + 1].width);
        resize_bilinear_backward(g_next.height, g_next.width, g, g_next);
        g = std::move(g_next);
    }
    add_inplace(grad_feat[scales - 1], g);

    // bottom-up blocks, coarsest first so grads flow into the finer inputs
    for (int s = scales - 1; s >= 0; --s) {
        const FeatureGrid& gb_act = grad_feat[s];
        FeatureGrid gb_aff(gb_act.channels, gb_act.height, gb_act.width);
        activate_backward(rec.b_aff[s], rec.b_act[s], Activation::Relu, gb_act, gb_aff);
        FeatureGrid gb_pre(gb_aff.channels, gb_aff.height, gb_aff.width);
        norm_b[s].backward(rec.b_pre[s], gb_aff, &gb_pre);
        FeatureGrid ga_act(rec.a_act[s].channels, rec.a_act[s].height, rec.a_act[s].width);
        conv_b[s].backward(rec.a_act[s], gb_pre, &ga_act);
        FeatureGrid ga_aff(ga_act.channels, ga_act.height, ga_act.width);
        activate_backward(rec.a_aff[s], rec.a_act[s], Activation::Relu, ga_act, ga_aff);
        FeatureGrid ga_pre(ga_aff.channels, ga_aff.height, ga_aff.width);
        norm_a[s].backward(rec.a_pre[s], ga_aff, &ga_pre);
        if (s == 0) {
            conv_a[0].backward(rec.in, ga_pre, grad_in);
        } else {
            conv_a[s].backward(rec.b_act[s - 1], ga_pre, &grad_feat[s - 1]);
        }
    }
}

void CiaParams::build(int channels_, int tau_, int scales_, int ksize_, std::uint64_t seed,
                      SelectionVariant variant_) {
    channels = channels_;
    tau = tau_;
    scales = scales_;
    ksize = ksize_;
    variant = variant_;
    const int sel_in = variant == SelectionVariant::SumPairs ? 2 : 4;
    aleph = Conv2d(1, sel_in, 3, 1, 1);
    aleph.init(seed, "cia.aleph");
    gate_i.build(channels, scales, ksize, seed, "cia.gate_i");
    gate_f.build(channels, scales, ksize, seed, "cia.gate_f");
    gate_o.build(channels, scales, ksize, seed, "cia.gate_o");
    gate_c.build(channels, scales, ksize, seed, "cia.gate_c");
    concat_fuse = Conv2d(channels, (tau + 1) * channels, 1, 1, 0);
    concat_fuse.init(seed, "cia.concat_fuse");
}

void CiaParams::visit(const std::string& prefix, const ParamFn& fn) {
    aleph.visit(prefix + ".aleph", fn);
    gate_i.visit(prefix + ".gate_i", fn);
    gate_f.visit(prefix + ".gate_f", fn);
    gate_o.visit(prefix + ".gate_o", fn);
    gate_c.visit(prefix + ".gate_c", fn);
    concat_fuse.visit(prefix + ".concat_fuse", fn);
}

SpatialMap selection_map(const FeatureGrid& current, const TemporalBuffer& buffer,
                         const CiaParams& p, SelectionRec* rec) {
    if (buffer.tau() < 1) throw ShapeError("selection_map: empty history buffer");
    for (const FeatureGrid& f : buffer.frames)
        if (!f.same_shape(current)) throw ShapeError("selection_map: frame shape mismatch");

    FeatureGrid hsum = buffer.frames[0];
    for (int n = 1; n < buffer.tau(); ++n) add_inplace(hsum, buffer.frames[n]);

    SpatialMap ma_t = pool_channels(current, PoolMode::Avg);
    SpatialMap mm_t = pool_channels(current, PoolMode::Max);
    SpatialMap ma_h = pool_channels(hsum, PoolMode::Avg);
    SpatialMap mm_h = pool_channels(hsum, PoolMode::Max);

    FeatureGrid conv_in;
    if (p.variant == SelectionVariant::SumPairs) {
        conv_in = FeatureGrid(2, current.height, current.width);
        for (std::size_t i = 0; i < ma_t.size(); ++i) {
            conv_in.data[i] = ma_t.data[i] + ma_h.data[i];
            conv_in.data[ma_t.size() + i] = mm_t.data[i] + mm_h.data[i];
        }
    } else {
        conv_in = FeatureGrid(4, current.height, current.width);
        std::copy(ma_t.data.begin(), ma_t.data.end(), conv_in.data.begin());
        std::copy(mm_t.data.begin(), mm_t.data.end(), conv_in.data.begin() + ma_t.size());
        std::copy(ma_h.data.begin(), ma_h.data.end(), conv_in.data.begin() + 2 * ma_t.size());
        std::copy(mm_h.data.begin(), mm_h.data.end(), conv_in.data.begin() + 3 * ma_t.size());
    }

    FeatureGrid pre = p.aleph.forward(conv_in);
    SpatialMap u(current.height, current.width);
    activate_span(pre.data.data(), u.data.data(), u.size(), Activation::Sigmoid);

    if (rec) {
        rec->current = current;
        rec->history_sum = std::move(hsum);
        rec->ma_t = std::move(ma_t);
        rec->mm_t = std::move(mm_t);
        rec->ma_h = std::move(ma_h);
        rec->mm_h = std::move(mm_h);
        rec->conv_in = std::move(conv_in);
        rec->pre = std::move(pre);
        rec->u = u;
        rec->tau = buffer.tau();
    }
    return u;
}

void selection_map_backward(CiaParams& p, const SelectionRec& rec, const SpatialMap& grad_u,
                            FeatureGrid* grad_current, std::vector<FeatureGrid>* grad_frames) {
    const std::size_t hw = rec.u.size();
    FeatureGrid grad_pre(1, rec.u.height, rec.u.width);
    for (std::size_t i = 0; i < hw; ++i)
        grad_pre.data[i] = grad_u.data[i] * rec.u.data[i] * (1.0 - rec.u.data[i]);

    FeatureGrid grad_in(rec.conv_in.channels, rec.conv_in.height, rec.conv_in.width);
    p.aleph.backward(rec.conv_in, grad_pre, &grad_in);

    SpatialMap g_ma_t(rec.u.height, rec.u.width), g_mm_t(rec.u.height, rec.u.width);
    SpatialMap g_ma_h(rec.u.height, rec.u.width), g_mm_h(rec.u.height, rec.u.width);
    if (p.variant == SelectionVariant::SumPairs) {
        for (std::size_t i = 0; i < hw; ++i) {
            g_ma_t.data[i] = g_ma_h.data[i] = grad_in.data[i];
            g_mm_t.data[i] = g_mm_h.data[i] = grad_in.data[hw + i];
        }
    } else {
        for (std::size_t i = 0; i < hw; ++i) {
            g_ma_t.data[i] = grad_in.data[i];
            g_mm_t.data[i] = grad_in.data[hw + i];
            g_ma_h.data[i] = grad_in.data[2 * hw + i];
            g_mm_h.data[i] = grad_in.data[3 * hw + i];
        }
    }

    if (grad_current) {
        pool_channels_backward(rec.current, PoolMode::Avg, g_ma_t, *grad_current);
        pool_channels_backward(rec.current, PoolMode::Max, g_mm_t, *grad_current);
    }
    if (grad_frames) {
        FeatureGrid grad_hsum(rec.history_sum.channels, rec.history_sum.height,
                              rec.history_sum.width);
        pool_channels_backward(rec.history_sum, PoolMode::Avg, g_ma_h, grad_hsum);
        pool_channels_backward(rec.history_sum, PoolMode::Max, g_mm_h, grad_hsum);
        for (int n = 0; n < rec.tau; ++n) add_inplace((*grad_frames)[n], grad_hsum);
    }
}

std::vector<FeatureGrid> filter_history(const FeatureGrid& current, const TemporalBuffer& buffer,
                                        const SpatialMap& u, FilterRec* rec) {
    if (u.height != current.height || u.width != current.width)
        throw ShapeError("filter_history: selection map shape mismatch");
    const std::size_t hw = u.size();
    FeatureGrid tanh_cur = activate(current, Activation::Tanh);

    std::vector<FeatureGrid> out;
    out.reserve(buffer.frames.size());
    for (const FeatureGrid& f : buffer.frames) {
        if (!f.same_shape(current)) throw ShapeError("filter_history: frame shape mismatch");
        FeatureGrid h(current.channels, current.height, current.width);
        for (int c = 0; c < current.channels; ++c) {
            const double* tc = &tanh_cur.data[c * hw];
            const double* fp = &f.data[c * hw];
            double* hp = &h.data[c * hw];
            for (std::size_t i = 0; i < hw; ++i)
                hp[i] = (1.0 - u.data[i]) * tc[i] + u.data[i] * fp[i];
        }
        out.push_back(std::move(h));
    }

    if (rec) {
        rec->current = current;
        rec->tanh_cur = std::move(tanh_cur);
        rec->u = u;
        rec->frames.clear();
        for (const FeatureGrid& f : buffer.frames) rec->frames.push_back(&f);
    }
    return out;
}

void filter_history_backward(const FilterRec& rec, const std::vector<FeatureGrid>& grad_out,
                             SpatialMap* grad_u, FeatureGrid* grad_current,
                             std::vector<FeatureGrid>* grad_frames) {
    const std::size_t hw = rec.u.size();
    const int ch = rec.current.channels;
    FeatureGrid grad_tanh(ch, rec.current.height, rec.current.width);

    for (std::size_t n = 0; n < grad_out.size(); ++n) {
        const FeatureGrid& g = grad_out[n];
        const FeatureGrid& f = *rec.frames[n];
        for (int c = 0; c < ch; ++c) {
            const double* gp = &g.data[c * hw];
            const double* fp = &f.data[c * hw];
            const double* tc = &rec.tanh_cur.data[c * hw];
            double* gt = &grad_tanh.data[c * hw];
            double* gf = grad_frames ? &(*grad_frames)[n].data[c * hw] : nullptr;
            for (std::size_t i = 0; i < hw; ++i) {
                const double u = rec.u.data[i];
                gt[i] += gp[i] * (1.0 - u);
                if (gf) gf[i] += gp[i] * u;
                if (grad_u) grad_u->data[i] += gp[i] * (fp[i] - tc[i]);
            }
        }
    }
    if (grad_current) {
        for (std::size_t i = 0; i < grad_tanh.data.size(); ++i) {
            const double t = rec.tanh_cur.data[i];
            grad_current->data[i] += grad_tanh.data[i] * (1.0 - t * t);
        }
    }
}

LstmState pyramid_lstm_cell(const LstmState& state, const FeatureGrid& input, const CiaParams& p,
                            CellRec* rec) {
    if (!state.h.same_shape(input) || !state.c.same_shape(input))
        throw ShapeError("pyramid_lstm_cell: state/input shape mismatch");

    FeatureGrid z = concat2(input, state.h);
    CellRec local;
    CellRec& r = rec ? *rec : local;

    FeatureGrid pre_i = p.gate_i.forward(z, rec ? &r.rec_i : nullptr);
    FeatureGrid pre_f = p.gate_f.forward(z, rec ? &r.rec_f : nullptr);
    FeatureGrid pre_o = p.gate_o.forward(z, rec ? &r.rec_o : nullptr);
    FeatureGrid pre_c = p.gate_c.forward(z, rec ? &r.rec_c : nullptr);

    FeatureGrid act_i = activate(pre_i, Activation::Sigmoid);
    FeatureGrid act_f = activate(pre_f, Activation::Sigmoid);
    FeatureGrid act_o = activate(pre_o, Activation::Sigmoid);
    FeatureGrid act_c = activate(pre_c, Activation::Tanh);

    LstmState out;
    out.c = FeatureGrid(input.channels, input.height, input.width);
    out.h = FeatureGrid(input.channels, input.height, input.width);
    FeatureGrid tanh_c(input.channels, input.height, input.width);
    for (std::size_t i = 0; i < out.c.data.size(); ++i) {
        out.c.data[i] = act_f.data[i] * state.c.data[i] + act_i.data[i] * act_c.data[i];
        tanh_c.data[i] = std::tanh(out.c.data[i]);
        out.h.data[i] = act_o.data[i] * tanh_c.data[i];
    }

    if (rec) {
        r.z = std::move(z);
        r.pre_i = std::move(pre_i);
        r.pre_f = std::move(pre_f);
        r.pre_o = std::move(pre_o);
        r.pre_c = std::move(pre_c);
        r.act_i = std::move(act_i);
        r.act_f = std::move(act_f);
        r.act_o = std::move(act_o);
        r.act_c = std::move(act_c);
        r.c_prev = state.c;
        r.c_new = out.c;
        r.tanh_c = std::move(tanh_c);
    }
    return out;
}

void pyramid_lstm_cell_backward(CiaParams& p, const CellRec& rec, const FeatureGrid& grad_h,
                                const FeatureGrid& grad_c, FeatureGrid* grad_input,
                                FeatureGrid* grad_h_prev, FeatureGrid* grad_c_prev) {
    const std::size_t n = rec.c_new.data.size();
    const int ch = rec.c_new.channels, hh = rec.c_new.height, ww = rec.c_new.width;

    FeatureGrid g_pre_i(ch, hh, ww), g_pre_f(ch, hh, ww), g_pre_o(ch, hh, ww), g_pre_c(ch, hh, ww);
    for (std::size_t i = 0; i < n; ++i) {
        const double t = rec.tanh_c.data[i];
        const double gc = grad_c.data[i] + grad_h.data[i] * rec.act_o.data[i] * (1.0 - t * t);
        const double go_act = grad_h.data[i] * t;
        const double gf_act = gc * rec.c_prev.data[i];
        const double gi_act = gc * rec.act_c.data[i];
        const double gg_act = gc * rec.act_i.data[i];
        if (grad_c_prev) grad_c_prev->data[i] += gc * rec.act_f.data[i];

        g_pre_o.data[i] = go_act * rec.act_o.data[i] * (1.0 - rec.act_o.data[i]);
        g_pre_f.data[i] = gf_act * rec.act_f.data[i] * (1.0 - rec.act_f.data[i]);
        g_pre_i.data[i] = gi_act * rec.act_i.data[i] * (1.0 - rec.act_i.data[i]);
        g_pre_c.data[i] = gg_act * (1.0 - rec.act_c.data[i] * rec.act_c.data[i]);
    }

    FeatureGrid grad_z(rec.z.channels, hh, ww);
    p.gate_i.backward(rec.rec_i, g_pre_i, &grad_z);
    p.gate_f.backward(rec.rec_f, g_pre_f, &grad_z);
    p.gate_o.backward(rec.rec_o, g_pre_o, &grad_z);
    p.gate_c.backward(rec.rec_c, g_pre_c, &grad_z);

    const std::size_t hw = static_cast<std::size_t>(hh) * ww;
    const std::size_t half = static_cast<std::size_t>(ch) * hw;
    if (grad_input)
        for (std::size_t i = 0; i < half; ++i) grad_input->data[i] += grad_z.data[i];
    if (grad_h_prev)
        for (std::size_t i = 0; i < half; ++i) grad_h_prev->data[i] += grad_z.data[half + i];
}

FeatureGrid aggregate_context(const FeatureGrid& current, const TemporalBuffer& buffer,
                              const CiaParams& p, const CiaToggles& toggles, AggregateRec* rec) {
    if (buffer.tau() == 0) {
        if (rec) rec->bypass = true;
        return current;
    }

    AggregateRec local;
    AggregateRec& r = rec ? *rec : local;
    r.bypass = false;
    r.used_filter = toggles.selective_filtering;
    r.used_lstm = toggles.pyramid_lstm;

    std::vector<FeatureGrid> filtered;
    if (toggles.selective_filtering) {
        SpatialMap u = selection_map(current, buffer, p, rec ? &r.sel : nullptr);
        filtered = filter_history(current, buffer, u, rec ? &r.filt : nullptr);
    } else {
        filtered = buffer.frames;
    }

    if (toggles.pyramid_lstm) {
        r.seq = std::move(filtered);
        r.seq.push_back(current);
        LstmState state{FeatureGrid(current.channels, current.height, current.width),
                        FeatureGrid(current.channels, current.height, current.width)};
        if (rec) r.cells.resize(r.seq.size());
        for (std::size_t i = 0; i < r.seq.size(); ++i)
            state = pyramid_lstm_cell(state, r.seq[i], p, rec ? &r.cells[i] : nullptr);
        return state.h;
    }

    // base-model path: channel concat of every frame plus the current one,
    // fused by a 1x1 conv
    std::vector<const FeatureGrid*> parts;
    for (const FeatureGrid& f : filtered) parts.push_back(&f);
    parts.push_back(&current);
    FeatureGrid cat = concat_channels(parts);
    FeatureGrid out = p.concat_fuse.forward(cat);
    if (rec) {
        r.seq = std::move(filtered);
        r.concat_in = std::move(cat);
    }
    return out;
}

void aggregate_context_backward(CiaParams& p, const AggregateRec& rec, const FeatureGrid& grad_out,
                                FeatureGrid* grad_current, std::vector<FeatureGrid>* grad_frames) {
    if (rec.bypass) {
        if (grad_current) add_inplace(*grad_current, grad_out);
        return;
    }

    const int ch = grad_out.channels, hh = grad_out.height, ww = grad_out.width;
    const int tau = static_cast<int>(rec.used_lstm ? rec.seq.size() - 1 : rec.seq.size());

    // gradients w.r.t. the (possibly filtered) history inputs
    std::vector<FeatureGrid> grad_seq(tau, FeatureGrid(ch, hh, ww));
    FeatureGrid grad_cur_direct(ch, hh, ww);

    if (rec.used_lstm) {
        FeatureGrid gh = grad_out;
        FeatureGrid gc(ch, hh, ww);
        for (int i = static_cast<int>(rec.cells.size()) - 1; i >= 0; --i) {
            FeatureGrid gh_prev(ch, hh, ww), gc_prev(ch, hh, ww);
            FeatureGrid* gin = i == static_cast<int>(rec.cells.size()) - 1 ? &grad_cur_direct
                                                                           : &grad_seq[i];
            pyramid_lstm_cell_backward(p, rec.cells[i], gh, gc, gin, &gh_prev, &gc_prev);
            gh = std::move(gh_prev);
            gc = std::move(gc_prev);
        }
    } else {
        FeatureGrid grad_cat(rec.concat_in.channels, hh, ww);
        p.concat_fuse.backward(rec.concat_in, grad_out, &grad_cat);
        const std::size_t block = static_cast<std::size_t>(ch) * hh * ww;
        for (int n = 0; n < tau; ++n)
            std::copy(grad_cat.data.begin() + n * block, grad_cat.data.begin() + (n + 1) * block,
                      grad_seq[n].data.begin());
        std::copy(grad_cat.data.begin() + tau * block, grad_cat.data.begin() + (tau + 1) * block,
                  grad_cur_direct.data.begin());
    }

    if (rec.used_filter) {
        SpatialMap grad_u(hh, ww);
        filter_history_backward(rec.filt, grad_seq, &grad_u, grad_current, grad_frames);
        selection_map_backward(p, rec.sel, grad_u, grad_current, grad_frames);
    } else if (grad_frames) {
        for (int n = 0; n < tau; ++n) add_inplace((*grad_frames)[n], grad_seq[n]);
    }
    if (grad_current) add_inplace(*grad_current, grad_cur_direct);
}

}  // namespace scope
