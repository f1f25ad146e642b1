#include "scope/numerics_check.hpp"

#include <chrono>
#include <cmath>
#include <functional>

#include "scope/ccc.hpp"
#include "scope/cia.hpp"
#include "scope/detection.hpp"
#include "scope/iaf.hpp"
#include "scope/ops.hpp"
#include "scope/rng.hpp"

namespace scope {

namespace {

using Clock = std::chrono::steady_clock;

FeatureGrid seeded_grid(int c, int h, int w, Rng& rng, double lo = -1.0, double hi = 1.0) {
    FeatureGrid g(c, h, w);
    for (double& v : g.data) v = rng.uniform(lo, hi);
    return g;
}

SpatialMap seeded_map(int h, int w, Rng& rng, double lo = -1.0, double hi = 1.0) {
    SpatialMap m(h, w);
    for (double& v : m.data) v = rng.uniform(lo, hi);
    return m;
}

double grid_sum(const FeatureGrid& g) {
    double acc = 0.0;
    for (double v : g.data) acc += v;
    return acc;
}

struct Battery {
    std::uint64_t seed;
    double eps;
    double tol;
    std::vector<NumericsCase>* out;

    void run(const std::string& name, const GradProbe& probe, const LossFn& loss,
             const GradFn& grad) {
        NumericsCase c;
        c.name = name;
        c.tolerance = tol;
        const auto t0 = Clock::now();
        const GradCheckReport rep = grad_check(loss, grad, probe.snapshot(), eps);
        c.seconds = std::chrono::duration<double>(Clock::now() - t0).count();
        c.max_rel_err = rep.max_rel_err;
        c.pass = rep.max_rel_err < tol;
        out->push_back(c);
    }
};

}  // namespace

std::vector<NumericsCase> run_numerics_battery(std::uint64_t seed, double eps, double tolerance) {
    std::vector<NumericsCase> cases;
    Battery bat{seed, eps, tolerance, &cases};

    // ---- channel pooling ----
    for (PoolMode mode : {PoolMode::Avg, PoolMode::Max}) {
        Rng rng(seed, mode == PoolMode::Avg ? 1u : 2u);
        FeatureGrid in = seeded_grid(5, 7, 6, rng);
        GradProbe probe;
        probe.add(in.data);
        bat.run(
            mode == PoolMode::Avg ? "pool_channels_avg" : "pool_channels_max", probe,
            [&](const std::vector<double>& x) {
                probe.load(x);
                SpatialMap m = pool_channels(in, mode);
                double acc = 0.0;
                for (double v : m.data) acc += v;
                return acc;
            },
            [&](const std::vector<double>& x) {
                probe.load(x);
                FeatureGrid gin(in.channels, in.height, in.width);
                SpatialMap ones(in.height, in.width, 1.0);
                pool_channels_backward(in, mode, ones, gin);
                return gin.data;
            });
    }

    // ---- activations ----
    for (Activation a : {Activation::Sigmoid, Activation::Tanh, Activation::Relu}) {
        Rng rng(seed, 10u + static_cast<unsigned>(a));
        FeatureGrid in(4, 6, 6);
        for (double& v : in.data) {
            // keep relu inputs away from its kink
            const double mag = rng.uniform(0.1, 1.5);
            v = rng.uniform01() < 0.5 ? -mag : mag;
        }
        GradProbe probe;
        probe.add(in.data);
        const char* name = a == Activation::Sigmoid ? "activate_sigmoid"
                           : a == Activation::Tanh  ? "activate_tanh"
                                                    : "activate_relu";
        bat.run(
            name, probe,
            [&](const std::vector<double>& x) {
                probe.load(x);
                return grid_sum(activate(in, a));
            },
            [&](const std::vector<double>& x) {
                probe.load(x);
                FeatureGrid out = activate(in, a);
                FeatureGrid gin(in.channels, in.height, in.width);
                FeatureGrid ones(in.channels, in.height, in.width, 1.0);
                activate_backward(in, out, a, ones, gin);
                return gin.data;
            });
    }

    // ---- conv2d (unit stride and the stride-2 pyramid path) ----
    for (int stride : {1, 2}) {
        Rng rng(seed, 20u + stride);
        FeatureGrid in = seeded_grid(3, 7, 6, rng);
        Conv2d conv(4, 3, 3, stride, 1);
        for (double& v : conv.w.val) v = rng.uniform(-0.5, 0.5);
        for (double& v : conv.b.val) v = rng.uniform(-0.2, 0.2);
        GradProbe probe;
        probe.add(in.data);
        probe.add(conv.w);
        probe.add(conv.b);
        bat.run(
            stride == 1 ? "conv2d" : "conv2d_stride2", probe,
            [&](const std::vector<double>& x) {
                probe.load(x);
                return grid_sum(conv.forward(in));
            },
            [&](const std::vector<double>& x) {
                probe.load(x);
                conv.w.zero_grad();
                conv.b.zero_grad();
                FeatureGrid out = conv.forward(in);
                FeatureGrid ones(out.channels, out.height, out.width, 1.0);
                FeatureGrid gin(in.channels, in.height, in.width);
                conv.backward(in, ones, &gin);
                std::vector<double> g = gin.data;
                g.insert(g.end(), conv.w.grad.begin(), conv.w.grad.end());
                g.insert(g.end(), conv.b.grad.begin(), conv.b.grad.end());
                return g;
            });
    }

    // ---- bilinear resize (up and down) ----
    for (bool up : {true, false}) {
        Rng rng(seed, up ? 30u : 31u);
        FeatureGrid in = seeded_grid(3, 5, 6, rng);
        const int oh = up ? 8 : 3, ow = up ? 9 : 3;
        GradProbe probe;
        probe.add(in.data);
        bat.run(
            up ? "resize_bilinear_up" : "resize_bilinear_down", probe,
            [&](const std::vector<double>& x) {
                probe.load(x);
                return grid_sum(resize_bilinear(in, oh, ow));
            },
            [&](const std::vector<double>& x) {
                probe.load(x);
                FeatureGrid gin(in.channels, in.height, in.width);
                FeatureGrid ones(in.channels, oh, ow, 1.0);
                resize_bilinear_backward(in.height, in.width, ones, gin);
                return gin.data;
            });
    }

    // ---- bilinear point sampling, including the position gradient ----
    {
        Rng rng(seed, 40u);
        FeatureGrid grid = seeded_grid(4, 6, 6, rng);
        double px = 2.3, py = 3.65;
        GradProbe probe;
        probe.add(grid.data);
        probe.add(px);
        probe.add(py);
        bat.run(
            "sample_bilinear", probe,
            [&](const std::vector<double>& x) {
                probe.load(x);
                double acc = 0.0;
                for (double v : sample_bilinear(grid, px, py)) acc += v;
                return acc;
            },
            [&](const std::vector<double>& x) {
                probe.load(x);
                FeatureGrid ggrid(grid.channels, grid.height, grid.width);
                std::vector<double> ones(grid.channels, 1.0);
                double gx = 0.0, gy = 0.0;
                sample_bilinear_backward(grid, px, py, ones.data(), &ggrid, &gx, &gy);
                std::vector<double> g = ggrid.data;
                g.push_back(gx);
                g.push_back(gy);
                return g;
            });
    }

    // ---- stacked softmax ----
    {
        Rng rng(seed, 50u);
        std::vector<SpatialMap> maps;
        for (int i = 0; i < 3; ++i) maps.push_back(seeded_map(4, 4, rng, -2.0, 2.0));
        GradProbe probe;
        for (SpatialMap& m : maps) probe.add(m.data);
        // weighted sum so the gradient is not annihilated by the row-sum
        // invariant of softmax outputs
        std::vector<SpatialMap> coef;
        for (int i = 0; i < 3; ++i) coef.push_back(seeded_map(4, 4, rng, 0.1, 1.0));
        bat.run(
            "softmax_stack", probe,
            [&](const std::vector<double>& x) {
                probe.load(x);
                std::vector<SpatialMap> out = softmax_stack(maps);
                double acc = 0.0;
                for (int i = 0; i < 3; ++i)
                    for (std::size_t j = 0; j < out[i].size(); ++j)
                        acc += coef[i].data[j] * out[i].data[j];
                return acc;
            },
            [&](const std::vector<double>& x) {
                probe.load(x);
                std::vector<SpatialMap> out = softmax_stack(maps);
                std::vector<SpatialMap> gin(3, SpatialMap(4, 4));
                softmax_stack_backward(out, coef, gin);
                std::vector<double> g;
                for (SpatialMap& m : gin) g.insert(g.end(), m.data.begin(), m.data.end());
                return g;
            });
    }

    // ---- pyramid LSTM cell ----
    {
        Rng rng(seed, 60u);
        CiaParams cia;
        cia.build(3, 1, 2, 3, Rng::combine(seed, 61u));
        FeatureGrid input = seeded_grid(3, 6, 6, rng, -0.8, 0.8);
        LstmState state{seeded_grid(3, 6, 6, rng, -0.5, 0.5), seeded_grid(3, 6, 6, rng, -0.5, 0.5)};

        GradProbe probe;
        probe.add(input.data);
        probe.add(state.h.data);
        probe.add(state.c.data);
        std::vector<Tensor*> tensors;
        for (GateStack* g : {&cia.gate_i, &cia.gate_f, &cia.gate_o, &cia.gate_c})
            g->visit("g", [&](const std::string&, Tensor& t, bool) {
                probe.add(t);
                tensors.push_back(&t);
            });
        bat.run(
            "pyramid_lstm_cell", probe,
            [&](const std::vector<double>& x) {
                probe.load(x);
                return grid_sum(pyramid_lstm_cell(state, input, cia).h);
            },
            [&](const std::vector<double>& x) {
                probe.load(x);
                for (Tensor* t : tensors) t->zero_grad();
                CellRec rec;
                pyramid_lstm_cell(state, input, cia, &rec);
                FeatureGrid ones(3, 6, 6, 1.0);
                FeatureGrid zeros(3, 6, 6);
                FeatureGrid gi(3, 6, 6), gh(3, 6, 6), gc(3, 6, 6);
                pyramid_lstm_cell_backward(cia, rec, ones, zeros, &gi, &gh, &gc);
                std::vector<double> g = gi.data;
                g.insert(g.end(), gh.data.begin(), gh.data.end());
                g.insert(g.end(), gc.data.begin(), gc.data.end());
                for (Tensor* t : tensors) g.insert(g.end(), t->grad.begin(), t->grad.end());
                return g;
            });
    }

    // ---- deformable cross-attention ----
    {
        Rng rng(seed, 70u);
        DcmParams dcm;
        dcm.build(4, 2, 3, 2, false, Rng::combine(seed, 71u), "probe.dcm");
        // fractional offsets keep the sampling away from bilinear kinks
        for (DcmHead& h : dcm.head)
            for (double& v : h.offset.b.val) v = rng.uniform(0.2, 0.45);
        FeatureGrid ego = seeded_grid(4, 8, 8, rng);
        FeatureGrid c0 = seeded_grid(4, 8, 8, rng);
        FeatureGrid c1 = seeded_grid(4, 8, 8, rng);
        const ReferencePointSet refs{{1, 1}, {2, 5}, {4, 3}, {6, 6}, {3, 0}, {7, 4}};

        GradProbe probe;
        probe.add(ego.data);
        probe.add(c0.data);
        probe.add(c1.data);
        std::vector<Tensor*> tensors;
        dcm.visit("d", [&](const std::string&, Tensor& t, bool) {
            probe.add(t);
            tensors.push_back(&t);
        });
        bat.run(
            "deformable_cross_attention", probe,
            [&](const std::vector<double>& x) {
                probe.load(x);
                return grid_sum(deformable_cross_attention(ego, {&c0, &c1}, refs, dcm));
            },
            [&](const std::vector<double>& x) {
                probe.load(x);
                for (Tensor* t : tensors) t->zero_grad();
                DcmRec rec;
                deformable_cross_attention(ego, {&c0, &c1}, refs, dcm, &rec);
                FeatureGrid ones(4, 8, 8, 1.0);
                FeatureGrid gego(4, 8, 8);
                std::vector<FeatureGrid> gcol(2, FeatureGrid(4, 8, 8));
                deformable_cross_attention_backward(dcm, rec, ones, &gego, &gcol);
                std::vector<double> g = gego.data;
                g.insert(g.end(), gcol[0].data.begin(), gcol[0].data.end());
                g.insert(g.end(), gcol[1].data.begin(), gcol[1].data.end());
                for (Tensor* t : tensors) g.insert(g.end(), t->grad.begin(), t->grad.end());
                return g;
            });
    }

    // ---- importance-weighted fusion ----
    {
        Rng rng(seed, 80u);
        IafParams iaf;
        iaf.build(4, true, 3, Rng::combine(seed, 81u));
        FeatureGrid h = seeded_grid(4, 8, 8, rng);
        FeatureGrid z = seeded_grid(4, 8, 8, rng);
        FeatureGrid f = seeded_grid(4, 8, 8, rng);

        GradProbe probe;
        probe.add(h.data);
        probe.add(z.data);
        probe.add(f.data);
        probe.add(iaf.gen.w);
        probe.add(iaf.gen.b);
        bat.run(
            "iaf_adaptive_fuse", probe,
            [&](const std::vector<double>& x) {
                probe.load(x);
                std::vector<SpatialMap> maps = importance_maps_n({&h, &z, &f}, iaf);
                return grid_sum(fuse_sources({&h, &z, &f}, maps, FusionStrategy::Adaptive));
            },
            [&](const std::vector<double>& x) {
                probe.load(x);
                iaf.gen.w.zero_grad();
                iaf.gen.b.zero_grad();
                ImportanceRec irec;
                FuseRecIaf frec;
                std::vector<SpatialMap> maps = importance_maps_n({&h, &z, &f}, iaf, &irec);
                fuse_sources({&h, &z, &f}, maps, FusionStrategy::Adaptive, &frec);
                FeatureGrid ones(4, 8, 8, 1.0);
                std::vector<FeatureGrid> gsrc(3, FeatureGrid(4, 8, 8));
                std::vector<SpatialMap> gmaps(3, SpatialMap(8, 8));
                fuse_sources_backward(frec, ones, &gsrc, &gmaps);
                importance_maps_backward(iaf, irec, gmaps, &gsrc);
                std::vector<double> g;
                for (FeatureGrid& gs : gsrc) g.insert(g.end(), gs.data.begin(), gs.data.end());
                g.insert(g.end(), iaf.gen.w.grad.begin(), iaf.gen.w.grad.end());
                g.insert(g.end(), iaf.gen.b.grad.begin(), iaf.gen.b.grad.end());
                return g;
            });
    }

    // ---- losses ----
    {
        Rng rng(seed, 90u);
        const double beta = 1.0;
        std::vector<double> pred(12), target(12);
        for (std::size_t i = 0; i < pred.size(); ++i) {
            pred[i] = rng.uniform(-2.0, 2.0);
            target[i] = rng.uniform(-2.0, 2.0);
        }
        GradProbe probe;
        probe.add(pred);
        bat.run(
            "smooth_l1", probe,
            [&](const std::vector<double>& x) {
                probe.load(x);
                return smooth_l1(pred, target, beta);
            },
            [&](const std::vector<double>& x) {
                probe.load(x);
                std::vector<double> g(pred.size());
                for (std::size_t i = 0; i < pred.size(); ++i) {
                    const double d = pred[i] - target[i];
                    g[i] = (std::fabs(d) < beta ? d / beta : (d > 0.0 ? 1.0 : -1.0)) /
                           static_cast<double>(pred.size());
                }
                return g;
            });
    }
    {
        Rng rng(seed, 91u);
        FeatureGrid logits = seeded_grid(2, 5, 5, rng, -1.5, 1.5);
        std::vector<std::uint8_t> labels(25);
        for (auto& l : labels) l = rng.uniform01() < 0.3 ? 1 : 0;
        CellTargets t;
        t.labels = labels;
        t.reg.assign(7 * 25, 0.0);
        t.fg_count = 0;
        LossWeights lw;
        lw.reg = 0.0;
        lw.cls = 1.0;
        GradProbe probe;
        probe.add(logits.data);
        bat.run(
            "focal_loss", probe,
            [&](const std::vector<double>& x) {
                probe.load(x);
                return focal_loss(logits, labels, lw.alpha, lw.gamma);
            },
            [&](const std::vector<double>& x) {
                probe.load(x);
                FeatureGrid greg(7, 5, 5), gcls(2, 5, 5);
                HeadOutput head{FeatureGrid(7, 5, 5), logits};
                detection_loss_backward(head, t, lw, &greg, &gcls);
                return gcls.data;
            });
    }

    return cases;
}

}  // namespace scope
