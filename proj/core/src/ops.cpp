#include "scope/ops.hpp"

#include <algorithm>
#include <cmath>

namespace scope {

SpatialMap pool_channels(const FeatureGrid& grid, PoolMode mode) {
    if (grid.channels < 1) throw ShapeError("pool_channels: empty grid");
    SpatialMap out(grid.height, grid.width);
    const std::size_t hw = out.size();
    if (mode == PoolMode::Avg) {
        const double inv = 1.0 / grid.channels;
        for (int c = 0; c < grid.channels; ++c) {
            const double* p = &grid.data[c * hw];
            for (std::size_t i = 0; i < hw; ++i) out.data[i] += p[i];
        }
        for (std::size_t i = 0; i < hw; ++i) out.data[i] *= inv;
    } else {
        std::copy(grid.data.begin(), grid.data.begin() + hw, out.data.begin());
        for (int c = 1; c < grid.channels; ++c) {
            const double* p = &grid.data[c * hw];
            for (std::size_t i = 0; i < hw; ++i) out.data[i] = std::max(out.data[i], p[i]);
        }
    }
    return out;
}

void pool_channels_backward(const FeatureGrid& in, PoolMode mode,
                            const SpatialMap& grad_out, FeatureGrid& grad_in) {
    const std::size_t hw = grad_out.size();
    if (mode == PoolMode::Avg) {
        const double inv = 1.0 / in.channels;
        for (int c = 0; c < in.channels; ++c) {
            double* g = &grad_in.data[c * hw];
            for (std::size_t i = 0; i < hw; ++i) g[i] += grad_out.data[i] * inv;
        }
    } else {
        for (std::size_t i = 0; i < hw; ++i) {
            int best = 0;
            double bv = in.data[i];
            for (int c = 1; c < in.channels; ++c) {
                const double v = in.data[c * hw + i];
                if (v > bv) { bv = v; best = c; }
            }
            grad_in.data[best * hw + i] += grad_out.data[i];
        }
    }
}

double activate_scalar(double x, Activation a) {
    switch (a) {
        case Activation::Sigmoid: return 1.0 / (1.0 + std::exp(-x));
        case Activation::Tanh: return std::tanh(x);
        default: return x > 0.0 ? x : 0.0;
    }
}

void activate_span(const double* in, double* out, std::size_t n, Activation a) {
    switch (a) {
        case Activation::Sigmoid:
            for (std::size_t i = 0; i < n; ++i) out[i] = 1.0 / (1.0 + std::exp(-in[i]));
            break;
        case Activation::Tanh:
            for (std::size_t i = 0; i < n; ++i) out[i] = std::tanh(in[i]);
            break;
        case Activation::Relu:
            for (std::size_t i = 0; i < n; ++i) out[i] = in[i] > 0.0 ? in[i] : 0.0;
            break;
    }
}

FeatureGrid activate(const FeatureGrid& in, Activation a) {
    FeatureGrid out(in.channels, in.height, in.width);
    activate_span(in.data.data(), out.data.data(), in.size(), a);
    return out;
}

SpatialMap activate(const SpatialMap& in, Activation a) {
    SpatialMap out(in.height, in.width);
    activate_span(in.data.data(), out.data.data(), in.size(), a);
    return out;
}

void activate_backward_span(const double* in, const double* out, const double* grad_out,
                            double* grad_in, std::size_t n, Activation a) {
    switch (a) {
        case Activation::Sigmoid:
            for (std::size_t i = 0; i < n; ++i) grad_in[i] += grad_out[i] * out[i] * (1.0 - out[i]);
            break;
        case Activation::Tanh:
            for (std::size_t i = 0; i < n; ++i) grad_in[i] += grad_out[i] * (1.0 - out[i] * out[i]);
            break;
        case Activation::Relu:
            for (std::size_t i = 0; i < n; ++i) grad_in[i] += in[i] > 0.0 ? grad_out[i] : 0.0;
            break;
    }
}

void activate_backward(const FeatureGrid& in, const FeatureGrid& out, Activation a,
                       const FeatureGrid& grad_out, FeatureGrid& grad_in) {
    activate_backward_span(in.data.data(), out.data.data(), grad_out.data.data(),
                           grad_in.data.data(), in.size(), a);
}

namespace {

struct Tap {
    int i0, i1;     // lower/upper source index, edge clamped
    double f;       // fraction toward i1
};

// align-corners-false source coordinate for output index o.
inline Tap resize_tap(int o, int out_n, int in_n) {
    const double scale = static_cast<double>(in_n) / out_n;
    double s = (o + 0.5) * scale - 0.5;
    if (s < 0.0) s = 0.0;
    if (s > in_n - 1) s = in_n - 1;
    Tap t;
    t.i0 = static_cast<int>(s);
    if (t.i0 > in_n - 1) t.i0 = in_n - 1;
    t.i1 = std::min(t.i0 + 1, in_n - 1);
    t.f = s - t.i0;
    return t;
}

}  // namespace

FeatureGrid resize_bilinear(const FeatureGrid& in, int new_h, int new_w) {
    if (new_h < 1 || new_w < 1) throw ShapeError("resize_bilinear: non-positive target dims");
    if (new_h == in.height && new_w == in.width) return in;

    std::vector<Tap> ty(new_h), tx(new_w);
    for (int y = 0; y < new_h; ++y) ty[y] = resize_tap(y, new_h, in.height);
    for (int x = 0; x < new_w; ++x) tx[x] = resize_tap(x, new_w, in.width);

    FeatureGrid out(in.channels, new_h, new_w);
    for (int c = 0; c < in.channels; ++c) {
        for (int y = 0; y < new_h; ++y) {
            const double* r0 = &in.data[in.index(c, ty[y].i0, 0)];
            const double* r1 = &in.data[in.index(c, ty[y].i1, 0)];
            const double fy = ty[y].f;
            double* orow = &out.data[out.index(c, y, 0)];
            for (int x = 0; x < new_w; ++x) {
                const Tap& t = tx[x];
                const double top = r0[t.i0] + t.f * (r0[t.i1] - r0[t.i0]);
                const double bot = r1[t.i0] + t.f * (r1[t.i1] - r1[t.i0]);
                orow[x] = top + fy * (bot - top);
            }
        }
    }
    return out;
}

void resize_bilinear_backward(int in_h, int in_w, const FeatureGrid& grad_out,
                              FeatureGrid& grad_in) {
    if (grad_out.height == in_h && grad_out.width == in_w) {
        add_inplace(grad_in, grad_out);
        return;
    }
    std::vector<Tap> ty(grad_out.height), tx(grad_out.width);
    for (int y = 0; y < grad_out.height; ++y) ty[y] = resize_tap(y, grad_out.height, in_h);
    for (int x = 0; x < grad_out.width; ++x) tx[x] = resize_tap(x, grad_out.width, in_w);

    for (int c = 0; c < grad_out.channels; ++c) {
        for (int y = 0; y < grad_out.height; ++y) {
            const double fy = ty[y].f;
            double* g0 = &grad_in.data[grad_in.index(c, ty[y].i0, 0)];
            double* g1 = &grad_in.data[grad_in.index(c, ty[y].i1, 0)];
            const double* grow = &grad_out.data[grad_out.index(c, y, 0)];
            for (int x = 0; x < grad_out.width; ++x) {
                const Tap& t = tx[x];
                const double g = grow[x];
                g0[t.i0] += g * (1.0 - fy) * (1.0 - t.f);
                g0[t.i1] += g * (1.0 - fy) * t.f;
                g1[t.i0] += g * fy * (1.0 - t.f);
                g1[t.i1] += g * fy * t.f;
            }
        }
    }
}

void sample_bilinear(const FeatureGrid& grid, double x, double y, double* out) {
    const int x0 = static_cast<int>(std::floor(x));
    const int y0 = static_cast<int>(std::floor(y));
    const double fx = x - x0, fy = y - y0;
    const double w00 = (1.0 - fx) * (1.0 - fy), w10 = fx * (1.0 - fy);
    const double w01 = (1.0 - fx) * fy, w11 = fx * fy;
    const bool in00 = x0 >= 0 && x0 < grid.width && y0 >= 0 && y0 < grid.height;
    const bool in10 = x0 + 1 >= 0 && x0 + 1 < grid.width && y0 >= 0 && y0 < grid.height;
    const bool in01 = x0 >= 0 && x0 < grid.width && y0 + 1 >= 0 && y0 + 1 < grid.height;
    const bool in11 = x0 + 1 >= 0 && x0 + 1 < grid.width && y0 + 1 >= 0 && y0 + 1 < grid.height;
    for (int c = 0; c < grid.channels; ++c) {
        double acc = 0.0;
        if (in00) acc += w00 * grid.at(c, y0, x0);
        if (in10) acc += w10 * grid.at(c, y0, x0 + 1);
        if (in01) acc += w01 * grid.at(c, y0 + 1, x0);
        if (in11) acc += w11 * grid.at(c, y0 + 1, x0 + 1);
        out[c] = acc;
    }
}

std::vector<double> sample_bilinear(const FeatureGrid& grid, double x, double y) {
    std::vector<double> out(grid.channels);
    sample_bilinear(grid, x, y, out.data());
    return out;
}

void sample_bilinear_backward(const FeatureGrid& grid, double x, double y,
                              const double* grad_out, FeatureGrid* grad_grid,
                              double* grad_x, double* grad_y) {
    const int x0 = static_cast<int>(std::floor(x));
    const int y0 = static_cast<int>(std::floor(y));
    const double fx = x - x0, fy = y - y0;
    const bool in00 = x0 >= 0 && x0 < grid.width && y0 >= 0 && y0 < grid.height;
    const bool in10 = x0 + 1 >= 0 && x0 + 1 < grid.width && y0 >= 0 && y0 < grid.height;
    const bool in01 = x0 >= 0 && x0 < grid.width && y0 + 1 >= 0 && y0 + 1 < grid.height;
    const bool in11 = x0 + 1 >= 0 && x0 + 1 < grid.width && y0 + 1 >= 0 && y0 + 1 < grid.height;

    double gx = 0.0, gy = 0.0;
    for (int c = 0; c < grid.channels; ++c) {
        const double g = grad_out[c];
        const double a = in00 ? grid.at(c, y0, x0) : 0.0;
        const double b = in10 ? grid.at(c, y0, x0 + 1) : 0.0;
        const double d = in01 ? grid.at(c, y0 + 1, x0) : 0.0;
        const double e = in11 ? grid.at(c, y0 + 1, x0 + 1) : 0.0;
        gx += g * ((1.0 - fy) * (b - a) + fy * (e - d));
        gy += g * ((1.0 - fx) * (d - a) + fx * (e - b));
        if (grad_grid) {
            if (in00) grad_grid->at(c, y0, x0) += g * (1.0 - fx) * (1.0 - fy);
            if (in10) grad_grid->at(c, y0, x0 + 1) += g * fx * (1.0 - fy);
            if (in01) grad_grid->at(c, y0 + 1, x0) += g * (1.0 - fx) * fy;
            if (in11) grad_grid->at(c, y0 + 1, x0 + 1) += g * fx * fy;
        }
    }
    if (grad_x) *grad_x += gx;
    if (grad_y) *grad_y += gy;
}

void softmax_span(const double* in, double* out, std::size_t n) {
    double m = in[0];
    for (std::size_t i = 1; i < n; ++i) m = std::max(m, in[i]);
    double sum = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        out[i] = std::exp(in[i] - m);
        sum += out[i];
    }
    const double inv = 1.0 / sum;
    for (std::size_t i = 0; i < n; ++i) out[i] *= inv;
}

void softmax_backward_span(const double* out, const double* grad_out, double* grad_in,
                           std::size_t n) {
    double dot = 0.0;
    for (std::size_t i = 0; i < n; ++i) dot += out[i] * grad_out[i];
    for (std::size_t i = 0; i < n; ++i) grad_in[i] += out[i] * (grad_out[i] - dot);
}

std::vector<SpatialMap> softmax_stack(const std::vector<SpatialMap>& maps) {
    if (maps.empty()) throw ShapeError("softmax_stack: empty stack");
    for (const SpatialMap& m : maps)
        if (!m.same_shape(maps[0])) throw ShapeError("softmax_stack: shape mismatch");

    const std::size_t n = maps.size();
    const std::size_t hw = maps[0].size();
    std::vector<SpatialMap> out(n, SpatialMap(maps[0].height, maps[0].width));
    std::vector<double> buf_in(n), buf_out(n);
    for (std::size_t i = 0; i < hw; ++i) {
        for (std::size_t k = 0; k < n; ++k) buf_in[k] = maps[k].data[i];
        softmax_span(buf_in.data(), buf_out.data(), n);
        for (std::size_t k = 0; k < n; ++k) out[k].data[i] = buf_out[k];
    }
    return out;
}

void softmax_stack_backward(const std::vector<SpatialMap>& out,
                            const std::vector<SpatialMap>& grad_out,
                            std::vector<SpatialMap>& grad_in) {
    const std::size_t n = out.size();
    const std::size_t hw = out[0].size();
    for (std::size_t i = 0; i < hw; ++i) {
        double dot = 0.0;
        for (std::size_t k = 0; k < n; ++k) dot += out[k].data[i] * grad_out[k].data[i];
        for (std::size_t k = 0; k < n; ++k)
            grad_in[k].data[i] += out[k].data[i] * (grad_out[k].data[i] - dot);
    }
}

}  // namespace scope
