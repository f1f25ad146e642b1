#include "scope/tensor.hpp"

#include <cmath>

namespace scope {

void glorot_init(Tensor& t, int fan_in, int fan_out, std::uint64_t seed, const std::string& name) {
    Rng rng(Rng::combine(seed, fnv1a64(name)));
    const double bound = std::sqrt(6.0 / (fan_in + fan_out));
    for (double& v : t.val) v = rng.uniform(-bound, bound);
}

void Conv2d::init(std::uint64_t seed, const std::string& name) {
    const int fan_in = in_channels() * ksize() * ksize();
    const int fan_out = out_channels() * ksize() * ksize();
    glorot_init(w, fan_in, fan_out, seed, name + ".w");
    std::fill(b.val.begin(), b.val.end(), 0.0);
}

void Conv2d::visit(const std::string& prefix, const ParamFn& fn, bool trainable) {
    fn(prefix + ".w", w, trainable);
    fn(prefix + ".b", b, trainable);
}

FeatureGrid Conv2d::forward(const FeatureGrid& in) const {
    if (in.channels != in_channels())
        throw ShapeError("conv2d: input has " + std::to_string(in.channels) +
                         " channels, kernel expects " + std::to_string(in_channels()));
    const int k = ksize();
    const int oh = (in.height + 2 * pad - k) / stride + 1;
    const int ow = (in.width + 2 * pad - k) / stride + 1;
    if (in.height + 2 * pad < k || in.width + 2 * pad < k)
        throw ShapeError("conv2d: kernel larger than padded input");

    FeatureGrid out(out_channels(), oh, ow);
    const int ic_n = in_channels();
    for (int oc = 0; oc < out_channels(); ++oc) {
        double* ob = &out.data[out.index(oc, 0, 0)];
        const double bias = b.val[oc];
        for (int i = 0; i < oh * ow; ++i) ob[i] = bias;
        for (int ic = 0; ic < ic_n; ++ic) {
            const double* ib = &in.data[in.index(ic, 0, 0)];
            const double* wb = &w.val[((static_cast<std::size_t>(oc) * ic_n + ic) * k) * k];
            for (int ky = 0; ky < k; ++ky) {
                for (int kx = 0; kx < k; ++kx) {
                    const double wv = wb[ky * k + kx];
                    if (wv == 0.0) continue;
                    for (int oy = 0; oy < oh; ++oy) {
                        const int iy = oy * stride - pad + ky;
                        if (iy < 0 || iy >= in.height) continue;
                        double* orow = ob + static_cast<std::size_t>(oy) * ow;
                        const double* irow = ib + static_cast<std::size_t>(iy) * in.width;
                        if (stride == 1) {
                            // valid ox range so that ix = ox - pad + kx stays in bounds
                            int x0 = std::max(0, pad - kx);
                            int x1 = std::min(ow, in.width + pad - kx);
                            const double* ir = irow + (x0 - pad + kx);
                            for (int ox = x0; ox < x1; ++ox) orow[ox] += wv * ir[ox - x0];
                        } else {
                            for (int ox = 0; ox < ow; ++ox) {
                                const int ix = ox * stride - pad + kx;
                                if (ix < 0 || ix >= in.width) continue;
                                orow[ox] += wv * irow[ix];
                            }
                        }
                    }
                }
            }
        }
    }
    return out;
}

void Conv2d::backward(const FeatureGrid& in, const FeatureGrid& grad_out, FeatureGrid* grad_in) {
    const int k = ksize();
    const int oh = grad_out.height, ow = grad_out.width;
    const int ic_n = in_channels();

    for (int oc = 0; oc < out_channels(); ++oc) {
        const double* gb = &grad_out.data[grad_out.index(oc, 0, 0)];
        double acc = 0.0;
        for (int i = 0; i < oh * ow; ++i) acc += gb[i];
        b.grad[oc] += acc;

        for (int ic = 0; ic < ic_n; ++ic) {
            const double* ib = &in.data[in.index(ic, 0, 0)];
            double* gib = grad_in ? &grad_in->data[grad_in->index(ic, 0, 0)] : nullptr;
            const std::size_t wbase = ((static_cast<std::size_t>(oc) * ic_n + ic) * k) * k;
            for (int ky = 0; ky < k; ++ky) {
                for (int kx = 0; kx < k; ++kx) {
                    double wg = 0.0;
                    const double wv = w.val[wbase + ky * k + kx];
                    for (int oy = 0; oy < oh; ++oy) {
                        const int iy = oy * stride - pad + ky;
                        if (iy < 0 || iy >= in.height) continue;
                        const double* grow = gb + static_cast<std::size_t>(oy) * ow;
                        const double* irow = ib + static_cast<std::size_t>(iy) * in.width;
                        double* girow = gib ? gib + static_cast<std::size_t>(iy) * in.width : nullptr;
                        if (stride == 1) {
                            int x0 = std::max(0, pad - kx);
                            int x1 = std::min(ow, in.width + pad - kx);
                            const double* ir = irow + (x0 - pad + kx);
                            for (int ox = x0; ox < x1; ++ox) wg += grow[ox] * ir[ox - x0];
                            if (girow) {
                                double* gi = girow + (x0 - pad + kx);
                                for (int ox = x0; ox < x1; ++ox) gi[ox - x0] += wv * grow[ox];
                            }
                        } else {
                            for (int ox = 0; ox < ow; ++ox) {
                                const int ix = ox * stride - pad + kx;
                                if (ix < 0 || ix >= in.width) continue;
                                wg += grow[ox] * irow[ix];
                                if (girow) girow[ix] += wv * grow[ox];
                            }
                        }
                    }
                    w.grad[wbase + ky * k + kx] += wg;
                }
            }
        }
    }
}

void Linear::init(std::uint64_t seed, const std::string& name) {
    glorot_init(w, in_dim(), out_dim(), seed, name + ".w");
    std::fill(b.val.begin(), b.val.end(), 0.0);
}

void Linear::visit(const std::string& prefix, const ParamFn& fn, bool trainable) {
    fn(prefix + ".w", w, trainable);
    if (has_bias) fn(prefix + ".b", b, trainable);
}

void Linear::forward(const double* in, double* out) const {
    const int n_out = out_dim(), n_in = in_dim();
    for (int o = 0; o < n_out; ++o) {
        double acc = has_bias ? b.val[o] : 0.0;
        const double* wr = &w.val[static_cast<std::size_t>(o) * n_in];
        for (int i = 0; i < n_in; ++i) acc += wr[i] * in[i];
        out[o] = acc;
    }
}

std::vector<double> Linear::forward(const std::vector<double>& in) const {
    if (static_cast<int>(in.size()) != in_dim()) throw ShapeError("linear: input dim mismatch");
    std::vector<double> out(out_dim());
    forward(in.data(), out.data());
    return out;
}

void Linear::backward(const double* in, const double* grad_out, double* grad_in) {
    const int n_out = out_dim(), n_in = in_dim();
    for (int o = 0; o < n_out; ++o) {
        const double g = grad_out[o];
        if (has_bias) b.grad[o] += g;
        double* wg = &w.grad[static_cast<std::size_t>(o) * n_in];
        const double* wr = &w.val[static_cast<std::size_t>(o) * n_in];
        for (int i = 0; i < n_in; ++i) {
            wg[i] += g * in[i];
            if (grad_in) grad_in[i] += g * wr[i];
        }
    }
}

void AffineChannel::visit(const std::string& prefix, const ParamFn& fn, bool trainable) {
    fn(prefix + ".scale", scale, trainable);
    fn(prefix + ".shift", shift, trainable);
}

FeatureGrid AffineChannel::forward(const FeatureGrid& in) const {
    if (in.channels != static_cast<int>(scale.size()))
        throw ShapeError("affine: channel mismatch");
    FeatureGrid out(in.channels, in.height, in.width);
    const std::size_t hw = static_cast<std::size_t>(in.height) * in.width;
    for (int c = 0; c < in.channels; ++c) {
        const double s = scale.val[c], t = shift.val[c];
        const double* ip = &in.data[c * hw];
        double* op = &out.data[c * hw];
        for (std::size_t i = 0; i < hw; ++i) op[i] = s * ip[i] + t;
    }
    return out;
}

void AffineChannel::backward(const FeatureGrid& in, const FeatureGrid& grad_out, FeatureGrid* grad_in) {
    const std::size_t hw = static_cast<std::size_t>(in.height) * in.width;
    for (int c = 0; c < in.channels; ++c) {
        const double* ip = &in.data[c * hw];
        const double* gp = &grad_out.data[c * hw];
        double gs = 0.0, gt = 0.0;
        const double s = scale.val[c];
        double* gi = grad_in ? &grad_in->data[c * hw] : nullptr;
        for (std::size_t i = 0; i < hw; ++i) {
            gs += gp[i] * ip[i];
            gt += gp[i];
            if (gi) gi[i] += s * gp[i];
        }
        scale.grad[c] += gs;
        shift.grad[c] += gt;
    }
}

}  // namespace scope
