#pragma once

#include <functional>
#include <numeric>
#include <string>
#include <vector>

#include "scope/grid.hpp"
#include "scope/rng.hpp"

namespace scope {

// A parameter block: values plus a gradient buffer of identical shape.
struct Tensor {
    std::vector<int> dims;
    std::vector<double> val;
    std::vector<double> grad;

    Tensor() = default;
    explicit Tensor(std::vector<int> d) : dims(std::move(d)) {
        std::size_t n = 1;
        for (int x : dims) n *= static_cast<std::size_t>(x);
        val.assign(n, 0.0);
        grad.assign(n, 0.0);
    }
    std::size_t size() const { return val.size(); }
    void zero_grad() { std::fill(grad.begin(), grad.end(), 0.0); }
};

using ParamFn = std::function<void(const std::string& name, Tensor& t, bool trainable)>;

// Uniform in +/- sqrt(6 / (fan_in + fan_out)). The stream is keyed by the
// parameter name so initialization does not depend on registration order.
void glorot_init(Tensor& t, int fan_in, int fan_out, std::uint64_t seed, const std::string& name);

// 2D cross-correlation with bias. Weight layout [out][in][kh][kw].
struct Conv2d {
    Tensor w;
    Tensor b;
    int stride = 1;
    int pad = 0;

    Conv2d() = default;
    Conv2d(int out_ch, int in_ch, int k, int stride_ = 1, int pad_ = 0)
        : w({out_ch, in_ch, k, k}), b({out_ch}), stride(stride_), pad(pad_) {}

    int out_channels() const { return w.dims[0]; }
    int in_channels() const { return w.dims[1]; }
    int ksize() const { return w.dims[2]; }

    void init(std::uint64_t seed, const std::string& name);
    void visit(const std::string& prefix, const ParamFn& fn, bool trainable = true);

    FeatureGrid forward(const FeatureGrid& in) const;
    // Accumulates into w.grad / b.grad; grad_in may be null when the input
    // needs no gradient (e.g. frozen encoder outputs).
    void backward(const FeatureGrid& in, const FeatureGrid& grad_out, FeatureGrid* grad_in);
};

// Dense map y = W x (+ b). Weight layout [out][in].
struct Linear {
    Tensor w;
    Tensor b;
    bool has_bias = true;

    Linear() = default;
    Linear(int out_dim, int in_dim, bool bias = true)
        : w({out_dim, in_dim}), b({out_dim}), has_bias(bias) {}

    int out_dim() const { return w.dims[0]; }
    int in_dim() const { return w.dims[1]; }

    void init(std::uint64_t seed, const std::string& name);
    void zero_init() {
        std::fill(w.val.begin(), w.val.end(), 0.0);
        std::fill(b.val.begin(), b.val.end(), 0.0);
    }
    void visit(const std::string& prefix, const ParamFn& fn, bool trainable = true);

    void forward(const double* in, double* out) const;
    std::vector<double> forward(const std::vector<double>& in) const;
    // Accumulates parameter grads; adds into grad_in when non-null.
    void backward(const double* in, const double* grad_out, double* grad_in);
};

// Per-channel affine y = scale_c * x + shift_c. Stands in the batch-norm
// slot of the pyramid LSTM stacks: running statistics are frozen at
// identity so single-sample runs stay deterministic; scale and shift are
// still learned.
struct AffineChannel {
    Tensor scale;
    Tensor shift;

    AffineChannel() = default;
    explicit AffineChannel(int channels) : scale({channels}), shift({channels}) {
        std::fill(scale.val.begin(), scale.val.end(), 1.0);
    }

    void visit(const std::string& prefix, const ParamFn& fn, bool trainable = true);

    FeatureGrid forward(const FeatureGrid& in) const;
    void backward(const FeatureGrid& in, const FeatureGrid& grad_out, FeatureGrid* grad_in);
};

}  // namespace scope
