#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "scope/gradcheck.hpp"
#include "scope/tensor.hpp"

namespace scope {

struct NumericsCase {
    std::string name;
    double max_rel_err = 0.0;
    double tolerance = 1e-4;
    double seconds = 0.0;
    bool pass = false;
};

// Runs finite-difference verification of every differentiable operation
// against its adjoint on seeded inputs: pooling, activations, conv,
// resampling, bilinear sampling, stacked softmax, the pyramid LSTM cell,
// deformable cross-attention, importance-weighted fusion and both losses.
std::vector<NumericsCase> run_numerics_battery(std::uint64_t seed, double eps = 1e-5,
                                               double tolerance = 1e-4);

// Flattens a set of buffers into one coordinate vector for probing.
class GradProbe {
  public:
    void add(std::vector<double>& v) { segs_.push_back({v.data(), v.size()}); }
    void add(Tensor& t) { segs_.push_back({t.val.data(), t.val.size()}); }
    void add(double& x) { segs_.push_back({&x, 1}); }

    std::size_t size() const {
        std::size_t n = 0;
        for (const auto& s : segs_) n += s.second;
        return n;
    }
    std::vector<double> snapshot() const {
        std::vector<double> x;
        x.reserve(size());
        for (const auto& s : segs_) x.insert(x.end(), s.first, s.first + s.second);
        return x;
    }
    void load(const std::vector<double>& x) const {
        std::size_t off = 0;
        for (const auto& s : segs_) {
            std::copy(x.begin() + off, x.begin() + off + s.second, s.first);
            off += s.second;
        }
    }

  private:
    std::vector<std::pair<double*, std::size_t>> segs_;
};

}  // namespace scope
