#pragma once

#include <vector>

#include "scope/grid.hpp"
#include "scope/tensor.hpp"

namespace scope {

enum class PoolMode { Avg, Max };
enum class Activation { Sigmoid, Tanh, Relu };

// Channel-wise pooling: out[h,w] = mean or max over c of grid[c,h,w].
SpatialMap pool_channels(const FeatureGrid& grid, PoolMode mode);
// Max routes the gradient to the first channel attaining the maximum.
void pool_channels_backward(const FeatureGrid& in, PoolMode mode,
                            const SpatialMap& grad_out, FeatureGrid& grad_in);

double activate_scalar(double x, Activation a);
FeatureGrid activate(const FeatureGrid& in, Activation a);
SpatialMap activate(const SpatialMap& in, Activation a);
void activate_span(const double* in, double* out, std::size_t n, Activation a);
// Needs the forward input and output (sigmoid/tanh reuse the output,
// relu the input). Accumulates into grad_in.
void activate_backward_span(const double* in, const double* out, const double* grad_out,
                            double* grad_in, std::size_t n, Activation a);
void activate_backward(const FeatureGrid& in, const FeatureGrid& out, Activation a,
                       const FeatureGrid& grad_out, FeatureGrid& grad_in);

// Per-channel bilinear resampling, align-corners-false, edge clamped.
FeatureGrid resize_bilinear(const FeatureGrid& in, int new_h, int new_w);
void resize_bilinear_backward(int in_h, int in_w, const FeatureGrid& grad_out,
                              FeatureGrid& grad_in);

// Bilinear read at fractional cell coordinates (x = column, y = row).
// Taps outside the grid read zero.
std::vector<double> sample_bilinear(const FeatureGrid& grid, double x, double y);
void sample_bilinear(const FeatureGrid& grid, double x, double y, double* out);
// Accumulates grid gradients at the in-bounds taps and position gradients
// (d loss / dx, d loss / dy) for learned sampling offsets.
void sample_bilinear_backward(const FeatureGrid& grid, double x, double y,
                              const double* grad_out, FeatureGrid* grad_grid,
                              double* grad_x, double* grad_y);

// Softmax across the stack at every position, max-shifted for stability.
std::vector<SpatialMap> softmax_stack(const std::vector<SpatialMap>& maps);
void softmax_stack_backward(const std::vector<SpatialMap>& out,
                            const std::vector<SpatialMap>& grad_out,
                            std::vector<SpatialMap>& grad_in);

// Softmax over a flat vector, max-shifted. Shared by attention weights and
// classification scores.
void softmax_span(const double* in, double* out, std::size_t n);
void softmax_backward_span(const double* out, const double* grad_out, double* grad_in,
                           std::size_t n);

}  // namespace scope
