#pragma once

#include <string>
#include <vector>

#include "scope/grid.hpp"
#include "scope/ops.hpp"
#include "scope/tensor.hpp"

namespace scope {

// Ego history, oldest first, every frame already aligned to the current
// ego frame.
struct TemporalBuffer {
    std::vector<FeatureGrid> frames;
    int tau() const { return static_cast<int>(frames.size()); }
};

// How the pooled current / history maps enter the selection conv: as the
// elementwise sum of the two 2-channel stacks, or as one 4-channel stack.
enum class SelectionVariant { SumPairs, Concat4 };

// Multi-scale convolutional trunk used for each LSTM gate: per scale two
// (conv -> channel affine -> ReLU) blocks, stride-2 downsampling between
// scales, and upsample-and-add lateral connections back to full
// resolution.
struct GateStack {
    std::vector<Conv2d> conv_a, conv_b;
    std::vector<AffineChannel> norm_a, norm_b;
    std::vector<Conv2d> lateral;
    int scales = 3;

    void build(int channels, int scales_, int ksize, std::uint64_t seed, const std::string& name);
    void visit(const std::string& prefix, const ParamFn& fn);

    struct Rec {
        FeatureGrid in;
        std::vector<FeatureGrid> a_pre, a_aff, a_act, b_pre, b_aff, b_act;
        std::vector<FeatureGrid> topdown;  // topdown[s]; topdown[scales-1] == b_act.back()
    };

    FeatureGrid forward(const FeatureGrid& z, Rec* rec) const;
    void backward(const Rec& rec, const FeatureGrid& grad_out, FeatureGrid* grad_in);
};

struct CiaParams {
    int channels = 16;
    int tau = 2;
    int scales = 3;
    int ksize = 3;
    SelectionVariant variant = SelectionVariant::SumPairs;

    Conv2d aleph;                          // selection fusion conv -> 1 channel
    GateStack gate_i, gate_f, gate_o, gate_c;
    Conv2d concat_fuse;                    // 1x1 ((tau+1)C -> C), used when the LSTM is toggled off

    void build(int channels_, int tau_, int scales_, int ksize_, std::uint64_t seed,
               SelectionVariant variant_ = SelectionVariant::SumPairs);
    void visit(const std::string& prefix, const ParamFn& fn);
};

// ---- selective information filtering ----

struct SelectionRec {
    FeatureGrid current, history_sum;
    SpatialMap ma_t, mm_t, ma_h, mm_h;
    FeatureGrid conv_in, pre;
    SpatialMap u;
    int tau = 0;
};

// Pools the current frame and the summed history, fuses the pooled maps
// through the selection conv and squashes to [0,1].
SpatialMap selection_map(const FeatureGrid& current, const TemporalBuffer& buffer,
                         const CiaParams& p, SelectionRec* rec = nullptr);
void selection_map_backward(CiaParams& p, const SelectionRec& rec, const SpatialMap& grad_u,
                            FeatureGrid* grad_current, std::vector<FeatureGrid>* grad_frames);

struct FilterRec {
    FeatureGrid current, tanh_cur;
    SpatialMap u;
    std::vector<const FeatureGrid*> frames;  // borrowed from the buffer
};

// Per history frame n: out_n = (1-u) * tanh(current) + u * frame_n, with u
// broadcast over channels and the current frame over the time axis.
std::vector<FeatureGrid> filter_history(const FeatureGrid& current, const TemporalBuffer& buffer,
                                        const SpatialMap& u, FilterRec* rec = nullptr);
void filter_history_backward(const FilterRec& rec, const std::vector<FeatureGrid>& grad_out,
                             SpatialMap* grad_u, FeatureGrid* grad_current,
                             std::vector<FeatureGrid>* grad_frames);

// ---- spatio-temporal integration ----

struct LstmState {
    FeatureGrid h, c;
};

struct CellRec {
    FeatureGrid z;  // concat(input, hidden)
    FeatureGrid pre_i, pre_f, pre_o, pre_c;
    FeatureGrid act_i, act_f, act_o, act_c;
    FeatureGrid c_prev, c_new, tanh_c;
    GateStack::Rec rec_i, rec_f, rec_o, rec_c;
};

LstmState pyramid_lstm_cell(const LstmState& state, const FeatureGrid& input, const CiaParams& p,
                            CellRec* rec = nullptr);
void pyramid_lstm_cell_backward(CiaParams& p, const CellRec& rec, const FeatureGrid& grad_h,
                                const FeatureGrid& grad_c, FeatureGrid* grad_input,
                                FeatureGrid* grad_h_prev, FeatureGrid* grad_c_prev);

// ---- component orchestration ----

struct CiaToggles {
    bool pyramid_lstm = true;          // PL
    bool selective_filtering = true;   // SIF
};

struct AggregateRec {
    bool bypass = false;
    bool used_filter = false;
    bool used_lstm = false;
    SelectionRec sel;
    FilterRec filt;
    std::vector<FeatureGrid> seq;        // LSTM inputs in order
    std::vector<CellRec> cells;
    FeatureGrid concat_in;               // PL-off path
};

// Runs selection/filtering over the history and integrates the sequence
// [filtered oldest .. filtered newest, current]; tau = 0 returns the
// current frame unchanged.
FeatureGrid aggregate_context(const FeatureGrid& current, const TemporalBuffer& buffer,
                              const CiaParams& p, const CiaToggles& toggles,
                              AggregateRec* rec = nullptr);
void aggregate_context_backward(CiaParams& p, const AggregateRec& rec, const FeatureGrid& grad_out,
                                FeatureGrid* grad_current, std::vector<FeatureGrid>* grad_frames);

}  // namespace scope
