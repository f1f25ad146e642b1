#include <benchmark/benchmark.h>

#include "scope/ccc.hpp"
#include "scope/cia.hpp"
#include "scope/ops.hpp"
#include "scope/rng.hpp"

namespace {

using namespace scope;

FeatureGrid random_grid(int c, int h, int w, std::uint64_t seed) {
    Rng rng(seed);
    FeatureGrid g(c, h, w);
    for (double& v : g.data) v = rng.uniform(-1.0, 1.0);
    return g;
}

void BM_Conv2d3x3(benchmark::State& state) {
    const int c = static_cast<int>(state.range(0));
    const int hw = static_cast<int>(state.range(1));
    const FeatureGrid in = random_grid(c, hw, hw, 1);
    Conv2d conv(c, c, 3, 1, 1);
    conv.init(1, "bench.conv");
    for (auto _ : state) {
        FeatureGrid out = conv.forward(in);
        benchmark::DoNotOptimize(out.data.data());
    }
    state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(c) * c * hw * hw * 9);
}
BENCHMARK(BM_Conv2d3x3)->Args({16, 64})->Args({32, 64})->Args({16, 128});

void BM_Conv2dBackward(benchmark::State& state) {
    const int c = static_cast<int>(state.range(0));
    const int hw = static_cast<int>(state.range(1));
    const FeatureGrid in = random_grid(c, hw, hw, 2);
    Conv2d conv(c, c, 3, 1, 1);
    conv.init(2, "bench.conv");
    const FeatureGrid gout = random_grid(c, hw, hw, 3);
    FeatureGrid gin(c, hw, hw);
    for (auto _ : state) {
        conv.backward(in, gout, &gin);
        benchmark::DoNotOptimize(gin.data.data());
    }
    state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(c) * c * hw * hw * 9 * 2);
}
BENCHMARK(BM_Conv2dBackward)->Args({16, 64});

void BM_PyramidLstmCell(benchmark::State& state) {
    const int c = 16, hw = 64;
    CiaParams cia;
    cia.build(c, 2, 3, 3, 11);
    const FeatureGrid x = random_grid(c, hw, hw, 4);
    const LstmState s{random_grid(c, hw, hw, 5), random_grid(c, hw, hw, 6)};
    for (auto _ : state) {
        LstmState out = pyramid_lstm_cell(s, x, cia);
        benchmark::DoNotOptimize(out.h.data.data());
    }
}
BENCHMARK(BM_PyramidLstmCell);

void BM_DeformableAttention(benchmark::State& state) {
    const int c = 16, hw = 64;
    DcmParams dcm;
    dcm.build(c, 8, 15, 1, false, 21, "bench.dcm");
    const FeatureGrid ego = random_grid(c, hw, hw, 7);
    const FeatureGrid collab = random_grid(c, hw, hw, 8);
    ReferencePointSet refs;
    for (int y = 0; y < hw; ++y)
        for (int x = 0; x < hw; ++x) refs.push_back({y, x});
    for (auto _ : state) {
        FeatureGrid out = deformable_cross_attention(ego, {&collab}, refs, dcm);
        benchmark::DoNotOptimize(out.data.data());
    }
    state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(refs.size()));
}
BENCHMARK(BM_DeformableAttention);

void BM_SampleBilinear(benchmark::State& state) {
    const FeatureGrid g = random_grid(16, 64, 64, 9);
    std::vector<double> out(16);
    double x = 0.3;
    for (auto _ : state) {
        sample_bilinear(g, x, 31.7, out.data());
        x += 0.51;
        if (x > 62.0) x = 0.3;
        benchmark::DoNotOptimize(out.data());
    }
}
BENCHMARK(BM_SampleBilinear);

}  // namespace

BENCHMARK_MAIN();
