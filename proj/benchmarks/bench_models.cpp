// Microbenchmarks for the hot paths: model forwards, signal extraction
// and attack injection. Run with --benchmark_filter=... to narrow down.
#include <benchmark/benchmark.h>

#include "canids/attack_sim.hpp"
#include "canids/patchst.hpp"
#include "canids/signal_extract.hpp"
#include "canids/stcam.hpp"
#include "canids/synthgen.hpp"

using namespace canids;

static void BM_StcamForward(benchmark::State& state) {
    StcamConfig cfg;
    cfg.signals = 4;
    cfg.window = 16;
    cfg.horizon = 1;
    cfg.filters = static_cast<int>(state.range(0));
    cfg.hidden = 8;
    auto p = StcamParams::init(cfg, 1);
    Mat x = benchmark_series(cfg.signals, cfg.window, 0.02, 2);
    for (auto _ : state) {
        auto out = stcam_forward(x, p);
        benchmark::DoNotOptimize(out.y_hat.d.data());
    }
}
BENCHMARK(BM_StcamForward)->Arg(4)->Arg(16);

static void BM_StcamTrainStep(benchmark::State& state) {
    StcamConfig cfg;
    cfg.signals = 4;
    cfg.window = 16;
    cfg.filters = 4;
    cfg.hidden = 8;
    auto p = StcamParams::init(cfg, 1);
    auto g = StcamParams::zeros(cfg);
    Mat x = benchmark_series(cfg.signals, cfg.window, 0.02, 2);
    std::mt19937_64 rng(3);
    for (auto _ : state) {
        StcamCache cache;
        auto out = stcam_forward(x, p, true, &rng, &cache);
        Mat dy(cfg.signals, cfg.horizon);
        for (auto& v : dy.d) v = 1.0;
        stcam_backward(dy, Vec{}, cache, p, g);
        benchmark::DoNotOptimize(g.head_w.d.data());
    }
}
BENCHMARK(BM_StcamTrainStep);

static void BM_PatchstForward(benchmark::State& state) {
    PatchstConfig cfg;
    cfg.window = 16;
    cfg.horizon = 1;
    auto p = PatchstParams::init(cfg, 1);
    Mat x = benchmark_series(4, cfg.window, 0.02, 2);
    for (auto _ : state) {
        Mat y = patchst_forward(x, p);
        benchmark::DoNotOptimize(y.d.data());
    }
}
BENCHMARK(BM_PatchstForward);

static void BM_BitFlipRates(benchmark::State& state) {
    SynthSpec spec = default_trace_spec(7);
    spec.duration = 20.0;
    auto frames = generate(spec);
    auto by_id = group_by_id(frames);
    const auto& batch = by_id.begin()->second;
    for (auto _ : state) {
        auto prof = bit_flip_rates(batch);
        benchmark::DoNotOptimize(prof.rates.data());
    }
    state.SetItemsProcessed(state.iterations() * static_cast<int64_t>(batch.size()));
}
BENCHMARK(BM_BitFlipRates);

static void BM_InjectDos(benchmark::State& state) {
    Mat series = benchmark_series(4, state.range(0), 0.02, 11);
    AttackScenario s;
    s.kind = AttackKind::dos;
    s.begin = 10;
    s.end = series.cols - 10;
    s.rho = 0.5;
    s.seed = 13;
    for (auto _ : state) {
        auto r = inject(series, s);
        benchmark::DoNotOptimize(r.series.d.data());
    }
}
BENCHMARK(BM_InjectDos)->Arg(1000)->Arg(10000);

BENCHMARK_MAIN();
