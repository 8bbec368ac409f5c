// Copyright (C) 2026 The ldla Authors
// SPDX-License-Identifier: Apache-2.0

#include "ldla/autodiff.hpp"
#include "ldla/evaluation.hpp"
#include "ldla/geometry.hpp"
#include "ldla/networks.hpp"
#include "ldla/random.hpp"
#include "ldla/training.hpp"

#include <benchmark/benchmark.h>

namespace {

using namespace ldla;

void BM_Conv2dForward(benchmark::State& state) {
    const int c = static_cast<int>(state.range(0));
    Rng rng = derive_rng(1, {});
    const Tensor x = gaussian_like({c, 32, 32}, rng);
    const Tensor w = gaussian_like({c, c, 3, 3}, rng);
    const Tensor b({c}, 0.0);
    for (auto _ : state) {
        ad::Graph g;
        benchmark::DoNotOptimize(ad::conv2d(g, g.constant(x), g.constant(w), g.constant(b)));
    }
}
BENCHMARK(BM_Conv2dForward)->Arg(16)->Arg(32);

void BM_Conv2dBackward(benchmark::State& state) {
    const int c = static_cast<int>(state.range(0));
    Rng rng = derive_rng(1, {});
    const Tensor x = gaussian_like({c, 32, 32}, rng);
    const Tensor w = gaussian_like({c, c, 3, 3}, rng);
    const Tensor b({c}, 0.0);
    for (auto _ : state) {
        ad::Graph g;
        const auto xv = g.parameter(x);
        const auto y = ad::conv2d(g, xv, g.parameter(w), g.parameter(b));
        g.backward(ad::mse(g, y, g.constant(Tensor({c, 32, 32}, 0.0))));
        benchmark::DoNotOptimize(g.grad(xv));
    }
}
BENCHMARK(BM_Conv2dBackward)->Arg(16)->Arg(32);

void BM_DenoiserPredict(benchmark::State& state) {
    const DenoiserNet net({});
    const ParamSet p = net.init(3);
    Rng rng = derive_rng(2, {});
    const Tensor z = gaussian_like({4, 32, 32}, rng);
    const HashingTextEncoder text;
    const auto cond = text.embed("forehead wrinkles 40%");
    for (auto _ : state) {
        benchmark::DoNotOptimize(net.predict(p, z, 500, cond));
    }
}
BENCHMARK(BM_DenoiserPredict);

void BM_TrainStep(benchmark::State& state) {
    const ZoneRegistry& reg = default_zone_registry();
    const HashingTextEncoder text;
    TrainState st = make_train_state({}, {}, make_schedule(), {}, 5);
    Rng rng = derive_rng(4, {});
    std::vector<TrainingExample> batch;
    for (int i = 0; i < static_cast<int>(state.range(0)); ++i) {
        batch.push_back({gaussian_like({4, 32, 32}, rng), "forehead", "Asian", AgingScore{"forehead", 2.5, 0.5}});
    }
    const LossWeights w;
    for (auto _ : state) {
        benchmark::DoNotOptimize(train_step(st, batch, w, {text, reg}, {1}));
    }
}
BENCHMARK(BM_TrainStep)->Arg(1)->Unit(benchmark::kMillisecond);

void BM_FrechetDistance(benchmark::State& state) {
    Rng rng = derive_rng(6, {});
    std::vector<std::vector<double>> fa, fb;
    for (int i = 0; i < 200; ++i) {
        const Tensor ta = gaussian_like({64}, rng);
        const Tensor tb = gaussian_like({64}, rng);
        fa.emplace_back(ta.values().begin(), ta.values().end());
        fb.emplace_back(tb.values().begin(), tb.values().end());
    }
    const FeatureStats a = stats_from_features(fa), b = stats_from_features(fb);
    for (auto _ : state) {
        benchmark::DoNotOptimize(frechet_distance(a, b));
    }
}
BENCHMARK(BM_FrechetDistance);

void BM_ResizeBilinear(benchmark::State& state) {
    Rng rng = derive_rng(7, {});
    const Tensor img = gaussian_like({3, 410, 205}, rng);
    for (auto _ : state) {
        benchmark::DoNotOptimize(resize_bilinear(img, 128, 128));
    }
}
BENCHMARK(BM_ResizeBilinear);

}  // namespace

BENCHMARK_MAIN();
