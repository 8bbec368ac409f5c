// Copyright (C) 2026 The ldla Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include "ldla/autodiff.hpp"
#include "ldla/codec.hpp"
#include "ldla/inference.hpp"
#include "ldla/networks.hpp"
#include "ldla/random.hpp"
#include "ldla/tensor.hpp"

#include <doctest.h>

#include <algorithm>
#include <atomic>
#include <cmath>
#include <filesystem>
#include <functional>
#include <memory>
#include <string>
#include <vector>

#include <unistd.h>

namespace ldla::test {

// Fresh directory under the system temp dir, removed on destruction.
class TempDir {
public:
    explicit TempDir(const std::string& tag) {
        static std::atomic<int> counter{0};
        path_ = std::filesystem::temp_directory_path() /
                ("ldla_unit_" + tag + "_" + std::to_string(::getpid()) + "_" + std::to_string(counter++));
        std::filesystem::remove_all(path_);
        std::filesystem::create_directories(path_);
    }
    ~TempDir() {
        std::error_code ec;
        std::filesystem::remove_all(path_, ec);
    }
    const std::filesystem::path& path() const { return path_; }
    std::string str(const std::string& leaf = {}) const { return leaf.empty() ? path_.string() : (path_ / leaf).string(); }

private:
    std::filesystem::path path_;
};

inline Tensor random_tensor(const std::vector<int>& shape, std::uint64_t seed, double scale = 1.0) {
    Rng rng = derive_rng(seed, {});
    Tensor t = gaussian_like(shape, rng);
    for (double& v : t.values()) v *= scale;
    return t;
}

// Image-like tensor with values in [0.1, 0.9].
inline Tensor random_image(int h, int w, std::uint64_t seed) {
    Rng rng = derive_rng(seed, {0x1a});
    Tensor t = Tensor::grid(3, h, w);
    for (double& v : t.values()) v = 0.1 + 0.8 * uniform01(rng);
    return t;
}

using GraphFn = std::function<ad::Var(ad::Graph&, const std::vector<ad::Var>&)>;

// Largest relative error between reverse-mode gradients of a scalar function
// and central differences, over every element of every input.
inline double max_grad_error(const GraphFn& fn, std::vector<Tensor> inputs, double h = 1e-6) {
    std::vector<Tensor> analytic;
    {
        ad::Graph g;
        std::vector<ad::Var> vars;
        for (const auto& t : inputs) vars.push_back(g.parameter(t));
        const ad::Var out = fn(g, vars);
        g.backward(out);
        for (const auto& v : vars) analytic.push_back(g.grad(v));
    }
    auto value = [&] {
        ad::Graph g;
        std::vector<ad::Var> vars;
        for (const auto& t : inputs) vars.push_back(g.constant(t));
        return g.scalar(fn(g, vars));
    };
    double worst = 0.0;
    for (std::size_t k = 0; k < inputs.size(); ++k) {
        for (std::size_t i = 0; i < inputs[k].size(); ++i) {
            const double keep = inputs[k][i];
            inputs[k][i] = keep + h;
            const double up = value();
            inputs[k][i] = keep - h;
            const double down = value();
            inputs[k][i] = keep;
            const double fd = (up - down) / (2 * h);
            const double an = analytic[k][i];
            worst = std::max(worst, std::abs(an - fd) / std::max({std::abs(an), std::abs(fd), 1e-4}));
        }
    }
    return worst;
}

// Small network-backed models with the identity codec, for inference tests.
inline InferenceModels tiny_models(int crop_size = 32, std::shared_ptr<std::atomic<int>> calls = nullptr) {
    const DenoiserConfig cfg{3, 4, 1, 4, 8, 16};
    InferenceModels m;
    m.codec = std::make_shared<IdentityCodec>();
    m.text = std::make_shared<HashingTextEncoder>();
    m.schedule = make_schedule();
    NoisePredictor inner = make_network_predictor(cfg, DenoiserNet(cfg).init(42));
    if (calls) {
        m.predictor = [inner, calls](const LatentGrid& z, int t, const ConditionEmbedding& c) {
            ++*calls;
            return inner(z, t, c);
        };
    } else {
        m.predictor = inner;
    }
    m.crop_size = crop_size;
    return m;
}

// Predictor that knows the clean latent and returns the exact injected noise.
inline NoisePredictor oracle_predictor(const Tensor& z0, const NoiseSchedule& sched) {
    return [z0, sched](const LatentGrid& zt, int t, const ConditionEmbedding&) {
        return lincomb(1.0 / sched.sqrt_one_minus_alpha_bar(t), zt,
                       -sched.sqrt_alpha_bar(t) / sched.sqrt_one_minus_alpha_bar(t), z0);
    };
}

}  // namespace ldla::test
