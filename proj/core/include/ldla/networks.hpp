// Copyright (C) 2026 The ldla Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include "ldla/autodiff.hpp"
#include "ldla/tensor.hpp"
#include "ldla/text_encoder.hpp"

#include <cstdint>
#include <string>
#include <vector>

namespace ldla {

/// Named parameter tensors of one network, in a fixed order.
struct ParamSet {
    std::vector<std::string> names;
    std::vector<Tensor> tensors;

    std::size_t count() const noexcept;  // total scalar parameters
    std::uint64_t checksum() const;
    bool all_finite() const noexcept;
    // Name of the first tensor holding a non-finite value, or empty.
    std::string first_non_finite() const;

    void add(std::string name, Tensor t) {
        names.push_back(std::move(name));
        tensors.push_back(std::move(t));
    }

    friend bool operator==(const ParamSet&, const ParamSet&) = default;
};

using BoundParams = std::vector<ad::Var>;

// trainable=true binds parameters as gradient leaves, otherwise as constants.
BoundParams bind(ad::Graph& g, const ParamSet& params, bool trainable);

struct DenoiserConfig {
    int latent_channels = 4;
    int width = 16;
    int pos_freqs = 4;  // sinusoidal position channels at frequencies 1, 2, 4, ... per axis
    int time_dim = 16;
    int emb_dim = 32;
    int text_dim = 16;

    friend bool operator==(const DenoiserConfig&, const DenoiserConfig&) = default;
};

/// Small conditional U-Net style noise predictor.
///
/// Two resolutions with one skip connection. Timestep, pooled prompt
/// embedding, and the per-channel latent mean feed a shared embedding that
/// modulates every block through FiLM (scale and shift per channel). The
/// input is concatenated with fixed sinusoidal position channels so the
/// network can place structure at absolute positions in the crop.
class DenoiserNet {
public:
    explicit DenoiserNet(DenoiserConfig config);

    const DenoiserConfig& config() const noexcept { return config_; }
    ParamSet init(std::uint64_t seed) const;

    // Throws NumericError naming the layer when an activation becomes non-finite.
    ad::Var forward(ad::Graph& g, const BoundParams& p, ad::Var zt, int t, const Tensor& cond_pooled) const;

    Tensor predict(const ParamSet& params, const Tensor& zt, int t, const ConditionEmbedding& cond) const;

private:
    DenoiserConfig config_;
};

struct ScoreNetConfig {
    int latent_channels = 4;
    int width = 8;

    friend bool operator==(const ScoreNetConfig&, const ScoreNetConfig&) = default;
};

/// Convolutional regressor from a latent grid to a score in [0,1].
class ScoreNet {
public:
    explicit ScoreNet(ScoreNetConfig config);

    const ScoreNetConfig& config() const noexcept { return config_; }
    ParamSet init(std::uint64_t seed) const;

    ad::Var forward(ad::Graph& g, const BoundParams& p, ad::Var z) const;
    double predict(const ParamSet& params, const Tensor& z) const;

private:
    ScoreNetConfig config_;
};

// Sinusoidal timestep features, shape (dim).
Tensor timestep_features(int t, int dim);
// 4*freqs position channels for an (H,W) grid: sin/cos per frequency per axis.
Tensor position_channels(int height, int width, int freqs);

}  // namespace ldla
