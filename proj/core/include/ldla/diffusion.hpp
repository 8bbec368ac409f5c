// Copyright (C) 2026 The ldla Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include "ldla/autodiff.hpp"
#include "ldla/tensor.hpp"
#include "ldla/text_encoder.hpp"

#include <functional>
#include <vector>

namespace ldla {

using LatentGrid = Tensor;

/// Discrete DDPM schedule with linearly spaced betas.
class NoiseSchedule {
public:
    NoiseSchedule() = default;
    NoiseSchedule(int steps, double beta_start, double beta_end);

    int steps() const noexcept { return static_cast<int>(betas_.size()); }
    double beta_start() const noexcept { return beta_start_; }
    double beta_end() const noexcept { return beta_end_; }
    const std::vector<double>& betas() const noexcept { return betas_; }
    const std::vector<double>& alpha_bar() const noexcept { return alpha_bar_; }

    double alpha_bar(int t) const;
    double sqrt_alpha_bar(int t) const;
    double sqrt_one_minus_alpha_bar(int t) const;

    friend bool operator==(const NoiseSchedule&, const NoiseSchedule&) = default;

private:
    double beta_start_ = 0.0;
    double beta_end_ = 0.0;
    std::vector<double> betas_;
    std::vector<double> alpha_bar_;
};

inline constexpr int kDefaultSteps = 1000;
inline constexpr double kDefaultBetaStart = 1e-4;
inline constexpr double kDefaultBetaEnd = 0.02;

NoiseSchedule make_schedule(int steps = kDefaultSteps, double beta_start = kDefaultBetaStart,
                            double beta_end = kDefaultBetaEnd);

// sqrt(abar_t) * z0 + sqrt(1 - abar_t) * eps
LatentGrid forward_diffuse(const LatentGrid& z0, int t, const LatentGrid& eps, const NoiseSchedule& sched);

// (zt - sqrt(1 - abar_t) * eps_pred) / sqrt(abar_t): clean latent recovered in one step.
LatentGrid one_step_estimate(const LatentGrid& zt, const LatentGrid& eps_pred, int t, const NoiseSchedule& sched);

// Differentiable counterparts used by the training losses.
ad::Var forward_diffuse(ad::Graph& g, ad::Var z0, int t, ad::Var eps, const NoiseSchedule& sched);
ad::Var one_step_estimate(ad::Graph& g, ad::Var zt, ad::Var eps_pred, int t, const NoiseSchedule& sched);

// eps_uncond + g * (eps_cond - eps_uncond)
LatentGrid guided_epsilon(const LatentGrid& eps_cond, const LatentGrid& eps_uncond, double guidance);

struct TimestepPlan {
    std::vector<int> full_grid;  // descending, gamma_inf entries
    std::vector<int> active;     // suffix of full_grid with t <= floor(gamma_n * T)
};

/// The grid uses trailing spacing t_i = T - 1 - floor(i * T / gamma_inf), so it
/// always starts at T-1. Throws DomainError when no grid point survives the
/// strength cut.
TimestepPlan plan_timesteps(int gamma_inf, double gamma_n, const NoiseSchedule& sched);

using NoisePredictor = std::function<LatentGrid(const LatentGrid& zt, int t, const ConditionEmbedding& cond)>;

/// Deterministic guided sampler over plan.active. Two predictor calls per step.
LatentGrid denoise(const LatentGrid& z_start, const TimestepPlan& plan, const ConditionEmbedding& cond,
                   const ConditionEmbedding& uncond, double guidance, const NoisePredictor& predictor,
                   const NoiseSchedule& sched);

}  // namespace ldla
