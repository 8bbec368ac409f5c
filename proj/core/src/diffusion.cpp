// Copyright (C) 2026 The ldla Authors
// SPDX-License-Identifier: Apache-2.0

#include "ldla/diffusion.hpp"

#include "ldla/errors.hpp"

#include <cmath>
#include <sstream>

namespace ldla {

namespace {

void check_timestep(int t, const NoiseSchedule& sched) {
    if (t < 0 || t >= sched.steps()) {
        throw DomainError("timestep " + std::to_string(t) + " outside [0, " + std::to_string(sched.steps()) + ")");
    }
}

}  // namespace

NoiseSchedule::NoiseSchedule(int steps, double beta_start, double beta_end)
    : beta_start_(beta_start), beta_end_(beta_end) {
    if (steps < 1) {
        throw DomainError("schedule needs at least one step");
    }
    if (!(beta_start > 0.0 && beta_start <= beta_end && beta_end < 1.0)) {
        std::ostringstream os;
        os << "invalid beta bounds [" << beta_start << ", " << beta_end << "]";
        throw DomainError(os.str());
    }
    betas_.resize(static_cast<std::size_t>(steps));
    alpha_bar_.resize(static_cast<std::size_t>(steps));
    double prod = 1.0;
    for (int t = 0; t < steps; ++t) {
        const double frac = steps == 1 ? 0.0 : static_cast<double>(t) / (steps - 1);
        const double beta = beta_start + (beta_end - beta_start) * frac;
        betas_[static_cast<std::size_t>(t)] = beta;
        prod *= 1.0 - beta;
        alpha_bar_[static_cast<std::size_t>(t)] = prod;
    }
}

double NoiseSchedule::alpha_bar(int t) const {
    check_timestep(t, *this);
    return alpha_bar_[static_cast<std::size_t>(t)];
}

double NoiseSchedule::sqrt_alpha_bar(int t) const { return std::sqrt(alpha_bar(t)); }

double NoiseSchedule::sqrt_one_minus_alpha_bar(int t) const { return std::sqrt(1.0 - alpha_bar(t)); }

NoiseSchedule make_schedule(int steps, double beta_start, double beta_end) {
    return NoiseSchedule(steps, beta_start, beta_end);
}

LatentGrid forward_diffuse(const LatentGrid& z0, int t, const LatentGrid& eps, const NoiseSchedule& sched) {
    require_same_shape(z0, eps, "forward_diffuse");
    return lincomb(sched.sqrt_alpha_bar(t), z0, sched.sqrt_one_minus_alpha_bar(t), eps);
}

LatentGrid one_step_estimate(const LatentGrid& zt, const LatentGrid& eps_pred, int t, const NoiseSchedule& sched) {
    require_same_shape(zt, eps_pred, "one_step_estimate");
    const double a = sched.sqrt_alpha_bar(t);
    const double s = sched.sqrt_one_minus_alpha_bar(t);
    LatentGrid out(zt.shape());
    for (std::size_t i = 0; i < zt.size(); ++i) {
        out[i] = (zt[i] - s * eps_pred[i]) / a;
    }
    return out;
}

ad::Var forward_diffuse(ad::Graph& g, ad::Var z0, int t, ad::Var eps, const NoiseSchedule& sched) {
    require_same_shape(g.value(z0), g.value(eps), "forward_diffuse");
    return ad::lincomb(g, sched.sqrt_alpha_bar(t), z0, sched.sqrt_one_minus_alpha_bar(t), eps);
}

ad::Var one_step_estimate(ad::Graph& g, ad::Var zt, ad::Var eps_pred, int t, const NoiseSchedule& sched) {
    require_same_shape(g.value(zt), g.value(eps_pred), "one_step_estimate");
    const double a = sched.sqrt_alpha_bar(t);
    const double s = sched.sqrt_one_minus_alpha_bar(t);
    return ad::lincomb(g, 1.0 / a, zt, -s / a, eps_pred);
}

LatentGrid guided_epsilon(const LatentGrid& eps_cond, const LatentGrid& eps_uncond, double guidance) {
    require_same_shape(eps_cond, eps_uncond, "guided_epsilon");
    LatentGrid out(eps_cond.shape());
    for (std::size_t i = 0; i < out.size(); ++i) {
        out[i] = eps_uncond[i] + guidance * (eps_cond[i] - eps_uncond[i]);
    }
    return out;
}

TimestepPlan plan_timesteps(int gamma_inf, double gamma_n, const NoiseSchedule& sched) {
    const int T = sched.steps();
    if (gamma_inf < 1 || gamma_inf > T) {
        throw DomainError("gamma_inf must lie in [1, " + std::to_string(T) + "]");
    }
    if (!(gamma_n > 0.0 && gamma_n <= 1.0)) {
        throw DomainError("gamma_n must lie in (0, 1]");
    }
    TimestepPlan plan;
    plan.full_grid.reserve(static_cast<std::size_t>(gamma_inf));
    const auto cut = static_cast<long long>(std::floor(gamma_n * T));
    for (int i = 0; i < gamma_inf; ++i) {
        const int t = T - 1 - static_cast<int>((static_cast<long long>(i) * T) / gamma_inf);
        plan.full_grid.push_back(t);
        if (t <= cut) {
            plan.active.push_back(t);
        }
    }
    if (plan.active.empty()) {
        std::ostringstream os;
        os << "noise strength " << gamma_n << " selects no timestep on a " << gamma_inf << "-step grid (T=" << T
           << ")";
        throw DomainError(os.str());
    }
    return plan;
}

LatentGrid denoise(const LatentGrid& z_start, const TimestepPlan& plan, const ConditionEmbedding& cond,
                   const ConditionEmbedding& uncond, double guidance, const NoisePredictor& predictor,
                   const NoiseSchedule& sched) {
    if (plan.active.empty()) {
        throw DomainError("denoise: empty timestep plan");
    }
    LatentGrid z = z_start;
    for (std::size_t i = 0; i < plan.active.size(); ++i) {
        const int t = plan.active[i];
        LatentGrid eps_c = predictor(z, t, cond);
        LatentGrid eps_u = predictor(z, t, uncond);
        if (!eps_c.same_shape(z) || !eps_u.same_shape(z)) {
            throw ShapeError("denoise: predictor returned " + eps_c.shape_string() + " for latent " +
                             z.shape_string());
        }
        const LatentGrid eps = guided_epsilon(eps_c, eps_u, guidance);
        LatentGrid z0_hat = one_step_estimate(z, eps, t, sched);
        if (i + 1 == plan.active.size()) {
            return z0_hat;
        }
        z = forward_diffuse(z0_hat, plan.active[i + 1], eps, sched);
    }
    return z;
}

}  // namespace ldla
