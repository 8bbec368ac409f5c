// Copyright (C) 2026 The ldla Authors
// SPDX-License-Identifier: Apache-2.0

#include "ldla/training.hpp"

#include "binary_io.hpp"
#include "ldla/image_io.hpp"
#include "parallel.hpp"

#include <json.hpp>

#include <cmath>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <limits>
#include <optional>
#include <set>
#include <sstream>

namespace ldla {

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();
constexpr char kCheckpointMagic[8] = {'L', 'D', 'L', 'A', 'C', 'K', 'P', 'T'};

}  // namespace

LossWeights::LossWeights(double full, double zone, double cycle, double score) : w_{full, zone, cycle, score} {
    bool any = false;
    for (std::size_t i = 0; i < w_.size(); ++i) {
        if (!std::isfinite(w_[i]) || w_[i] < 0.0) {
            throw ValidationError(std::string("loss weight ") + kLossTermNames[i] + " must be finite and >= 0");
        }
        any = any || w_[i] > 0.0;
    }
    if (!any) {
        throw ValidationError("at least one loss weight must be positive");
    }
}

int LossWeights::active_count() const noexcept {
    int n = 0;
    for (double w : w_) {
        n += w > 0.0;
    }
    return n;
}

bool LossRecord::active(LossTerm t) const { return !std::isnan(components[static_cast<std::size_t>(t)]); }

int LossRecord::active_count() const {
    int n = 0;
    for (double c : components) {
        n += !std::isnan(c);
    }
    return n;
}

void adam_update(ParamSet& params, AdamState& state, const std::vector<Tensor>& grads, const AdamConfig& cfg) {
    if (grads.size() != params.tensors.size()) {
        throw ShapeError("adam_update: gradient count does not match parameter count");
    }
    if (state.m.empty()) {
        for (const auto& p : params.tensors) {
            state.m.push_back(zeros_like(p));
            state.v.push_back(zeros_like(p));
        }
    }
    ++state.steps;
    const double bc1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(state.steps));
    const double bc2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(state.steps));
    for (std::size_t k = 0; k < grads.size(); ++k) {
        Tensor& p = params.tensors[k];
        Tensor& m = state.m[k];
        Tensor& v = state.v[k];
        const Tensor& gk = grads[k];
        require_same_shape(p, gk, "adam_update");
        for (std::size_t i = 0; i < p.size(); ++i) {
            m[i] = cfg.beta1 * m[i] + (1.0 - cfg.beta1) * gk[i];
            v[i] = cfg.beta2 * v[i] + (1.0 - cfg.beta2) * gk[i] * gk[i];
            p[i] -= cfg.learning_rate * (m[i] / bc1) / (std::sqrt(v[i] / bc2) + cfg.epsilon);
        }
    }
}

TrainState make_train_state(const DenoiserConfig& denoiser, const ScoreNetConfig& scorenet,
                            const NoiseSchedule& schedule, const AdamConfig& adam, std::uint64_t seed) {
    TrainState s;
    s.denoiser_config = denoiser;
    s.scorenet_config = scorenet;
    s.denoiser = DenoiserNet(denoiser).init(seed);
    s.scorenet = ScoreNet(scorenet).init(seed);
    s.adam = adam;
    s.seed = seed;
    s.schedule = schedule;
    return s;
}

NetworkDenoiser::NetworkDenoiser(const DenoiserNet& net, const ParamSet& params, ad::Graph& g, bool trainable)
    : net_(net), bound_(bind(g, params, trainable)) {}

ad::Var NetworkDenoiser::predict(ad::Graph& g, ad::Var zt, int t, const ConditionEmbedding& cond) {
    ++calls_;
    return net_.forward(g, bound_, zt, t, cond.pooled());
}

NetworkScorer::NetworkScorer(const ScoreNet& net, const ParamSet& params, ad::Graph& g, bool trainable)
    : net_(net), bound_(bind(g, params, trainable)) {}

ad::Var NetworkScorer::predict(ad::Graph& g, ad::Var z) { return net_.forward(g, bound_, z); }

std::string full_prompt_for(const ZoneRegistry& registry, const TrainingExample& example) {
    return build_full_prompt(registry.at(example.zone_id), example.ethnicity, example.source_score.normalized);
}

namespace {

ad::Var denoising_loss(LossContext& ctx, ad::Var z0, int t, const Tensor& eps, const std::string& prompt) {
    ad::Graph& g = ctx.graph;
    const ad::Var e = g.constant(eps);
    const ad::Var zt = forward_diffuse(g, z0, t, e, ctx.schedule);
    const ad::Var pred = ctx.denoiser.predict(g, zt, t, ctx.text.embed(prompt));
    return ad::mse(g, pred, e);
}

void check_timestep(int t, const NoiseSchedule& sched) {
    if (t < 0 || t >= sched.steps()) {
        throw DomainError("timestep " + std::to_string(t) + " outside [0, " + std::to_string(sched.steps()) + ")");
    }
}

}  // namespace

ad::Var loss_full(LossContext& ctx, const TrainingExample& example, ad::Var z0, int t, const Tensor& eps) {
    check_timestep(t, ctx.schedule);
    return denoising_loss(ctx, z0, t, eps, full_prompt_for(ctx.registry, example));
}

ad::Var loss_zone(LossContext& ctx, const TrainingExample& example, ad::Var z0, int t, const Tensor& eps) {
    check_timestep(t, ctx.schedule);
    return denoising_loss(ctx, z0, t, eps, build_zone_prompt(ctx.registry.at(example.zone_id)));
}

CycleResult cycle_block(LossContext& ctx, const TrainingExample& example, ad::Var z0, const PromptBundle& target,
                        int t, const Tensor& eps1, const Tensor& eps2) {
    (void)example;
    check_timestep(t, ctx.schedule);
    ad::Graph& g = ctx.graph;
    const auto& sched = ctx.schedule;

    const ad::Var zt1 = forward_diffuse(g, z0, t, g.constant(eps1), sched);
    const ad::Var e1 = ctx.denoiser.predict(g, zt1, t, ctx.text.embed(target.p_target));
    const ad::Var z_tilde = one_step_estimate(g, zt1, e1, t, sched);

    const ad::Var zt2 = forward_diffuse(g, z_tilde, t, g.constant(eps2), sched);
    const ad::Var e2 = ctx.denoiser.predict(g, zt2, t, ctx.text.embed(target.p_full));
    const ad::Var z_bar = one_step_estimate(g, zt2, e2, t, sched);

    return {z_tilde, z_bar, ad::mse(g, z0, z_bar)};
}

CycleResult cycle_block(LossContext& ctx, const TrainingExample& example, ad::Var z0, const PromptBundle& target,
                        int t, Rng& rng) {
    const auto& shape = ctx.graph.value(z0).shape();
    const Tensor eps1 = gaussian_like(shape, rng);
    const Tensor eps2 = gaussian_like(shape, rng);
    return cycle_block(ctx, example, z0, target, t, eps1, eps2);
}

ad::Var loss_score(LossContext& ctx, ad::Var z_tilde, double target_normalized) {
    if (!(target_normalized >= 0.0 && target_normalized <= 1.0)) {
        throw DomainError("loss_score: target outside [0,1]");
    }
    ad::Graph& g = ctx.graph;
    return ad::mse(g, ctx.scorer.predict(g, z_tilde), g.constant(Tensor({1}, target_normalized)));
}

ExampleStreams ExampleStreams::derive(std::uint64_t seed, std::uint64_t step, std::uint64_t example_index) {
    return {derive_rng(seed, {step, example_index, 0x5a}), derive_rng(seed, {step, example_index, 0xc7})};
}

CombinedLoss combined_loss(LossContext& ctx, const TrainingExample& example, const LossWeights& weights,
                           ExampleStreams& streams) {
    ad::Graph& g = ctx.graph;
    const int T = ctx.schedule.steps();
    const ad::Var z0 = g.constant(example.crop_latent);

    CombinedLoss out;
    out.components.fill(kNaN);
    std::vector<std::pair<double, ad::Var>> terms;

    // Drawn unconditionally so the shared stream is consumed identically for any weights.
    const int t = uniform_int(streams.shared, 0, T - 1);
    const Tensor eps = gaussian_like(example.crop_latent.shape(), streams.shared);

    if (weights.active(LossTerm::full)) {
        const ad::Var l = loss_full(ctx, example, z0, t, eps);
        out.components[0] = g.scalar(l);
        terms.emplace_back(weights.full(), l);
    }
    if (weights.active(LossTerm::zone)) {
        const ad::Var l = loss_zone(ctx, example, z0, t, eps);
        out.components[1] = g.scalar(l);
        terms.emplace_back(weights.zone(), l);
    }
    if (weights.active(LossTerm::cycle) || weights.active(LossTerm::score)) {
        const ZoneSpec& zone = ctx.registry.at(example.zone_id);
        const PromptBundle bundle =
            sample_target_prompt(zone, example.ethnicity, example.source_score.normalized, streams.cycle);
        const int t_hi = ctx.cycle_max_timestep > 0 ? std::min(ctx.cycle_max_timestep, T) : T;
        const int tc = uniform_int(streams.cycle, 0, t_hi - 1);
        const CycleResult cyc = cycle_block(ctx, example, z0, bundle, tc, streams.cycle);
        if (weights.active(LossTerm::cycle)) {
            out.components[2] = g.scalar(cyc.l_cycle);
            terms.emplace_back(weights.cycle(), cyc.l_cycle);
        }
        if (weights.active(LossTerm::score)) {
            const ad::Var l = loss_score(ctx, cyc.z_tilde, bundle.target_normalized);
            out.components[3] = g.scalar(l);
            terms.emplace_back(weights.score(), l);
        }
    }
    out.total = ad::weighted_sum(g, terms);
    return out;
}

namespace {

struct ExampleOutcome {
    std::array<double, 4> components{};
    double total = 0.0;
    double anchor = std::numeric_limits<double>::quiet_NaN();
    std::vector<Tensor> denoiser_grads;
    std::vector<Tensor> scorenet_grads;
};

std::vector<ExampleOutcome> run_batch(const TrainState& state, std::span<const TrainingExample> batch,
                                      const LossWeights& weights, const FrozenModels& frozen,
                                      const StepOptions& options, bool with_grads) {
    if (batch.empty()) {
        throw ValidationError("training batch is empty");
    }
    const DenoiserNet dnet(state.denoiser_config);
    const ScoreNet snet(state.scorenet_config);
    const bool score_on = weights.active(LossTerm::score);
    std::vector<ExampleOutcome> out(batch.size());

    detail::parallel_for(batch.size(), options.threads, [&](std::size_t i) {
        ad::Graph g;
        NetworkDenoiser den(dnet, state.denoiser, g, with_grads);
        NetworkScorer sc(snet, state.scorenet, g, with_grads && score_on);
        LossContext ctx{g, den, sc, state.schedule, frozen.text, frozen.registry, options.cycle_max_timestep};
        ExampleStreams streams = ExampleStreams::derive(state.seed, state.step, i);
        const CombinedLoss cl = combined_loss(ctx, batch[i], weights, streams);

        ExampleOutcome& o = out[i];
        o.components = cl.components;
        o.total = g.scalar(cl.total);
        if (!with_grads || !std::isfinite(o.total)) {
            return;
        }
        ad::Var root = cl.total;
        if (score_on && options.score_anchor > 0.0) {
            const TrainingExample& ex = batch[i];
            const ad::Var a = ad::mse(g, sc.predict(g, g.constant(ex.crop_latent)),
                                      g.constant(Tensor({1}, ex.source_score.normalized)));
            o.anchor = g.scalar(a);
            root = ad::weighted_sum(g, {{1.0, cl.total}, {options.score_anchor, a}});
        }
        g.backward(root);
        for (const auto& v : den.bound()) {
            o.denoiser_grads.push_back(g.grad(v));
        }
        if (score_on) {
            for (const auto& v : sc.bound()) {
                o.scorenet_grads.push_back(g.grad(v));
            }
        }
    });
    return out;
}

LossRecord summarize(const std::vector<ExampleOutcome>& outcomes, std::uint64_t step) {
    LossRecord r;
    r.step = step;
    const double n = static_cast<double>(outcomes.size());
    for (std::size_t k = 0; k < 4; ++k) {
        double s = 0.0;
        for (const auto& o : outcomes) {
            s += o.components[k];
        }
        r.components[k] = s / n;  // stays NaN for inactive terms
    }
    double total = 0.0;
    for (const auto& o : outcomes) {
        total += o.total;
    }
    r.total = total / n;
    if (!std::isnan(outcomes.front().anchor)) {
        double a = 0.0;
        for (const auto& o : outcomes) {
            a += o.anchor;
        }
        r.score_anchor = a / n;
    }
    return r;
}

std::vector<Tensor> mean_grads(const std::vector<ExampleOutcome>& outcomes,
                               std::vector<Tensor> ExampleOutcome::*member) {
    std::vector<Tensor> acc = outcomes.front().*member;
    const double n = static_cast<double>(outcomes.size());
    for (std::size_t i = 1; i < outcomes.size(); ++i) {
        const auto& gi = outcomes[i].*member;
        for (std::size_t k = 0; k < acc.size(); ++k) {
            for (std::size_t j = 0; j < acc[k].size(); ++j) {
                acc[k][j] += gi[k][j];
            }
        }
    }
    for (auto& t : acc) {
        for (double& v : t.values()) {
            v /= n;
        }
    }
    return acc;
}

}  // namespace

LossRecord train_step(TrainState& state, std::span<const TrainingExample> batch, const LossWeights& weights,
                      const FrozenModels& frozen, const StepOptions& options) {
    const auto outcomes = run_batch(state, batch, weights, frozen, options, true);
    LossRecord record = summarize(outcomes, state.step + 1);
    if (!std::isfinite(record.total)) {
        throw TrainingAborted("non-finite loss at step " + std::to_string(record.step), record);
    }
    adam_update(state.denoiser, state.denoiser_opt, mean_grads(outcomes, &ExampleOutcome::denoiser_grads), state.adam);
    if (weights.active(LossTerm::score)) {
        adam_update(state.scorenet, state.scorenet_opt, mean_grads(outcomes, &ExampleOutcome::scorenet_grads),
                    state.adam);
    }
    for (const ParamSet* ps : {&state.denoiser, &state.scorenet}) {
        const std::string bad = ps->first_non_finite();
        if (!bad.empty()) {
            throw TrainingAborted("non-finite parameter " + bad + " after step " + std::to_string(record.step),
                                  record);
        }
    }
    state.step += 1;
    state.history.push_back(record);
    return record;
}

LossRecord evaluate_step_loss(const TrainState& state, std::span<const TrainingExample> batch,
                              const LossWeights& weights, const FrozenModels& frozen, const StepOptions& options) {
    return summarize(run_batch(state, batch, weights, frozen, options, false), state.step + 1);
}

namespace {

struct CycleProbe {
    double l_cycle = 0.0;
    Tensor z_tilde;
    double target = 0.0;
};

CycleProbe probe_cycle(const TrainState& state, const TrainingExample& ex, const FrozenModels& frozen, Rng& rng,
                       int max_timestep) {
    const DenoiserNet dnet(state.denoiser_config);
    const ScoreNet snet(state.scorenet_config);
    ad::Graph g;
    NetworkDenoiser den(dnet, state.denoiser, g, false);
    NetworkScorer sc(snet, state.scorenet, g, false);
    LossContext ctx{g, den, sc, state.schedule, frozen.text, frozen.registry};
    const PromptBundle bundle =
        sample_target_prompt(frozen.registry.at(ex.zone_id), ex.ethnicity, ex.source_score.normalized, rng);
    const int T = state.schedule.steps();
    const int t = uniform_int(rng, 0, (max_timestep > 0 ? std::min(max_timestep, T) : T) - 1);
    const CycleResult r = cycle_block(ctx, ex, g.constant(ex.crop_latent), bundle, t, rng);
    return {g.scalar(r.l_cycle), g.value(r.z_tilde), bundle.target_normalized};
}

}  // namespace

double cycle_reconstruction_error(const TrainState& state, std::span<const TrainingExample> examples,
                                  const FrozenModels& frozen, std::uint64_t seed, int max_timestep) {
    if (examples.empty()) {
        throw ValidationError("cycle_reconstruction_error: no examples");
    }
    double total = 0.0;
    for (std::size_t i = 0; i < examples.size(); ++i) {
        Rng rng = derive_rng(seed, {0xcc, i});
        total += probe_cycle(state, examples[i], frozen, rng, max_timestep).l_cycle;
    }
    return total / static_cast<double>(examples.size());
}

ScoreEvaluation evaluate_scorenet(const TrainState& state, std::span<const TrainingExample> examples,
                                  const FrozenModels& frozen, std::uint64_t seed, int max_timestep) {
    if (examples.empty()) {
        throw ValidationError("evaluate_scorenet: no examples");
    }
    const ScoreNet snet(state.scorenet_config);
    ScoreEvaluation ev;
    for (std::size_t i = 0; i < examples.size(); ++i) {
        const auto& ex = examples[i];
        ev.mae_clean += std::abs(snet.predict(state.scorenet, ex.crop_latent) - ex.source_score.normalized);
        Rng rng = derive_rng(seed, {0x5e, i});
        const CycleProbe p = probe_cycle(state, ex, frozen, rng, max_timestep);
        ev.mae_translated += std::abs(snet.predict(state.scorenet, p.z_tilde) - p.target);
    }
    ev.mae_clean /= static_cast<double>(examples.size());
    ev.mae_translated /= static_cast<double>(examples.size());
    return ev;
}

// --- checkpoints -------------------------------------------------------------

namespace {

void put_params(std::ostream& out, const ParamSet& ps) {
    bin::put<std::uint32_t>(out, static_cast<std::uint32_t>(ps.tensors.size()));
    for (std::size_t i = 0; i < ps.tensors.size(); ++i) {
        bin::put_string(out, ps.names[i]);
        bin::put_tensor(out, ps.tensors[i]);
    }
}

ParamSet get_params(std::istream& in) {
    ParamSet ps;
    const auto n = bin::get<std::uint32_t>(in);
    if (n > 4096) {
        throw ParseError("checkpoint: parameter count out of range");
    }
    for (std::uint32_t i = 0; i < n; ++i) {
        std::string name = bin::get_string(in);
        ps.add(std::move(name), bin::get_tensor(in));
    }
    return ps;
}

void put_adam(std::ostream& out, const AdamState& s) {
    bin::put<std::uint64_t>(out, s.steps);
    bin::put<std::uint32_t>(out, static_cast<std::uint32_t>(s.m.size()));
    for (std::size_t i = 0; i < s.m.size(); ++i) {
        bin::put_tensor(out, s.m[i]);
        bin::put_tensor(out, s.v[i]);
    }
}

AdamState get_adam(std::istream& in) {
    AdamState s;
    s.steps = bin::get<std::uint64_t>(in);
    const auto n = bin::get<std::uint32_t>(in);
    if (n > 4096) {
        throw ParseError("checkpoint: optimizer slot count out of range");
    }
    for (std::uint32_t i = 0; i < n; ++i) {
        s.m.push_back(bin::get_tensor(in));
        s.v.push_back(bin::get_tensor(in));
    }
    return s;
}

}  // namespace

void write_checkpoint(std::ostream& out, const TrainState& s, const Codec& codec, const TextEncoderConfig& text) {
    std::ostringstream body(std::ios::binary);
    body.write(kCheckpointMagic, sizeof(kCheckpointMagic));
    bin::put<std::uint32_t>(body, kCheckpointVersion);

    bin::put<std::int32_t>(body, s.schedule.steps());
    bin::put<double>(body, s.schedule.beta_start());
    bin::put<double>(body, s.schedule.beta_end());
    bin::put<std::uint64_t>(body, s.seed);
    bin::put<std::uint64_t>(body, s.step);

    const auto& d = s.denoiser_config;
    for (int v : {d.latent_channels, d.width, d.pos_freqs, d.time_dim, d.emb_dim, d.text_dim}) {
        bin::put<std::int32_t>(body, v);
    }
    bin::put<std::int32_t>(body, s.scorenet_config.latent_channels);
    bin::put<std::int32_t>(body, s.scorenet_config.width);
    bin::put<std::int32_t>(body, text.dim);
    bin::put<std::int32_t>(body, text.max_tokens);
    for (double v : {s.adam.learning_rate, s.adam.beta1, s.adam.beta2, s.adam.epsilon}) {
        bin::put<double>(body, v);
    }

    codec.write(body);
    put_params(body, s.denoiser);
    put_params(body, s.scorenet);
    put_adam(body, s.denoiser_opt);
    put_adam(body, s.scorenet_opt);

    bin::put<std::uint64_t>(body, s.history.size());
    for (const auto& r : s.history) {
        bin::put<std::uint64_t>(body, r.step);
        for (double c : r.components) {
            bin::put<double>(body, c);
        }
        bin::put<double>(body, r.total);
    }

    const std::string bytes = body.str();
    const auto digest = fnv1a({reinterpret_cast<const unsigned char*>(bytes.data()), bytes.size()});
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    bin::put<std::uint64_t>(out, digest);
}

Checkpoint read_checkpoint(std::istream& in) {
    const std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    if (bytes.size() < sizeof(kCheckpointMagic) + 12 ||
        bytes.compare(0, sizeof(kCheckpointMagic), kCheckpointMagic, sizeof(kCheckpointMagic)) != 0) {
        throw ParseError("not an ldla checkpoint (bad magic)");
    }
    const std::size_t body_len = bytes.size() - sizeof(std::uint64_t);
    std::uint64_t stored = 0;
    std::memcpy(&stored, bytes.data() + body_len, sizeof(stored));

    std::istringstream body(bytes.substr(0, body_len), std::ios::binary);
    body.ignore(sizeof(kCheckpointMagic));
    const auto version = bin::get<std::uint32_t>(body);
    if (version != kCheckpointVersion) {
        throw ParseError("unsupported checkpoint version " + std::to_string(version) + " (expected " +
                         std::to_string(kCheckpointVersion) + ")");
    }
    if (fnv1a({reinterpret_cast<const unsigned char*>(bytes.data()), body_len}) != stored) {
        throw ParseError("checkpoint integrity check failed (truncated or corrupted)");
    }

    Checkpoint ck;
    TrainState& s = ck.state;
    const auto steps = bin::get<std::int32_t>(body);
    const double b0 = bin::get<double>(body);
    const double b1 = bin::get<double>(body);
    s.schedule = NoiseSchedule(steps, b0, b1);
    s.seed = bin::get<std::uint64_t>(body);
    s.step = bin::get<std::uint64_t>(body);

    auto& d = s.denoiser_config;
    for (int* v : {&d.latent_channels, &d.width, &d.pos_freqs, &d.time_dim, &d.emb_dim, &d.text_dim}) {
        *v = bin::get<std::int32_t>(body);
    }
    s.scorenet_config.latent_channels = bin::get<std::int32_t>(body);
    s.scorenet_config.width = bin::get<std::int32_t>(body);
    ck.text.dim = bin::get<std::int32_t>(body);
    ck.text.max_tokens = bin::get<std::int32_t>(body);
    for (double* v : {&s.adam.learning_rate, &s.adam.beta1, &s.adam.beta2, &s.adam.epsilon}) {
        *v = bin::get<double>(body);
    }

    ck.codec = read_codec(body);
    s.denoiser = get_params(body);
    s.scorenet = get_params(body);
    s.denoiser_opt = get_adam(body);
    s.scorenet_opt = get_adam(body);

    const auto n = bin::get<std::uint64_t>(body);
    if (n > (1u << 26)) {
        throw ParseError("checkpoint: history length out of range");
    }
    s.history.resize(n);
    for (auto& r : s.history) {
        r.step = bin::get<std::uint64_t>(body);
        for (double& c : r.components) {
            c = bin::get<double>(body);
        }
        r.total = bin::get<double>(body);
    }
    if (body.peek() != std::char_traits<char>::eof()) {
        throw ParseError("checkpoint: trailing bytes after history");
    }
    return ck;
}

void save_checkpoint(const std::string& path, const TrainState& state, const Codec& codec,
                     const TextEncoderConfig& text) {
    const std::string tmp = path + ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) {
            throw IoError(path, "cannot open checkpoint for writing");
        }
        write_checkpoint(out, state, codec, text);
        if (!out) {
            throw IoError(path, "checkpoint write failed");
        }
    }
    std::error_code ec;
    std::filesystem::rename(tmp, path, ec);
    if (ec) {
        throw IoError(path, "cannot move checkpoint into place: " + ec.message());
    }
}

Checkpoint load_checkpoint(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw IoError(path, "cannot open checkpoint");
    }
    try {
        return read_checkpoint(in);
    } catch (const ParseError& e) {
        throw IoError(path, e.what());
    } catch (const ShapeError& e) {
        throw IoError(path, e.what());
    }
}

// --- configuration -------------------------------------------------------------

namespace {

using nlohmann::ordered_json;

ordered_json to_json_doc(const TrainConfig& c) {
    ordered_json j;
    j["seed"] = c.seed;
    j["steps"] = c.steps;
    j["batch_size"] = c.batch_size;
    j["threads"] = c.threads;
    j["schedule"] = {{"steps", c.schedule_steps}, {"beta_start", c.beta_start}, {"beta_end", c.beta_end}};
    j["weights"] = {{"full", c.weights.full()},
                    {"zone", c.weights.zone()},
                    {"cycle", c.weights.cycle()},
                    {"score", c.weights.score()}};
    j["score_anchor"] = c.score_anchor;
    j["cycle_max_timestep"] = c.cycle_max_timestep;
    j["denoiser"] = {{"latent_channels", c.denoiser.latent_channels},
                     {"width", c.denoiser.width},
                     {"pos_freqs", c.denoiser.pos_freqs},
                     {"time_dim", c.denoiser.time_dim},
                     {"emb_dim", c.denoiser.emb_dim},
                     {"text_dim", c.denoiser.text_dim}};
    j["scorenet"] = {{"latent_channels", c.scorenet.latent_channels}, {"width", c.scorenet.width}};
    j["text"] = {{"dim", c.text.dim}, {"max_tokens", c.text.max_tokens}};
    j["codec"] = {{"kind", c.codec_kind}, {"factor", c.codec_factor}, {"channels", c.codec_channels},
                  {"path", c.codec_path}};
    j["data"] = {{"manifest", c.manifest}, {"registry", c.registry}, {"split", c.split}};
    j["adam"] = {{"learning_rate", c.adam.learning_rate},
                 {"beta1", c.adam.beta1},
                 {"beta2", c.adam.beta2},
                 {"epsilon", c.adam.epsilon}};
    j["checkpoint"] = {{"every", c.checkpoint_every}, {"out", c.checkpoint_out}, {"resume_from", c.resume_from}};
    j["log_csv"] = c.log_csv;
    return j;
}

// Reads known keys from an object and rejects everything else.
class Reader {
public:
    Reader(const ordered_json& obj, std::string where) : obj_(obj), where_(std::move(where)) {
        if (!obj_.is_object()) {
            throw ConfigError(where_ + ": expected an object");
        }
    }

    template <typename T>
    void get(const char* key, T& dst) {
        seen_.insert(key);
        const auto it = obj_.find(key);
        if (it == obj_.end()) {
            return;
        }
        try {
            dst = it->template get<T>();
        } catch (const ordered_json::exception& e) {
            throw ConfigError(path(key) + ": " + e.what());
        }
    }

    Reader sub(const char* key) {
        seen_.insert(key);
        const auto it = obj_.find(key);
        static const ordered_json empty = ordered_json::object();
        return Reader(it == obj_.end() ? empty : *it, path(key));
    }

    void finish() const {
        for (const auto& [k, _] : obj_.items()) {
            if (!seen_.contains(k)) {
                throw ConfigError("unknown config key " + path(k.c_str()));
            }
        }
    }

private:
    std::string path(const char* key) const { return where_.empty() ? key : where_ + "." + key; }

    const ordered_json& obj_;
    std::string where_;
    std::set<std::string> seen_;
};

TrainConfig from_json_doc(const ordered_json& j) {
    TrainConfig c;
    Reader r(j, "");
    r.get("seed", c.seed);
    r.get("steps", c.steps);
    r.get("batch_size", c.batch_size);
    r.get("threads", c.threads);
    r.get("log_csv", c.log_csv);
    r.get("score_anchor", c.score_anchor);
    r.get("cycle_max_timestep", c.cycle_max_timestep);
    {
        Reader s = r.sub("schedule");
        s.get("steps", c.schedule_steps);
        s.get("beta_start", c.beta_start);
        s.get("beta_end", c.beta_end);
        s.finish();
    }
    {
        Reader w = r.sub("weights");
        double f = c.weights.full(), z = c.weights.zone(), cy = c.weights.cycle(), sc = c.weights.score();
        w.get("full", f);
        w.get("zone", z);
        w.get("cycle", cy);
        w.get("score", sc);
        w.finish();
        try {
            c.weights = LossWeights(f, z, cy, sc);
        } catch (const ValidationError& e) {
            throw ConfigError(std::string("weights: ") + e.what());
        }
    }
    {
        Reader d = r.sub("denoiser");
        d.get("latent_channels", c.denoiser.latent_channels);
        d.get("width", c.denoiser.width);
        d.get("pos_freqs", c.denoiser.pos_freqs);
        d.get("time_dim", c.denoiser.time_dim);
        d.get("emb_dim", c.denoiser.emb_dim);
        d.get("text_dim", c.denoiser.text_dim);
        d.finish();
    }
    {
        Reader s = r.sub("scorenet");
        s.get("latent_channels", c.scorenet.latent_channels);
        s.get("width", c.scorenet.width);
        s.finish();
    }
    {
        Reader t = r.sub("text");
        t.get("dim", c.text.dim);
        t.get("max_tokens", c.text.max_tokens);
        t.finish();
    }
    {
        Reader k = r.sub("codec");
        k.get("kind", c.codec_kind);
        k.get("factor", c.codec_factor);
        k.get("channels", c.codec_channels);
        k.get("path", c.codec_path);
        k.finish();
    }
    {
        Reader d = r.sub("data");
        d.get("manifest", c.manifest);
        d.get("registry", c.registry);
        d.get("split", c.split);
        d.finish();
    }
    {
        Reader a = r.sub("adam");
        a.get("learning_rate", c.adam.learning_rate);
        a.get("beta1", c.adam.beta1);
        a.get("beta2", c.adam.beta2);
        a.get("epsilon", c.adam.epsilon);
        a.finish();
    }
    {
        Reader k = r.sub("checkpoint");
        k.get("every", c.checkpoint_every);
        k.get("out", c.checkpoint_out);
        k.get("resume_from", c.resume_from);
        k.finish();
    }
    r.finish();

    if (c.steps < 0 || c.batch_size < 1 || c.checkpoint_every < 0 || c.threads < 0) {
        throw ConfigError("steps, checkpoint.every and threads must be >= 0 and batch_size >= 1");
    }
    if (c.codec_kind != "patch" && c.codec_kind != "identity") {
        throw ConfigError("codec.kind must be \"patch\" or \"identity\", got \"" + c.codec_kind + "\"");
    }
    if (!(c.score_anchor >= 0.0) || !std::isfinite(c.score_anchor)) {
        throw ConfigError("score_anchor must be a finite non-negative number");
    }
    if (c.cycle_max_timestep < 0 || c.cycle_max_timestep > c.schedule_steps) {
        throw ConfigError("cycle_max_timestep must lie in [0, schedule.steps]");
    }
    if (!(c.adam.learning_rate > 0.0)) {
        throw ConfigError("adam.learning_rate must be positive");
    }
    return c;
}

}  // namespace

std::string train_config_to_json(const TrainConfig& cfg) { return to_json_doc(cfg).dump(2); }

TrainConfig train_config_from_json(const std::string& text) {
    ordered_json j;
    try {
        j = ordered_json::parse(text);
    } catch (const ordered_json::parse_error& e) {
        throw ConfigError(std::string("config is not valid JSON: ") + e.what());
    }
    return from_json_doc(j);
}

TrainConfig apply_overrides(const TrainConfig& cfg, const std::vector<std::string>& overrides) {
    ordered_json j = to_json_doc(cfg);
    for (const auto& ov : overrides) {
        const auto eq = ov.find('=');
        if (eq == std::string::npos || eq == 0) {
            throw ConfigError("override \"" + ov + "\" is not of the form key=value");
        }
        const std::string key = ov.substr(0, eq);
        const std::string raw = ov.substr(eq + 1);
        ordered_json* node = &j;
        std::size_t start = 0;
        while (true) {
            const auto dot = key.find('.', start);
            const std::string part = key.substr(start, dot == std::string::npos ? std::string::npos : dot - start);
            if (!node->is_object() || !node->contains(part)) {
                throw ConfigError("unknown config key " + key);
            }
            node = &(*node)[part];
            if (dot == std::string::npos) {
                break;
            }
            start = dot + 1;
        }
        if (node->is_object()) {
            throw ConfigError("config key " + key + " is a section, not a value");
        }
        if (node->is_string()) {
            *node = raw;
        } else {
            try {
                *node = ordered_json::parse(raw);
            } catch (const ordered_json::parse_error&) {
                throw ConfigError("override " + key + ": cannot parse value \"" + raw + "\"");
            }
        }
    }
    return from_json_doc(j);
}

// --- driver --------------------------------------------------------------------

void append_loss_csv(const std::string& path, const LossRecord& record) {
    namespace fs = std::filesystem;
    std::error_code ec;
    const bool fresh = !fs::exists(path, ec) || fs::file_size(path, ec) == 0;
    std::ofstream out(path, std::ios::app);
    if (!out) {
        throw IoError(path, "cannot open loss log");
    }
    if (fresh) {
        out << "step,l_full,l_zone,l_cycle,l_score,total\n";
    }
    char buf[64];
    out << record.step;
    for (double c : record.components) {
        out << ',';
        if (!std::isnan(c)) {
            std::snprintf(buf, sizeof(buf), "%.17g", c);
            out << buf;
        }
    }
    std::snprintf(buf, sizeof(buf), "%.17g", record.total);
    out << ',' << buf << '\n';
    if (!out) {
        throw IoError(path, "loss log write failed");
    }
}

std::vector<Tensor> load_crops(const std::string& manifest_path, const std::vector<ManifestRecord>& records) {
    std::vector<Tensor> out;
    out.reserve(records.size());
    for (const auto& r : records) {
        out.push_back(read_png(resolve_image_path(manifest_path, r)));
        if (out.back().shape() != out.front().shape()) {
            throw ShapeError("crop " + r.image_path + " has shape " + out.back().shape_string() +
                             ", expected " + out.front().shape_string());
        }
    }
    return out;
}

std::vector<TrainingExample> make_examples(const std::vector<ManifestRecord>& records,
                                           const std::vector<Tensor>& crops, const Codec& codec,
                                           const ZoneRegistry& registry) {
    if (records.size() != crops.size()) {
        throw ShapeError("make_examples: record and crop counts differ");
    }
    std::vector<TrainingExample> out;
    out.reserve(records.size());
    for (std::size_t i = 0; i < records.size(); ++i) {
        const auto& r = records[i];
        registry.at(r.zone_id);
        out.push_back({codec.encode(crops[i]), r.zone_id, r.ethnicity,
                       AgingScore{r.zone_id, r.raw_score, r.normalized()}});
    }
    return out;
}

TrainResult train(const TrainConfig& config, const StepCallback& on_step) {
    const ZoneRegistry registry =
        config.registry.empty() ? default_zone_registry() : load_zone_registry(config.registry);
    if (config.manifest.empty()) {
        throw ConfigError("data.manifest is required");
    }
    const auto records = filter_split(load_manifest(config.manifest), split_from_string(config.split));
    if (records.empty()) {
        throw ConfigError("no training records in split \"" + config.split + "\" of " + config.manifest);
    }
    const auto crops = load_crops(config.manifest, records);

    std::optional<Checkpoint> resumed;
    if (!config.resume_from.empty()) {
        resumed = load_checkpoint(config.resume_from);
    }

    std::unique_ptr<Codec> codec;
    if (resumed) {
        codec = std::move(resumed->codec);
    } else if (!config.codec_path.empty()) {
        codec = load_codec(config.codec_path);
    } else if (config.codec_kind == "identity") {
        codec = std::make_unique<IdentityCodec>();
    } else {
        codec = std::make_unique<PatchCodec>(PatchCodec::fit(crops, config.codec_factor, config.codec_channels));
    }

    TrainState state = resumed ? std::move(resumed->state)
                               : make_train_state(config.denoiser, config.scorenet,
                                                  make_schedule(config.schedule_steps, config.beta_start,
                                                                config.beta_end),
                                                  config.adam, config.seed);
    const TextEncoderConfig text_cfg = resumed ? resumed->text : config.text;
    if (codec->latent_channels() != state.denoiser_config.latent_channels ||
        codec->latent_channels() != state.scorenet_config.latent_channels) {
        throw ConfigError("codec produces " + std::to_string(codec->latent_channels()) +
                          " latent channels but the networks expect " +
                          std::to_string(state.denoiser_config.latent_channels));
    }
    if (text_cfg.dim != state.denoiser_config.text_dim) {
        throw ConfigError("text.dim must equal denoiser.text_dim");
    }

    const auto examples = make_examples(records, crops, *codec, registry);
    const HashingTextEncoder text(text_cfg.dim, text_cfg.max_tokens);
    const FrozenModels frozen{text, registry};
    const StepOptions options{config.threads, config.score_anchor, config.cycle_max_timestep};
    const int n = static_cast<int>(examples.size());

    std::vector<TrainingExample> batch(static_cast<std::size_t>(config.batch_size));
    while (state.step < static_cast<std::uint64_t>(config.steps)) {
        Rng pick = derive_rng(state.seed, {state.step, 0xba7c});
        for (auto& b : batch) {
            b = examples[static_cast<std::size_t>(uniform_int(pick, 0, n - 1))];
        }
        const LossRecord rec = train_step(state, batch, config.weights, frozen, options);
        if (!config.log_csv.empty()) {
            append_loss_csv(config.log_csv, rec);
        }
        if (on_step) {
            on_step(rec);
        }
        if (config.checkpoint_every > 0 && state.step % static_cast<std::uint64_t>(config.checkpoint_every) == 0 &&
            !config.checkpoint_out.empty()) {
            save_checkpoint(config.checkpoint_out, state, *codec, text_cfg);
        }
    }
    if (!config.checkpoint_out.empty()) {
        save_checkpoint(config.checkpoint_out, state, *codec, text_cfg);
    }
    return {std::move(state), std::move(codec)};
}

}  // namespace ldla
