// Copyright (C) 2026 The ldla Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include "ldla/atlas.hpp"
#include "ldla/autodiff.hpp"
#include "ldla/codec.hpp"
#include "ldla/data.hpp"
#include "ldla/diffusion.hpp"
#include "ldla/errors.hpp"
#include "ldla/networks.hpp"
#include "ldla/random.hpp"
#include "ldla/text_encoder.hpp"

#include <array>
#include <cstdint>
#include <iosfwd>
#include <limits>
#include <memory>
#include <span>
#include <string>
#include <vector>

namespace ldla {

struct TrainingExample {
    LatentGrid crop_latent;
    std::string zone_id;
    std::string ethnicity;
    AgingScore source_score;
};

enum class LossTerm : int { full = 0, zone = 1, cycle = 2, score = 3 };
inline constexpr std::array<const char*, 4> kLossTermNames = {"l_full", "l_zone", "l_cycle", "l_score"};

/// Non-negative weights of the four loss terms; at least one must be positive.
class LossWeights {
public:
    LossWeights() : LossWeights(1.0, 0.5, 1.0, 0.1) {}
    LossWeights(double full, double zone, double cycle, double score);

    double full() const noexcept { return w_[0]; }
    double zone() const noexcept { return w_[1]; }
    double cycle() const noexcept { return w_[2]; }
    double score() const noexcept { return w_[3]; }
    double operator[](LossTerm t) const noexcept { return w_[static_cast<std::size_t>(t)]; }
    bool active(LossTerm t) const noexcept { return (*this)[t] > 0.0; }
    int active_count() const noexcept;

    LossWeights scaled(double k) const { return {w_[0] * k, w_[1] * k, w_[2] * k, w_[3] * k}; }

private:
    std::array<double, 4> w_;
};

struct AdamConfig {
    double learning_rate = 1e-4;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double epsilon = 1e-8;
    friend bool operator==(const AdamConfig&, const AdamConfig&) = default;
};

struct AdamState {
    std::vector<Tensor> m;
    std::vector<Tensor> v;
    std::uint64_t steps = 0;
    friend bool operator==(const AdamState&, const AdamState&) = default;
};

// One Adam update; grads must match params one-to-one.
void adam_update(ParamSet& params, AdamState& state, const std::vector<Tensor>& grads, const AdamConfig& cfg);

/// Per-step loss values. Terms with zero weight are not computed and hold NaN.
struct LossRecord {
    std::uint64_t step = 0;
    std::array<double, 4> components{};
    double total = 0.0;
    // ScoreNet anchor term (see StepOptions); NaN when off. Not part of total
    // and not stored in checkpoints.
    double score_anchor = std::numeric_limits<double>::quiet_NaN();

    bool active(LossTerm t) const;
    int active_count() const;
};

struct TrainState {
    DenoiserConfig denoiser_config;
    ScoreNetConfig scorenet_config;
    ParamSet denoiser;
    ParamSet scorenet;
    AdamConfig adam;
    AdamState denoiser_opt;
    AdamState scorenet_opt;
    std::uint64_t step = 0;
    std::uint64_t seed = 0;
    NoiseSchedule schedule;
    std::vector<LossRecord> history;
};

TrainState make_train_state(const DenoiserConfig& denoiser, const ScoreNetConfig& scorenet,
                            const NoiseSchedule& schedule, const AdamConfig& adam, std::uint64_t seed);

/// Noise predictor usable inside a loss graph.
class DifferentiableDenoiser {
public:
    virtual ~DifferentiableDenoiser() = default;
    virtual ad::Var predict(ad::Graph& g, ad::Var zt, int t, const ConditionEmbedding& cond) = 0;
};

class DifferentiableScorer {
public:
    virtual ~DifferentiableScorer() = default;
    virtual ad::Var predict(ad::Graph& g, ad::Var z) = 0;
};

class NetworkDenoiser final : public DifferentiableDenoiser {
public:
    NetworkDenoiser(const DenoiserNet& net, const ParamSet& params, ad::Graph& g, bool trainable);
    ad::Var predict(ad::Graph& g, ad::Var zt, int t, const ConditionEmbedding& cond) override;
    const BoundParams& bound() const noexcept { return bound_; }
    int calls() const noexcept { return calls_; }

private:
    const DenoiserNet& net_;
    BoundParams bound_;
    int calls_ = 0;
};

class NetworkScorer final : public DifferentiableScorer {
public:
    NetworkScorer(const ScoreNet& net, const ParamSet& params, ad::Graph& g, bool trainable);
    ad::Var predict(ad::Graph& g, ad::Var z) override;
    const BoundParams& bound() const noexcept { return bound_; }

private:
    const ScoreNet& net_;
    BoundParams bound_;
};

/// Everything a loss evaluation reads. Codec and text encoder are frozen.
struct LossContext {
    ad::Graph& graph;
    DifferentiableDenoiser& denoiser;
    DifferentiableScorer& scorer;
    const NoiseSchedule& schedule;
    const TextEncoder& text;
    const ZoneRegistry& registry;
    // Cycle timesteps are drawn from [0, cycle_max_timestep); 0 means the whole schedule.
    int cycle_max_timestep = 0;
};

std::string full_prompt_for(const ZoneRegistry& registry, const TrainingExample& example);

ad::Var loss_full(LossContext& ctx, const TrainingExample& example, ad::Var z0, int t, const Tensor& eps);
ad::Var loss_zone(LossContext& ctx, const TrainingExample& example, ad::Var z0, int t, const Tensor& eps);

struct CycleResult {
    ad::Var z_tilde;  // one-step estimate after translating toward the target prompt
    ad::Var z_bar;    // one-step estimate after translating back toward the source prompt
    ad::Var l_cycle;
};

// Both passes share timestep t; eps1 and eps2 are the forward noises of the two passes.
CycleResult cycle_block(LossContext& ctx, const TrainingExample& example, ad::Var z0, const PromptBundle& target,
                        int t, const Tensor& eps1, const Tensor& eps2);
CycleResult cycle_block(LossContext& ctx, const TrainingExample& example, ad::Var z0, const PromptBundle& target,
                        int t, Rng& rng);

ad::Var loss_score(LossContext& ctx, ad::Var z_tilde, double target_normalized);

/// Random streams for one example at one step. The shared stream feeds the
/// (t, eps) pair of the full and zone terms; the cycle stream feeds the
/// target, timestep, and both noises of the cycle block. Separate streams
/// keep the shared draws identical whatever the cycle weights are.
struct ExampleStreams {
    Rng shared;
    Rng cycle;
    static ExampleStreams derive(std::uint64_t seed, std::uint64_t step, std::uint64_t example_index);
};

struct CombinedLoss {
    ad::Var total;
    std::array<double, 4> components{};  // NaN for inactive terms
};

CombinedLoss combined_loss(LossContext& ctx, const TrainingExample& example, const LossWeights& weights,
                           ExampleStreams& streams);

/// Frozen collaborators of a training run.
struct FrozenModels {
    const TextEncoder& text;
    const ZoneRegistry& registry;
};

class TrainingAborted : public NumericError {
public:
    TrainingAborted(const std::string& what, LossRecord record) : NumericError(what), record_(record) {}
    const LossRecord& record() const noexcept { return record_; }

private:
    LossRecord record_;
};

struct StepOptions {
    int threads = 0;  // 0: hardware concurrency
    // Weight of an extra ScoreNet-only regression of the source score from the
    // clean latent, applied while the score term is active. It gives the
    // ScoreNet labelled data from step one; the four loss terms and the
    // denoiser gradient are unaffected. 0 disables it.
    double score_anchor = 0.0;
    int cycle_max_timestep = 0;  // see LossContext
};

/// One optimizer step on the batch-mean combined loss. The ScoreNet is only
/// updated when the score term is active.
LossRecord train_step(TrainState& state, std::span<const TrainingExample> batch, const LossWeights& weights,
                      const FrozenModels& frozen, const StepOptions& options = {});

// Batch-mean loss without updating anything; same sampling as train_step at state.step.
LossRecord evaluate_step_loss(const TrainState& state, std::span<const TrainingExample> batch,
                              const LossWeights& weights, const FrozenModels& frozen, const StepOptions& options = {});

/// Offline measurements on held-out examples with a fixed seed. Cycle
/// timesteps are drawn from [0, max_timestep), the whole schedule when 0.
double cycle_reconstruction_error(const TrainState& state, std::span<const TrainingExample> examples,
                                  const FrozenModels& frozen, std::uint64_t seed, int max_timestep = 0);

struct ScoreEvaluation {
    double mae_clean = 0.0;      // ScoreNet on clean latents vs ground-truth scores
    double mae_translated = 0.0; // ScoreNet on first-pass cycle estimates vs sampled targets
};
ScoreEvaluation evaluate_scorenet(const TrainState& state, std::span<const TrainingExample> examples,
                                  const FrozenModels& frozen, std::uint64_t seed, int max_timestep = 0);

// --- checkpoints -----------------------------------------------------------

inline constexpr std::uint32_t kCheckpointVersion = 1;

struct TextEncoderConfig {
    int dim = 16;
    int max_tokens = 24;
    friend bool operator==(const TextEncoderConfig&, const TextEncoderConfig&) = default;
};

struct Checkpoint {
    TrainState state;
    std::unique_ptr<Codec> codec;
    TextEncoderConfig text;
};

void write_checkpoint(std::ostream& out, const TrainState& state, const Codec& codec, const TextEncoderConfig& text);
Checkpoint read_checkpoint(std::istream& in);
void save_checkpoint(const std::string& path, const TrainState& state, const Codec& codec,
                     const TextEncoderConfig& text);
Checkpoint load_checkpoint(const std::string& path);

// --- training driver --------------------------------------------------------

struct TrainConfig {
    int schedule_steps = kDefaultSteps;
    double beta_start = kDefaultBetaStart;
    double beta_end = kDefaultBetaEnd;
    LossWeights weights;
    DenoiserConfig denoiser;
    ScoreNetConfig scorenet;
    TextEncoderConfig text;
    std::string codec_kind = "patch";
    int codec_factor = 4;
    int codec_channels = 4;
    std::string codec_path;  // pre-fitted codec; fitted on the training crops when empty
    std::string manifest;
    std::string registry;  // default registry when empty
    std::string split = "train";
    std::uint64_t seed = 0;
    int steps = 1000;
    int batch_size = 8;
    double score_anchor = 1.0;
    // Upper bound on the cycle timestep. The default matches the default
    // inference strength (0.2 of a 1000-step schedule), where translation
    // actually happens; 0 uses the whole schedule.
    int cycle_max_timestep = 200;
    AdamConfig adam;
    int checkpoint_every = 0;
    std::string checkpoint_out = "ldla.ckpt";
    std::string log_csv;
    std::string resume_from;
    int threads = 0;
};

// JSON (de)serialization. Unknown keys raise ConfigError.
std::string train_config_to_json(const TrainConfig& cfg);
TrainConfig train_config_from_json(const std::string& text);
// Applies "dotted.key=value" overrides to a JSON document of the config.
TrainConfig apply_overrides(const TrainConfig& cfg, const std::vector<std::string>& overrides);

struct TrainResult {
    TrainState state;
    std::unique_ptr<Codec> codec;
};

using StepCallback = std::function<void(const LossRecord&)>;
TrainResult train(const TrainConfig& config, const StepCallback& on_step = {});

void append_loss_csv(const std::string& path, const LossRecord& record);

// Reads the PNG of every record, resolved against the manifest's directory.
std::vector<Tensor> load_crops(const std::string& manifest_path, const std::vector<ManifestRecord>& records);
std::vector<TrainingExample> make_examples(const std::vector<ManifestRecord>& records,
                                           const std::vector<Tensor>& crops, const Codec& codec,
                                           const ZoneRegistry& registry);

}  // namespace ldla
