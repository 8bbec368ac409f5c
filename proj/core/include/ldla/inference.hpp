// Copyright (C) 2026 The ldla Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include "ldla/atlas.hpp"
#include "ldla/codec.hpp"
#include "ldla/diffusion.hpp"
#include "ldla/geometry.hpp"
#include "ldla/networks.hpp"
#include "ldla/text_encoder.hpp"

#include <cstdint>
#include <memory>
#include <optional>
#include <string>
#include <vector>

namespace ldla {

struct InferenceParams {
    double gamma_n = 0.2;  // noise strength
    int gamma_inf = 40;    // denoising grid size
    double gamma_g = 0.8;  // guidance scale
    std::uint64_t seed = 0;

    // Throws ValidationError naming the offending field.
    void validate() const;
};

struct ZoneTarget {
    std::string zone_id;
    double target_normalized = 0.0;
};

inline constexpr const char* kRefinerPrompt = "Utra realistic image of a human face";
inline constexpr double kDefaultRefinerStrength = 0.05;

/// Whole-face post-pass that smooths seams between blended crops.
class Refiner {
public:
    virtual ~Refiner() = default;
    virtual Tensor refine(const Tensor& face, double strength) const = 0;
};

class IdentityRefiner final : public Refiner {
public:
    Tensor refine(const Tensor& face, double) const override { return face; }
};

/// Low-strength image-to-image pass over the whole face with the fixed
/// refiner prompt. Strength 0 reduces to a codec round trip.
class Img2ImgRefiner final : public Refiner {
public:
    Img2ImgRefiner(std::shared_ptr<const Codec> codec, NoisePredictor predictor, std::shared_ptr<const TextEncoder> text,
                   NoiseSchedule schedule, int gamma_inf = 40, double guidance = 0.8, std::uint64_t seed = 0);
    Tensor refine(const Tensor& face, double strength) const override;

    const std::string& prompt() const noexcept { return prompt_; }

private:
    std::shared_ptr<const Codec> codec_;
    NoisePredictor predictor_;
    std::shared_ptr<const TextEncoder> text_;
    NoiseSchedule schedule_;
    int gamma_inf_;
    double guidance_;
    std::uint64_t seed_;
    std::string prompt_ = kRefinerPrompt;
};

/// Frozen models shared by every inference call. Immutable after construction.
struct InferenceModels {
    std::shared_ptr<const Codec> codec;
    std::shared_ptr<const TextEncoder> text;
    NoisePredictor predictor;
    NoiseSchedule schedule;
    std::shared_ptr<const Refiner> refiner = std::make_shared<IdentityRefiner>();
    int crop_size = 128;
    std::uint64_t fingerprint = 0;  // identifies the loaded weights
};

/// Loads codec, denoiser weights, and schedule from a training checkpoint.
/// The refiner is left as the identity.
InferenceModels load_inference_models(const std::string& checkpoint_path);

// Predictor running a DenoiserNet with fixed weights.
NoisePredictor make_network_predictor(const DenoiserConfig& config, ParamSet params);

/// Encode, partially diffuse to the first active timestep, guided denoise
/// toward the target prompt, decode, clamp to [0,1]. noise_key selects the
/// independent noise stream for this crop under params.seed.
Tensor translate_crop(const Tensor& crop, const ZoneSpec& zone, std::string_view ethnicity, double target_normalized,
                      const InferenceParams& params, const InferenceModels& models, std::uint64_t noise_key = 0);

/// Ages each targeted zone in registry order and feathers it back into the
/// face. Targets are validated before any work; zones without a target are
/// untouched and an empty target list returns the input unchanged.
Tensor age_face(const Tensor& face, const std::vector<ZoneTarget>& targets, std::string_view ethnicity,
                const InferenceParams& params, const InferenceModels& models, const ZoneRegistry& registry,
                const std::optional<Landmarks>& landmarks = std::nullopt);

Tensor refine_face(const Tensor& face, const Refiner& refiner, double strength = kDefaultRefinerStrength);

// Throws ValidationError listing valid ids for unknown zones, duplicates, or out-of-range targets.
void validate_targets(const std::vector<ZoneTarget>& targets, const ZoneRegistry& registry);

// Every registry zone at the same normalized target.
std::vector<ZoneTarget> uniform_targets(const ZoneRegistry& registry, double target_normalized);

}  // namespace ldla
