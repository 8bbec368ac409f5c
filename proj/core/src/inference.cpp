// Copyright (C) 2026 The ldla Authors
// SPDX-License-Identifier: Apache-2.0

#include "ldla/inference.hpp"

#include "ldla/errors.hpp"
#include "ldla/random.hpp"
#include "ldla/training.hpp"

#include <algorithm>
#include <cmath>
#include <set>
#include <sstream>

namespace ldla {

namespace {

Tensor clamp01(Tensor t) {
    for (double& v : t.values()) {
        v = std::clamp(v, 0.0, 1.0);
    }
    return t;
}

}  // namespace

void InferenceParams::validate() const {
    if (!(gamma_n > 0.0 && gamma_n <= 1.0)) {
        throw ValidationError("gamma_n must lie in (0, 1]");
    }
    if (gamma_inf < 1) {
        throw ValidationError("gamma_inf must be a positive integer");
    }
    if (!(gamma_g >= 0.0) || !std::isfinite(gamma_g)) {
        throw ValidationError("gamma_g must be a finite value >= 0");
    }
}

Img2ImgRefiner::Img2ImgRefiner(std::shared_ptr<const Codec> codec, NoisePredictor predictor,
                               std::shared_ptr<const TextEncoder> text, NoiseSchedule schedule, int gamma_inf,
                               double guidance, std::uint64_t seed)
    : codec_(std::move(codec)),
      predictor_(std::move(predictor)),
      text_(std::move(text)),
      schedule_(std::move(schedule)),
      gamma_inf_(gamma_inf),
      guidance_(guidance),
      seed_(seed) {}

Tensor Img2ImgRefiner::refine(const Tensor& face, double strength) const {
    if (!(strength >= 0.0 && strength <= 1.0)) {
        throw ValidationError("refiner strength must lie in [0, 1]");
    }
    const Tensor z0 = codec_->encode(face);
    if (strength == 0.0) {
        return clamp01(codec_->decode(z0));
    }
    const TimestepPlan plan = plan_timesteps(gamma_inf_, strength, schedule_);
    Rng rng = derive_rng(seed_, {0x4ef1});
    const Tensor eps = gaussian_like(z0.shape(), rng);
    const Tensor z_start = forward_diffuse(z0, plan.active.front(), eps, schedule_);
    const Tensor z = denoise(z_start, plan, text_->embed(prompt_), text_->embed(""), guidance_, predictor_, schedule_);
    return clamp01(codec_->decode(z));
}

NoisePredictor make_network_predictor(const DenoiserConfig& config, ParamSet params) {
    auto net = std::make_shared<const DenoiserNet>(config);
    auto weights = std::make_shared<const ParamSet>(std::move(params));
    return [net, weights](const LatentGrid& zt, int t, const ConditionEmbedding& cond) {
        return net->predict(*weights, zt, t, cond);
    };
}

InferenceModels load_inference_models(const std::string& checkpoint_path) {
    Checkpoint ck = load_checkpoint(checkpoint_path);
    InferenceModels m;
    m.fingerprint = ck.state.denoiser.checksum() ^ (ck.codec->checksum() * 0x9e3779b97f4a7c15ULL);
    m.codec = std::shared_ptr<const Codec>(std::move(ck.codec));
    m.text = std::make_shared<HashingTextEncoder>(ck.text.dim, ck.text.max_tokens);
    m.schedule = ck.state.schedule;
    m.predictor = make_network_predictor(ck.state.denoiser_config, std::move(ck.state.denoiser));
    return m;
}

Tensor translate_crop(const Tensor& crop, const ZoneSpec& zone, std::string_view ethnicity, double target_normalized,
                      const InferenceParams& params, const InferenceModels& models, std::uint64_t noise_key) {
    const int n = models.crop_size;
    if (crop.rank() != 3 || crop.channels() != 3 || crop.height() != n || crop.width() != n) {
        throw ShapeError("translate_crop: expected a (3," + std::to_string(n) + "," + std::to_string(n) +
                         ") crop, got " + crop.shape_string());
    }
    if (!(target_normalized >= 0.0 && target_normalized <= 1.0)) {
        throw DomainError("translate_crop: target outside [0,1]");
    }
    params.validate();
    const TimestepPlan plan = plan_timesteps(params.gamma_inf, params.gamma_n, models.schedule);

    const Tensor z0 = models.codec->encode(crop);
    Rng rng = derive_rng(params.seed, {0x7c, noise_key});
    const Tensor eps = gaussian_like(z0.shape(), rng);
    const Tensor z_start = forward_diffuse(z0, plan.active.front(), eps, models.schedule);

    const ConditionEmbedding cond = models.text->embed(build_full_prompt(zone, ethnicity, target_normalized));
    const ConditionEmbedding uncond = models.text->embed("");
    const Tensor z = denoise(z_start, plan, cond, uncond, params.gamma_g, models.predictor, models.schedule);
    return clamp01(models.codec->decode(z));
}

void validate_targets(const std::vector<ZoneTarget>& targets, const ZoneRegistry& registry) {
    std::set<std::string> seen;
    for (const auto& t : targets) {
        if (!registry.find(t.zone_id)) {
            throw ValidationError("unknown zone \"" + t.zone_id + "\"; valid zones: " + registry.ids_joined());
        }
        if (!seen.insert(t.zone_id).second) {
            throw ValidationError("zone \"" + t.zone_id + "\" targeted more than once");
        }
        if (!(t.target_normalized >= 0.0 && t.target_normalized <= 1.0)) {
            std::ostringstream os;
            os << "target for zone \"" << t.zone_id << "\" is " << t.target_normalized << ", outside [0, 1]";
            throw ValidationError(os.str());
        }
    }
}

Tensor age_face(const Tensor& face, const std::vector<ZoneTarget>& targets, std::string_view ethnicity,
                const InferenceParams& params, const InferenceModels& models, const ZoneRegistry& registry,
                const std::optional<Landmarks>& landmarks) {
    if (face.rank() != 3 || face.channels() != 3) {
        throw ShapeError("age_face: expected a (3,H,W) face, got " + face.shape_string());
    }
    validate_targets(targets, registry);
    if (targets.empty()) {
        return face;
    }
    params.validate();

    std::vector<ZoneTarget> ordered = targets;
    std::sort(ordered.begin(), ordered.end(), [&](const ZoneTarget& a, const ZoneTarget& b) {
        return *registry.index_of(a.zone_id) < *registry.index_of(b.zone_id);
    });

    Tensor out = face;
    for (const auto& t : ordered) {
        const ZoneSpec& zone = registry.at(t.zone_id);
        const std::size_t idx = *registry.index_of(t.zone_id);
        const CropRegion region = locate_zone(face.width(), face.height(), zone, landmarks, models.crop_size);
        const Tensor crop = extract_crop(out, region, models.crop_size);
        const Tensor aged = translate_crop(crop, zone, ethnicity, t.target_normalized, params, models, idx);
        const Tensor back = resize_bilinear(aged, region.rect.width(), region.rect.height());
        out = blend_crop(out, region, back, feather_mask(region));
    }
    return out;
}

Tensor refine_face(const Tensor& face, const Refiner& refiner, double strength) {
    return refiner.refine(face, strength);
}

std::vector<ZoneTarget> uniform_targets(const ZoneRegistry& registry, double target_normalized) {
    std::vector<ZoneTarget> out;
    for (const auto& z : registry.zones()) {
        out.push_back({z.zone_id, target_normalized});
    }
    return out;
}

}  // namespace ldla
