// Copyright (C) 2026 The ldla Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include "ldla/atlas.hpp"
#include "ldla/data.hpp"
#include "ldla/inference.hpp"
#include "ldla/tensor.hpp"

#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

namespace ldla {

/// Gaussian summary of a feature population. sigma is row-major (dim x dim).
struct FeatureStats {
    std::vector<double> mu;
    std::vector<double> sigma;
    std::size_t n = 0;

    int dim() const noexcept { return static_cast<int>(mu.size()); }
    double cov(int i, int j) const { return sigma[static_cast<std::size_t>(i) * mu.size() + j]; }
};

/// Streaming mean/covariance. Shards can be merged in any order.
class StatsAccumulator {
public:
    explicit StatsAccumulator(int dim);

    void add(std::span<const double> feature);
    void merge(const StatsAccumulator& other);
    std::size_t count() const noexcept { return n_; }
    // Unbiased covariance; throws DomainError when fewer than two samples were added.
    FeatureStats finalize() const;

private:
    int dim_;
    std::size_t n_ = 0;
    std::vector<double> mean_;
    std::vector<double> m2_;  // co-moment sums
};

using FeatureExtractor = std::function<std::vector<double>(const Tensor&)>;

/// Desk-scale extractor: per-channel averages over a grid x grid partition
/// plus per-channel standard deviation. A pretrained network can be plugged
/// in through the same signature.
FeatureExtractor pooled_feature_extractor(int grid = 4);

FeatureStats compute_stats(std::span<const Tensor> images, const FeatureExtractor& extractor);
FeatureStats stats_from_features(const std::vector<std::vector<double>>& features);

/// |mu_a - mu_b|^2 + tr(S_a + S_b - 2 (S_a S_b)^(1/2)), with eigenvalues down
/// to -1e-6 clamped to zero and anything lower raised as NumericError.
double frechet_distance(const FeatureStats& a, const FeatureStats& b);

double mae_scores(std::span<const double> predicted, std::span<const double> target);

/// Shuffles with the seed, splits into two halves, and returns their distance.
double split_reference_fid(std::span<const Tensor> images, const FeatureExtractor& extractor, std::uint64_t seed);

// Predicts a normalized score for a crop of a zone.
using CropScorer = std::function<double(const Tensor& crop, const ZoneSpec& zone)>;
CropScorer oracle_scorer();
CropScorer scorenet_scorer(const std::string& checkpoint_path);

struct ZoneEval {
    std::string zone_id;
    std::size_t n_real = 0;
    std::size_t n_generated = 0;
    double fid = 0.0;  // NaN when either side has fewer than two crops
    double mae = 0.0;
};

struct EvalReport {
    double fid = 0.0;
    double mae = 0.0;
    std::vector<ZoneEval> per_zone;
    double reference_fid = -1.0;  // split-half FID of the real set, < 0 when not computed
    std::string config_json = "{}";

    std::string to_json() const;
};

struct EvalOptions {
    int feature_grid = 4;
    bool split_reference = false;
    std::uint64_t seed = 0;
};

/// FID between real and generated crops (overall and per zone) and MAE between
/// the scorer's predictions on generated crops and their recorded target scores.
EvalReport evaluate_manifests(const std::string& real_manifest, const std::string& generated_manifest,
                              const ZoneRegistry& registry, const CropScorer& scorer, const EvalOptions& options);

/// Translates every record to a target drawn from {0, 0.05, ..., 1}, writes the
/// crops under out_dir with a manifest whose raw_score is the target, and
/// returns the manifest path.
std::string translate_manifest(const std::string& manifest, Split split, const InferenceModels& models,
                               const ZoneRegistry& registry, const InferenceParams& params,
                               const std::string& out_dir, std::size_t max_records = 0);

}  // namespace ldla
