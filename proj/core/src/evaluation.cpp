// Copyright (C) 2026 The ldla Authors
// SPDX-License-Identifier: Apache-2.0

#include "ldla/evaluation.hpp"

#include "ldla/errors.hpp"
#include "ldla/image_io.hpp"
#include "ldla/random.hpp"
#include "ldla/training.hpp"

#include <Eigen/Dense>
#include <json.hpp>

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <limits>
#include <map>

namespace ldla {

namespace {

constexpr double kEigenFloor = -1e-6;

using Mat = Eigen::MatrixXd;

Mat to_matrix(const FeatureStats& s) {
    const int d = s.dim();
    Mat m(d, d);
    for (int i = 0; i < d; ++i) {
        for (int j = 0; j < d; ++j) {
            m(i, j) = s.cov(i, j);
        }
    }
    return m;
}

Eigen::VectorXd clamped_eigenvalues(const Eigen::VectorXd& ev, const char* what) {
    Eigen::VectorXd out = ev;
    for (Eigen::Index i = 0; i < ev.size(); ++i) {
        if (ev(i) < kEigenFloor) {
            throw NumericError(std::string(what) + ": eigenvalue " + std::to_string(ev(i)) +
                               " below tolerance; matrix is not positive semidefinite");
        }
        out(i) = std::max(ev(i), 0.0);
    }
    return out;
}

}  // namespace

StatsAccumulator::StatsAccumulator(int dim)
    : dim_(dim), mean_(static_cast<std::size_t>(dim), 0.0), m2_(static_cast<std::size_t>(dim) * dim, 0.0) {
    if (dim < 1) {
        throw ShapeError("StatsAccumulator: dimension must be positive");
    }
}

void StatsAccumulator::add(std::span<const double> x) {
    if (x.size() != static_cast<std::size_t>(dim_)) {
        throw ShapeError("StatsAccumulator: feature has " + std::to_string(x.size()) + " entries, expected " +
                         std::to_string(dim_));
    }
    ++n_;
    std::vector<double> before(x.size());
    for (std::size_t i = 0; i < x.size(); ++i) {
        before[i] = x[i] - mean_[i];
        mean_[i] += before[i] / static_cast<double>(n_);
    }
    const std::size_t d = x.size();
    for (std::size_t i = 0; i < d; ++i) {
        for (std::size_t j = 0; j < d; ++j) {
            m2_[i * d + j] += before[i] * (x[j] - mean_[j]);
        }
    }
}

void StatsAccumulator::merge(const StatsAccumulator& o) {
    if (o.dim_ != dim_) {
        throw ShapeError("StatsAccumulator: cannot merge different dimensions");
    }
    if (o.n_ == 0) {
        return;
    }
    if (n_ == 0) {
        *this = o;
        return;
    }
    const double na = static_cast<double>(n_), nb = static_cast<double>(o.n_), n = na + nb;
    const std::size_t d = mean_.size();
    std::vector<double> delta(d);
    for (std::size_t i = 0; i < d; ++i) {
        delta[i] = o.mean_[i] - mean_[i];
    }
    for (std::size_t i = 0; i < d; ++i) {
        for (std::size_t j = 0; j < d; ++j) {
            m2_[i * d + j] += o.m2_[i * d + j] + delta[i] * delta[j] * na * nb / n;
        }
    }
    for (std::size_t i = 0; i < d; ++i) {
        mean_[i] += delta[i] * nb / n;
    }
    n_ += o.n_;
}

FeatureStats StatsAccumulator::finalize() const {
    if (n_ < 2) {
        throw DomainError("feature statistics need at least two samples, got " + std::to_string(n_));
    }
    FeatureStats s;
    s.mu = mean_;
    s.n = n_;
    s.sigma.resize(m2_.size());
    const std::size_t d = mean_.size();
    for (std::size_t i = 0; i < d; ++i) {
        for (std::size_t j = 0; j < d; ++j) {
            // Symmetrize so rounding in the co-moment sums cannot break symmetry.
            s.sigma[i * d + j] = 0.5 * (m2_[i * d + j] + m2_[j * d + i]) / static_cast<double>(n_ - 1);
        }
    }
    return s;
}

FeatureExtractor pooled_feature_extractor(int grid) {
    if (grid < 1) {
        throw ConfigError("feature grid must be positive");
    }
    return [grid](const Tensor& img) {
        if (img.rank() != 3 || img.height() < grid || img.width() < grid) {
            throw ShapeError("feature extractor: image " + img.shape_string() + " smaller than the pooling grid");
        }
        const int c = img.channels(), h = img.height(), w = img.width();
        std::vector<double> f;
        f.reserve(static_cast<std::size_t>(c) * (grid * grid + 1));
        for (int ch = 0; ch < c; ++ch) {
            double sum = 0.0, sq = 0.0;
            for (int gy = 0; gy < grid; ++gy) {
                for (int gx = 0; gx < grid; ++gx) {
                    const int y0 = gy * h / grid, y1 = (gy + 1) * h / grid;
                    const int x0 = gx * w / grid, x1 = (gx + 1) * w / grid;
                    double cell = 0.0;
                    for (int y = y0; y < y1; ++y) {
                        for (int x = x0; x < x1; ++x) {
                            cell += img.at(ch, y, x);
                        }
                    }
                    f.push_back(cell / ((y1 - y0) * (x1 - x0)));
                }
            }
            for (int y = 0; y < h; ++y) {
                for (int x = 0; x < w; ++x) {
                    sum += img.at(ch, y, x);
                    sq += img.at(ch, y, x) * img.at(ch, y, x);
                }
            }
            const double m = sum / (h * w);
            f.push_back(std::sqrt(std::max(0.0, sq / (h * w) - m * m)));
        }
        return f;
    };
}

FeatureStats stats_from_features(const std::vector<std::vector<double>>& features) {
    if (features.size() < 2) {
        throw DomainError("feature statistics need at least two samples, got " + std::to_string(features.size()));
    }
    StatsAccumulator acc(static_cast<int>(features.front().size()));
    for (const auto& f : features) {
        acc.add(f);
    }
    return acc.finalize();
}

FeatureStats compute_stats(std::span<const Tensor> images, const FeatureExtractor& extractor) {
    std::vector<std::vector<double>> features;
    features.reserve(images.size());
    for (const auto& img : images) {
        features.push_back(extractor(img));
    }
    return stats_from_features(features);
}

double frechet_distance(const FeatureStats& a, const FeatureStats& b) {
    if (a.dim() != b.dim() || a.sigma.size() != static_cast<std::size_t>(a.dim()) * a.dim() ||
        b.sigma.size() != static_cast<std::size_t>(b.dim()) * b.dim()) {
        throw ShapeError("frechet_distance: dimension mismatch (" + std::to_string(a.dim()) + " vs " +
                         std::to_string(b.dim()) + ")");
    }
    const Mat sa = to_matrix(a);
    const Mat sb = to_matrix(b);

    Eigen::SelfAdjointEigenSolver<Mat> ea(sa);
    if (ea.info() != Eigen::Success) {
        throw NumericError("frechet_distance: eigendecomposition failed");
    }
    const Eigen::VectorXd la = clamped_eigenvalues(ea.eigenvalues(), "frechet_distance");
    const Mat root_a = ea.eigenvectors() * la.cwiseSqrt().asDiagonal() * ea.eigenvectors().transpose();

    // tr((Sa Sb)^(1/2)) equals tr((Sa^(1/2) Sb Sa^(1/2))^(1/2)), and the latter is symmetric.
    Mat inner = root_a * sb * root_a;
    inner = 0.5 * (inner + inner.transpose());
    Eigen::SelfAdjointEigenSolver<Mat> ei(inner, Eigen::EigenvaluesOnly);
    if (ei.info() != Eigen::Success) {
        throw NumericError("frechet_distance: eigendecomposition failed");
    }
    const double tr_cross = clamped_eigenvalues(ei.eigenvalues(), "frechet_distance").cwiseSqrt().sum();

    double dmu = 0.0;
    for (int i = 0; i < a.dim(); ++i) {
        const double d = a.mu[static_cast<std::size_t>(i)] - b.mu[static_cast<std::size_t>(i)];
        dmu += d * d;
    }
    const double d = dmu + sa.trace() + sb.trace() - 2.0 * tr_cross;
    if (!std::isfinite(d)) {
        throw NumericError("frechet_distance: non-finite result");
    }
    return std::max(d, 0.0);
}

double mae_scores(std::span<const double> predicted, std::span<const double> target) {
    if (predicted.size() != target.size()) {
        throw ShapeError("mae_scores: " + std::to_string(predicted.size()) + " predictions for " +
                         std::to_string(target.size()) + " targets");
    }
    if (predicted.empty()) {
        throw DomainError("mae_scores: empty input");
    }
    double s = 0.0;
    for (std::size_t i = 0; i < predicted.size(); ++i) {
        if (!(predicted[i] >= 0.0 && predicted[i] <= 1.0 && target[i] >= 0.0 && target[i] <= 1.0)) {
            throw DomainError("mae_scores: scores must lie in [0,1]");
        }
        s += std::abs(predicted[i] - target[i]);
    }
    return s / static_cast<double>(predicted.size());
}

double split_reference_fid(std::span<const Tensor> images, const FeatureExtractor& extractor, std::uint64_t seed) {
    if (images.size() < 4) {
        throw DomainError("split_reference_fid needs at least 4 images, got " + std::to_string(images.size()));
    }
    std::vector<std::size_t> order(images.size());
    for (std::size_t i = 0; i < order.size(); ++i) {
        order[i] = i;
    }
    Rng rng = derive_rng(seed, {0x5f11});
    for (std::size_t i = order.size() - 1; i > 0; --i) {
        std::swap(order[i], order[static_cast<std::size_t>(uniform_int(rng, 0, static_cast<int>(i)))]);
    }
    const std::size_t half = images.size() / 2;
    std::vector<std::vector<double>> fa, fb;
    for (std::size_t i = 0; i < half; ++i) {
        fa.push_back(extractor(images[order[i]]));
        fb.push_back(extractor(images[order[half + i]]));
    }
    return frechet_distance(stats_from_features(fa), stats_from_features(fb));
}

CropScorer oracle_scorer() {
    return [](const Tensor& crop, const ZoneSpec& zone) { return wrinkle_density_oracle(crop, zone); };
}

CropScorer scorenet_scorer(const std::string& checkpoint_path) {
    auto ck = std::make_shared<Checkpoint>(load_checkpoint(checkpoint_path));
    return [ck](const Tensor& crop, const ZoneSpec&) {
        const ScoreNet net(ck->state.scorenet_config);
        return net.predict(ck->state.scorenet, ck->codec->encode(crop));
    };
}

std::string EvalReport::to_json() const {
    nlohmann::ordered_json j;
    j["fid"] = fid;
    j["mae"] = mae;
    if (reference_fid >= 0.0) {
        j["reference_fid"] = reference_fid;
    }
    j["per_zone"] = nlohmann::ordered_json::array();
    for (const auto& z : per_zone) {
        nlohmann::ordered_json e;
        e["zone_id"] = z.zone_id;
        e["n_real"] = z.n_real;
        e["n_generated"] = z.n_generated;
        e["fid"] = std::isnan(z.fid) ? nlohmann::ordered_json(nullptr) : nlohmann::ordered_json(z.fid);
        e["mae"] = std::isnan(z.mae) ? nlohmann::ordered_json(nullptr) : nlohmann::ordered_json(z.mae);
        j["per_zone"].push_back(e);
    }
    j["config"] = nlohmann::ordered_json::parse(config_json);
    return j.dump(2);
}

EvalReport evaluate_manifests(const std::string& real_manifest, const std::string& generated_manifest,
                              const ZoneRegistry& registry, const CropScorer& scorer, const EvalOptions& options) {
    const auto real = load_manifest(real_manifest);
    const auto gen = load_manifest(generated_manifest);
    if (real.size() < 2 || gen.size() < 2) {
        throw DomainError("evaluation needs at least two real and two generated crops");
    }
    const auto real_crops = load_crops(real_manifest, real);
    const auto gen_crops = load_crops(generated_manifest, gen);
    const FeatureExtractor fx = pooled_feature_extractor(options.feature_grid);

    std::map<std::string, std::vector<std::vector<double>>> real_f, gen_f;
    std::map<std::string, std::pair<std::vector<double>, std::vector<double>>> scores;
    std::vector<std::vector<double>> all_real, all_gen;
    std::vector<double> all_pred, all_tgt;
    for (std::size_t i = 0; i < real.size(); ++i) {
        auto f = fx(real_crops[i]);
        real_f[real[i].zone_id].push_back(f);
        all_real.push_back(std::move(f));
    }
    for (std::size_t i = 0; i < gen.size(); ++i) {
        const ZoneSpec& zone = registry.at(gen[i].zone_id);
        auto f = fx(gen_crops[i]);
        gen_f[gen[i].zone_id].push_back(f);
        all_gen.push_back(std::move(f));
        const double p = std::clamp(scorer(gen_crops[i], zone), 0.0, 1.0);
        scores[gen[i].zone_id].first.push_back(p);
        scores[gen[i].zone_id].second.push_back(gen[i].normalized());
        all_pred.push_back(p);
        all_tgt.push_back(gen[i].normalized());
    }

    EvalReport rep;
    rep.fid = frechet_distance(stats_from_features(all_real), stats_from_features(all_gen));
    rep.mae = mae_scores(all_pred, all_tgt);
    const double nan = std::numeric_limits<double>::quiet_NaN();
    for (const auto& zone : registry.zones()) {
        const auto& rf = real_f[zone.zone_id];
        const auto& gf = gen_f[zone.zone_id];
        if (rf.empty() && gf.empty()) {
            continue;
        }
        ZoneEval z{zone.zone_id, rf.size(), gf.size(), nan, nan};
        if (rf.size() >= 2 && gf.size() >= 2) {
            z.fid = frechet_distance(stats_from_features(rf), stats_from_features(gf));
        }
        if (!gf.empty()) {
            z.mae = mae_scores(scores[zone.zone_id].first, scores[zone.zone_id].second);
        }
        rep.per_zone.push_back(z);
    }
    if (options.split_reference) {
        rep.reference_fid = split_reference_fid(real_crops, fx, options.seed);
    }
    nlohmann::ordered_json cfg;
    cfg["real"] = real_manifest;
    cfg["generated"] = generated_manifest;
    cfg["feature_grid"] = options.feature_grid;
    cfg["split_reference"] = options.split_reference;
    cfg["seed"] = options.seed;
    rep.config_json = cfg.dump();
    return rep;
}

std::string translate_manifest(const std::string& manifest, Split split, const InferenceModels& models,
                               const ZoneRegistry& registry, const InferenceParams& params,
                               const std::string& out_dir, std::size_t max_records) {
    namespace fs = std::filesystem;
    auto records = filter_split(load_manifest(manifest), split);
    if (max_records > 0 && records.size() > max_records) {
        records.resize(max_records);
    }
    if (records.empty()) {
        throw ConfigError("no records in split " + std::string(to_string(split)) + " of " + manifest);
    }
    std::error_code ec;
    fs::create_directories(fs::path(out_dir) / "images", ec);
    if (ec) {
        throw IoError(out_dir, ec.message());
    }
    std::vector<ManifestRecord> out;
    for (std::size_t i = 0; i < records.size(); ++i) {
        const auto& r = records[i];
        const ZoneSpec& zone = registry.at(r.zone_id);
        Rng rng = derive_rng(params.seed, {0xe7, i});
        const double target = sample_target_score(rng);
        Tensor crop = read_png(resolve_image_path(manifest, r));
        crop = resize_bilinear(crop, models.crop_size, models.crop_size);
        const Tensor aged = translate_crop(crop, zone, r.ethnicity, target, params, models, i);
        char name[64];
        std::snprintf(name, sizeof(name), "images/gen_%05zu.png", i);
        write_png((fs::path(out_dir) / name).string(), aged);
        out.push_back({name, r.zone_id, r.ethnicity, target * r.scale_max, r.scale_max, r.split});
    }
    const std::string path = (fs::path(out_dir) / "manifest.jsonl").string();
    write_manifest(path, out);
    return path;
}

}  // namespace ldla
