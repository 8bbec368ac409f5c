// Copyright (C) 2026 The ldla Authors
// SPDX-License-Identifier: Apache-2.0

#include "ldla/networks.hpp"

#include "ldla/errors.hpp"
#include "ldla/random.hpp"

#include <cmath>
#include <numbers>

namespace ldla {

namespace {

// Parameter slots, in ParamSet order.
enum DenoiserSlot : std::size_t {
    kInW, kInB, kAW, kAB, kBW, kBB, kCW, kCB, kDW, kDB, kOutW, kOutB,
    kTimeW, kTimeB, kTextW, kTextB, kMeanW, kMeanB,
    kFilm0W, kFilm0B, kFilm1W, kFilm1B, kFilm2W, kFilm2B, kFilm3W, kFilm3B,
    kDenoiserSlots
};

enum ScoreSlot : std::size_t { kS1W, kS1B, kS2W, kS2B, kS3W, kS3B, kHeadW, kHeadB, kScoreSlots };

Tensor uniform_init(std::vector<int> shape, int fan_in, double gain, Rng& rng) {
    Tensor t(std::move(shape));
    const double a = gain * std::sqrt(3.0 / fan_in);
    for (std::size_t i = 0; i < t.size(); ++i) {
        t[i] = a * (2.0 * uniform01(rng) - 1.0);
    }
    return t;
}

void add_conv(ParamSet& ps, const std::string& name, int out, int in, double gain, Rng& rng) {
    ps.add(name + ".weight", uniform_init({out, in, 3, 3}, in * 9, gain, rng));
    ps.add(name + ".bias", Tensor({out}, 0.0));
}

void add_linear(ParamSet& ps, const std::string& name, int out, int in, double gain, Rng& rng) {
    ps.add(name + ".weight", uniform_init({out, in}, in, gain, rng));
    ps.add(name + ".bias", Tensor({out}, 0.0));
}

ad::Var checked(ad::Graph& g, ad::Var v, const char* layer) {
    if (!g.value(v).all_finite()) {
        throw NumericError(std::string("non-finite activation in layer ") + layer);
    }
    return v;
}

}  // namespace

std::size_t ParamSet::count() const noexcept {
    std::size_t n = 0;
    for (const auto& t : tensors) {
        n += t.size();
    }
    return n;
}

std::uint64_t ParamSet::checksum() const {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (const auto& t : tensors) {
        h = ldla::checksum(t, h);
    }
    return h;
}

bool ParamSet::all_finite() const noexcept { return first_non_finite().empty(); }

std::string ParamSet::first_non_finite() const {
    for (std::size_t i = 0; i < tensors.size(); ++i) {
        if (!tensors[i].all_finite()) {
            return names[i];
        }
    }
    return {};
}

BoundParams bind(ad::Graph& g, const ParamSet& params, bool trainable) {
    BoundParams out;
    out.reserve(params.tensors.size());
    for (const auto& t : params.tensors) {
        out.push_back(trainable ? g.parameter(t) : g.constant(t));
    }
    return out;
}

Tensor timestep_features(int t, int dim) {
    Tensor out({dim});
    const int half = dim / 2;
    for (int i = 0; i < half; ++i) {
        const double freq = std::exp(-std::log(10000.0) * i / std::max(1, half));
        out[static_cast<std::size_t>(i)] = std::sin(t * freq);
        out[static_cast<std::size_t>(half + i)] = std::cos(t * freq);
    }
    return out;
}

Tensor position_channels(int height, int width, int freqs) {
    Tensor out = Tensor::grid(4 * freqs, height, width);
    const double two_pi = 2.0 * std::numbers::pi;
    for (int k = 0; k < freqs; ++k) {
        const double f = std::ldexp(1.0, k);
        for (int y = 0; y < height; ++y) {
            const double v = (y + 0.5) / height;
            for (int x = 0; x < width; ++x) {
                const double u = (x + 0.5) / width;
                out.at(4 * k + 0, y, x) = std::sin(two_pi * f * v);
                out.at(4 * k + 1, y, x) = std::cos(two_pi * f * v);
                out.at(4 * k + 2, y, x) = std::sin(two_pi * f * u);
                out.at(4 * k + 3, y, x) = std::cos(two_pi * f * u);
            }
        }
    }
    return out;
}

DenoiserNet::DenoiserNet(DenoiserConfig config) : config_(config) {
    if (config_.latent_channels < 1 || config_.width < 1 || config_.pos_freqs < 0 || config_.time_dim < 2 ||
        config_.emb_dim < 1 || config_.text_dim < 1) {
        throw ConfigError("invalid denoiser configuration");
    }
}

ParamSet DenoiserNet::init(std::uint64_t seed) const {
    Rng rng = derive_rng(seed, {0xd3});
    const auto& c = config_;
    const int W = c.width, C = c.latent_channels, P = 4 * c.pos_freqs, E = c.emb_dim;
    ParamSet ps;
    add_conv(ps, "conv_in", W, C + P, 1.0, rng);
    add_conv(ps, "conv_a", W, W, 1.0, rng);
    add_conv(ps, "conv_b", 2 * W, W, 1.0, rng);
    add_conv(ps, "conv_c", 2 * W, 2 * W, 1.0, rng);
    add_conv(ps, "conv_d", W, 3 * W, 1.0, rng);
    add_conv(ps, "conv_out", C, W, 0.2, rng);
    add_linear(ps, "time_proj", E, c.time_dim, 1.0, rng);
    add_linear(ps, "text_proj", E, c.text_dim, 1.0, rng);
    add_linear(ps, "mean_proj", E, C, 1.0, rng);
    add_linear(ps, "film0", 2 * W, E, 0.1, rng);
    add_linear(ps, "film1", 2 * W, E, 0.1, rng);
    add_linear(ps, "film2", 4 * W, E, 0.1, rng);
    add_linear(ps, "film3", 2 * W, E, 0.1, rng);
    return ps;
}

ad::Var DenoiserNet::forward(ad::Graph& g, const BoundParams& p, ad::Var zt, int t, const Tensor& cond_pooled) const {
    const auto& c = config_;
    const Tensor& z = g.value(zt);
    if (z.rank() != 3 || z.channels() != c.latent_channels) {
        throw ShapeError("denoiser: expected " + std::to_string(c.latent_channels) + " latent channels, got " +
                         z.shape_string());
    }
    if (z.height() % 2 || z.width() % 2) {
        throw ShapeError("denoiser: latent spatial size must be even, got " + z.shape_string());
    }
    if (cond_pooled.size() != static_cast<std::size_t>(c.text_dim)) {
        throw ShapeError("denoiser: condition dimension " + std::to_string(cond_pooled.size()) + " != " +
                         std::to_string(c.text_dim));
    }
    if (p.size() != kDenoiserSlots) {
        throw ShapeError("denoiser: wrong parameter count");
    }

    using namespace ad;
    Var temb = g.constant(timestep_features(t, c.time_dim));
    Var cemb = g.constant(cond_pooled);
    Var emb = add(g, linear(g, p[kTimeW], temb, p[kTimeB]), linear(g, p[kTextW], cemb, p[kTextB]));
    emb = add(g, emb, linear(g, p[kMeanW], channel_mean(g, zt), p[kMeanB]));
    emb = checked(g, silu(g, emb), "embedding");

    Var x = zt;
    if (c.pos_freqs > 0) {
        x = concat_channels(g, zt, g.constant(position_channels(z.height(), z.width(), c.pos_freqs)));
    }
    Var h = conv2d(g, x, p[kInW], p[kInB]);
    h = checked(g, silu(g, film(g, h, linear(g, p[kFilm0W], emb, p[kFilm0B]))), "conv_in");
    Var skip = conv2d(g, h, p[kAW], p[kAB]);
    skip = checked(g, silu(g, film(g, skip, linear(g, p[kFilm1W], emb, p[kFilm1B]))), "conv_a");

    Var low = conv2d(g, avg_pool2(g, skip), p[kBW], p[kBB]);
    low = checked(g, silu(g, film(g, low, linear(g, p[kFilm2W], emb, p[kFilm2B]))), "conv_b");
    low = checked(g, silu(g, conv2d(g, low, p[kCW], p[kCB])), "conv_c");

    Var up = concat_channels(g, upsample2(g, low), skip);
    up = conv2d(g, up, p[kDW], p[kDB]);
    up = checked(g, silu(g, film(g, up, linear(g, p[kFilm3W], emb, p[kFilm3B]))), "conv_d");
    return checked(g, conv2d(g, up, p[kOutW], p[kOutB]), "conv_out");
}

Tensor DenoiserNet::predict(const ParamSet& params, const Tensor& zt, int t, const ConditionEmbedding& cond) const {
    ad::Graph g;
    const BoundParams p = bind(g, params, false);
    return g.value(forward(g, p, g.constant(zt), t, cond.pooled()));
}

ScoreNet::ScoreNet(ScoreNetConfig config) : config_(config) {
    if (config_.latent_channels < 1 || config_.width < 1) {
        throw ConfigError("invalid score network configuration");
    }
}

ParamSet ScoreNet::init(std::uint64_t seed) const {
    Rng rng = derive_rng(seed, {0x5c});
    const int S = config_.width, C = config_.latent_channels;
    ParamSet ps;
    add_conv(ps, "conv1", S, C, 1.0, rng);
    add_conv(ps, "conv2", S, S, 1.0, rng);
    add_conv(ps, "conv3", 2 * S, S, 1.0, rng);
    add_linear(ps, "head", 1, 2 * S, 1.0, rng);
    return ps;
}

ad::Var ScoreNet::forward(ad::Graph& g, const BoundParams& p, ad::Var z) const {
    const Tensor& zv = g.value(z);
    if (zv.rank() != 3 || zv.channels() != config_.latent_channels || zv.height() % 2 || zv.width() % 2) {
        throw ShapeError("scorenet: unexpected latent shape " + zv.shape_string());
    }
    if (p.size() != kScoreSlots) {
        throw ShapeError("scorenet: wrong parameter count");
    }
    using namespace ad;
    Var h = silu(g, conv2d(g, z, p[kS1W], p[kS1B]));
    h = silu(g, conv2d(g, h, p[kS2W], p[kS2B]));
    h = silu(g, conv2d(g, avg_pool2(g, h), p[kS3W], p[kS3B]));
    return sigmoid(g, linear(g, p[kHeadW], channel_mean(g, h), p[kHeadB]));
}

double ScoreNet::predict(const ParamSet& params, const Tensor& z) const {
    ad::Graph g;
    const BoundParams p = bind(g, params, false);
    return g.scalar(forward(g, p, g.constant(z)));
}

}  // namespace ldla
