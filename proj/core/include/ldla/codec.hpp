// Copyright (C) 2026 The ldla Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include "ldla/tensor.hpp"

#include <cstdint>
#include <iosfwd>
#include <memory>
#include <span>
#include <string>

namespace ldla {

/// Frozen image <-> latent codec. Images are (3,H,W) in [0,1]; H and W must be
/// divisible by factor(). Nothing in training writes to a codec.
class Codec {
public:
    virtual ~Codec() = default;
    virtual std::string kind() const = 0;
    virtual int factor() const = 0;
    virtual int latent_channels() const = 0;
    virtual Tensor encode(const Tensor& image) const = 0;
    virtual Tensor decode(const Tensor& latent) const = 0;
    virtual std::uint64_t checksum() const = 0;
    virtual void write(std::ostream& out) const = 0;
};

class IdentityCodec final : public Codec {
public:
    std::string kind() const override { return "identity"; }
    int factor() const override { return 1; }
    int latent_channels() const override { return 3; }
    Tensor encode(const Tensor& image) const override;
    Tensor decode(const Tensor& latent) const override;
    std::uint64_t checksum() const override { return 0x1d; }
    void write(std::ostream& out) const override;
};

/// Linear patch autoencoder: each factor x factor RGB patch is projected on
/// the leading principal directions of training patches, then scaled so the
/// first latent channel has unit variance. The optimal linear autoencoder for
/// squared error is exactly this projection, so fitting is closed-form.
class PatchCodec final : public Codec {
public:
    PatchCodec(int factor, Tensor basis, Tensor mean, double scale);

    // images: (3,H,W) crops. At most max_patches patches are sampled, evenly strided.
    static PatchCodec fit(std::span<const Tensor> images, int factor, int channels,
                          std::size_t max_patches = 50000);

    std::string kind() const override { return "patch"; }
    int factor() const override { return factor_; }
    int latent_channels() const override { return basis_.dim(0); }
    Tensor encode(const Tensor& image) const override;
    Tensor decode(const Tensor& latent) const override;
    std::uint64_t checksum() const override;
    void write(std::ostream& out) const override;

    const Tensor& basis() const noexcept { return basis_; }
    const Tensor& mean() const noexcept { return mean_; }
    double scale() const noexcept { return scale_; }

private:
    int factor_;
    Tensor basis_;  // (C, 3*f*f), orthonormal rows
    Tensor mean_;   // (3*f*f)
    double scale_;
};

std::unique_ptr<Codec> read_codec(std::istream& in);
void save_codec(const Codec& codec, const std::string& path);
std::unique_ptr<Codec> load_codec(const std::string& path);

// Mean absolute per-pixel error of decode(encode(x)) over the given images.
double reconstruction_error(const Codec& codec, std::span<const Tensor> images);

}  // namespace ldla
