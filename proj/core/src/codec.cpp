// Copyright (C) 2026 The ldla Authors
// SPDX-License-Identifier: Apache-2.0

#include "ldla/codec.hpp"

#include "binary_io.hpp"
#include "ldla/errors.hpp"

#include <Eigen/Dense>

#include <cmath>
#include <fstream>

namespace ldla {

namespace {

constexpr std::uint32_t kCodecIdentity = 0;
constexpr std::uint32_t kCodecPatch = 1;

void check_image(const Tensor& image, int factor, const char* what) {
    if (image.rank() != 3 || image.channels() != 3) {
        throw ShapeError(std::string(what) + ": expected a (3,H,W) image, got " + image.shape_string());
    }
    if (image.height() % factor != 0 || image.width() % factor != 0) {
        throw ShapeError(std::string(what) + ": image " + image.shape_string() +
                         " not divisible by codec factor " + std::to_string(factor));
    }
}

}  // namespace

Tensor IdentityCodec::encode(const Tensor& image) const {
    check_image(image, 1, "IdentityCodec::encode");
    return image;
}

Tensor IdentityCodec::decode(const Tensor& latent) const {
    if (latent.rank() != 3 || latent.channels() != 3) {
        throw ShapeError("IdentityCodec::decode: expected 3 channels, got " + latent.shape_string());
    }
    return latent;
}

void IdentityCodec::write(std::ostream& out) const { bin::put<std::uint32_t>(out, kCodecIdentity); }

PatchCodec::PatchCodec(int factor, Tensor basis, Tensor mean, double scale)
    : factor_(factor), basis_(std::move(basis)), mean_(std::move(mean)), scale_(scale) {
    const int patch = 3 * factor * factor;
    if (factor < 1 || basis_.rank() != 2 || basis_.dim(1) != patch || mean_.size() != static_cast<std::size_t>(patch) ||
        !(scale_ > 0.0)) {
        throw ShapeError("PatchCodec: inconsistent parameters");
    }
}

PatchCodec PatchCodec::fit(std::span<const Tensor> images, int factor, int channels, std::size_t max_patches) {
    const int patch = 3 * factor * factor;
    if (channels < 1 || channels > patch) {
        throw ConfigError("PatchCodec::fit: channels must lie in [1, 3*factor^2]");
    }
    if (images.empty()) {
        throw ConfigError("PatchCodec::fit: no images");
    }
    std::size_t total = 0;
    for (const auto& img : images) {
        check_image(img, factor, "PatchCodec::fit");
        total += static_cast<std::size_t>(img.height() / factor) * (img.width() / factor);
    }
    const std::size_t stride = std::max<std::size_t>(1, (total + max_patches - 1) / max_patches);

    Eigen::VectorXd sum = Eigen::VectorXd::Zero(patch);
    Eigen::MatrixXd outer = Eigen::MatrixXd::Zero(patch, patch);
    Eigen::VectorXd p(patch);
    std::size_t index = 0, used = 0;
    for (const auto& img : images) {
        const int ph = img.height() / factor, pw = img.width() / factor;
        for (int by = 0; by < ph; ++by) {
            for (int bx = 0; bx < pw; ++bx, ++index) {
                if (index % stride != 0) {
                    continue;
                }
                int k = 0;
                for (int c = 0; c < 3; ++c) {
                    for (int y = 0; y < factor; ++y) {
                        for (int x = 0; x < factor; ++x) {
                            p[k++] = img.at(c, by * factor + y, bx * factor + x);
                        }
                    }
                }
                sum += p;
                outer.noalias() += p * p.transpose();
                ++used;
            }
        }
    }
    const double n = static_cast<double>(used);
    const Eigen::VectorXd mu = sum / n;
    const Eigen::MatrixXd cov = outer / n - mu * mu.transpose();
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(cov);
    if (eig.info() != Eigen::Success) {
        throw NumericError("PatchCodec::fit: eigendecomposition failed");
    }
    // Eigen sorts ascending; take the top `channels` directions with a fixed sign convention.
    Tensor basis({channels, patch});
    for (int c = 0; c < channels; ++c) {
        Eigen::VectorXd v = eig.eigenvectors().col(patch - 1 - c);
        Eigen::Index arg = 0;
        v.cwiseAbs().maxCoeff(&arg);
        if (v[arg] < 0) {
            v = -v;
        }
        for (int k = 0; k < patch; ++k) {
            basis[static_cast<std::size_t>(c) * patch + k] = v[k];
        }
    }
    const double top = std::max(eig.eigenvalues()[patch - 1], 1e-12);
    Tensor mean({patch});
    for (int k = 0; k < patch; ++k) {
        mean[static_cast<std::size_t>(k)] = mu[k];
    }
    return PatchCodec(factor, std::move(basis), std::move(mean), 1.0 / std::sqrt(top));
}

Tensor PatchCodec::encode(const Tensor& image) const {
    check_image(image, factor_, "PatchCodec::encode");
    const int f = factor_, patch = 3 * f * f, C = latent_channels();
    const int ph = image.height() / f, pw = image.width() / f;
    Tensor z = Tensor::grid(C, ph, pw);
    std::vector<double> p(static_cast<std::size_t>(patch));
    for (int by = 0; by < ph; ++by) {
        for (int bx = 0; bx < pw; ++bx) {
            int k = 0;
            for (int c = 0; c < 3; ++c) {
                for (int y = 0; y < f; ++y) {
                    for (int x = 0; x < f; ++x, ++k) {
                        p[static_cast<std::size_t>(k)] = image.at(c, by * f + y, bx * f + x) - mean_[static_cast<std::size_t>(k)];
                    }
                }
            }
            for (int c = 0; c < C; ++c) {
                const double* row = basis_.data() + static_cast<std::size_t>(c) * patch;
                double s = 0.0;
                for (int k2 = 0; k2 < patch; ++k2) {
                    s += row[k2] * p[static_cast<std::size_t>(k2)];
                }
                z.at(c, by, bx) = s * scale_;
            }
        }
    }
    return z;
}

Tensor PatchCodec::decode(const Tensor& latent) const {
    const int C = latent_channels();
    if (latent.rank() != 3 || latent.channels() != C) {
        throw ShapeError("PatchCodec::decode: expected " + std::to_string(C) + " channels, got " +
                         latent.shape_string());
    }
    const int f = factor_, patch = 3 * f * f;
    const int ph = latent.height(), pw = latent.width();
    Tensor image = Tensor::grid(3, ph * f, pw * f);
    std::vector<double> p(static_cast<std::size_t>(patch));
    for (int by = 0; by < ph; ++by) {
        for (int bx = 0; bx < pw; ++bx) {
            for (int k = 0; k < patch; ++k) {
                p[static_cast<std::size_t>(k)] = mean_[static_cast<std::size_t>(k)];
            }
            for (int c = 0; c < C; ++c) {
                const double zc = latent.at(c, by, bx) / scale_;
                const double* row = basis_.data() + static_cast<std::size_t>(c) * patch;
                for (int k = 0; k < patch; ++k) {
                    p[static_cast<std::size_t>(k)] += zc * row[k];
                }
            }
            int k = 0;
            for (int c = 0; c < 3; ++c) {
                for (int y = 0; y < f; ++y) {
                    for (int x = 0; x < f; ++x, ++k) {
                        image.at(c, by * f + y, bx * f + x) = p[static_cast<std::size_t>(k)];
                    }
                }
            }
        }
    }
    return image;
}

std::uint64_t PatchCodec::checksum() const {
    std::uint64_t h = ldla::checksum(basis_);
    h = ldla::checksum(mean_, h);
    return fnv1a({reinterpret_cast<const unsigned char*>(&scale_), sizeof(scale_)}, h);
}

void PatchCodec::write(std::ostream& out) const {
    bin::put<std::uint32_t>(out, kCodecPatch);
    bin::put<std::uint32_t>(out, static_cast<std::uint32_t>(factor_));
    bin::put<double>(out, scale_);
    bin::put_tensor(out, basis_);
    bin::put_tensor(out, mean_);
}

std::unique_ptr<Codec> read_codec(std::istream& in) {
    const auto kind = bin::get<std::uint32_t>(in);
    if (kind == kCodecIdentity) {
        return std::make_unique<IdentityCodec>();
    }
    if (kind == kCodecPatch) {
        const auto factor = static_cast<int>(bin::get<std::uint32_t>(in));
        const double scale = bin::get<double>(in);
        Tensor basis = bin::get_tensor(in);
        Tensor mean = bin::get_tensor(in);
        return std::make_unique<PatchCodec>(factor, std::move(basis), std::move(mean), scale);
    }
    throw ParseError("unknown codec kind " + std::to_string(kind));
}

void save_codec(const Codec& codec, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) {
        throw IoError(path, "cannot open for writing");
    }
    codec.write(out);
    if (!out) {
        throw IoError(path, "write failed");
    }
}

std::unique_ptr<Codec> load_codec(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw IoError(path, "cannot open codec file");
    }
    try {
        return read_codec(in);
    } catch (const ParseError& e) {
        throw IoError(path, e.what());
    }
}

double reconstruction_error(const Codec& codec, std::span<const Tensor> images) {
    double total = 0.0;
    std::size_t n = 0;
    for (const auto& img : images) {
        const Tensor rec = codec.decode(codec.encode(img));
        for (std::size_t i = 0; i < img.size(); ++i) {
            total += std::abs(rec[i] - img[i]);
        }
        n += img.size();
    }
    return n ? total / static_cast<double>(n) : 0.0;
}

}  // namespace ldla
