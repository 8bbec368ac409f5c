// Copyright (C) 2026 The ldla Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include "ldla/tensor.hpp"

#include <span>
#include <string>
#include <vector>

namespace ldla {

// 8-bit RGB PNG <-> (3,H,W) tensor in [0,1]. Alpha and grayscale inputs are converted to RGB.
Tensor read_png(const std::string& path);
void write_png(const std::string& path, const Tensor& image);

Tensor decode_png(std::span<const unsigned char> bytes);
std::vector<unsigned char> encode_png(const Tensor& image);

// Value stored by an 8-bit channel for v (clamped to [0,1], rounded).
unsigned char quantize_channel(double v);

}  // namespace ldla
