// Copyright (C) 2026 The ldla Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include "ldla/tensor.hpp"

#include <cstdint>
#include <initializer_list>
#include <random>
#include <vector>

namespace ldla {

using Rng = std::mt19937_64;

// Portable draws: these depend only on the engine's output bits, not on the
// standard library's distribution implementations.
double uniform01(Rng& rng);
double standard_normal(Rng& rng);
int uniform_int(Rng& rng, int lo, int hi);  // inclusive bounds
Tensor gaussian_like(const std::vector<int>& shape, Rng& rng);

// Independent stream for a (seed, key...) tuple. Streams never share state.
Rng derive_rng(std::uint64_t seed, std::initializer_list<std::uint64_t> keys);

}  // namespace ldla
