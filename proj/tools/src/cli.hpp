// Copyright (C) 2026 The ldla Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include "ldla/atlas.hpp"
#include "ldla/inference.hpp"

#include <iosfwd>
#include <string>
#include <vector>

namespace ldla::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitFailure = 1;
inline constexpr int kExitUsage = 2;

/// Entry point shared by the executable and the tests.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

// "uniform:<percent>" or a JSON object {zone_id: percent}. Percents are converted once, here.
std::vector<ZoneTarget> parse_targets(const std::string& spec, const ZoneRegistry& registry);

}  // namespace ldla::cli
