// Copyright (C) 2026 The ldla Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <optional>
#include <random>
#include <string>
#include <string_view>
#include <vector>

namespace ldla {

/// Fractional rectangle on an aligned face, corners in [0,1].
struct FracBox {
    double x0 = 0.0, y0 = 0.0, x1 = 1.0, y1 = 1.0;
    friend bool operator==(const FracBox&, const FracBox&) = default;
};

struct ZoneSpec {
    std::string zone_id;
    std::string display_noun;  // "forehead wrinkles"
    std::string zone_noun;     // "forehead"
    double scale_max = 1.0;
    FracBox default_box;
    int feather_px = 8;  // at crop resolution

    friend bool operator==(const ZoneSpec&, const ZoneSpec&) = default;
};

struct AgingScore {
    std::string zone_id;
    double raw = 0.0;
    double normalized = 0.0;

    static AgingScore from_raw(const ZoneSpec& zone, double raw);
};

/// The three conditioning prompts used by one training example.
struct PromptBundle {
    std::string p_full;
    std::string p_zone;
    std::string p_target;
    double target_normalized = 0.0;
};

class ZoneRegistry {
public:
    ZoneRegistry() = default;
    explicit ZoneRegistry(std::vector<ZoneSpec> zones);  // validates

    const std::vector<ZoneSpec>& zones() const noexcept { return zones_; }
    std::size_t size() const noexcept { return zones_.size(); }
    bool empty() const noexcept { return zones_.empty(); }

    const ZoneSpec* find(std::string_view zone_id) const noexcept;
    // Throws ValidationError naming the valid ids.
    const ZoneSpec& at(std::string_view zone_id) const;
    std::optional<std::size_t> index_of(std::string_view zone_id) const noexcept;
    std::vector<std::string> ids() const;
    std::string ids_joined() const;

    std::string to_json() const;
    std::uint64_t hash() const;

private:
    std::vector<ZoneSpec> zones_;
};

// Throws ValidationError on invariant violations (box order, scale_max, empty nouns).
void validate_zone(const ZoneSpec& zone);

ZoneRegistry parse_zone_registry(std::string_view json_text, const std::string& source = "<memory>");
ZoneRegistry load_zone_registry(const std::string& path);
// The eight zones shipped with the project (same content as configs/zones.json).
const ZoneRegistry& default_zone_registry();
std::string_view default_zone_registry_json();

double normalize_score(double raw, double scale_max);

// Human-facing percent -> normalized score. The only percent conversion point.
double normalized_from_percent(double percent);

// Integer percentage shown in prompts, rounded half up.
int percent_token(double normalized);

std::string build_full_prompt(const ZoneSpec& zone, std::string_view ethnicity, double normalized);
std::string build_zone_prompt(const ZoneSpec& zone);

// Targets are drawn uniformly from {0, 0.05, ..., 1}.
inline constexpr int kTargetGridSteps = 20;
double sample_target_score(std::mt19937_64& rng);
PromptBundle sample_target_prompt(const ZoneSpec& zone, std::string_view ethnicity,
                                  double source_normalized, std::mt19937_64& rng);

}  // namespace ldla
