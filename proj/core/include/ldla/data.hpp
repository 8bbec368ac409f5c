// Copyright (C) 2026 The ldla Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include "ldla/atlas.hpp"
#include "ldla/random.hpp"
#include "ldla/tensor.hpp"

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

namespace ldla {

enum class Split { train, val, test };

std::string_view to_string(Split s);
Split split_from_string(std::string_view s);

/// One scored crop. image_path is stored as written in the manifest and is
/// resolved against the manifest's directory when relative.
struct ManifestRecord {
    std::string image_path;
    std::string zone_id;
    std::string ethnicity;
    double raw_score = 0.0;
    double scale_max = 1.0;
    Split split = Split::train;

    double normalized() const { return raw_score / scale_max; }
    friend bool operator==(const ManifestRecord&, const ManifestRecord&) = default;
};

struct ManifestOptions {
    bool check_files = true;
};

// JSON-lines, one record per line. Blank lines are skipped. Errors carry the line number.
std::vector<ManifestRecord> parse_manifest(std::string_view text, const std::string& source,
                                           const std::string& base_dir = {}, const ManifestOptions& options = {},
                                           std::vector<std::string>* warnings = nullptr);
std::vector<ManifestRecord> load_manifest(const std::string& path, const ManifestOptions& options = {},
                                          std::vector<std::string>* warnings = nullptr);

std::string format_manifest_line(const ManifestRecord& record);
std::string format_manifest(const std::vector<ManifestRecord>& records);
void write_manifest(const std::string& path, const std::vector<ManifestRecord>& records);

std::string resolve_image_path(const std::string& manifest_path, const ManifestRecord& record);
std::vector<ManifestRecord> filter_split(const std::vector<ManifestRecord>& records, Split split);

// --- synthetic wrinkle-proxy corpus -------------------------------------------

/// Wrinkles of a zone run perpendicular to this axis: horizontal wrinkles
/// (forehead) are stripes whose intensity varies along y.
enum class WrinkleAxis { horizontal, vertical };
WrinkleAxis wrinkle_axis(std::string_view zone_id);

/// Score -> stripe appearance. Amplitude grows linearly with the score and
/// the stripe count stays fixed, so the law is monotone non-decreasing.
struct DensityLaw {
    double max_amplitude = 0.12;
    int cycles = 4;  // stripes per crop side

    double amplitude(double normalized) const { return max_amplitude * normalized; }
};

struct SyntheticCorpusConfig {
    int n_per_zone = 1000;
    int crop_size = 128;
    std::uint64_t seed = 0;
    std::vector<std::string> zones = {"forehead", "glabellar"};
    std::vector<std::string> ethnicities = {"Caucasian", "Hispanic", "African", "Asian"};
    DensityLaw density;
    double texture_noise = 0.01;
    double val_fraction = 0.1;
    double test_fraction = 0.1;
    std::string output_dir;
};

/// Smooth skin-tone crop with stripes for the given score. Draws the tone and
/// the texture noise from rng.
Tensor synthesize_crop(const ZoneSpec& zone, double normalized, Rng& rng, const SyntheticCorpusConfig& cfg);

/// Writes images/<zone>_<index>.png and manifest.jsonl under cfg.output_dir
/// and returns the records. Byte-identical output for identical configs.
std::vector<ManifestRecord> generate_synthetic_corpus(const SyntheticCorpusConfig& cfg, const ZoneRegistry& registry);

/// Stripe amplitude along the zone's wrinkle axis, measured from the
/// luminance profile's Fourier coefficients in cycles [2, N/8], divided by the
/// law's maximum amplitude and clamped to [0,1].
double wrinkle_density_oracle(const Tensor& crop, const ZoneSpec& zone, const DensityLaw& law = {});

}  // namespace ldla
