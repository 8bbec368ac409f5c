// Copyright (C) 2026 The ldla Authors
// SPDX-License-Identifier: Apache-2.0

#include "ldla/data.hpp"

#include "ldla/errors.hpp"
#include "ldla/image_io.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <numbers>
#include <set>
#include <sstream>

namespace ldla {

namespace fs = std::filesystem;
using nlohmann::ordered_json;

std::string_view to_string(Split s) {
    switch (s) {
        case Split::train: return "train";
        case Split::val: return "val";
        case Split::test: return "test";
    }
    return "train";
}

Split split_from_string(std::string_view s) {
    if (s == "train") return Split::train;
    if (s == "val") return Split::val;
    if (s == "test") return Split::test;
    throw ValidationError("unknown split \"" + std::string(s) + "\" (expected train, val or test)");
}

std::vector<ManifestRecord> parse_manifest(std::string_view text, const std::string& source,
                                           const std::string& base_dir, const ManifestOptions& options,
                                           std::vector<std::string>* warnings) {
    static const std::set<std::string> keys = {"image_path", "zone_id", "ethnicity",
                                               "raw_score",  "scale_max", "split"};
    std::vector<ManifestRecord> out;
    std::vector<std::string> missing;
    std::size_t line_no = 0, pos = 0;
    while (pos <= text.size()) {
        const std::size_t end = std::min(text.find('\n', pos), text.size());
        std::string_view line = text.substr(pos, end - pos);
        pos = end + 1;
        ++line_no;
        if (!line.empty() && line.back() == '\r') {
            line.remove_suffix(1);
        }
        if (line.find_first_not_of(" \t") == std::string_view::npos) {
            if (end == text.size()) break;
            continue;
        }
        const std::string where = source + ":" + std::to_string(line_no);
        ordered_json obj;
        try {
            obj = ordered_json::parse(line);
        } catch (const ordered_json::parse_error& e) {
            throw ParseError(where + ": " + e.what());
        }
        if (!obj.is_object()) {
            throw ParseError(where + ": expected a JSON object");
        }
        for (const auto& [k, _] : obj.items()) {
            if (!keys.contains(k)) {
                throw ValidationError(where + ": unknown key \"" + k + "\"");
            }
        }
        ManifestRecord r;
        try {
            r.image_path = obj.at("image_path").get<std::string>();
            r.zone_id = obj.at("zone_id").get<std::string>();
            r.ethnicity = obj.at("ethnicity").get<std::string>();
            r.raw_score = obj.at("raw_score").get<double>();
            r.scale_max = obj.at("scale_max").get<double>();
            r.split = split_from_string(obj.at("split").get<std::string>());
        } catch (const ordered_json::exception& e) {
            throw ValidationError(where + ": " + e.what());
        } catch (const ValidationError& e) {
            throw ValidationError(where + ": " + e.what());
        }
        if (!(r.scale_max > 0.0)) {
            throw ValidationError(where + ": scale_max must be positive");
        }
        if (!(r.raw_score >= 0.0 && r.raw_score <= r.scale_max)) {
            std::ostringstream os;
            os << where << ": raw_score " << r.raw_score << " outside [0, " << r.scale_max << "]";
            throw ValidationError(os.str());
        }
        if (options.check_files) {
            const fs::path p = fs::path(r.image_path).is_absolute() ? fs::path(r.image_path)
                                                                     : fs::path(base_dir) / r.image_path;
            if (!fs::exists(p)) {
                missing.push_back(p.string());
            }
        }
        out.push_back(std::move(r));
        if (end == text.size()) break;
    }
    if (!missing.empty()) {
        std::string msg = source + ": missing image files:";
        for (const auto& m : missing) {
            msg += "\n  " + m;
        }
        throw ValidationError(msg);
    }
    if (out.empty() && warnings) {
        warnings->push_back(source + ": manifest contains no records");
    }
    return out;
}

std::vector<ManifestRecord> load_manifest(const std::string& path, const ManifestOptions& options,
                                          std::vector<std::string>* warnings) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw IoError(path, "cannot open manifest");
    }
    std::stringstream ss;
    ss << in.rdbuf();
    return parse_manifest(ss.str(), path, fs::path(path).parent_path().string(), options, warnings);
}

std::string format_manifest_line(const ManifestRecord& r) {
    ordered_json obj;
    obj["image_path"] = r.image_path;
    obj["zone_id"] = r.zone_id;
    obj["ethnicity"] = r.ethnicity;
    obj["raw_score"] = r.raw_score;
    obj["scale_max"] = r.scale_max;
    obj["split"] = std::string(to_string(r.split));
    return obj.dump();
}

std::string format_manifest(const std::vector<ManifestRecord>& records) {
    std::string out;
    for (const auto& r : records) {
        out += format_manifest_line(r);
        out += '\n';
    }
    return out;
}

void write_manifest(const std::string& path, const std::vector<ManifestRecord>& records) {
    std::ofstream out(path, std::ios::binary);
    if (!out) {
        throw IoError(path, "cannot open for writing");
    }
    out << format_manifest(records);
    if (!out) {
        throw IoError(path, "write failed");
    }
}

std::string resolve_image_path(const std::string& manifest_path, const ManifestRecord& record) {
    const fs::path p(record.image_path);
    if (p.is_absolute()) {
        return p.string();
    }
    return (fs::path(manifest_path).parent_path() / p).string();
}

std::vector<ManifestRecord> filter_split(const std::vector<ManifestRecord>& records, Split split) {
    std::vector<ManifestRecord> out;
    std::copy_if(records.begin(), records.end(), std::back_inserter(out),
                 [split](const ManifestRecord& r) { return r.split == split; });
    return out;
}

WrinkleAxis wrinkle_axis(std::string_view zone_id) {
    if (zone_id == "glabellar" || zone_id == "nasolabial_folds" || zone_id == "upper_lip" ||
        zone_id == "lip_corners") {
        return WrinkleAxis::vertical;
    }
    return WrinkleAxis::horizontal;
}

Tensor synthesize_crop(const ZoneSpec& zone, double normalized, Rng& rng, const SyntheticCorpusConfig& cfg) {
    const int n = cfg.crop_size;
    const double lum = 0.35 + 0.45 * uniform01(rng);
    const double warm = 0.04 + 0.06 * uniform01(rng);
    const double tone[3] = {lum + warm, lum, lum - warm};
    const double amp = cfg.density.amplitude(normalized);
    const bool horizontal = wrinkle_axis(zone.zone_id) == WrinkleAxis::horizontal;
    const double k = 2.0 * std::numbers::pi * cfg.density.cycles / n;

    Tensor img = Tensor::grid(3, n, n);
    for (int y = 0; y < n; ++y) {
        for (int x = 0; x < n; ++x) {
            const double u = (horizontal ? y : x) + 0.5;
            const double stripe = -amp * std::sin(k * u);
            for (int c = 0; c < 3; ++c) {
                const double v = tone[c] + stripe + cfg.texture_noise * standard_normal(rng);
                img.at(c, y, x) = std::clamp(v, 0.0, 1.0);
            }
        }
    }
    return img;
}

std::vector<ManifestRecord> generate_synthetic_corpus(const SyntheticCorpusConfig& cfg, const ZoneRegistry& registry) {
    if (cfg.n_per_zone < 1 || cfg.crop_size < 8 || cfg.zones.empty() || cfg.ethnicities.empty()) {
        throw ConfigError("synthetic corpus: need n_per_zone >= 1, crop_size >= 8, and non-empty zone/ethnicity lists");
    }
    if (cfg.output_dir.empty()) {
        throw ConfigError("synthetic corpus: output_dir is required");
    }
    const fs::path root(cfg.output_dir);
    std::error_code ec;
    fs::create_directories(root / "images", ec);
    if (ec) {
        throw IoError((root / "images").string(), ec.message());
    }

    std::vector<ManifestRecord> records;
    for (std::size_t zi = 0; zi < cfg.zones.size(); ++zi) {
        const ZoneSpec& zone = registry.at(cfg.zones[zi]);
        for (int i = 0; i < cfg.n_per_zone; ++i) {
            Rng rng = derive_rng(cfg.seed, {0xc0, zi, static_cast<std::uint64_t>(i)});
            const double s = static_cast<double>(uniform_int(rng, 0, kTargetGridSteps)) / kTargetGridSteps;
            const auto& eth = cfg.ethnicities[static_cast<std::size_t>(
                uniform_int(rng, 0, static_cast<int>(cfg.ethnicities.size()) - 1))];
            const double u = uniform01(rng);
            const Split split = u < cfg.test_fraction                      ? Split::test
                                : u < cfg.test_fraction + cfg.val_fraction ? Split::val
                                                                           : Split::train;
            const Tensor img = synthesize_crop(zone, s, rng, cfg);

            char name[128];
            std::snprintf(name, sizeof(name), "images/%s_%05d.png", zone.zone_id.c_str(), i);
            write_png((root / name).string(), img);
            records.push_back({name, zone.zone_id, eth, s * zone.scale_max, zone.scale_max, split});
        }
    }
    write_manifest((root / "manifest.jsonl").string(), records);
    return records;
}

double wrinkle_density_oracle(const Tensor& crop, const ZoneSpec& zone, const DensityLaw& law) {
    if (crop.rank() != 3 || crop.channels() != 3 || crop.height() != crop.width()) {
        throw ShapeError("wrinkle_density_oracle: expected a square (3,N,N) crop, got " + crop.shape_string());
    }
    const int n = crop.height();
    const bool horizontal = wrinkle_axis(zone.zone_id) == WrinkleAxis::horizontal;

    std::vector<double> profile(static_cast<std::size_t>(n), 0.0);
    for (int y = 0; y < n; ++y) {
        for (int x = 0; x < n; ++x) {
            const double lum = 0.299 * crop.at(0, y, x) + 0.587 * crop.at(1, y, x) + 0.114 * crop.at(2, y, x);
            profile[static_cast<std::size_t>(horizontal ? y : x)] += lum / n;
        }
    }
    double mean = 0.0;
    for (double v : profile) mean += v / n;

    double energy = 0.0;
    const int k_hi = std::max(2, n / 8);
    for (int k = 2; k <= k_hi; ++k) {
        double re = 0.0, im = 0.0;
        for (int j = 0; j < n; ++j) {
            const double phase = 2.0 * std::numbers::pi * k * j / n;
            re += (profile[static_cast<std::size_t>(j)] - mean) * std::cos(phase);
            im -= (profile[static_cast<std::size_t>(j)] - mean) * std::sin(phase);
        }
        const double a = 2.0 * std::hypot(re, im) / n;
        energy += a * a;
    }
    return std::clamp(std::sqrt(energy) / law.max_amplitude, 0.0, 1.0);
}

}  // namespace ldla
