// Copyright (C) 2026 The ldla Authors
// SPDX-License-Identifier: Apache-2.0

#include "ldla/atlas.hpp"

#include "ldla/errors.hpp"
#include "ldla/random.hpp"
#include "ldla/tensor.hpp"

#include <json.hpp>

#include <cmath>
#include <fstream>
#include <set>
#include <sstream>

namespace ldla {

using nlohmann::json;

namespace {

constexpr std::string_view kDefaultRegistry = R"([
  {"zone_id": "forehead", "display_noun": "forehead wrinkles", "zone_noun": "forehead",
   "scale_max": 5, "default_box": [0.28, 0.10, 0.72, 0.28], "feather_px": 8},
  {"zone_id": "glabellar", "display_noun": "glabellar wrinkles", "zone_noun": "glabellar region",
   "scale_max": 5, "default_box": [0.42, 0.27, 0.58, 0.38], "feather_px": 8},
  {"zone_id": "nasolabial_folds", "display_noun": "nasolabial fold wrinkles", "zone_noun": "nasolabial folds",
   "scale_max": 5, "default_box": [0.27, 0.52, 0.73, 0.72], "feather_px": 8},
  {"zone_id": "inter_ocular", "display_noun": "inter-ocular wrinkles", "zone_noun": "inter-ocular area",
   "scale_max": 4, "default_box": [0.42, 0.38, 0.58, 0.48], "feather_px": 8},
  {"zone_id": "upper_lip", "display_noun": "upper lip wrinkles", "zone_noun": "upper lip",
   "scale_max": 6, "default_box": [0.38, 0.66, 0.62, 0.74], "feather_px": 8},
  {"zone_id": "under_eye", "display_noun": "under-eye wrinkles", "zone_noun": "under-eye region",
   "scale_max": 5, "default_box": [0.24, 0.45, 0.76, 0.54], "feather_px": 8},
  {"zone_id": "lip_corners", "display_noun": "lip corner wrinkles", "zone_noun": "corners of the lips",
   "scale_max": 5, "default_box": [0.30, 0.72, 0.70, 0.82], "feather_px": 8},
  {"zone_id": "crows_feet", "display_noun": "crow's feet wrinkles", "zone_noun": "crow's feet",
   "scale_max": 6, "default_box": [0.10, 0.34, 0.90, 0.50], "feather_px": 8}
]
)";

std::string record_name(std::size_t index, const json& obj) {
    std::string name = "record " + std::to_string(index);
    if (obj.is_object() && obj.contains("zone_id") && obj["zone_id"].is_string()) {
        name += " (\"" + obj["zone_id"].get<std::string>() + "\")";
    }
    return name;
}

ZoneSpec parse_zone(const json& obj, std::size_t index, const std::string& source) {
    const std::string where = source + ": " + record_name(index, obj);
    if (!obj.is_object()) {
        throw ParseError(where + ": expected an object");
    }
    static const std::set<std::string> known = {"zone_id",   "display_noun", "zone_noun",
                                                "scale_max", "default_box",  "feather_px"};
    for (const auto& [key, _] : obj.items()) {
        if (!known.contains(key)) {
            throw ParseError(where + ": unknown key \"" + key + "\"");
        }
    }
    try {
        ZoneSpec z;
        z.zone_id = obj.at("zone_id").get<std::string>();
        z.display_noun = obj.at("display_noun").get<std::string>();
        z.zone_noun = obj.at("zone_noun").get<std::string>();
        z.scale_max = obj.at("scale_max").get<double>();
        const auto& box = obj.at("default_box");
        if (!box.is_array() || box.size() != 4) {
            throw ParseError(where + ": default_box must be an array of 4 reals");
        }
        z.default_box = {box[0].get<double>(), box[1].get<double>(), box[2].get<double>(),
                         box[3].get<double>()};
        z.feather_px = obj.at("feather_px").get<int>();
        return z;
    } catch (const json::exception& e) {
        throw ParseError(where + ": " + e.what());
    }
}

}  // namespace

AgingScore AgingScore::from_raw(const ZoneSpec& zone, double raw) {
    return AgingScore{zone.zone_id, raw, normalize_score(raw, zone.scale_max)};
}

void validate_zone(const ZoneSpec& z) {
    const std::string where = "zone \"" + z.zone_id + "\"";
    if (z.zone_id.empty()) {
        throw ValidationError("zone with empty zone_id");
    }
    if (z.display_noun.empty() || z.zone_noun.empty()) {
        throw ValidationError(where + ": display_noun and zone_noun must be non-empty");
    }
    if (!(z.scale_max > 0.0) || !std::isfinite(z.scale_max)) {
        throw ValidationError(where + ": scale_max must be positive");
    }
    const FracBox& b = z.default_box;
    if (!(0.0 <= b.x0 && b.x0 < b.x1 && b.x1 <= 1.0 && 0.0 <= b.y0 && b.y0 < b.y1 && b.y1 <= 1.0)) {
        throw ValidationError(where + ": default_box must satisfy 0<=x0<x1<=1 and 0<=y0<y1<=1");
    }
    if (z.feather_px < 0) {
        throw ValidationError(where + ": feather_px must be non-negative");
    }
}

ZoneRegistry::ZoneRegistry(std::vector<ZoneSpec> zones) : zones_(std::move(zones)) {
    std::set<std::string> seen;
    for (const auto& z : zones_) {
        validate_zone(z);
        if (!seen.insert(z.zone_id).second) {
            throw ValidationError("duplicate zone_id \"" + z.zone_id + "\"");
        }
    }
}

const ZoneSpec* ZoneRegistry::find(std::string_view zone_id) const noexcept {
    for (const auto& z : zones_) {
        if (z.zone_id == zone_id) {
            return &z;
        }
    }
    return nullptr;
}

const ZoneSpec& ZoneRegistry::at(std::string_view zone_id) const {
    if (const ZoneSpec* z = find(zone_id)) {
        return *z;
    }
    throw ValidationError("unknown zone_id \"" + std::string(zone_id) + "\"; valid ids: " + ids_joined());
}

std::optional<std::size_t> ZoneRegistry::index_of(std::string_view zone_id) const noexcept {
    for (std::size_t i = 0; i < zones_.size(); ++i) {
        if (zones_[i].zone_id == zone_id) {
            return i;
        }
    }
    return std::nullopt;
}

std::vector<std::string> ZoneRegistry::ids() const {
    std::vector<std::string> out;
    out.reserve(zones_.size());
    for (const auto& z : zones_) {
        out.push_back(z.zone_id);
    }
    return out;
}

std::string ZoneRegistry::ids_joined() const {
    std::string out;
    for (const auto& z : zones_) {
        out += (out.empty() ? "" : ", ") + z.zone_id;
    }
    return out;
}

std::string ZoneRegistry::to_json() const {
    json arr = json::array();
    for (const auto& z : zones_) {
        arr.push_back({{"zone_id", z.zone_id},
                       {"display_noun", z.display_noun},
                       {"zone_noun", z.zone_noun},
                       {"scale_max", z.scale_max},
                       {"default_box", {z.default_box.x0, z.default_box.y0, z.default_box.x1, z.default_box.y1}},
                       {"feather_px", z.feather_px}});
    }
    return arr.dump();
}

std::uint64_t ZoneRegistry::hash() const {
    const std::string s = to_json();
    return fnv1a({reinterpret_cast<const unsigned char*>(s.data()), s.size()});
}

ZoneRegistry parse_zone_registry(std::string_view json_text, const std::string& source) {
    json doc;
    try {
        doc = json::parse(json_text.begin(), json_text.end());
    } catch (const json::parse_error& e) {
        throw ParseError(source + ": " + e.what());
    }
    if (!doc.is_array()) {
        throw ParseError(source + ": top-level value must be an array of zone records");
    }
    std::vector<ZoneSpec> zones;
    for (std::size_t i = 0; i < doc.size(); ++i) {
        zones.push_back(parse_zone(doc[i], i, source));
    }
    return ZoneRegistry(std::move(zones));
}

ZoneRegistry load_zone_registry(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw IoError(path, "cannot open zone registry");
    }
    std::stringstream ss;
    ss << in.rdbuf();
    return parse_zone_registry(ss.str(), path);
}

std::string_view default_zone_registry_json() { return kDefaultRegistry; }

const ZoneRegistry& default_zone_registry() {
    static const ZoneRegistry registry = parse_zone_registry(kDefaultRegistry, "<default registry>");
    return registry;
}

double normalize_score(double raw, double scale_max) {
    if (!(scale_max > 0.0)) {
        throw DomainError("scale_max must be positive");
    }
    if (!(raw >= 0.0 && raw <= scale_max)) {
        std::ostringstream os;
        os << "aging score " << raw << " outside [0, " << scale_max << "]";
        throw DomainError(os.str());
    }
    return raw / scale_max;
}

double normalized_from_percent(double percent) {
    if (!(percent >= 0.0 && percent <= 100.0)) {
        std::ostringstream os;
        os << "percent " << percent << " outside [0, 100]";
        throw DomainError(os.str());
    }
    return percent / 100.0;
}

int percent_token(double normalized) {
    // The nudge keeps decimal ties such as 0.285 rounding up despite binary representation.
    return static_cast<int>(std::floor(normalized * 100.0 + 0.5 + 1e-9));
}

std::string build_full_prompt(const ZoneSpec& zone, std::string_view ethnicity, double normalized) {
    if (!(normalized >= 0.0 && normalized <= 1.0)) {
        throw DomainError("normalized score must lie in [0,1]");
    }
    std::string out = "image of ";
    out += zone.display_noun;
    out += " with an aging score of ";
    out += std::to_string(percent_token(normalized));
    out += "% for a person of ";
    out += ethnicity;
    out += " ethnicity";
    return out;
}

std::string build_zone_prompt(const ZoneSpec& zone) { return "image of " + zone.zone_noun; }

double sample_target_score(std::mt19937_64& rng) {
    return static_cast<double>(uniform_int(rng, 0, kTargetGridSteps)) / kTargetGridSteps;
}

PromptBundle sample_target_prompt(const ZoneSpec& zone, std::string_view ethnicity,
                                  double source_normalized, std::mt19937_64& rng) {
    PromptBundle b;
    b.target_normalized = sample_target_score(rng);
    b.p_full = build_full_prompt(zone, ethnicity, source_normalized);
    b.p_zone = build_zone_prompt(zone);
    b.p_target = build_full_prompt(zone, ethnicity, b.target_normalized);
    return b;
}

}  // namespace ldla
