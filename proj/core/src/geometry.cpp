// Copyright (C) 2026 The ldla Authors
// SPDX-License-Identifier: Apache-2.0

#include "ldla/geometry.hpp"

#include "ldla/errors.hpp"
#include "ldla/image_io.hpp"

#include <json.hpp>

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>

namespace ldla {

namespace {

struct NamedRecipe {
    const char* zone_id;
    LandmarkRecipe recipe;
};

const std::vector<NamedRecipe>& recipes() {
    static const std::vector<NamedRecipe> table = {
        {"forehead", {{"brow_left_outer", "brow_right_outer", "brow_left_inner", "brow_right_inner"}, 0.0, 0.8, 0.0, -0.15}},
        {"glabellar", {{"brow_left_inner", "brow_right_inner"}, 0.15, 0.25, 0.15, 0.2}},
        {"nasolabial_folds", {{"nose_left", "nose_right", "mouth_left", "mouth_right"}, 0.2, 0.05, 0.2, 0.05}},
        {"inter_ocular", {{"eye_left_inner", "eye_right_inner", "nose_bridge"}, 0.05, 0.15, 0.05, 0.15}},
        {"upper_lip", {{"nose_left", "nose_right", "lip_top"}, 0.1, -0.05, 0.1, 0.02}},
        {"under_eye", {{"eye_left_outer", "eye_right_outer", "eye_left_bottom", "eye_right_bottom"}, 0.0, -0.1, 0.0, 0.35}},
        {"lip_corners", {{"mouth_left", "mouth_right", "lip_bottom"}, 0.2, 0.1, 0.2, 0.1}},
        {"crows_feet", {{"eye_left_outer", "eye_right_outer"}, 0.45, 0.2, 0.45, 0.2}},
    };
    return table;
}

const Point& landmark(const Landmarks& lm, const std::string& name) {
    const auto it = lm.find(name);
    if (it == lm.end()) {
        throw GeometryError("landmark \"" + name + "\" missing");
    }
    return it->second;
}

void require_image(const Tensor& t, const char* what) {
    if (t.rank() != 3 || t.height() < 1 || t.width() < 1) {
        throw ShapeError(std::string(what) + ": expected a (C,H,W) image, got " + t.shape_string());
    }
}

}  // namespace

const LandmarkRecipe* landmark_recipe(std::string_view zone_id) {
    for (const auto& r : recipes()) {
        if (zone_id == r.zone_id) {
            return &r.recipe;
        }
    }
    return nullptr;
}

const std::vector<std::string>& required_landmarks() {
    static const std::vector<std::string> names = [] {
        std::vector<std::string> out = {"eye_left_center", "eye_right_center"};
        for (const auto& r : recipes()) {
            for (const auto& p : r.recipe.points) {
                if (std::find(out.begin(), out.end(), p) == out.end()) {
                    out.push_back(p);
                }
            }
        }
        return out;
    }();
    return names;
}

Landmarks parse_landmarks(const std::string& json_text, const std::string& source) {
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(json_text);
    } catch (const nlohmann::json::parse_error& e) {
        throw ParseError(source + ": " + e.what());
    }
    if (!j.is_object()) {
        throw ParseError(source + ": landmarks must be a JSON object of name -> [x, y]");
    }
    Landmarks out;
    for (const auto& [name, v] : j.items()) {
        if (!v.is_array() || v.size() != 2 || !v[0].is_number() || !v[1].is_number()) {
            throw ParseError(source + ": landmark \"" + name + "\" must be [x, y]");
        }
        out[name] = {v[0].get<double>(), v[1].get<double>()};
    }
    return out;
}

Landmarks FixtureLandmarks::detect(const Tensor&) const {
    std::ifstream in(path_);
    if (!in) {
        throw IoError(path_, "cannot open landmark fixture");
    }
    std::stringstream ss;
    ss << in.rdbuf();
    return parse_landmarks(ss.str(), path_);
}

Landmarks ExternalLandmarks::detect(const Tensor& face) const {
    namespace fs = std::filesystem;
    const fs::path tmp = fs::temp_directory_path() /
                         ("ldla_landmarks_" + to_hex(checksum(face)) + ".png");
    write_png(tmp.string(), face);
    const std::string cmd = command_ + " '" + tmp.string() + "'";
    std::string output;
    int status = -1;
    if (FILE* pipe = ::popen(cmd.c_str(), "r")) {
        std::array<char, 4096> buf{};
        std::size_t n = 0;
        while ((n = std::fread(buf.data(), 1, buf.size(), pipe)) > 0) {
            output.append(buf.data(), n);
        }
        status = ::pclose(pipe);
    }
    std::error_code ec;
    fs::remove(tmp, ec);
    if (status != 0) {
        throw GeometryError("landmark command failed: " + command_);
    }
    return parse_landmarks(output, command_);
}

PixelRect box_to_rect(const FracBox& box, int width, int height) {
    // The epsilon absorbs representation error such as 0.3 * 1000 = 299.99999999999994.
    auto px = [](double frac, int size) {
        return std::clamp(static_cast<int>(std::floor(frac * size + 1e-9)), 0, size);
    };
    return {px(box.x0, width), px(box.y0, height), px(box.x1, width), px(box.y1, height)};
}

int face_feather(const ZoneSpec& zone, const PixelRect& rect, int crop_size) {
    const int side = std::min(rect.width(), rect.height());
    const int f = static_cast<int>(std::lround(zone.feather_px * static_cast<double>(side) / crop_size));
    return std::clamp(f, 0, side / 2);
}

CropRegion locate_zone(int face_width, int face_height, const ZoneSpec& zone, const std::optional<Landmarks>& landmarks,
                       int crop_size) {
    if (face_width < 1 || face_height < 1) {
        throw GeometryError("face has no pixels");
    }
    PixelRect rect;
    if (landmarks) {
        const LandmarkRecipe* recipe = landmark_recipe(zone.zone_id);
        if (!recipe) {
            throw GeometryError("no landmark recipe for zone " + zone.zone_id);
        }
        const Point& el = landmark(*landmarks, "eye_left_center");
        const Point& er = landmark(*landmarks, "eye_right_center");
        const double iod = std::hypot(er.x - el.x, er.y - el.y);
        if (!(iod > 0.0)) {
            throw GeometryError("eye centres coincide");
        }
        double x0 = 1e300, y0 = 1e300, x1 = -1e300, y1 = -1e300;
        for (const auto& name : recipe->points) {
            const Point& p = landmark(*landmarks, name);
            x0 = std::min(x0, p.x);
            y0 = std::min(y0, p.y);
            x1 = std::max(x1, p.x);
            y1 = std::max(y1, p.y);
        }
        x0 -= recipe->left * iod;
        y0 -= recipe->top * iod;
        x1 += recipe->right * iod;
        y1 += recipe->bottom * iod;
        rect = {std::clamp(static_cast<int>(std::lround(x0)), 0, face_width),
                std::clamp(static_cast<int>(std::lround(y0)), 0, face_height),
                std::clamp(static_cast<int>(std::lround(x1)), 0, face_width),
                std::clamp(static_cast<int>(std::lround(y1)), 0, face_height)};
    } else {
        rect = box_to_rect(zone.default_box, face_width, face_height);
    }
    if (rect.width() <= 0 || rect.height() <= 0) {
        throw GeometryError("zone " + zone.zone_id + " maps to an empty rectangle");
    }
    return {rect, face_feather(zone, rect, crop_size)};
}

Tensor resize_bilinear(const Tensor& image, int out_width, int out_height) {
    require_image(image, "resize_bilinear");
    if (out_width < 1 || out_height < 1) {
        throw ShapeError("resize_bilinear: output size must be positive");
    }
    const int c = image.channels(), h = image.height(), w = image.width();
    if (h == out_height && w == out_width) {
        return image;
    }
    struct Tap {
        int i0, i1;
        double f;
    };
    auto taps = [](int in, int out) {
        std::vector<Tap> t(static_cast<std::size_t>(out));
        const double s = static_cast<double>(in) / out;
        for (int o = 0; o < out; ++o) {
            const double src = std::clamp((o + 0.5) * s - 0.5, 0.0, static_cast<double>(in - 1));
            const int i0 = static_cast<int>(std::floor(src));
            const int i1 = std::min(i0 + 1, in - 1);
            t[static_cast<std::size_t>(o)] = {i0, i1, src - i0};
        }
        return t;
    };
    const auto tx = taps(w, out_width);
    const auto ty = taps(h, out_height);
    Tensor out = Tensor::grid(c, out_height, out_width);
    for (int ch = 0; ch < c; ++ch) {
        for (int y = 0; y < out_height; ++y) {
            const Tap& a = ty[static_cast<std::size_t>(y)];
            for (int x = 0; x < out_width; ++x) {
                const Tap& b = tx[static_cast<std::size_t>(x)];
                const double top = image.at(ch, a.i0, b.i0) * (1.0 - b.f) + image.at(ch, a.i0, b.i1) * b.f;
                const double bot = image.at(ch, a.i1, b.i0) * (1.0 - b.f) + image.at(ch, a.i1, b.i1) * b.f;
                out.at(ch, y, x) = top * (1.0 - a.f) + bot * a.f;
            }
        }
    }
    return out;
}

Tensor extract_crop(const Tensor& face, const CropRegion& region, int out_size) {
    require_image(face, "extract_crop");
    const PixelRect& r = region.rect;
    if (r.x0 < 0 || r.y0 < 0 || r.x1 > face.width() || r.y1 > face.height() || r.width() <= 0 || r.height() <= 0) {
        throw GeometryError("crop rectangle outside the face");
    }
    Tensor sub = Tensor::grid(face.channels(), r.height(), r.width());
    for (int c = 0; c < face.channels(); ++c) {
        for (int y = 0; y < r.height(); ++y) {
            for (int x = 0; x < r.width(); ++x) {
                sub.at(c, y, x) = face.at(c, r.y0 + y, r.x0 + x);
            }
        }
    }
    return resize_bilinear(sub, out_size, out_size);
}

Tensor feather_mask(const CropRegion& region) {
    const int w = region.rect.width(), h = region.rect.height();
    if (w <= 0 || h <= 0) {
        throw GeometryError("feather_mask: empty rectangle");
    }
    if (region.feather_px < 0 || region.feather_px > std::min(w, h) / 2) {
        throw GeometryError("feather_mask: feather must lie in [0, min(w,h)/2]");
    }
    Tensor mask({h, w}, 1.0);
    if (region.feather_px == 0) {
        return mask;
    }
    const double f = region.feather_px;
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            const int d = std::min({x, w - 1 - x, y, h - 1 - y});
            mask[static_cast<std::size_t>(y) * w + x] = std::clamp(d / f, 0.0, 1.0);
        }
    }
    return mask;
}

Tensor blend_crop(const Tensor& face, const CropRegion& region, const Tensor& new_crop, const Tensor& mask) {
    require_image(face, "blend_crop");
    const PixelRect& r = region.rect;
    if (new_crop.rank() != 3 || new_crop.channels() != face.channels() || new_crop.height() != r.height() ||
        new_crop.width() != r.width()) {
        throw ShapeError("blend_crop: crop " + new_crop.shape_string() + " does not match rect " +
                         std::to_string(r.width()) + "x" + std::to_string(r.height()));
    }
    if (mask.rank() != 2 || mask.dim(0) != r.height() || mask.dim(1) != r.width()) {
        throw ShapeError("blend_crop: mask " + mask.shape_string() + " does not match rect");
    }
    if (r.x0 < 0 || r.y0 < 0 || r.x1 > face.width() || r.y1 > face.height()) {
        throw GeometryError("blend_crop: rectangle outside the face");
    }
    Tensor out = face;
    for (int c = 0; c < face.channels(); ++c) {
        for (int y = 0; y < r.height(); ++y) {
            for (int x = 0; x < r.width(); ++x) {
                const double a = mask[static_cast<std::size_t>(y) * r.width() + x];
                const double n = new_crop.at(c, y, x);
                double& o = out.at(c, r.y0 + y, r.x0 + x);
                if (n == o) {
                    continue;
                }
                const double v = a * n + (1.0 - a) * o;
                o = std::clamp(v, std::min(o, n), std::max(o, n));
            }
        }
    }
    return out;
}

}  // namespace ldla
