// Copyright (C) 2026 The ldla Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include "ldla/atlas.hpp"
#include "ldla/tensor.hpp"

#include <map>
#include <memory>
#include <optional>
#include <string>

namespace ldla {

/// Half-open pixel rectangle [x0, x1) x [y0, y1).
struct PixelRect {
    int x0 = 0, y0 = 0, x1 = 0, y1 = 0;

    int width() const noexcept { return x1 - x0; }
    int height() const noexcept { return y1 - y0; }
    bool contains(int x, int y) const noexcept { return x >= x0 && x < x1 && y >= y0 && y < y1; }
    friend bool operator==(const PixelRect&, const PixelRect&) = default;
};

struct CropRegion {
    PixelRect rect;
    int feather_px = 0;
};

struct Point {
    double x = 0.0, y = 0.0;
};

/// Named landmark points in face pixel coordinates.
using Landmarks = std::map<std::string, Point>;

/// How a zone's rectangle follows from landmarks: the bounding box of the
/// named points, grown outward on each side by a multiple of the inter-ocular
/// distance (negative values shrink it).
struct LandmarkRecipe {
    std::vector<std::string> points;
    double left = 0.0, top = 0.0, right = 0.0, bottom = 0.0;
};

// Built-in recipe for the eight shipped zone ids.
const LandmarkRecipe* landmark_recipe(std::string_view zone_id);

// Landmarks used by every recipe, including the two eye centres that set the unit length.
const std::vector<std::string>& required_landmarks();

/// Source of landmarks for a face. Detection itself lives outside the library.
class LandmarkProvider {
public:
    virtual ~LandmarkProvider() = default;
    virtual Landmarks detect(const Tensor& face) const = 0;
};

/// Reads landmarks from a JSON fixture: {"name": [x, y], ...}.
class FixtureLandmarks final : public LandmarkProvider {
public:
    explicit FixtureLandmarks(std::string path) : path_(std::move(path)) {}
    Landmarks detect(const Tensor& face) const override;

private:
    std::string path_;
};

/// Runs `command <png>` and parses the fixture-format JSON it prints on stdout.
class ExternalLandmarks final : public LandmarkProvider {
public:
    explicit ExternalLandmarks(std::string command) : command_(std::move(command)) {}
    Landmarks detect(const Tensor& face) const override;

private:
    std::string command_;
};

Landmarks parse_landmarks(const std::string& json_text, const std::string& source = "<memory>");

// Fraction box -> pixels: floor of each scaled corner.
PixelRect box_to_rect(const FracBox& box, int width, int height);

// Feather width at face scale: zone.feather_px is given at crop resolution.
int face_feather(const ZoneSpec& zone, const PixelRect& rect, int crop_size = 128);

/// Throws GeometryError on degenerate rectangles or missing landmarks.
CropRegion locate_zone(int face_width, int face_height, const ZoneSpec& zone,
                       const std::optional<Landmarks>& landmarks = std::nullopt, int crop_size = 128);

/// Bilinear resampling with pixel-centre alignment; same-size input is copied.
Tensor resize_bilinear(const Tensor& image, int out_width, int out_height);

Tensor extract_crop(const Tensor& face, const CropRegion& region, int out_size = 128);

/// alpha(i,j) = clamp(min distance to the rect border / feather, 0, 1), shape (h, w).
Tensor feather_mask(const CropRegion& region);

// out = alpha*new + (1-alpha)*old inside the rect, clamped between old and new.
Tensor blend_crop(const Tensor& face, const CropRegion& region, const Tensor& new_crop, const Tensor& mask);

}  // namespace ldla
