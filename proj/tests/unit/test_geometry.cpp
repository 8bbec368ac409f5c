// Copyright (C) 2026 The ldla Authors
// SPDX-License-Identifier: Apache-2.0

#include "helpers.hpp"

#include "ldla/atlas.hpp"
#include "ldla/errors.hpp"
#include "ldla/geometry.hpp"

using namespace ldla;
using ldla::test::random_image;

namespace {

const std::string kFixture = std::string(LDLA_FIXTURE_DIR) + "/landmarks_256.json";

Tensor ramp_x(int h, int w) {
    Tensor t = Tensor::grid(1, h, w);
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) t.at(0, y, x) = x;
    return t;
}

}  // namespace

TEST_CASE("fractional boxes map to pixel rectangles") {
    CHECK(box_to_rect({0.3, 0.1, 0.7, 0.35}, 1000, 200) == PixelRect{300, 20, 700, 70});
    CHECK(box_to_rect({0.0, 0.0, 1.0, 1.0}, 37, 19) == PixelRect{0, 0, 37, 19});
    // 0.28 * 160 = 44.8, 0.72 * 160 = 115.2
    CHECK(box_to_rect({0.28, 0.1, 0.72, 0.28}, 160, 160) == PixelRect{44, 16, 115, 44});
    const CropRegion r = locate_zone(160, 160, default_zone_registry().at("forehead"));
    CHECK(r.rect == PixelRect{44, 16, 115, 44});
    // 8 px at crop scale, shortest side 28 of 128.
    CHECK(r.feather_px == 2);
}

TEST_CASE("landmark locator follows the recipes") {
    const Landmarks lm = FixtureLandmarks(kFixture).detect(Tensor::grid(3, 256, 256));
    for (const auto& name : required_landmarks()) CHECK(lm.count(name) == 1);
    const auto& reg = default_zone_registry();
    // Inter-ocular distance 64: margins 9.6 / 16 / 9.6 / 12.8 around the inner brows.
    CHECK(locate_zone(256, 256, reg.at("glabellar"), lm).rect == PixelRect{100, 74, 156, 103});
    // Outer and inner brows, 51.2 above and 9.6 trimmed below.
    CHECK(locate_zone(256, 256, reg.at("forehead"), lm).rect == PixelRect{70, 37, 186, 80});
    for (const auto& z : reg.zones()) {
        const CropRegion r = locate_zone(256, 256, z, lm);
        CHECK(r.rect.width() > 0);
        CHECK(r.rect.height() > 0);
        CHECK(r.feather_px <= std::min(r.rect.width(), r.rect.height()) / 2);
    }

    Landmarks partial = lm;
    partial.erase("brow_left_inner");
    CHECK_THROWS_AS(locate_zone(256, 256, reg.at("glabellar"), partial), GeometryError);
    Landmarks same = lm;
    same["eye_right_center"] = same["eye_left_center"];
    CHECK_THROWS_AS(locate_zone(256, 256, reg.at("glabellar"), same), GeometryError);
    CHECK_THROWS_AS(parse_landmarks("{\"a\": [1]}"), ParseError);
    CHECK_THROWS_AS(parse_landmarks("[1, 2]"), ParseError);
    CHECK_THROWS_AS(FixtureLandmarks("/nonexistent.json").detect(Tensor::grid(3, 4, 4)), IoError);
    CHECK_THROWS_AS(locate_zone(0, 10, reg.at("forehead")), GeometryError);
}

TEST_CASE("bilinear resampling on ramps") {
    const Tensor r = ramp_x(4, 16);
    const Tensor half = resize_bilinear(r, 8, 4);
    for (int x = 0; x < 8; ++x) CHECK(half.at(0, 2, x) == doctest::Approx(2 * x + 0.5));
    const Tensor twice = resize_bilinear(r, 32, 4);
    for (int x = 0; x < 32; ++x) {
        const double src = std::clamp((x + 0.5) / 2 - 0.5, 0.0, 15.0);
        CHECK(twice.at(0, 1, x) == doctest::Approx(src));
    }
    const Tensor flat(std::vector<int>{3, 7, 5}, 0.25);
    const Tensor up = resize_bilinear(flat, 13, 11);
    for (double v : up.values()) CHECK(v == doctest::Approx(0.25));
    const Tensor img = random_image(9, 9, 1);
    CHECK(resize_bilinear(img, 9, 9) == img);
    CHECK_THROWS_AS(resize_bilinear(img, 0, 3), ShapeError);
}

TEST_CASE("feather mask values") {
    const Tensor m = feather_mask({{0, 0, 41, 41}, 8});
    CHECK(m[20 * 41 + 4] == doctest::Approx(0.5));
    CHECK(m[20 * 41 + 20] == 1.0);
    CHECK(m[0] == 0.0);
    CHECK(m[20 * 41 + 8] == 1.0);
    const Tensor flat = feather_mask({{5, 5, 15, 12}, 0});
    for (double v : flat.values()) CHECK(v == 1.0);
    CHECK_THROWS_AS(feather_mask({{0, 0, 10, 10}, 6}), GeometryError);
    CHECK_THROWS_AS(feather_mask({{0, 0, 0, 10}, 0}), GeometryError);
}

TEST_CASE("blending only touches the rectangle") {
    const Tensor face = random_image(40, 50, 2);
    const CropRegion region{{10, 5, 30, 25}, 4};
    const Tensor crop = random_image(20, 20, 3);
    const Tensor mask = feather_mask(region);
    const Tensor out = blend_crop(face, region, crop, mask);
    for (int c = 0; c < 3; ++c) {
        for (int y = 0; y < 40; ++y) {
            for (int x = 0; x < 50; ++x) {
                if (!region.rect.contains(x, y)) {
                    CHECK(out.at(c, y, x) == face.at(c, y, x));
                    continue;
                }
                const double a = mask[static_cast<std::size_t>(y - 5) * 20 + (x - 10)];
                const double n = crop.at(c, y - 5, x - 10), o = face.at(c, y, x);
                CHECK(out.at(c, y, x) == doctest::Approx(a * n + (1 - a) * o));
            }
        }
    }
    // The crop is taken from the face at the same rectangle, so it round trips.
    const Tensor same = extract_crop(face, region, 20);
    CHECK(blend_crop(face, region, same, mask) == face);
    CHECK_THROWS_AS(blend_crop(face, region, random_image(19, 20, 3), mask), ShapeError);
    CHECK_THROWS_AS(blend_crop(face, {{40, 30, 60, 50}, 0}, crop, feather_mask({{40, 30, 60, 50}, 0})), GeometryError);
    CHECK_THROWS_AS(extract_crop(face, {{45, 0, 55, 10}, 0}), GeometryError);
}
