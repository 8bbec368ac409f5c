// Copyright (C) 2026 The ldla Authors
// SPDX-License-Identifier: Apache-2.0

#include "helpers.hpp"

#include "ldla/atlas.hpp"
#include "ldla/codec.hpp"
#include "ldla/data.hpp"
#include "ldla/errors.hpp"

#include <fstream>
#include <sstream>

using namespace ldla;
using ldla::test::random_image;
using ldla::test::TempDir;

namespace {

std::vector<Tensor> corpus_crops(int n, int size) {
    SyntheticCorpusConfig cfg;
    cfg.crop_size = size;
    const auto& reg = default_zone_registry();
    std::vector<Tensor> out;
    for (int i = 0; i < n; ++i) {
        Rng rng = derive_rng(5, {static_cast<std::uint64_t>(i)});
        const auto& zone = reg.at(i % 2 ? "forehead" : "glabellar");
        out.push_back(synthesize_crop(zone, (i % 11) / 10.0, rng, cfg));
    }
    return out;
}

}  // namespace

TEST_CASE("identity codec is bitwise lossless") {
    IdentityCodec c;
    const Tensor img = random_image(16, 12, 1);
    CHECK(c.decode(c.encode(img)) == img);
    CHECK(c.encode(img) == img);
}

TEST_CASE("patch codec basis has orthonormal rows") {
    const auto crops = corpus_crops(12, 32);
    const PatchCodec c = PatchCodec::fit(crops, 4, 4);
    const Tensor& b = c.basis();
    REQUIRE(b.dim(0) == 4);
    REQUIRE(b.dim(1) == 48);
    for (int i = 0; i < 4; ++i) {
        for (int j = 0; j < 4; ++j) {
            double dot = 0.0;
            for (int k = 0; k < 48; ++k) dot += b[i * 48 + k] * b[j * 48 + k];
            CHECK(dot == doctest::Approx(i == j ? 1.0 : 0.0).epsilon(1e-9));
        }
    }
}

TEST_CASE("patch codec shapes and projection identities") {
    const auto crops = corpus_crops(12, 32);
    const PatchCodec c = PatchCodec::fit(crops, 4, 4);
    const Tensor z = c.encode(crops[0]);
    CHECK(z.shape() == std::vector<int>{4, 8, 8});
    const Tensor img = c.decode(z);
    CHECK(img.shape() == std::vector<int>{3, 32, 32});
    // Orthonormal rows: encoding a decoded latent returns it, and
    // reconstruction is a projection.
    CHECK(max_abs_diff(c.encode(img), z) < 1e-10);
    CHECK(max_abs_diff(c.decode(c.encode(img)), img) < 1e-10);
    const Tensor other = ldla::test::random_tensor({4, 8, 8}, 3);
    CHECK(max_abs_diff(c.encode(c.decode(other)), other) < 1e-10);
}

TEST_CASE("patch codec reconstructs wrinkle crops") {
    const auto train = corpus_crops(40, 32);
    const PatchCodec c = PatchCodec::fit(train, 4, 4);
    std::vector<Tensor> held;
    for (int i = 0; i < 8; ++i) {
        Rng rng = derive_rng(77, {static_cast<std::uint64_t>(i)});
        SyntheticCorpusConfig cfg;
        cfg.crop_size = 32;
        held.push_back(synthesize_crop(default_zone_registry().at(i % 2 ? "forehead" : "glabellar"), 0.1 * i, rng, cfg));
    }
    CHECK(reconstruction_error(c, held) < 0.05);
}

TEST_CASE("codec write and read round trip") {
    TempDir dir("codec");
    const PatchCodec c = PatchCodec::fit(corpus_crops(6, 16), 4, 3);
    save_codec(c, dir.str("c.bin"));
    const auto back = load_codec(dir.str("c.bin"));
    CHECK(back->kind() == "patch");
    CHECK(back->checksum() == c.checksum());
    const Tensor img = random_image(16, 16, 9);
    CHECK(back->encode(img) == c.encode(img));

    save_codec(IdentityCodec{}, dir.str("i.bin"));
    CHECK(load_codec(dir.str("i.bin"))->kind() == "identity");
}

TEST_CASE("codec errors") {
    const PatchCodec c = PatchCodec::fit(corpus_crops(4, 16), 4, 4);
    CHECK_THROWS_AS(c.encode(random_image(15, 16, 1)), ShapeError);
    CHECK_THROWS_AS(c.encode(Tensor({1, 16, 16})), ShapeError);
    CHECK_THROWS_AS(c.decode(Tensor({3, 4, 4})), ShapeError);
    CHECK_THROWS_AS(PatchCodec::fit(corpus_crops(2, 16), 4, 0), ConfigError);
    CHECK_THROWS_AS(PatchCodec::fit(corpus_crops(2, 16), 4, 49), ConfigError);
    CHECK_THROWS_AS(PatchCodec::fit(std::vector<Tensor>{}, 4, 4), ConfigError);
    CHECK_THROWS_AS(load_codec("/nonexistent/dir/codec.bin"), IoError);
    std::istringstream junk("garbage bytes here");
    CHECK_THROWS_AS(read_codec(junk), ParseError);
}
