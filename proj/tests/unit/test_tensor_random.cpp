// Copyright (C) 2026 The ldla Authors
// SPDX-License-Identifier: Apache-2.0

#include "helpers.hpp"

#include "ldla/errors.hpp"
#include "ldla/random.hpp"
#include "ldla/tensor.hpp"

#include <cmath>
#include <set>

using namespace ldla;

TEST_CASE("tensor construction and shape checks") {
    const Tensor t = Tensor::grid(2, 3, 4, 1.5);
    CHECK(t.size() == 24);
    CHECK(t.rank() == 3);
    CHECK(t.at(1, 2, 3) == 1.5);
    CHECK(t.shape_string() == "(2,3,4)");
    CHECK_THROWS_AS(Tensor({2, -1}), ShapeError);
    CHECK_THROWS_AS(Tensor({2, 2}, std::vector<double>{1, 2, 3}), ShapeError);
    CHECK_THROWS_AS(require_same_shape(Tensor({2}), Tensor({3}), "ctx"), ShapeError);
}

TEST_CASE("lincomb, errors and finiteness") {
    const Tensor a({3}, std::vector<double>{1, 2, 3});
    const Tensor b({3}, std::vector<double>{4, 5, 6});
    const Tensor c = lincomb(2.0, a, -1.0, b);
    CHECK(c == Tensor({3}, std::vector<double>{-2, -1, 0}));
    CHECK(max_abs_diff(a, b) == 3.0);
    CHECK(mean_squared_error(a, b) == 9.0);
    Tensor d = a;
    CHECK(d.all_finite());
    d[1] = std::nan("");
    CHECK_FALSE(d.all_finite());
}

TEST_CASE("checksum sees every value and the shape") {
    const Tensor a({2, 2}, std::vector<double>{1, 2, 3, 4});
    Tensor b = a;
    CHECK(checksum(a) == checksum(b));
    b[3] = std::nextafter(4.0, 5.0);
    CHECK(checksum(a) != checksum(b));
    CHECK(checksum(a) != checksum(Tensor({4}, std::vector<double>{1, 2, 3, 4})));
    CHECK(to_hex(0xabcULL) == "0000000000000abc");
}

TEST_CASE("derived streams are deterministic and distinct") {
    Rng a = derive_rng(5, {1, 2});
    Rng b = derive_rng(5, {1, 2});
    Rng c = derive_rng(5, {2, 1});
    Rng d = derive_rng(6, {1, 2});
    const auto va = a(), vb = b(), vc = c(), vd = d();
    CHECK(va == vb);
    CHECK(va != vc);
    CHECK(va != vd);
}

TEST_CASE("uniform draws stay in range and cover it") {
    Rng rng = derive_rng(9, {});
    std::set<int> seen;
    for (int i = 0; i < 2000; ++i) {
        const double u = uniform01(rng);
        REQUIRE(u >= 0.0);
        REQUIRE(u < 1.0);
        const int k = uniform_int(rng, -2, 3);
        REQUIRE(k >= -2);
        REQUIRE(k <= 3);
        seen.insert(k);
    }
    CHECK(seen.size() == 6);
}

TEST_CASE("standard normal moments match N(0,1)") {
    // Monte Carlo with n = 2e5: the sample mean has sd 1/sqrt(n) ~ 0.0022.
    Rng rng = derive_rng(11, {});
    const int n = 200000;
    double s = 0, s2 = 0, s4 = 0;
    for (int i = 0; i < n; ++i) {
        const double x = standard_normal(rng);
        s += x;
        s2 += x * x;
        s4 += x * x * x * x;
    }
    CHECK(std::abs(s / n) < 4.0 / std::sqrt(n));
    CHECK(s2 / n == doctest::Approx(1.0).epsilon(0.02));
    CHECK(s4 / n == doctest::Approx(3.0).epsilon(0.05));
}
