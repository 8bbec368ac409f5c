// Copyright (C) 2026 The ldla Authors
// SPDX-License-Identifier: Apache-2.0

#include "helpers.hpp"

#include "ldla/autodiff.hpp"
#include "ldla/errors.hpp"

using namespace ldla;
using namespace ldla::test;

namespace {

// Straightforward zero-padded convolution used as the reference.
Tensor reference_conv(const Tensor& x, const Tensor& w, const Tensor& b) {
    const int C = x.channels(), H = x.height(), W = x.width(), O = w.dim(0), K = w.dim(2), P = K / 2;
    Tensor out = Tensor::grid(O, H, W);
    for (int o = 0; o < O; ++o)
        for (int y = 0; y < H; ++y)
            for (int xx = 0; xx < W; ++xx) {
                double acc = b[static_cast<std::size_t>(o)];
                for (int c = 0; c < C; ++c)
                    for (int ky = 0; ky < K; ++ky)
                        for (int kx = 0; kx < K; ++kx) {
                            const int sy = y + ky - P, sx = xx + kx - P;
                            if (sy < 0 || sy >= H || sx < 0 || sx >= W) continue;
                            acc += w[((static_cast<std::size_t>(o) * C + c) * K + ky) * K + kx] * x.at(c, sy, sx);
                        }
                out.at(o, y, xx) = acc;
            }
    return out;
}

ad::Var sum_sq(ad::Graph& g, ad::Var v) {
    const Tensor& t = g.value(v);
    return ad::mse(g, v, g.constant(Tensor(t.shape(), 0.0)));
}

}  // namespace

TEST_CASE("conv2d matches a direct convolution") {
    for (const int k : {1, 3, 5}) {
        const Tensor x = random_tensor({3, 7, 6}, 1);
        const Tensor w = random_tensor({4, 3, k, k}, 2);
        const Tensor b = random_tensor({4}, 3);
        ad::Graph g;
        const Tensor got = g.value(ad::conv2d(g, g.constant(x), g.constant(w), g.constant(b)));
        CHECK(max_abs_diff(got, reference_conv(x, w, b)) < 1e-12);
    }
}

TEST_CASE("conv2d rejects mismatched shapes") {
    ad::Graph g;
    const auto x = g.constant(Tensor::grid(3, 4, 4));
    CHECK_THROWS_AS(ad::conv2d(g, x, g.constant(Tensor({2, 2, 3, 3})), g.constant(Tensor({2}))), ShapeError);
    CHECK_THROWS_AS(ad::conv2d(g, x, g.constant(Tensor({2, 3, 2, 2})), g.constant(Tensor({2}))), ShapeError);
    CHECK_THROWS_AS(ad::conv2d(g, x, g.constant(Tensor({2, 3, 3, 3})), g.constant(Tensor({3}))), ShapeError);
}

TEST_CASE("gradients match central differences") {
    SUBCASE("conv2d") {
        const auto fn = [](ad::Graph& g, const std::vector<ad::Var>& v) { return sum_sq(g, ad::conv2d(g, v[0], v[1], v[2])); };
        CHECK(max_grad_error(fn, {random_tensor({2, 4, 5}, 4), random_tensor({3, 2, 3, 3}, 5), random_tensor({3}, 6)}) < 1e-6);
    }
    SUBCASE("pooling and upsampling") {
        const auto fn = [](ad::Graph& g, const std::vector<ad::Var>& v) {
            return sum_sq(g, ad::upsample2(g, ad::avg_pool2(g, v[0])));
        };
        CHECK(max_grad_error(fn, {random_tensor({2, 4, 6}, 7)}) < 1e-6);
    }
    SUBCASE("concat, film and channel mean") {
        const auto fn = [](ad::Graph& g, const std::vector<ad::Var>& v) {
            const ad::Var c = ad::concat_channels(g, v[0], v[1]);
            return sum_sq(g, ad::channel_mean(g, ad::film(g, c, v[2])));
        };
        CHECK(max_grad_error(fn, {random_tensor({2, 3, 3}, 8), random_tensor({1, 3, 3}, 9), random_tensor({6}, 10)}) < 1e-6);
    }
    SUBCASE("linear and activations") {
        const auto fn = [](ad::Graph& g, const std::vector<ad::Var>& v) {
            return sum_sq(g, ad::sigmoid(g, ad::silu(g, ad::linear(g, v[0], v[1], v[2]))));
        };
        CHECK(max_grad_error(fn, {random_tensor({3, 4}, 11), random_tensor({4}, 12), random_tensor({3}, 13)}) < 1e-6);
    }
    SUBCASE("lincomb, sub, scale and weighted sums") {
        const auto fn = [](ad::Graph& g, const std::vector<ad::Var>& v) {
            const ad::Var a = ad::lincomb(g, 0.3, v[0], -1.7, v[1]);
            const ad::Var b = ad::scale(g, ad::sub(g, ad::add(g, a, v[0]), v[1]), 2.5);
            return ad::weighted_sum(g, {{0.5, ad::mse(g, a, v[1])}, {2.0, sum_sq(g, b)}});
        };
        CHECK(max_grad_error(fn, {random_tensor({5}, 14), random_tensor({5}, 15)}) < 1e-6);
    }
}

TEST_CASE("constants never receive gradient buffers") {
    ad::Graph g;
    const auto c = g.constant(random_tensor({3}, 16));
    const auto p = g.parameter(random_tensor({3}, 17));
    const auto out = ad::mse(g, c, p);
    CHECK_FALSE(g.requires_grad(c));
    CHECK(g.requires_grad(out));
    g.backward(out);
    CHECK_FALSE(g.has_grad(c.id));
    CHECK(g.grad(c) == Tensor({3}, 0.0));
    // d/dp mean((c-p)^2) = -2 (c - p) / n
    const Tensor gp = g.grad(p);
    for (std::size_t i = 0; i < 3; ++i) {
        CHECK(gp[i] == doctest::Approx(-2.0 * (g.value(c)[i] - g.value(p)[i]) / 3.0));
    }
}

TEST_CASE("values stay addressable while the graph grows") {
    ad::Graph g;
    const auto x = g.constant(Tensor({2}, 1.0));
    const Tensor& ref = g.value(x);
    for (int i = 0; i < 1000; ++i) {
        g.constant(Tensor({2}, static_cast<double>(i)));
    }
    CHECK(ref[0] == 1.0);
    CHECK(g.size() == 1001);
}

TEST_CASE("backward needs a scalar root") {
    ad::Graph g;
    const auto p = g.parameter(Tensor({3}, 1.0));
    CHECK_THROWS(g.backward(ad::scale(g, p, 2.0)));
}
