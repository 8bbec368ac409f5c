// Copyright (C) 2026 The ldla Authors
// SPDX-License-Identifier: Apache-2.0

#include "ldla/autodiff.hpp"

#include "ldla/errors.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>

namespace ldla::ad {

Var Graph::constant(Tensor value) { return push(std::move(value), false, nullptr); }

Var Graph::parameter(Tensor value) { return push(std::move(value), true, nullptr); }

Var Graph::push(Tensor value, bool requires_grad, BackwardFn fn) {
    nodes_.push_back(Node{std::move(value), Tensor{}, requires_grad, std::move(fn)});
    return Var{static_cast<int>(nodes_.size()) - 1};
}

double Graph::scalar(Var v) const {
    const Tensor& t = value(v);
    if (t.size() != 1) {
        throw ShapeError("scalar() on tensor of shape " + t.shape_string());
    }
    return t[0];
}

Tensor Graph::grad(Var v) const {
    const Node& n = nodes_.at(static_cast<std::size_t>(v.id));
    return n.grad.empty() ? zeros_like(n.value) : n.grad;
}

Tensor& Graph::grad_buffer(int id) {
    Node& n = nodes_[static_cast<std::size_t>(id)];
    if (n.grad.empty()) {
        n.grad = zeros_like(n.value);
    }
    return n.grad;
}

void Graph::backward(Var root) {
    if (value(root).size() != 1) {
        throw ShapeError("backward() requires a scalar root");
    }
    for (Node& n : nodes_) {
        n.grad = Tensor{};
    }
    if (!requires_grad(root)) {
        return;
    }
    grad_buffer(root.id)[0] = 1.0;
    for (int i = root.id; i >= 0; --i) {
        Node& n = nodes_[static_cast<std::size_t>(i)];
        if (n.backward && n.requires_grad && !n.grad.empty()) {
            n.backward(*this, i);
        }
    }
}

namespace {

bool any_grad(const Graph& g, std::initializer_list<Var> vars) {
    return std::any_of(vars.begin(), vars.end(), [&](Var v) { return g.requires_grad(v); });
}

}  // namespace

Var add(Graph& g, Var a, Var b) { return lincomb(g, 1.0, a, 1.0, b); }

Var sub(Graph& g, Var a, Var b) { return lincomb(g, 1.0, a, -1.0, b); }

Var scale(Graph& g, Var a, double s) {
    const Tensor& in = g.value(a);
    Tensor out(in.shape());
    for (std::size_t i = 0; i < in.size(); ++i) {
        out[i] = s * in[i];
    }
    return g.push(std::move(out), g.requires_grad(a), [a, s](Graph& gr, int self) {
        if (!gr.requires_grad(a)) {
            return;
        }
        const Tensor& go = gr.node_grad(self);
        Tensor& ga = gr.grad_buffer(a.id);
        for (std::size_t i = 0; i < go.size(); ++i) {
            ga[i] += s * go[i];
        }
    });
}

Var lincomb(Graph& g, double alpha, Var a, double beta, Var b) {
    Tensor out = ldla::lincomb(alpha, g.value(a), beta, g.value(b));
    return g.push(std::move(out), any_grad(g, {a, b}), [a, b, alpha, beta](Graph& gr, int self) {
        const Tensor& go = gr.node_grad(self);
        if (gr.requires_grad(a)) {
            Tensor& ga = gr.grad_buffer(a.id);
            for (std::size_t i = 0; i < go.size(); ++i) {
                ga[i] += alpha * go[i];
            }
        }
        if (gr.requires_grad(b)) {
            Tensor& gb = gr.grad_buffer(b.id);
            for (std::size_t i = 0; i < go.size(); ++i) {
                gb[i] += beta * go[i];
            }
        }
    });
}

Var weighted_sum(Graph& g, const std::vector<std::pair<double, Var>>& terms) {
    double total = 0.0;
    bool rg = false;
    for (const auto& [w, v] : terms) {
        total += w * g.scalar(v);
        rg = rg || g.requires_grad(v);
    }
    return g.push(Tensor({1}, total), rg, [terms](Graph& gr, int self) {
        const double go = gr.node_grad(self)[0];
        for (const auto& [w, v] : terms) {
            if (gr.requires_grad(v)) {
                gr.grad_buffer(v.id)[0] += w * go;
            }
        }
    });
}

Var silu(Graph& g, Var x) {
    const Tensor& in = g.value(x);
    Tensor out(in.shape());
    for (std::size_t i = 0; i < in.size(); ++i) {
        const double s = 1.0 / (1.0 + std::exp(-in[i]));
        out[i] = in[i] * s;
    }
    return g.push(std::move(out), g.requires_grad(x), [x](Graph& gr, int self) {
        if (!gr.requires_grad(x)) {
            return;
        }
        const Tensor& in = gr.node_value(x.id);
        const Tensor& go = gr.node_grad(self);
        Tensor& gx = gr.grad_buffer(x.id);
        for (std::size_t i = 0; i < in.size(); ++i) {
            const double s = 1.0 / (1.0 + std::exp(-in[i]));
            gx[i] += go[i] * s * (1.0 + in[i] * (1.0 - s));
        }
    });
}

Var sigmoid(Graph& g, Var x) {
    const Tensor& in = g.value(x);
    Tensor out(in.shape());
    for (std::size_t i = 0; i < in.size(); ++i) {
        out[i] = 1.0 / (1.0 + std::exp(-in[i]));
    }
    return g.push(std::move(out), g.requires_grad(x), [x](Graph& gr, int self) {
        if (!gr.requires_grad(x)) {
            return;
        }
        const Tensor& out = gr.node_value(self);
        const Tensor& go = gr.node_grad(self);
        Tensor& gx = gr.grad_buffer(x.id);
        for (std::size_t i = 0; i < out.size(); ++i) {
            gx[i] += go[i] * out[i] * (1.0 - out[i]);
        }
    });
}

namespace {

using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

// Unfolds zero-padded k x k neighbourhoods: row (c, ky, kx), column (y, x).
RowMatrix im2col(const Tensor& in, int K) {
    const int C = in.channels(), H = in.height(), W = in.width(), P = K / 2;
    RowMatrix cols = RowMatrix::Zero(static_cast<Eigen::Index>(C) * K * K, static_cast<Eigen::Index>(H) * W);
    for (int c = 0; c < C; ++c) {
        const double* plane = in.data() + static_cast<std::size_t>(c) * H * W;
        for (int ky = 0; ky < K; ++ky) {
            const int dy = ky - P;
            const int y0 = std::max(0, -dy), y1 = std::min(H, H - dy);
            for (int kx = 0; kx < K; ++kx) {
                const int dx = kx - P;
                const int x0 = std::max(0, -dx), x1 = std::min(W, W - dx);
                double* row = cols.data() + ((static_cast<std::size_t>(c) * K + ky) * K + kx) * H * W;
                for (int y = y0; y < y1; ++y) {
                    const double* src = plane + static_cast<std::size_t>(y + dy) * W + dx;
                    double* dst = row + static_cast<std::size_t>(y) * W;
                    for (int x = x0; x < x1; ++x) {
                        dst[x] = src[x];
                    }
                }
            }
        }
    }
    return cols;
}

// Adjoint of im2col: scatters column gradients back onto the input grid.
void col2im_add(const RowMatrix& cols, Tensor& grad, int K) {
    const int C = grad.channels(), H = grad.height(), W = grad.width(), P = K / 2;
    for (int c = 0; c < C; ++c) {
        double* plane = grad.data() + static_cast<std::size_t>(c) * H * W;
        for (int ky = 0; ky < K; ++ky) {
            const int dy = ky - P;
            const int y0 = std::max(0, -dy), y1 = std::min(H, H - dy);
            for (int kx = 0; kx < K; ++kx) {
                const int dx = kx - P;
                const int x0 = std::max(0, -dx), x1 = std::min(W, W - dx);
                const double* row = cols.data() + ((static_cast<std::size_t>(c) * K + ky) * K + kx) * H * W;
                for (int y = y0; y < y1; ++y) {
                    double* dst = plane + static_cast<std::size_t>(y + dy) * W + dx;
                    const double* src = row + static_cast<std::size_t>(y) * W;
                    for (int x = x0; x < x1; ++x) {
                        dst[x] += src[x];
                    }
                }
            }
        }
    }
}

}  // namespace

Var conv2d(Graph& g, Var x, Var weight, Var bias) {
    const Tensor& in = g.value(x);
    const Tensor& w = g.value(weight);
    const Tensor& b = g.value(bias);
    if (in.rank() != 3 || w.rank() != 4 || w.dim(1) != in.channels() || w.dim(2) != w.dim(3) ||
        w.dim(2) % 2 == 0 || b.size() != static_cast<std::size_t>(w.dim(0))) {
        throw ShapeError("conv2d: input " + in.shape_string() + ", weight " + w.shape_string() +
                         ", bias " + b.shape_string());
    }
    const int C = in.channels(), H = in.height(), W = in.width();
    const int O = w.dim(0), K = w.dim(2);
    const Eigen::Index HW = static_cast<Eigen::Index>(H) * W, CKK = static_cast<Eigen::Index>(C) * K * K;
    using ConstMap = Eigen::Map<const RowMatrix>;

    // GEMMs run on Eigen-owned copies only: vectorized kernels pick their
    // code path from pointer alignment, and vector storage alignment varies
    // between runs, which would make results differ in the last bit.
    const RowMatrix wm = ConstMap(w.data(), O, CKK);
    const RowMatrix om = wm * im2col(in, K);
    Tensor out = Tensor::grid(O, H, W);
    for (int o = 0; o < O; ++o) {
        const double bo = b[static_cast<std::size_t>(o)];
        double* dst = out.data() + static_cast<std::size_t>(o) * HW;
        for (Eigen::Index i = 0; i < HW; ++i) {
            dst[i] = om(o, i) + bo;
        }
    }

    return g.push(std::move(out), any_grad(g, {x, weight, bias}), [x, weight, bias, O, K, HW, CKK](Graph& gr, int self) {
        const RowMatrix gom = ConstMap(gr.node_grad(self).data(), O, HW);
        if (gr.requires_grad(bias)) {
            Tensor& gb = gr.grad_buffer(bias.id);
            for (int o = 0; o < O; ++o) {
                gb[static_cast<std::size_t>(o)] += gom.row(o).sum();
            }
        }
        if (gr.requires_grad(weight)) {
            const RowMatrix gw = gom * im2col(gr.node_value(x.id), K).transpose();
            double* dst = gr.grad_buffer(weight.id).data();
            for (Eigen::Index i = 0; i < gw.size(); ++i) {
                dst[i] += gw.data()[i];
            }
        }
        if (gr.requires_grad(x)) {
            const RowMatrix wm = ConstMap(gr.node_value(weight.id).data(), O, CKK);
            const RowMatrix gcols = wm.transpose() * gom;
            col2im_add(gcols, gr.grad_buffer(x.id), K);
        }
    });
}

Var avg_pool2(Graph& g, Var x) {
    const Tensor& in = g.value(x);
    if (in.rank() != 3 || in.height() % 2 || in.width() % 2) {
        throw ShapeError("avg_pool2: needs even spatial size, got " + in.shape_string());
    }
    const int C = in.channels(), H = in.height() / 2, W = in.width() / 2;
    Tensor out = Tensor::grid(C, H, W);
    for (int c = 0; c < C; ++c) {
        for (int y = 0; y < H; ++y) {
            for (int xx = 0; xx < W; ++xx) {
                out.at(c, y, xx) = 0.25 * (in.at(c, 2 * y, 2 * xx) + in.at(c, 2 * y, 2 * xx + 1) +
                                           in.at(c, 2 * y + 1, 2 * xx) + in.at(c, 2 * y + 1, 2 * xx + 1));
            }
        }
    }
    return g.push(std::move(out), g.requires_grad(x), [x, C, H, W](Graph& gr, int self) {
        if (!gr.requires_grad(x)) {
            return;
        }
        const Tensor& go = gr.node_grad(self);
        Tensor& gx = gr.grad_buffer(x.id);
        for (int c = 0; c < C; ++c) {
            for (int y = 0; y < H; ++y) {
                for (int xx = 0; xx < W; ++xx) {
                    const double v = 0.25 * go.at(c, y, xx);
                    gx.at(c, 2 * y, 2 * xx) += v;
                    gx.at(c, 2 * y, 2 * xx + 1) += v;
                    gx.at(c, 2 * y + 1, 2 * xx) += v;
                    gx.at(c, 2 * y + 1, 2 * xx + 1) += v;
                }
            }
        }
    });
}

Var upsample2(Graph& g, Var x) {
    const Tensor& in = g.value(x);
    if (in.rank() != 3) {
        throw ShapeError("upsample2: needs (C,H,W), got " + in.shape_string());
    }
    const int C = in.channels(), H = in.height(), W = in.width();
    Tensor out = Tensor::grid(C, 2 * H, 2 * W);
    for (int c = 0; c < C; ++c) {
        for (int y = 0; y < 2 * H; ++y) {
            for (int xx = 0; xx < 2 * W; ++xx) {
                out.at(c, y, xx) = in.at(c, y / 2, xx / 2);
            }
        }
    }
    return g.push(std::move(out), g.requires_grad(x), [x, C, H, W](Graph& gr, int self) {
        if (!gr.requires_grad(x)) {
            return;
        }
        const Tensor& go = gr.node_grad(self);
        Tensor& gx = gr.grad_buffer(x.id);
        for (int c = 0; c < C; ++c) {
            for (int y = 0; y < 2 * H; ++y) {
                for (int xx = 0; xx < 2 * W; ++xx) {
                    gx.at(c, y / 2, xx / 2) += go.at(c, y, xx);
                }
            }
        }
    });
}

Var concat_channels(Graph& g, Var a, Var b) {
    const Tensor& ta = g.value(a);
    const Tensor& tb = g.value(b);
    if (ta.rank() != 3 || tb.rank() != 3 || ta.height() != tb.height() || ta.width() != tb.width()) {
        throw ShapeError("concat_channels: " + ta.shape_string() + " vs " + tb.shape_string());
    }
    Tensor out = Tensor::grid(ta.channels() + tb.channels(), ta.height(), ta.width());
    std::copy(ta.data(), ta.data() + ta.size(), out.data());
    std::copy(tb.data(), tb.data() + tb.size(), out.data() + ta.size());
    const std::size_t na = ta.size();
    return g.push(std::move(out), any_grad(g, {a, b}), [a, b, na](Graph& gr, int self) {
        const Tensor& go = gr.node_grad(self);
        if (gr.requires_grad(a)) {
            Tensor& ga = gr.grad_buffer(a.id);
            for (std::size_t i = 0; i < na; ++i) {
                ga[i] += go[i];
            }
        }
        if (gr.requires_grad(b)) {
            Tensor& gb = gr.grad_buffer(b.id);
            for (std::size_t i = 0; i < gb.size(); ++i) {
                gb[i] += go[na + i];
            }
        }
    });
}

Var film(Graph& g, Var x, Var gamma_beta) {
    const Tensor& in = g.value(x);
    const Tensor& gb = g.value(gamma_beta);
    if (in.rank() != 3 || gb.size() != 2 * static_cast<std::size_t>(in.channels())) {
        throw ShapeError("film: input " + in.shape_string() + ", modulation " + gb.shape_string());
    }
    const int C = in.channels();
    const std::size_t plane = static_cast<std::size_t>(in.height()) * in.width();
    Tensor out(in.shape());
    for (int c = 0; c < C; ++c) {
        const double s = 1.0 + gb[static_cast<std::size_t>(c)];
        const double t = gb[static_cast<std::size_t>(C + c)];
        for (std::size_t i = 0; i < plane; ++i) {
            out[c * plane + i] = in[c * plane + i] * s + t;
        }
    }
    return g.push(std::move(out), any_grad(g, {x, gamma_beta}),
                  [x, gamma_beta, C, plane](Graph& gr, int self) {
        const Tensor& go = gr.node_grad(self);
        const Tensor& in = gr.node_value(x.id);
        const Tensor& gbv = gr.node_value(gamma_beta.id);
        if (gr.requires_grad(gamma_beta)) {
            Tensor& ggb = gr.grad_buffer(gamma_beta.id);
            for (int c = 0; c < C; ++c) {
                double sg = 0.0, sb = 0.0;
                for (std::size_t i = 0; i < plane; ++i) {
                    sg += go[c * plane + i] * in[c * plane + i];
                    sb += go[c * plane + i];
                }
                ggb[static_cast<std::size_t>(c)] += sg;
                ggb[static_cast<std::size_t>(C + c)] += sb;
            }
        }
        if (gr.requires_grad(x)) {
            Tensor& gx = gr.grad_buffer(x.id);
            for (int c = 0; c < C; ++c) {
                const double s = 1.0 + gbv[static_cast<std::size_t>(c)];
                for (std::size_t i = 0; i < plane; ++i) {
                    gx[c * plane + i] += s * go[c * plane + i];
                }
            }
        }
    });
}

Var channel_mean(Graph& g, Var x) {
    const Tensor& in = g.value(x);
    if (in.rank() != 3) {
        throw ShapeError("channel_mean: needs (C,H,W), got " + in.shape_string());
    }
    const int C = in.channels();
    const std::size_t plane = static_cast<std::size_t>(in.height()) * in.width();
    Tensor out({C});
    for (int c = 0; c < C; ++c) {
        double s = 0.0;
        for (std::size_t i = 0; i < plane; ++i) {
            s += in[c * plane + i];
        }
        out[static_cast<std::size_t>(c)] = s / static_cast<double>(plane);
    }
    return g.push(std::move(out), g.requires_grad(x), [x, C, plane](Graph& gr, int self) {
        if (!gr.requires_grad(x)) {
            return;
        }
        const Tensor& go = gr.node_grad(self);
        Tensor& gx = gr.grad_buffer(x.id);
        for (int c = 0; c < C; ++c) {
            const double v = go[static_cast<std::size_t>(c)] / static_cast<double>(plane);
            for (std::size_t i = 0; i < plane; ++i) {
                gx[c * plane + i] += v;
            }
        }
    });
}

Var linear(Graph& g, Var weight, Var x, Var bias) {
    const Tensor& w = g.value(weight);
    const Tensor& in = g.value(x);
    const Tensor& b = g.value(bias);
    if (w.rank() != 2 || static_cast<std::size_t>(w.dim(1)) != in.size() ||
        static_cast<std::size_t>(w.dim(0)) != b.size()) {
        throw ShapeError("linear: weight " + w.shape_string() + ", input " + in.shape_string() +
                         ", bias " + b.shape_string());
    }
    const int O = w.dim(0), I = w.dim(1);
    Tensor out({O});
    for (int o = 0; o < O; ++o) {
        double s = b[static_cast<std::size_t>(o)];
        const double* row = w.data() + static_cast<std::size_t>(o) * I;
        for (int i = 0; i < I; ++i) {
            s += row[i] * in[static_cast<std::size_t>(i)];
        }
        out[static_cast<std::size_t>(o)] = s;
    }
    return g.push(std::move(out), any_grad(g, {weight, x, bias}),
                  [weight, x, bias, O, I](Graph& gr, int self) {
        const Tensor& go = gr.node_grad(self);
        const Tensor& w = gr.node_value(weight.id);
        const Tensor& in = gr.node_value(x.id);
        if (gr.requires_grad(bias)) {
            Tensor& gb = gr.grad_buffer(bias.id);
            for (int o = 0; o < O; ++o) {
                gb[static_cast<std::size_t>(o)] += go[static_cast<std::size_t>(o)];
            }
        }
        if (gr.requires_grad(weight)) {
            Tensor& gw = gr.grad_buffer(weight.id);
            for (int o = 0; o < O; ++o) {
                const double v = go[static_cast<std::size_t>(o)];
                double* row = gw.data() + static_cast<std::size_t>(o) * I;
                for (int i = 0; i < I; ++i) {
                    row[i] += v * in[static_cast<std::size_t>(i)];
                }
            }
        }
        if (gr.requires_grad(x)) {
            Tensor& gx = gr.grad_buffer(x.id);
            for (int o = 0; o < O; ++o) {
                const double v = go[static_cast<std::size_t>(o)];
                const double* row = w.data() + static_cast<std::size_t>(o) * I;
                for (int i = 0; i < I; ++i) {
                    gx[static_cast<std::size_t>(i)] += v * row[i];
                }
            }
        }
    });
}

Var mse(Graph& g, Var a, Var b) {
    const Tensor& ta = g.value(a);
    const Tensor& tb = g.value(b);
    require_same_shape(ta, tb, "mse");
    const double n = static_cast<double>(ta.size());
    return g.push(Tensor({1}, mean_squared_error(ta, tb)), any_grad(g, {a, b}),
                  [a, b, n](Graph& gr, int self) {
        const double go = gr.node_grad(self)[0];
        const Tensor& ta = gr.node_value(a.id);
        const Tensor& tb = gr.node_value(b.id);
        const double k = 2.0 * go / n;
        if (gr.requires_grad(a)) {
            Tensor& ga = gr.grad_buffer(a.id);
            for (std::size_t i = 0; i < ta.size(); ++i) {
                ga[i] += k * (ta[i] - tb[i]);
            }
        }
        if (gr.requires_grad(b)) {
            Tensor& gb = gr.grad_buffer(b.id);
            for (std::size_t i = 0; i < ta.size(); ++i) {
                gb[i] -= k * (ta[i] - tb[i]);
            }
        }
    });
}

}  // namespace ldla::ad
