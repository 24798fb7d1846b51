#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <stdexcept>
#include <vector>

#include "emocam/model.hpp"
#include "emocam/tensor.hpp"

// Independent reference implementations the tests check the library against.
// Everything here is deliberately written from the definitions, in double
// precision, without reusing the library's code paths.
namespace oracle {

using emocam::LayerKind;
using emocam::LayerSpec;
using emocam::ModelSpec;
using emocam::Tensor;

// Literal six-nested-loop convolution reference.
inline Tensor conv2d_six_loop(const Tensor& input, const Tensor& weight, const Tensor& bias,
                              int stride, int padding) {
    const int in_c = input.shape[0], in_h = input.shape[1], in_w = input.shape[2];
    const int out_c = weight.shape[0], kh = weight.shape[2], kw = weight.shape[3];
    const int out_h = (in_h + 2 * padding - kh) / stride + 1;
    const int out_w = (in_w + 2 * padding - kw) / stride + 1;
    Tensor out = Tensor::zeros({out_c, out_h, out_w});
    for (int oc = 0; oc < out_c; ++oc)
        for (int oy = 0; oy < out_h; ++oy)
            for (int ox = 0; ox < out_w; ++ox) {
                double acc = bias.data[oc];
                for (int ic = 0; ic < in_c; ++ic)
                    for (int ky = 0; ky < kh; ++ky)
                        for (int kx = 0; kx < kw; ++kx) {
                            const int iy = oy * stride + ky - padding;
                            const int ix = ox * stride + kx - padding;
                            if (iy >= 0 && iy < in_h && ix >= 0 && ix < in_w)
                                acc += static_cast<double>(
                                           weight.data[((static_cast<std::size_t>(oc) * in_c + ic) * kh +
                                                        ky) *
                                                           kw +
                                                       kx]) *
                                       input.at(ic, iy, ix);
                        }
                out.at(oc, oy, ox) = static_cast<float>(acc);
            }
    return out;
}

struct ShapeCHW {
    int c = 0, h = 0, w = 0;
};

// Double-precision re-evaluation of a full model, layer by layer.
// Also usable for tail-only evaluation by passing the start index and the
// activations at that point. Records the smallest margins that decide
// piecewise-linear branches, so finite-difference callers can verify their
// step cannot flip a relu gate or a maxpool argmax.
struct EvalF64 {
    std::vector<double> logits;
    double min_relu_margin = std::numeric_limits<double>::infinity();
    double min_pool_margin = std::numeric_limits<double>::infinity();
};

inline EvalF64 eval_f64(const ModelSpec& model, std::size_t start_layer,
                        std::vector<double> values, ShapeCHW shape) {
    EvalF64 result;
    bool flat = false;
    std::size_t flat_n = 0;
    for (std::size_t li = start_layer; li < model.layers.size(); ++li) {
        const LayerSpec& layer = model.layers[li];
        switch (layer.kind) {
            case LayerKind::Conv2d: {
                const Tensor& wt = model.tensor(layer.weights_name);
                const Tensor& bt = model.tensor(layer.bias_name);
                const int out_c = layer.out_channels, kh = layer.kernel_h, kw = layer.kernel_w;
                const int oh = (shape.h + 2 * layer.padding - kh) / layer.stride + 1;
                const int ow = (shape.w + 2 * layer.padding - kw) / layer.stride + 1;
                std::vector<double> out(static_cast<std::size_t>(out_c) * oh * ow, 0.0);
                for (int oc = 0; oc < out_c; ++oc)
                    for (int oy = 0; oy < oh; ++oy)
                        for (int ox = 0; ox < ow; ++ox) {
                            double acc = bt.data[oc];
                            for (int ic = 0; ic < shape.c; ++ic)
                                for (int ky = 0; ky < kh; ++ky)
                                    for (int kx = 0; kx < kw; ++kx) {
                                        const int iy = oy * layer.stride + ky - layer.padding;
                                        const int ix = ox * layer.stride + kx - layer.padding;
                                        if (iy >= 0 && iy < shape.h && ix >= 0 && ix < shape.w)
                                            acc += static_cast<double>(
                                                       wt.data[((static_cast<std::size_t>(oc) * shape.c +
                                                                 ic) *
                                                                    kh +
                                                                ky) *
                                                                   kw +
                                                               kx]) *
                                                   values[(static_cast<std::size_t>(ic) * shape.h + iy) *
                                                              shape.w +
                                                          ix];
                                    }
                            out[(static_cast<std::size_t>(oc) * oh + oy) * ow + ox] = acc;
                        }
                values = std::move(out);
                shape = {out_c, oh, ow};
                break;
            }
            case LayerKind::Relu: {
                for (double& v : values) {
                    result.min_relu_margin = std::min(result.min_relu_margin, std::abs(v));
                    v = v > 0.0 ? v : 0.0;
                }
                break;
            }
            case LayerKind::MaxPool: {
                const int kh = layer.kernel_h, kw = layer.kernel_w, s = layer.stride;
                const int oh = (shape.h - kh) / s + 1, ow = (shape.w - kw) / s + 1;
                std::vector<double> out(static_cast<std::size_t>(shape.c) * oh * ow);
                for (int ch = 0; ch < shape.c; ++ch)
                    for (int oy = 0; oy < oh; ++oy)
                        for (int ox = 0; ox < ow; ++ox) {
                            double best = -std::numeric_limits<double>::infinity();
                            double second = best;
                            for (int ky = 0; ky < kh; ++ky)
                                for (int kx = 0; kx < kw; ++kx) {
                                    const double v =
                                        values[(static_cast<std::size_t>(ch) * shape.h + oy * s + ky) *
                                                   shape.w +
                                               ox * s + kx];
                                    if (v > best) {
                                        second = best;
                                        best = v;
                                    } else if (v > second) {
                                        second = v;
                                    }
                                }
                            if (std::isfinite(second))
                                result.min_pool_margin =
                                    std::min(result.min_pool_margin, best - second);
                            out[(static_cast<std::size_t>(ch) * oh + oy) * ow + ox] = best;
                        }
                values = std::move(out);
                shape.h = oh;
                shape.w = ow;
                break;
            }
            case LayerKind::AdaptiveAvgPool: {
                const int oh = layer.out_h, ow = layer.out_w;
                std::vector<double> out(static_cast<std::size_t>(shape.c) * oh * ow);
                for (int ch = 0; ch < shape.c; ++ch)
                    for (int oy = 0; oy < oh; ++oy)
                        for (int ox = 0; ox < ow; ++ox) {
                            const int y0 = (oy * shape.h) / oh;
                            const int y1 = ((oy + 1) * shape.h + oh - 1) / oh;
                            const int x0 = (ox * shape.w) / ow;
                            const int x1 = ((ox + 1) * shape.w + ow - 1) / ow;
                            double acc = 0.0;
                            for (int y = y0; y < y1; ++y)
                                for (int x = x0; x < x1; ++x)
                                    acc += values[(static_cast<std::size_t>(ch) * shape.h + y) * shape.w +
                                                  x];
                            out[(static_cast<std::size_t>(ch) * oh + oy) * ow + ox] =
                                acc / ((y1 - y0) * (x1 - x0));
                        }
                values = std::move(out);
                shape.h = oh;
                shape.w = ow;
                break;
            }
            case LayerKind::Flatten: {
                flat = true;
                flat_n = values.size();
                break;
            }
            case LayerKind::Linear: {
                const Tensor& wt = model.tensor(layer.weights_name);
                const Tensor& bt = model.tensor(layer.bias_name);
                const std::size_t in_f = flat ? flat_n : values.size();
                std::vector<double> out(layer.out_features);
                for (int o = 0; o < layer.out_features; ++o) {
                    double acc = bt.data[o];
                    for (std::size_t i = 0; i < in_f; ++i)
                        acc += static_cast<double>(wt.data[static_cast<std::size_t>(o) * in_f + i]) *
                               values[i];
                    out[o] = acc;
                }
                values = std::move(out);
                flat = true;
                flat_n = values.size();
                break;
            }
            case LayerKind::Dropout:
                break;
        }
    }
    result.logits = std::move(values);
    return result;
}

inline std::vector<double> to_f64(const Tensor& t) {
    return std::vector<double>(t.data.begin(), t.data.end());
}

inline EvalF64 forward_f64(const ModelSpec& model, const Tensor& input) {
    return eval_f64(model, 0, to_f64(input),
                    {model.input.channels, model.input.height, model.input.width});
}

// Central finite differences of logit[class_index] w.r.t. the activations at
// target layer, evaluated with the double-precision tail above.
inline std::vector<double> tail_fd_gradient(const ModelSpec& model, int target_index,
                                            const Tensor& activations, int class_index, double h) {
    ShapeCHW shape{activations.shape[0], activations.shape[1], activations.shape[2]};
    const auto base = to_f64(activations);
    std::vector<double> grad(base.size());
    for (std::size_t i = 0; i < base.size(); ++i) {
        auto plus = base;
        plus[i] += h;
        auto minus = base;
        minus[i] -= h;
        const double yp =
            eval_f64(model, static_cast<std::size_t>(target_index) + 1, std::move(plus), shape)
                .logits[class_index];
        const double ym =
            eval_f64(model, static_cast<std::size_t>(target_index) + 1, std::move(minus), shape)
                .logits[class_index];
        grad[i] = (yp - ym) / (2.0 * h);
    }
    return grad;
}

// Closed-form bilinear sample with half-pixel-center alignment, written as
// the explicit four-corner weighted sum.
inline double bilinear_sample(const std::vector<float>& values, int w, int h, int out_w, int out_h,
                              int dx, int dy) {
    const double sx = (dx + 0.5) * (static_cast<double>(w) / out_w) - 0.5;
    const double sy = (dy + 0.5) * (static_cast<double>(h) / out_h) - 0.5;
    const double cx = std::clamp(sx, 0.0, static_cast<double>(w - 1));
    const double cy = std::clamp(sy, 0.0, static_cast<double>(h - 1));
    const int x0 = static_cast<int>(std::floor(cx));
    const int y0 = static_cast<int>(std::floor(cy));
    const int x1 = std::min(x0 + 1, w - 1);
    const int y1 = std::min(y0 + 1, h - 1);
    const double fx = cx - x0, fy = cy - y0;
    return values[static_cast<std::size_t>(y0) * w + x0] * (1 - fx) * (1 - fy) +
           values[static_cast<std::size_t>(y0) * w + x1] * fx * (1 - fy) +
           values[static_cast<std::size_t>(y1) * w + x0] * (1 - fx) * fy +
           values[static_cast<std::size_t>(y1) * w + x1] * fx * fy;
}

// --- Spearman reference: rank-then-Pearson plus a Student-t CDF evaluated
// through the regularized incomplete beta function (continued fraction).

inline double ibeta_cf(double a, double b, double x) {
    const double tiny = 1e-300;
    double qab = a + b, qap = a + 1.0, qam = a - 1.0;
    double c = 1.0, d = 1.0 - qab * x / qap;
    if (std::abs(d) < tiny) d = tiny;
    d = 1.0 / d;
    double result = d;
    for (int m = 1; m <= 300; ++m) {
        const int m2 = 2 * m;
        double aa = m * (b - m) * x / ((qam + m2) * (a + m2));
        d = 1.0 + aa * d;
        if (std::abs(d) < tiny) d = tiny;
        c = 1.0 + aa / c;
        if (std::abs(c) < tiny) c = tiny;
        d = 1.0 / d;
        result *= d * c;
        aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2));
        d = 1.0 + aa * d;
        if (std::abs(d) < tiny) d = tiny;
        c = 1.0 + aa / c;
        if (std::abs(c) < tiny) c = tiny;
        d = 1.0 / d;
        const double delta = d * c;
        result *= delta;
        if (std::abs(delta - 1.0) < 3e-16) break;
    }
    return result;
}

inline double ibeta(double a, double b, double x) {
    if (x <= 0.0) return 0.0;
    if (x >= 1.0) return 1.0;
    const double ln_front = std::lgamma(a + b) - std::lgamma(a) - std::lgamma(b) +
                            a * std::log(x) + b * std::log1p(-x);
    const double front = std::exp(ln_front);
    if (x < (a + 1.0) / (a + b + 2.0)) return front * ibeta_cf(a, b, x) / a;
    return 1.0 - front * ibeta_cf(b, a, 1.0 - x) / b;
}

inline double student_t_two_sided_p(double t, double dof) {
    return ibeta(dof / 2.0, 0.5, dof / (dof + t * t));
}

inline std::vector<double> average_ranks(const std::vector<double>& v) {
    const std::size_t n = v.size();
    std::vector<std::size_t> idx(n);
    std::iota(idx.begin(), idx.end(), 0);
    std::sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return v[a] < v[b]; });
    std::vector<double> ranks(n);
    std::size_t i = 0;
    while (i < n) {
        std::size_t j = i;
        while (j + 1 < n && v[idx[j + 1]] == v[idx[i]]) ++j;
        const double avg = (static_cast<double>(i) + static_cast<double>(j)) / 2.0 + 1.0;
        for (std::size_t k = i; k <= j; ++k) ranks[idx[k]] = avg;
        i = j + 1;
    }
    return ranks;
}

inline std::pair<double, double> spearman_oracle(const std::vector<double>& x,
                                                 const std::vector<double>& y) {
    if (x.size() != y.size() || x.size() < 3) throw std::invalid_argument("bad spearman input");
    const auto rx = average_ranks(x);
    const auto ry = average_ranks(y);
    const std::size_t n = rx.size();
    double mx = 0, my = 0;
    for (std::size_t i = 0; i < n; ++i) {
        mx += rx[i];
        my += ry[i];
    }
    mx /= static_cast<double>(n);
    my /= static_cast<double>(n);
    double sxy = 0, sxx = 0, syy = 0;
    for (std::size_t i = 0; i < n; ++i) {
        sxy += (rx[i] - mx) * (ry[i] - my);
        sxx += (rx[i] - mx) * (rx[i] - mx);
        syy += (ry[i] - my) * (ry[i] - my);
    }
    if (sxx == 0.0 || syy == 0.0) throw std::invalid_argument("constant vector");
    const double rho = sxy / std::sqrt(sxx * syy);
    const double dof = static_cast<double>(n) - 2.0;
    double p = 0.0;
    if (1.0 - rho * rho > 1e-14) {
        const double t = rho * std::sqrt(dof / (1.0 - rho * rho));
        p = student_t_two_sided_p(t, dof);
    }
    return {rho, p};
}

}  // namespace oracle
