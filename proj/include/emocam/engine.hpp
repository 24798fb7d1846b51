#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <string>
#include <vector>

#include "emocam/model.hpp"
#include "emocam/tensor.hpp"
#include "emocam/util.hpp"

namespace emocam {

// Per-inference cache of everything the tail passes need: one output tensor
// per executed layer, argmax index maps for maxpools, and the final logits.
// Confined to one worker per image; never shared.
struct ForwardTrace {
    std::vector<Tensor> outputs;
    std::vector<std::vector<std::int32_t>> pool_argmax;  // flat input indices, per layer
    std::vector<float> logits;
};

struct PredictionResult {
    std::vector<float> logits;
    std::vector<float> probabilities;
    int predicted_index = 0;
};

namespace detail {

inline Tensor conv2d_forward(const LayerSpec& layer, const Tensor& input, const Tensor& weight,
                             const Tensor& bias) {
    const int in_c = input.shape[0], in_h = input.shape[1], in_w = input.shape[2];
    const int out_c = layer.out_channels;
    const int kh = layer.kernel_h, kw = layer.kernel_w;
    const int stride = layer.stride, pad = layer.padding;
    const int out_h = (in_h + 2 * pad - kh) / stride + 1;
    const int out_w = (in_w + 2 * pad - kw) / stride + 1;
    if (out_h < 1 || out_w < 1)
        throw Error("layer '" + layer.name + "': conv output dims collapse to zero");

    Tensor out = Tensor::zeros({out_c, out_h, out_w});
    const float* w = weight.data.data();
    const float* x = input.data.data();
    for (int oc = 0; oc < out_c; ++oc) {
        const float* w_oc = w + static_cast<std::size_t>(oc) * in_c * kh * kw;
        for (int oy = 0; oy < out_h; ++oy) {
            for (int ox = 0; ox < out_w; ++ox) {
                double acc = bias.data[oc];
                const int iy0 = oy * stride - pad;
                const int ix0 = ox * stride - pad;
                for (int ic = 0; ic < in_c; ++ic) {
                    const float* x_ic = x + static_cast<std::size_t>(ic) * in_h * in_w;
                    const float* w_ic = w_oc + static_cast<std::size_t>(ic) * kh * kw;
                    for (int ky = 0; ky < kh; ++ky) {
                        const int iy = iy0 + ky;
                        if (iy < 0 || iy >= in_h) continue;
                        for (int kx = 0; kx < kw; ++kx) {
                            const int ix = ix0 + kx;
                            if (ix < 0 || ix >= in_w) continue;
                            acc += static_cast<double>(w_ic[ky * kw + kx]) * x_ic[iy * in_w + ix];
                        }
                    }
                }
                out.at(oc, oy, ox) = static_cast<float>(acc);
            }
        }
    }
    return out;
}

inline Tensor maxpool_forward(const LayerSpec& layer, const Tensor& input,
                              std::vector<std::int32_t>& argmax) {
    const int c = input.shape[0], in_h = input.shape[1], in_w = input.shape[2];
    const int kh = layer.kernel_h, kw = layer.kernel_w, stride = layer.stride;
    if (kh > in_h || kw > in_w)
        throw Error("layer '" + layer.name + "': pool kernel exceeds input dims");
    const int out_h = (in_h - kh) / stride + 1;
    const int out_w = (in_w - kw) / stride + 1;

    Tensor out = Tensor::zeros({c, out_h, out_w});
    argmax.assign(static_cast<std::size_t>(c) * out_h * out_w, 0);
    for (int ch = 0; ch < c; ++ch) {
        const std::int32_t base = ch * in_h * in_w;
        for (int oy = 0; oy < out_h; ++oy) {
            for (int ox = 0; ox < out_w; ++ox) {
                // Ties break to the first index in row-major scan order.
                float best = -std::numeric_limits<float>::infinity();
                std::int32_t best_idx = base + (oy * stride) * in_w + ox * stride;
                for (int ky = 0; ky < kh; ++ky) {
                    for (int kx = 0; kx < kw; ++kx) {
                        const std::int32_t idx =
                            base + (oy * stride + ky) * in_w + (ox * stride + kx);
                        if (input.data[idx] > best) {
                            best = input.data[idx];
                            best_idx = idx;
                        }
                    }
                }
                out.at(ch, oy, ox) = best;
                argmax[(static_cast<std::size_t>(ch) * out_h + oy) * out_w + ox] = best_idx;
            }
        }
    }
    return out;
}

// Window bounds follow floor(i*in/out) .. ceil((i+1)*in/out), matching the
// adaptive pooling semantics of common frameworks so exported weights behave
// identically.
inline int adaptive_start(int i, int in, int out) { return (i * in) / out; }
inline int adaptive_end(int i, int in, int out) { return ((i + 1) * in + out - 1) / out; }

inline Tensor adaptive_avgpool_forward(const LayerSpec& layer, const Tensor& input) {
    const int c = input.shape[0], in_h = input.shape[1], in_w = input.shape[2];
    const int out_h = layer.out_h, out_w = layer.out_w;
    Tensor out = Tensor::zeros({c, out_h, out_w});
    for (int ch = 0; ch < c; ++ch) {
        for (int oy = 0; oy < out_h; ++oy) {
            const int y0 = adaptive_start(oy, in_h, out_h), y1 = adaptive_end(oy, in_h, out_h);
            for (int ox = 0; ox < out_w; ++ox) {
                const int x0 = adaptive_start(ox, in_w, out_w), x1 = adaptive_end(ox, in_w, out_w);
                double acc = 0.0;
                for (int y = y0; y < y1; ++y)
                    for (int x = x0; x < x1; ++x) acc += input.at(ch, y, x);
                out.at(ch, oy, ox) = static_cast<float>(acc / ((y1 - y0) * (x1 - x0)));
            }
        }
    }
    return out;
}

inline Tensor linear_forward(const LayerSpec& layer, const Tensor& input, const Tensor& weight,
                             const Tensor& bias) {
    const int in_f = input.shape[0];
    const int out_f = layer.out_features;
    Tensor out = Tensor::zeros({out_f});
    for (int o = 0; o < out_f; ++o) {
        double acc = bias.data[o];
        const float* w_row = weight.data.data() + static_cast<std::size_t>(o) * in_f;
        for (int i = 0; i < in_f; ++i) acc += static_cast<double>(w_row[i]) * input.data[i];
        out.data[o] = static_cast<float>(acc);
    }
    return out;
}

}  // namespace detail

// Applies one layer and records its output (and, for maxpool, the argmax
// index map) in the trace. Dropout is identity at inference.
inline Tensor apply_layer(const ModelSpec& model, const LayerSpec& layer, const Tensor& input,
                          ForwardTrace& trace) {
    Tensor out;
    std::vector<std::int32_t> argmax;
    switch (layer.kind) {
        case LayerKind::Conv2d: {
            if (input.shape.size() != 3)
                throw Error("layer '" + layer.name + "': conv2d requires a 3-D input, got " +
                            input.shape_str());
            const Tensor& weight = model.tensor(layer.weights_name);
            if (weight.shape[1] != input.shape[0])
                throw Error("layer '" + layer.name + "': input has " +
                            std::to_string(input.shape[0]) + " channels, weight expects " +
                            std::to_string(weight.shape[1]));
            out = detail::conv2d_forward(layer, input, weight, model.tensor(layer.bias_name));
            break;
        }
        case LayerKind::Relu: {
            out = input;
            for (float& v : out.data) v = v > 0.0f ? v : 0.0f;
            break;
        }
        case LayerKind::MaxPool: {
            if (input.shape.size() != 3)
                throw Error("layer '" + layer.name + "': maxpool requires a 3-D input, got " +
                            input.shape_str());
            out = detail::maxpool_forward(layer, input, argmax);
            break;
        }
        case LayerKind::AdaptiveAvgPool: {
            if (input.shape.size() != 3)
                throw Error("layer '" + layer.name + "': adaptive-avgpool requires a 3-D input, got " +
                            input.shape_str());
            out = detail::adaptive_avgpool_forward(layer, input);
            break;
        }
        case LayerKind::Flatten: {
            out = input;
            out.shape = {static_cast<int>(out.numel())};
            break;
        }
        case LayerKind::Linear: {
            if (input.shape.size() != 1)
                throw Error("layer '" + layer.name + "': linear requires a 1-D input, got " +
                            input.shape_str());
            const Tensor& weight = model.tensor(layer.weights_name);
            if (weight.shape[1] != input.shape[0])
                throw Error("layer '" + layer.name + "': input has " +
                            std::to_string(input.shape[0]) + " features, weight expects " +
                            std::to_string(weight.shape[1]));
            out = detail::linear_forward(layer, input, weight, model.tensor(layer.bias_name));
            break;
        }
        case LayerKind::Dropout: {
            out = input;
            break;
        }
    }
    trace.outputs.push_back(out);
    trace.pool_argmax.push_back(std::move(argmax));
    return out;
}

inline std::vector<float> softmax(const std::vector<float>& logits) {
    double m = -std::numeric_limits<double>::infinity();
    for (float v : logits) m = std::max(m, static_cast<double>(v));
    double sum = 0.0;
    std::vector<double> e(logits.size());
    for (std::size_t i = 0; i < logits.size(); ++i) {
        e[i] = std::exp(static_cast<double>(logits[i]) - m);
        sum += e[i];
    }
    std::vector<float> p(logits.size());
    for (std::size_t i = 0; i < logits.size(); ++i) p[i] = static_cast<float>(e[i] / sum);
    return p;
}

inline int argmax_index(const std::vector<float>& v) {
    int best = 0;
    for (std::size_t i = 1; i < v.size(); ++i)
        if (v[i] > v[best]) best = static_cast<int>(i);
    return best;
}

namespace detail {

inline ForwardTrace run_forward(const ModelSpec& model, const Tensor& input) {
    const std::vector<int> expect = {model.input.channels, model.input.height, model.input.width};
    if (input.shape != expect) {
        Tensor want;
        want.shape = expect;
        throw Error("model input shape mismatch: expected " + want.shape_str() + ", got " +
                    input.shape_str());
    }
    ForwardTrace trace;
    trace.outputs.reserve(model.layers.size());
    Tensor current = input;
    for (const auto& layer : model.layers) current = apply_layer(model, layer, current, trace);
    if (current.shape.size() != 1)
        throw Error("model output is not a 1-D logits vector");
    trace.logits = current.data;
    return trace;
}

}  // namespace detail

inline PredictionResult forward(const ModelSpec& model, const Tensor& input) {
    ForwardTrace trace = detail::run_forward(model, input);
    PredictionResult result;
    result.logits = trace.logits;
    result.probabilities = softmax(result.logits);
    result.predicted_index = argmax_index(result.logits);
    return result;
}

// Full forward pass that also hands back the output of target_layer (taken
// at the conv output, before any following activation) and the trace.
inline std::pair<Tensor, ForwardTrace> forward_split(const ModelSpec& model, const Tensor& input,
                                                     const std::string& target_layer) {
    const int target = model.layer_index(target_layer);
    if (model.layers[target].kind != LayerKind::Conv2d)
        throw Error("target layer '" + target_layer + "' is not a conv2d layer");
    ForwardTrace trace = detail::run_forward(model, input);
    return {trace.outputs[target], std::move(trace)};
}

// Runs only the layers after target_layer on the given activations.
// Composing forward_split with tail_forward on unmodified activations
// reproduces the full forward logits bit-identically (same code path).
inline std::vector<float> tail_forward(const ModelSpec& model, const std::string& target_layer,
                                       const Tensor& activations) {
    const int target = model.layer_index(target_layer);
    ForwardTrace scratch;
    Tensor current = activations;
    for (std::size_t i = target + 1; i < model.layers.size(); ++i)
        current = apply_layer(model, model.layers[i], current, scratch);
    if (current.shape.size() != 1)
        throw Error("model output is not a 1-D logits vector");
    return current.data;
}

// Gradient of the pre-softmax logit of class_index with respect to the
// target layer's activations, by walking the tail backward over the trace.
// Tail kinds supported: relu, maxpool, adaptive-avgpool, flatten, linear,
// dropout. A conv2d after the target layer is out of scope by design.
inline Tensor tail_backward(const ModelSpec& model, const ForwardTrace& trace,
                            const std::string& target_layer, int class_index) {
    const int target = model.layer_index(target_layer);
    if (trace.outputs.size() != model.layers.size())
        throw Error("trace does not cover the full forward pass");
    if (class_index < 0 || class_index >= static_cast<int>(model.labels.size()))
        throw Error("class index out of range: " + std::to_string(class_index));

    Tensor grad = Tensor::zeros({static_cast<int>(model.labels.size())});
    grad.data[class_index] = 1.0f;

    for (int i = static_cast<int>(model.layers.size()) - 1; i > target; --i) {
        const LayerSpec& layer = model.layers[i];
        const Tensor& layer_input = trace.outputs[i - 1];
        switch (layer.kind) {
            case LayerKind::Linear: {
                const Tensor& weight = model.tensor(layer.weights_name);
                const int out_f = layer.out_features;
                const int in_f = layer_input.shape[0];
                Tensor next = Tensor::zeros({in_f});
                for (int j = 0; j < in_f; ++j) {
                    double acc = 0.0;
                    for (int o = 0; o < out_f; ++o)
                        acc += static_cast<double>(weight.data[static_cast<std::size_t>(o) * in_f + j]) *
                               grad.data[o];
                    next.data[j] = static_cast<float>(acc);
                }
                grad = std::move(next);
                break;
            }
            case LayerKind::Relu: {
                Tensor next = grad;
                next.shape = layer_input.shape;
                for (std::size_t k = 0; k < next.data.size(); ++k)
                    if (layer_input.data[k] <= 0.0f) next.data[k] = 0.0f;
                grad = std::move(next);
                break;
            }
            case LayerKind::MaxPool: {
                // Gradient routes solely to the recorded argmax position.
                const auto& argmax = trace.pool_argmax[i];
                Tensor next = Tensor::zeros(layer_input.shape);
                for (std::size_t k = 0; k < argmax.size(); ++k)
                    next.data[argmax[k]] += grad.data[k];
                grad = std::move(next);
                break;
            }
            case LayerKind::AdaptiveAvgPool: {
                const int c = layer_input.shape[0];
                const int in_h = layer_input.shape[1], in_w = layer_input.shape[2];
                const int out_h = layer.out_h, out_w = layer.out_w;
                Tensor next = Tensor::zeros(layer_input.shape);
                for (int ch = 0; ch < c; ++ch) {
                    for (int oy = 0; oy < out_h; ++oy) {
                        const int y0 = detail::adaptive_start(oy, in_h, out_h);
                        const int y1 = detail::adaptive_end(oy, in_h, out_h);
                        for (int ox = 0; ox < out_w; ++ox) {
                            const int x0 = detail::adaptive_start(ox, in_w, out_w);
                            const int x1 = detail::adaptive_end(ox, in_w, out_w);
                            const float g =
                                grad.data[(static_cast<std::size_t>(ch) * out_h + oy) * out_w + ox] /
                                static_cast<float>((y1 - y0) * (x1 - x0));
                            for (int y = y0; y < y1; ++y)
                                for (int x = x0; x < x1; ++x) next.at(ch, y, x) += g;
                        }
                    }
                }
                grad = std::move(next);
                break;
            }
            case LayerKind::Flatten: {
                grad.shape = layer_input.shape;
                break;
            }
            case LayerKind::Dropout:
                break;
            case LayerKind::Conv2d:
                throw Error("unsupported layer kind in tail: conv2d (layer '" + layer.name + "')");
        }
    }

    if (grad.shape != trace.outputs[target].shape) {
        grad.shape = trace.outputs[target].shape;
        grad.validate();
    }
    return grad;
}

}  // namespace emocam
