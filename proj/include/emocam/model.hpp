#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <unordered_set>
#include <vector>

#include <nlohmann/json.hpp>

#include "emocam/container.hpp"
#include "emocam/tensor.hpp"
#include "emocam/util.hpp"

namespace emocam {

enum class LayerKind { Conv2d, Relu, MaxPool, AdaptiveAvgPool, Flatten, Linear, Dropout };

inline std::string to_string(LayerKind k) {
    switch (k) {
        case LayerKind::Conv2d: return "conv2d";
        case LayerKind::Relu: return "relu";
        case LayerKind::MaxPool: return "maxpool";
        case LayerKind::AdaptiveAvgPool: return "adaptive-avgpool";
        case LayerKind::Flatten: return "flatten";
        case LayerKind::Linear: return "linear";
        case LayerKind::Dropout: return "dropout";
    }
    return "?";
}

inline LayerKind layer_kind_from_string(const std::string& s) {
    if (s == "conv2d") return LayerKind::Conv2d;
    if (s == "relu") return LayerKind::Relu;
    if (s == "maxpool") return LayerKind::MaxPool;
    if (s == "adaptive-avgpool") return LayerKind::AdaptiveAvgPool;
    if (s == "flatten") return LayerKind::Flatten;
    if (s == "linear") return LayerKind::Linear;
    if (s == "dropout") return LayerKind::Dropout;
    throw Error("unknown layer kind: " + s);
}

struct LayerSpec {
    std::string name;
    LayerKind kind = LayerKind::Relu;

    // conv2d
    int out_channels = 0;
    int kernel_h = 0, kernel_w = 0;
    int stride = 1;
    int padding = 0;
    // adaptive-avgpool
    int out_h = 0, out_w = 0;
    // linear
    int out_features = 0;
    // dropout; identity at inference, kept for descriptor fidelity
    double rate = 0.0;

    std::string weights_name;
    std::string bias_name;

    bool parameterized() const { return kind == LayerKind::Conv2d || kind == LayerKind::Linear; }
};

struct InputSpec {
    int channels = 0;
    int height = 0;
    int width = 0;
};

struct Normalization {
    std::vector<double> mean;
    std::vector<double> std;
};

// Immutable after load_model; safe to share across parallel workers.
struct ModelSpec {
    std::vector<LayerSpec> layers;
    InputSpec input;
    Normalization normalization;
    std::vector<std::string> labels;
    std::map<std::string, Tensor> weights;
    std::uint64_t weights_hash = 0;  // FNV-1a over the container bytes

    int layer_index(const std::string& name) const {
        for (std::size_t i = 0; i < layers.size(); ++i)
            if (layers[i].name == name) return static_cast<int>(i);
        throw Error("unknown layer name: " + name);
    }

    std::string last_conv_layer() const {
        for (auto it = layers.rbegin(); it != layers.rend(); ++it)
            if (it->kind == LayerKind::Conv2d) return it->name;
        throw Error("model has no conv2d layer");
    }

    const Tensor& tensor(const std::string& name) const {
        auto it = weights.find(name);
        if (it == weights.end()) throw Error("missing tensor: " + name);
        return it->second;
    }
};

namespace detail {

inline std::pair<int, int> parse_hw(const nlohmann::json& v, const std::string& layer,
                                    const char* field) {
    if (v.is_number_integer()) {
        const int k = v.get<int>();
        return {k, k};
    }
    if (v.is_array() && v.size() == 2 && v[0].is_number_integer() && v[1].is_number_integer())
        return {v[0].get<int>(), v[1].get<int>()};
    throw Error("layer '" + layer + "': field '" + field + "' must be an int or [h,w]");
}

inline LayerSpec parse_layer(const nlohmann::json& j) {
    LayerSpec layer;
    if (!j.contains("name") || !j["name"].is_string())
        throw Error("descriptor layer missing string field 'name'");
    layer.name = j["name"].get<std::string>();
    if (!j.contains("kind") || !j["kind"].is_string())
        throw Error("layer '" + layer.name + "': missing string field 'kind'");
    layer.kind = layer_kind_from_string(j["kind"].get<std::string>());

    auto require = [&](const char* field) -> const nlohmann::json& {
        if (!j.contains(field))
            throw Error("layer '" + layer.name + "': missing field '" + field + "'");
        return j.at(field);
    };

    switch (layer.kind) {
        case LayerKind::Conv2d: {
            layer.out_channels = require("out_channels").get<int>();
            std::tie(layer.kernel_h, layer.kernel_w) = parse_hw(require("kernel"), layer.name, "kernel");
            layer.stride = j.value("stride", 1);
            layer.padding = j.value("padding", 0);
            layer.weights_name = require("weights").get<std::string>();
            layer.bias_name = require("bias").get<std::string>();
            break;
        }
        case LayerKind::MaxPool: {
            std::tie(layer.kernel_h, layer.kernel_w) = parse_hw(require("kernel"), layer.name, "kernel");
            layer.stride = j.value("stride", layer.kernel_h);
            break;
        }
        case LayerKind::AdaptiveAvgPool: {
            std::tie(layer.out_h, layer.out_w) = parse_hw(require("output"), layer.name, "output");
            break;
        }
        case LayerKind::Linear: {
            layer.out_features = require("out_features").get<int>();
            layer.weights_name = require("weights").get<std::string>();
            layer.bias_name = require("bias").get<std::string>();
            break;
        }
        case LayerKind::Dropout:
            layer.rate = j.value("rate", 0.5);
            break;
        case LayerKind::Relu:
        case LayerKind::Flatten:
            break;
    }

    if (layer.stride < 1) throw Error("layer '" + layer.name + "': stride must be >= 1");
    if (layer.padding < 0) throw Error("layer '" + layer.name + "': padding must be >= 0");
    if ((layer.kind == LayerKind::Conv2d || layer.kind == LayerKind::MaxPool) &&
        (layer.kernel_h < 1 || layer.kernel_w < 1))
        throw Error("layer '" + layer.name + "': kernel must be >= 1");
    if (layer.kind == LayerKind::AdaptiveAvgPool && (layer.out_h < 1 || layer.out_w < 1))
        throw Error("layer '" + layer.name + "': output dims must be >= 1");
    return layer;
}

inline void check_tensor_shape(const ModelSpec& model, const std::string& layer_name,
                               const std::string& tensor_name, const std::vector<int>& expected) {
    auto it = model.weights.find(tensor_name);
    if (it == model.weights.end())
        throw Error("layer '" + layer_name + "': missing tensor: " + tensor_name);
    if (it->second.shape != expected) {
        Tensor want;
        want.shape = expected;
        throw Error("layer '" + layer_name + "': shape mismatch for tensor '" + tensor_name +
                    "': expected " + want.shape_str() + ", found " + it->second.shape_str());
    }
}

// Walks the layer stack from the declared input, checking every shape
// transition and every parameter tensor against it.
inline void validate_model(ModelSpec& model) {
    if (model.labels.empty()) throw Error("descriptor declares no labels");
    if (model.input.channels < 1 || model.input.height < 1 || model.input.width < 1)
        throw Error("descriptor input dims must be >= 1");
    if (model.normalization.mean.size() != static_cast<std::size_t>(model.input.channels) ||
        model.normalization.std.size() != static_cast<std::size_t>(model.input.channels))
        throw Error("normalization mean/std length must equal input channel count");
    for (double s : model.normalization.std)
        if (s == 0.0) throw Error("normalization std must be nonzero");

    std::unordered_set<std::string> names;
    for (const auto& layer : model.layers)
        if (!names.insert(layer.name).second)
            throw Error("duplicate layer name: " + layer.name);

    std::vector<int> shape = {model.input.channels, model.input.height, model.input.width};
    for (const auto& layer : model.layers) {
        switch (layer.kind) {
            case LayerKind::Conv2d: {
                if (shape.size() != 3)
                    throw Error("layer '" + layer.name + "': conv2d requires a 3-D input");
                const int in_c = shape[0];
                check_tensor_shape(model, layer.name, layer.weights_name,
                                   {layer.out_channels, in_c, layer.kernel_h, layer.kernel_w});
                check_tensor_shape(model, layer.name, layer.bias_name, {layer.out_channels});
                const int oh = (shape[1] + 2 * layer.padding - layer.kernel_h) / layer.stride + 1;
                const int ow = (shape[2] + 2 * layer.padding - layer.kernel_w) / layer.stride + 1;
                if (oh < 1 || ow < 1)
                    throw Error("layer '" + layer.name + "': output dims collapse to zero");
                shape = {layer.out_channels, oh, ow};
                break;
            }
            case LayerKind::MaxPool: {
                if (shape.size() != 3)
                    throw Error("layer '" + layer.name + "': maxpool requires a 3-D input");
                if (layer.kernel_h > shape[1] || layer.kernel_w > shape[2])
                    throw Error("layer '" + layer.name + "': pool kernel exceeds input dims");
                shape = {shape[0], (shape[1] - layer.kernel_h) / layer.stride + 1,
                         (shape[2] - layer.kernel_w) / layer.stride + 1};
                break;
            }
            case LayerKind::AdaptiveAvgPool: {
                if (shape.size() != 3)
                    throw Error("layer '" + layer.name + "': adaptive-avgpool requires a 3-D input");
                shape = {shape[0], layer.out_h, layer.out_w};
                break;
            }
            case LayerKind::Flatten: {
                std::int64_t n = 1;
                for (int d : shape) n *= d;
                shape = {static_cast<int>(n)};
                break;
            }
            case LayerKind::Linear: {
                if (shape.size() != 1)
                    throw Error("layer '" + layer.name + "': linear requires a flattened input");
                check_tensor_shape(model, layer.name, layer.weights_name,
                                   {layer.out_features, shape[0]});
                check_tensor_shape(model, layer.name, layer.bias_name, {layer.out_features});
                shape = {layer.out_features};
                break;
            }
            case LayerKind::Relu:
            case LayerKind::Dropout:
                break;
        }
    }
    if (shape.size() != 1 || shape[0] != static_cast<int>(model.labels.size()))
        throw Error("model output dimension does not match label count: final shape is " +
                    std::to_string(shape.size() == 1 ? shape[0] : -1) + ", labels are " +
                    std::to_string(model.labels.size()));
}

}  // namespace detail

inline ModelSpec parse_descriptor(const nlohmann::json& j) {
    ModelSpec model;
    try {
        model.input.channels = j.at("input").at("channels").get<int>();
        model.input.height = j.at("input").at("height").get<int>();
        model.input.width = j.at("input").at("width").get<int>();
        model.normalization.mean = j.at("normalization").at("mean").get<std::vector<double>>();
        model.normalization.std = j.at("normalization").at("std").get<std::vector<double>>();
        model.labels = j.at("labels").get<std::vector<std::string>>();
        for (const auto& lj : j.at("layers")) model.layers.push_back(detail::parse_layer(lj));
    } catch (const nlohmann::json::exception& e) {
        throw Error(std::string("malformed descriptor: ") + e.what());
    }
    return model;
}

// Loads and fully validates a model: architecture descriptor (JSON) plus the
// binary weights container. Every parameter tensor is shape-checked against
// the layer stack before the model is returned.
inline ModelSpec load_model(const std::string& descriptor_path, const std::string& weights_path) {
    nlohmann::json j;
    {
        std::ifstream in(descriptor_path);
        if (!in) throw Error("cannot open descriptor: " + descriptor_path);
        try {
            in >> j;
        } catch (const nlohmann::json::exception& e) {
            throw Error("malformed descriptor '" + descriptor_path + "': " + e.what());
        }
    }
    ModelSpec model = parse_descriptor(j);
    Container container = read_container(weights_path);
    model.weights = std::move(container.tensors);
    model.weights_hash = container.content_hash;
    detail::validate_model(model);
    return model;
}

}  // namespace emocam
