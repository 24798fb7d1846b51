#pragma once

#include <atomic>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <map>
#include <random>
#include <string>
#include <unistd.h>
#include <vector>

#include <nlohmann/json.hpp>

#include "emocam/model.hpp"
#include "emocam/tensor.hpp"

// Synthetic model builders and file writers shared by the test suites.
// The container writer here is deliberately kept independent of the
// library's serializer so loader round-trips exercise the byte format.
namespace fixtures {

using emocam::Tensor;

inline const std::vector<std::string>& emotion_labels26() {
    static const std::vector<std::string> labels = {
        "Adoration",     "Aesthetic Appreciation", "Amusement",  "Anxiety",
        "Awe",           "Awkwardness",            "Boredom",    "Calmness",
        "Confusion",     "Craving",                "Disgust",    "Empathic Pain",
        "Entrancement",  "Excitement",             "Fear",       "Horror",
        "Interest",      "Joy",                    "Nostalgia",  "Relief",
        "Romance",       "Sadness",                "Satisfaction", "Sexual Desire",
        "Surprise",      "Sympathy"};
    return labels;
}

inline std::filesystem::path make_temp_dir(const std::string& tag) {
    static std::atomic<int> counter{0};
    auto dir = std::filesystem::temp_directory_path() /
               ("emocam_test_" + tag + "_" + std::to_string(::getpid()) + "_" +
                std::to_string(counter++));
    std::filesystem::create_directories(dir);
    return dir;
}

// Byte-level container writer, separate from emocam::write_container.
inline void write_container_raw(const std::string& path,
                                const std::map<std::string, Tensor>& tensors) {
    nlohmann::json header = nlohmann::json::object();
    std::vector<std::uint8_t> payload;
    for (const auto& [name, t] : tensors) {
        while (payload.size() % 8 != 0) payload.push_back(0);
        header[name] = {{"dtype", "f32"}, {"shape", t.shape}, {"offset", payload.size()}};
        for (float f : t.data) {
            std::uint32_t bits;
            std::memcpy(&bits, &f, 4);
            payload.push_back(bits & 0xff);
            payload.push_back((bits >> 8) & 0xff);
            payload.push_back((bits >> 16) & 0xff);
            payload.push_back((bits >> 24) & 0xff);
        }
    }
    const std::string hs = header.dump();
    std::ofstream out(path, std::ios::binary);
    const std::uint64_t n = hs.size();
    for (int i = 0; i < 8; ++i) out.put(static_cast<char>((n >> (8 * i)) & 0xff));
    out.write(hs.data(), static_cast<std::streamsize>(hs.size()));
    out.write(reinterpret_cast<const char*>(payload.data()),
              static_cast<std::streamsize>(payload.size()));
}

inline void write_text(const std::string& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary);
    out << text;
}

inline Tensor uniform_tensor(std::vector<int> shape, std::mt19937& rng, float lo, float hi) {
    std::uniform_real_distribution<float> dist(lo, hi);
    Tensor t = Tensor::zeros(std::move(shape));
    for (float& v : t.data) v = dist(rng);
    return t;
}

struct ModelDef {
    nlohmann::json descriptor;
    std::map<std::string, Tensor> tensors;

    // Builds the ModelSpec in memory, bypassing file IO.
    emocam::ModelSpec build() const {
        emocam::ModelSpec model = emocam::parse_descriptor(descriptor);
        model.weights = tensors;
        emocam::detail::validate_model(model);
        return model;
    }

    // Writes descriptor + container and returns their paths.
    std::pair<std::string, std::string> write(const std::filesystem::path& dir,
                                              const std::string& stem = "model") const {
        const auto desc = (dir / (stem + ".json")).string();
        const auto cont = (dir / (stem + ".bin")).string();
        write_text(desc, descriptor.dump(2));
        write_container_raw(cont, tensors);
        return {desc, cont};
    }
};

// Single linear layer, identity weight and zero bias, two labels.
inline ModelDef identity_linear_model() {
    ModelDef def;
    def.descriptor = {
        {"input", {{"channels", 2}, {"height", 1}, {"width", 1}}},
        {"normalization", {{"mean", {0.0, 0.0}}, {"std", {1.0, 1.0}}}},
        {"labels", {"negative", "positive"}},
        {"layers",
         {{{"name", "flatten"}, {"kind", "flatten"}},
          {{"name", "fc"},
           {"kind", "linear"},
           {"out_features", 2},
           {"weights", "fc.weight"},
           {"bias", "fc.bias"}}}}};
    def.tensors["fc.weight"] = Tensor({2, 2}, {1.0f, 0.0f, 0.0f, 1.0f});
    def.tensors["fc.bias"] = Tensor({2}, {0.0f, 0.0f});
    return def;
}

inline nlohmann::json conv_layer_json(const std::string& name, int out_c, int k, int stride,
                                      int padding) {
    return {{"name", name},       {"kind", "conv2d"},   {"out_channels", out_c},
            {"kernel", k},        {"stride", stride},   {"padding", padding},
            {"weights", name + ".weight"}, {"bias", name + ".bias"}};
}

inline nlohmann::json linear_layer_json(const std::string& name, int out_f) {
    return {{"name", name},
            {"kind", "linear"},
            {"out_features", out_f},
            {"weights", name + ".weight"},
            {"bias", name + ".bias"}};
}

inline void add_conv_weights(ModelDef& def, const std::string& name, int out_c, int in_c, int k,
                             std::mt19937& rng) {
    const float s = 1.0f / std::sqrt(static_cast<float>(in_c * k * k));
    def.tensors[name + ".weight"] = uniform_tensor({out_c, in_c, k, k}, rng, -s, s);
    def.tensors[name + ".bias"] = uniform_tensor({out_c}, rng, -s, s);
}

inline void add_linear_weights(ModelDef& def, const std::string& name, int out_f, int in_f,
                               std::mt19937& rng) {
    const float s = 1.0f / std::sqrt(static_cast<float>(in_f));
    def.tensors[name + ".weight"] = uniform_tensor({out_f, in_f}, rng, -s, s);
    def.tensors[name + ".bias"] = uniform_tensor({out_f}, rng, -s, s);
}

// AlexNet-family stack: 5 conv + 3 linear, 26 labels, 227x227 input.
// Classifier widths are trimmed so fixtures stay small; width_scale > 1
// narrows every channel/feature count by that factor for tests that need
// many full forward passes.
inline ModelDef alexnet_family_model(unsigned seed, int width_scale = 1) {
    std::mt19937 rng(seed);
    auto w = [&](int base) { return std::max(1, base / width_scale); };
    ModelDef def;
    def.descriptor = {
        {"input", {{"channels", 3}, {"height", 227}, {"width", 227}}},
        {"normalization",
         {{"mean", {0.485, 0.456, 0.406}}, {"std", {0.229, 0.224, 0.225}}}},
        {"labels", emotion_labels26()},
        {"layers",
         {conv_layer_json("conv1", w(64), 11, 4, 2),
          {{"name", "relu1"}, {"kind", "relu"}},
          {{"name", "pool1"}, {"kind", "maxpool"}, {"kernel", 3}, {"stride", 2}},
          conv_layer_json("conv2", w(192), 5, 1, 2),
          {{"name", "relu2"}, {"kind", "relu"}},
          {{"name", "pool2"}, {"kind", "maxpool"}, {"kernel", 3}, {"stride", 2}},
          conv_layer_json("conv3", w(384), 3, 1, 1),
          {{"name", "relu3"}, {"kind", "relu"}},
          conv_layer_json("conv4", w(256), 3, 1, 1),
          {{"name", "relu4"}, {"kind", "relu"}},
          conv_layer_json("conv5", w(256), 3, 1, 1),
          {{"name", "relu5"}, {"kind", "relu"}},
          {{"name", "pool5"}, {"kind", "maxpool"}, {"kernel", 3}, {"stride", 2}},
          {{"name", "avgpool"}, {"kind", "adaptive-avgpool"}, {"output", 6}},
          {{"name", "flatten"}, {"kind", "flatten"}},
          {{"name", "drop1"}, {"kind", "dropout"}, {"rate", 0.5}},
          linear_layer_json("fc1", w(512)),
          {{"name", "relu6"}, {"kind", "relu"}},
          {{"name", "drop2"}, {"kind", "dropout"}, {"rate", 0.5}},
          linear_layer_json("fc2", w(256)),
          {{"name", "relu7"}, {"kind", "relu"}},
          linear_layer_json("fc3", 26)}}};
    add_conv_weights(def, "conv1", w(64), 3, 11, rng);
    add_conv_weights(def, "conv2", w(192), w(64), 5, rng);
    add_conv_weights(def, "conv3", w(384), w(192), 3, rng);
    add_conv_weights(def, "conv4", w(256), w(384), 3, rng);
    add_conv_weights(def, "conv5", w(256), w(256), 3, rng);
    add_linear_weights(def, "fc1", w(512), w(256) * 6 * 6, rng);
    add_linear_weights(def, "fc2", w(256), w(512), rng);
    add_linear_weights(def, "fc3", 26, w(256), rng);
    return def;
}

// Desk-scale model: 3 conv + 2 linear over 64x64 inputs, 26 labels.
inline ModelDef small_convnet_model(unsigned seed) {
    std::mt19937 rng(seed);
    ModelDef def;
    def.descriptor = {
        {"input", {{"channels", 3}, {"height", 64}, {"width", 64}}},
        {"normalization", {{"mean", {0.5, 0.5, 0.5}}, {"std", {0.25, 0.25, 0.25}}}},
        {"labels", emotion_labels26()},
        {"layers",
         {conv_layer_json("conv1", 8, 3, 1, 1),
          {{"name", "relu1"}, {"kind", "relu"}},
          {{"name", "pool1"}, {"kind", "maxpool"}, {"kernel", 2}, {"stride", 2}},
          conv_layer_json("conv2", 16, 3, 1, 1),
          {{"name", "relu2"}, {"kind", "relu"}},
          {{"name", "pool2"}, {"kind", "maxpool"}, {"kernel", 2}, {"stride", 2}},
          conv_layer_json("conv3", 32, 3, 1, 1),
          {{"name", "relu3"}, {"kind", "relu"}},
          {{"name", "avgpool"}, {"kind", "adaptive-avgpool"}, {"output", 4}},
          {{"name", "flatten"}, {"kind", "flatten"}},
          linear_layer_json("fc1", 64),
          {{"name", "relu4"}, {"kind", "relu"}},
          linear_layer_json("fc2", 26)}}};
    add_conv_weights(def, "conv1", 8, 3, 3, rng);
    add_conv_weights(def, "conv2", 16, 8, 3, rng);
    add_conv_weights(def, "conv3", 32, 16, 3, rng);
    add_linear_weights(def, "fc1", 64, 32 * 4 * 4, rng);
    add_linear_weights(def, "fc2", 26, 64, rng);
    return def;
}

// A 1x1 identity conv (activations == input) followed by a configurable tail.
// Used to drive gradient and CAM computations from hand-picked activations.
inline ModelDef passthrough_conv_model(int channels, int height, int width,
                                       std::vector<nlohmann::json> tail_layers,
                                       std::map<std::string, Tensor> tail_tensors,
                                       std::vector<std::string> labels) {
    ModelDef def;
    std::vector<double> zeros(channels, 0.0), ones(channels, 1.0);
    nlohmann::json layers = nlohmann::json::array();
    layers.push_back(conv_layer_json("conv1", channels, 1, 1, 0));
    for (auto& l : tail_layers) layers.push_back(l);
    def.descriptor = {{"input", {{"channels", channels}, {"height", height}, {"width", width}}},
                      {"normalization", {{"mean", zeros}, {"std", ones}}},
                      {"labels", labels},
                      {"layers", layers}};
    Tensor w = Tensor::zeros({channels, channels, 1, 1});
    for (int c = 0; c < channels; ++c) w.data[static_cast<std::size_t>(c) * channels + c] = 1.0f;
    def.tensors["conv1.weight"] = w;
    def.tensors["conv1.bias"] = Tensor::zeros({channels});
    for (auto& [k, v] : tail_tensors) def.tensors[k] = v;
    return def;
}

// Random small conv model for split-identity sweeps: random conv blocks, an
// optional pooling stage, then one or two linear layers.
inline ModelDef random_model(unsigned seed) {
    std::mt19937 rng(seed);
    auto pick = [&](int lo, int hi) {
        return std::uniform_int_distribution<int>(lo, hi)(rng);
    };
    ModelDef def;
    const int in_c = pick(1, 3);
    const int in_h = pick(8, 14), in_w = pick(8, 14);
    int h = in_h, w = in_w;
    const int labels_n = pick(2, 5);
    std::vector<std::string> labels;
    for (int i = 0; i < labels_n; ++i) labels.push_back("L" + std::to_string(i));

    nlohmann::json layers = nlohmann::json::array();
    int c = in_c;
    const int blocks = pick(1, 3);
    for (int b = 0; b < blocks; ++b) {
        const int out_c = pick(1, 6);
        const int k = (h >= 3 && w >= 3 && pick(0, 1)) ? 3 : 1;
        const int pad = (k == 3 && pick(0, 1)) ? 1 : 0;
        const std::string name = "conv" + std::to_string(b + 1);
        layers.push_back(conv_layer_json(name, out_c, k, 1, pad));
        add_conv_weights(def, name, out_c, c, k, rng);
        c = out_c;
        h = h + 2 * pad - k + 1;
        w = w + 2 * pad - k + 1;
        if (pick(0, 1)) layers.push_back({{"name", "relu" + std::to_string(b + 1)}, {"kind", "relu"}});
        if (h >= 4 && w >= 4 && pick(0, 1)) {
            layers.push_back(
                {{"name", "pool" + std::to_string(b + 1)}, {"kind", "maxpool"}, {"kernel", 2}, {"stride", 2}});
            h = (h - 2) / 2 + 1;
            w = (w - 2) / 2 + 1;
        }
    }
    if (pick(0, 1)) {
        const int oh = pick(1, std::min(3, h)), ow = pick(1, std::min(3, w));
        layers.push_back({{"name", "avgpool"},
                          {"kind", "adaptive-avgpool"},
                          {"output", nlohmann::json::array({oh, ow})}});
        h = oh;
        w = ow;
    }
    layers.push_back({{"name", "flatten"}, {"kind", "flatten"}});
    if (pick(0, 1)) layers.push_back({{"name", "drop"}, {"kind", "dropout"}, {"rate", 0.3}});
    int feat = c * h * w;
    if (pick(0, 1)) {
        const int mid = pick(2, 12);
        layers.push_back(linear_layer_json("fc_mid", mid));
        add_linear_weights(def, "fc_mid", mid, feat, rng);
        layers.push_back({{"name", "relu_mid"}, {"kind", "relu"}});
        feat = mid;
    }
    layers.push_back(linear_layer_json("fc_out", labels_n));
    add_linear_weights(def, "fc_out", labels_n, feat, rng);

    std::vector<double> mean(in_c, 0.0), sd(in_c, 1.0);
    def.descriptor = {{"input", {{"channels", in_c}, {"height", in_h}, {"width", in_w}}},
                      {"normalization", {{"mean", mean}, {"std", sd}}},
                      {"labels", labels},
                      {"layers", layers}};
    return def;
}

}  // namespace fixtures
