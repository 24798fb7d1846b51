#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "emocam/activation_map.hpp"
#include "emocam/engine.hpp"
#include "emocam/image.hpp"
#include "emocam/model.hpp"
#include "emocam/util.hpp"

namespace emocam {

enum class CamMethod { GradCam, AblationCam, OcclusionGrid };

inline std::string to_string(CamMethod m) {
    switch (m) {
        case CamMethod::GradCam: return "gradcam";
        case CamMethod::AblationCam: return "ablationcam";
        case CamMethod::OcclusionGrid: return "occlusion";
    }
    return "?";
}

inline CamMethod cam_method_from_string(const std::string& s) {
    if (s == "gradcam") return CamMethod::GradCam;
    if (s == "ablationcam") return CamMethod::AblationCam;
    if (s == "occlusion") return CamMethod::OcclusionGrid;
    throw Error("unknown CAM method: " + s +
                " (expected gradcam, ablationcam or occlusion)");
}

// Feature-resolution attribution map before rectification and scaling;
// values may be negative.
struct RawMap {
    int width = 0;
    int height = 0;
    std::vector<float> values;
};

// Channel weights are the spatial means of the class-logit gradient; the raw
// map is the weighted sum of activation channels.
inline RawMap grad_cam_raw(const ModelSpec& model, const Tensor& acts, const ForwardTrace& trace,
                           int class_index, const std::string& target_layer) {
    const Tensor grad = tail_backward(model, trace, target_layer, class_index);

    const int channels = acts.shape[0], h = acts.shape[1], w = acts.shape[2];
    const std::size_t plane = static_cast<std::size_t>(h) * w;
    std::vector<double> alpha(channels, 0.0);
    for (int k = 0; k < channels; ++k) {
        double sum = 0.0;
        for (std::size_t i = 0; i < plane; ++i) sum += grad.data[k * plane + i];
        alpha[k] = sum / static_cast<double>(plane);
    }

    RawMap raw{w, h, std::vector<float>(plane, 0.0f)};
    for (std::size_t i = 0; i < plane; ++i) {
        double acc = 0.0;
        for (int k = 0; k < channels; ++k) acc += alpha[k] * acts.data[k * plane + i];
        raw.values[i] = static_cast<float>(acc);
    }
    return raw;
}

inline RawMap grad_cam_raw(const ModelSpec& model, const Tensor& input, int class_index,
                           const std::string& target_layer) {
    const auto [acts, trace] = forward_split(model, input, target_layer);
    return grad_cam_raw(model, acts, trace, class_index, target_layer);
}

// Gradient-free variant: each channel is weighted by the relative drop of
// the class logit when that channel is zeroed. Costs exactly one baseline
// plus one tail evaluation per channel.
inline RawMap ablation_cam_from_activations(const ModelSpec& model, const Tensor& acts,
                                            int class_index, const std::string& target_layer) {
    const double y_c = tail_forward(model, target_layer, acts)[class_index];
    if (std::abs(y_c) < 1e-8)
        throw Error("degenerate class score: |y_c| < 1e-8, ablation weights are undefined");

    const int channels = acts.shape[0], h = acts.shape[1], w = acts.shape[2];
    const std::size_t plane = static_cast<std::size_t>(h) * w;
    std::vector<double> weight(channels, 0.0);
    Tensor ablated = acts;
    for (int k = 0; k < channels; ++k) {
        std::copy_n(acts.data.begin(), acts.data.size(), ablated.data.begin());
        std::fill_n(ablated.data.begin() + k * plane, plane, 0.0f);
        const double y_k = tail_forward(model, target_layer, ablated)[class_index];
        weight[k] = (y_c - y_k) / y_c;
    }

    RawMap raw{w, h, std::vector<float>(plane, 0.0f)};
    for (std::size_t i = 0; i < plane; ++i) {
        double acc = 0.0;
        for (int k = 0; k < channels; ++k) acc += weight[k] * acts.data[k * plane + i];
        raw.values[i] = static_cast<float>(acc);
    }
    return raw;
}

inline RawMap ablation_cam_raw(const ModelSpec& model, const Tensor& input, int class_index,
                               const std::string& target_layer) {
    const auto [acts, trace] = forward_split(model, input, target_layer);
    return ablation_cam_from_activations(model, acts, class_index, target_layer);
}

// Occlusion sensitivity on a grid_n x grid_n partition of the model input:
// cell value is the class-logit drop when the cell region (all channels) is
// set to baseline_value.
inline RawMap occlusion_grid_raw(const ModelSpec& model, const Tensor& input, int class_index,
                                 int grid_n, float baseline_value) {
    if (grid_n < 1) throw Error("occlusion grid size must be >= 1");
    const double y0 = forward(model, input).logits[class_index];

    const int c = input.shape[0], h = input.shape[1], w = input.shape[2];
    RawMap raw{grid_n, grid_n, std::vector<float>(static_cast<std::size_t>(grid_n) * grid_n, 0.0f)};
    Tensor occluded = input;
    for (int gy = 0; gy < grid_n; ++gy) {
        const int y_lo = static_cast<int>(static_cast<std::int64_t>(gy) * h / grid_n);
        const int y_hi = static_cast<int>(static_cast<std::int64_t>(gy + 1) * h / grid_n);
        for (int gx = 0; gx < grid_n; ++gx) {
            const int x_lo = static_cast<int>(static_cast<std::int64_t>(gx) * w / grid_n);
            const int x_hi = static_cast<int>(static_cast<std::int64_t>(gx + 1) * w / grid_n);
            std::copy_n(input.data.begin(), input.data.size(), occluded.data.begin());
            for (int ch = 0; ch < c; ++ch)
                for (int y = y_lo; y < y_hi; ++y)
                    for (int x = x_lo; x < x_hi; ++x) occluded.at(ch, y, x) = baseline_value;
            const double y_occ = forward(model, occluded).logits[class_index];
            raw.values[static_cast<std::size_t>(gy) * grid_n + gx] =
                static_cast<float>(y0 - y_occ);
        }
    }
    return raw;
}

// Rectifies, upsamples to the target resolution (original image dims) and
// scales by the maximum so the output satisfies the ActivationMap
// invariants: values in [0,1], max exactly 1 unless identically zero.
inline ActivationMap normalize_map(const RawMap& raw, int out_w, int out_h) {
    if (out_w < 1 || out_h < 1) throw Error("normalize_map target dims must be >= 1");
    std::vector<float> rectified(raw.values.size());
    for (std::size_t i = 0; i < raw.values.size(); ++i) {
        const float v = raw.values[i];
        if (!std::isfinite(v)) throw Error("raw attribution map contains NaN or Inf");
        rectified[i] = v > 0.0f ? v : 0.0f;
    }
    ActivationMap map;
    map.width = out_w;
    map.height = out_h;
    map.values = resize_bilinear_map(rectified, raw.width, raw.height, out_w, out_h);
    float max_v = 0.0f;
    for (float v : map.values) max_v = std::max(max_v, v);
    if (max_v > 0.0f)
        for (float& v : map.values) v /= max_v;
    else
        std::fill(map.values.begin(), map.values.end(), 0.0f);
    return map;
}

struct OcclusionOptions {
    int grid_n = 7;
    float baseline_value = 0.0f;  // the per-channel mean, post-normalization
};

inline RawMap compute_cam_raw(const ModelSpec& model, const Tensor& input, int class_index,
                              const std::string& target_layer, CamMethod method,
                              const OcclusionOptions& occ = {}) {
    switch (method) {
        case CamMethod::GradCam:
            return grad_cam_raw(model, input, class_index, target_layer);
        case CamMethod::AblationCam:
            return ablation_cam_raw(model, input, class_index, target_layer);
        case CamMethod::OcclusionGrid:
            return occlusion_grid_raw(model, input, class_index, occ.grid_n, occ.baseline_value);
    }
    throw Error("unreachable CAM method");
}

// --- float map serialization: one text header line, then raw LE f32.

inline void write_map_file(const std::string& path, const ActivationMap& map) {
    std::vector<std::uint8_t> bytes;
    const std::string header =
        "EMOCAM-MAP v1 " + std::to_string(map.width) + " " + std::to_string(map.height) + "\n";
    bytes.insert(bytes.end(), header.begin(), header.end());
    for (float f : map.values) detail::write_f32_le(bytes, f);
    write_file_bytes(path, bytes.data(), bytes.size());
}

inline ActivationMap read_map_file(const std::string& path) {
    const auto bytes = read_file_bytes(path);
    const auto nl = std::find(bytes.begin(), bytes.end(), '\n');
    if (nl == bytes.end()) throw Error("malformed map file (no header line): " + path);
    const std::string header(bytes.begin(), nl);
    int w = 0, h = 0;
    if (std::sscanf(header.c_str(), "EMOCAM-MAP v1 %d %d", &w, &h) != 2 || w < 1 || h < 1)
        throw Error("malformed map file header: " + path);
    const std::size_t payload = static_cast<std::size_t>(nl - bytes.begin()) + 1;
    const std::size_t n = static_cast<std::size_t>(w) * h;
    if (bytes.size() < payload + n * 4)
        throw Error("truncated map file: " + path);
    ActivationMap map;
    map.width = w;
    map.height = h;
    map.values.resize(n);
    for (std::size_t i = 0; i < n; ++i)
        map.values[i] = detail::read_f32_le(bytes.data() + payload + i * 4);
    return map;
}

// 8-bit quantization for PGM visualization caches.
inline std::vector<std::uint8_t> quantize_map(const ActivationMap& map) {
    std::vector<std::uint8_t> gray(map.values.size());
    for (std::size_t i = 0; i < map.values.size(); ++i)
        gray[i] = static_cast<std::uint8_t>(
            std::lround(255.0 * std::clamp(static_cast<double>(map.values[i]), 0.0, 1.0)));
    return gray;
}

}  // namespace emocam
