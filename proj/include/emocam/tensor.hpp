#pragma once

#include <cstdint>
#include <numeric>
#include <string>
#include <vector>

#include "emocam/util.hpp"

namespace emocam {

// Dense row-major f32 array. The universal numeric carrier for images,
// activations, gradients and weights.
struct Tensor {
    std::vector<int> shape;
    std::vector<float> data;

    Tensor() = default;
    Tensor(std::vector<int> shape_, std::vector<float> data_)
        : shape(std::move(shape_)), data(std::move(data_)) {
        validate();
    }

    static Tensor zeros(std::vector<int> shape) {
        const auto n = numel_of(shape);
        return Tensor(std::move(shape), std::vector<float>(static_cast<std::size_t>(n), 0.0f));
    }

    static std::int64_t numel_of(const std::vector<int>& shape) {
        if (shape.empty()) throw Error("tensor shape must have at least one dimension");
        std::int64_t n = 1;
        for (int d : shape) {
            if (d < 1) throw Error("tensor dimensions must be >= 1");
            n *= d;
        }
        return n;
    }

    std::int64_t numel() const { return static_cast<std::int64_t>(data.size()); }

    void validate() const {
        if (numel_of(shape) != static_cast<std::int64_t>(data.size()))
            throw Error("tensor data length does not match shape product");
    }

    bool same_shape(const std::vector<int>& other) const { return shape == other; }

    // CHW accessors for the 3-D layouts the engine works in.
    float& at(int c, int y, int x) {
        return data[(static_cast<std::size_t>(c) * shape[1] + y) * shape[2] + x];
    }
    float at(int c, int y, int x) const {
        return data[(static_cast<std::size_t>(c) * shape[1] + y) * shape[2] + x];
    }

    std::string shape_str() const {
        std::string s = "[";
        for (std::size_t i = 0; i < shape.size(); ++i) {
            if (i) s += ",";
            s += std::to_string(shape[i]);
        }
        return s + "]";
    }
};

}  // namespace emocam
