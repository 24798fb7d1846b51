#pragma once

#include <vector>

#include "emocam/util.hpp"

namespace emocam {

// Normalized single-channel attribution map at original-image resolution.
// Values lie in [0,1]; the maximum is exactly 1 unless the map is all zero.
struct ActivationMap {
    int width = 0;
    int height = 0;
    std::vector<float> values;  // row-major

    float at(int x, int y) const { return values[static_cast<std::size_t>(y) * width + x]; }

    void validate() const {
        if (width < 1 || height < 1 ||
            values.size() != static_cast<std::size_t>(width) * height)
            throw Error("activation map dimensions do not match value count");
    }
};

}  // namespace emocam
