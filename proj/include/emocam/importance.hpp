#pragma once

#include <cmath>
#include <vector>

#include "emocam/activation_map.hpp"
#include "emocam/detections.hpp"
#include "emocam/util.hpp"

namespace emocam {

struct ScoredDetection {
    Detection detection;
    double c_act = 0.0;
};

// True iff at least one pixel center lies inside the image-clipped box, i.e.
// box_importance is defined for it.
inline bool box_has_pixels(int map_width, int map_height, const BoundingBox& box) {
    const double x_min = std::max(box.x_min, 0.0);
    const double y_min = std::max(box.y_min, 0.0);
    const double x_max = std::min(box.x_max, static_cast<double>(map_width));
    const double y_max = std::min(box.y_max, static_cast<double>(map_height));
    return static_cast<int>(std::ceil(x_min - 0.5)) <= static_cast<int>(std::ceil(x_max - 0.5)) - 1 &&
           static_cast<int>(std::ceil(y_min - 0.5)) <= static_cast<int>(std::ceil(y_max - 0.5)) - 1;
}

// Mean CAM activation inside the box: the sum of map values over the pixels
// whose centers lie inside the (image-clipped) box, divided by that pixel
// count. A pixel at integer (x,y) belongs iff x_min <= x+0.5 < x_max and
// likewise for y, so fractional boxes are handled unambiguously.
inline double box_importance(const ActivationMap& map, const BoundingBox& box) {
    const double x_min = std::max(box.x_min, 0.0);
    const double y_min = std::max(box.y_min, 0.0);
    const double x_max = std::min(box.x_max, static_cast<double>(map.width));
    const double y_max = std::min(box.y_max, static_cast<double>(map.height));

    const int x_lo = static_cast<int>(std::ceil(x_min - 0.5));
    const int x_hi = static_cast<int>(std::ceil(x_max - 0.5)) - 1;
    const int y_lo = static_cast<int>(std::ceil(y_min - 0.5));
    const int y_hi = static_cast<int>(std::ceil(y_max - 0.5)) - 1;
    if (x_lo > x_hi || y_lo > y_hi)
        throw Error("degenerate box: no pixel centers inside the image-clipped box");

    double sum = 0.0;
    for (int y = y_lo; y <= y_hi; ++y)
        for (int x = x_lo; x <= x_hi; ++x) sum += map.at(x, y);
    return sum / (static_cast<double>(x_hi - x_lo + 1) * (y_hi - y_lo + 1));
}

// The set B*: detections whose mean activation strictly exceeds the
// threshold, annotated with their scores, order preserved.
inline std::vector<ScoredDetection> select_important(const std::vector<Detection>& dets,
                                                     const ActivationMap& map,
                                                     double threshold = 0.3) {
    if (!(threshold >= 0.0 && threshold <= 1.0))
        throw Error("importance threshold must be in [0,1]");
    std::vector<ScoredDetection> out;
    for (const auto& d : dets) {
        const double c_act = box_importance(map, d.box);
        if (c_act > threshold) out.push_back({d, c_act});
    }
    return out;
}

}  // namespace emocam
