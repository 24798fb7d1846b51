#pragma once

#include <fstream>
#include <map>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "emocam/util.hpp"

namespace emocam {

// Pixel box in original-image coordinates; fractional coordinates are kept.
struct BoundingBox {
    double x_min = 0, y_min = 0, x_max = 0, y_max = 0;
};

struct Detection {
    std::string class_name;
    double score = 0.0;
    BoundingBox box;
};

struct ImageDetections {
    int width = 0;
    int height = 0;
    std::vector<Detection> detections;
};

using DetectionMap = std::map<std::string, ImageDetections>;

// Detections file: UTF-8 JSON lines, one object per line:
// {"image_id":"...","width":W,"height":H,
//  "detections":[{"class":"...","score":S,"box":[x_min,y_min,x_max,y_max]},...]}
inline DetectionMap parse_detections(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw Error("cannot open detections file: " + path);

    DetectionMap result;
    std::string line;
    int line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        nlohmann::json j;
        try {
            j = nlohmann::json::parse(line);
        } catch (const nlohmann::json::exception& e) {
            throw Error("malformed detections line " + std::to_string(line_no) + ": " + e.what());
        }
        std::string image_id;
        ImageDetections entry;
        try {
            image_id = j.at("image_id").get<std::string>();
            entry.width = j.value("width", 0);
            entry.height = j.value("height", 0);
            for (const auto& dj : j.at("detections")) {
                Detection d;
                d.class_name = dj.at("class").get<std::string>();
                d.score = dj.at("score").get<double>();
                const auto& b = dj.at("box");
                if (!b.is_array() || b.size() != 4)
                    throw Error("box must be [x_min,y_min,x_max,y_max]");
                d.box = {b[0].get<double>(), b[1].get<double>(), b[2].get<double>(),
                         b[3].get<double>()};
                entry.detections.push_back(std::move(d));
            }
        } catch (const nlohmann::json::exception& e) {
            throw Error("malformed detections line " + std::to_string(line_no) + ": " + e.what());
        }

        for (const auto& d : entry.detections) {
            if (d.class_name.empty())
                throw Error("invalid detection for image '" + image_id + "': empty class name");
            if (!(d.score >= 0.0 && d.score <= 1.0))
                throw Error("invalid detection for image '" + image_id +
                            "': score outside [0,1]");
            if (!(d.box.x_min >= 0.0 && d.box.x_min < d.box.x_max && d.box.y_min >= 0.0 &&
                  d.box.y_min < d.box.y_max))
                throw Error("invalid detection for image '" + image_id + "': degenerate box");
        }
        if (!result.emplace(image_id, std::move(entry)).second)
            throw Error("duplicate image_id in detections file: " + image_id);
    }
    return result;
}

inline void serialize_detections(const DetectionMap& dets, const std::string& path) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw Error("cannot open detections file for writing: " + path);
    for (const auto& [image_id, entry] : dets) {
        nlohmann::json j;
        j["image_id"] = image_id;
        j["width"] = entry.width;
        j["height"] = entry.height;
        j["detections"] = nlohmann::json::array();
        for (const auto& d : entry.detections)
            j["detections"].push_back(
                {{"class", d.class_name},
                 {"score", d.score},
                 {"box", {d.box.x_min, d.box.y_min, d.box.x_max, d.box.y_max}}});
        out << j.dump() << "\n";
    }
}

// Keeps detections whose score is strictly greater than the threshold,
// preserving order.
inline std::vector<Detection> filter_detections(const std::vector<Detection>& dets,
                                                double threshold = 0.005) {
    if (!(threshold >= 0.0 && threshold <= 1.0))
        throw Error("detection threshold must be in [0,1]");
    std::vector<Detection> out;
    for (const auto& d : dets)
        if (d.score > threshold) out.push_back(d);
    return out;
}

}  // namespace emocam
