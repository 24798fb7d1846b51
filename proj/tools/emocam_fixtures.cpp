// Generates a self-contained synthetic bundle for trying the pipeline
// without external assets: a fixed-seed model (descriptor + weights
// container), a noise-image corpus, a matching detections file and three
// RGBA patch images.

#include <cmath>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <random>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "emocam/container.hpp"
#include "emocam/detections.hpp"
#include "emocam/image.hpp"
#include "emocam/image_io.hpp"
#include "emocam/model.hpp"

using emocam::ImageRGBA;
using emocam::Tensor;

namespace {

const std::vector<std::string> kEmotions = {
    "Adoration",    "Aesthetic Appreciation", "Amusement",    "Anxiety",
    "Awe",          "Awkwardness",            "Boredom",      "Calmness",
    "Confusion",    "Craving",                "Disgust",      "Empathic Pain",
    "Entrancement", "Excitement",             "Fear",         "Horror",
    "Interest",     "Joy",                    "Nostalgia",    "Relief",
    "Romance",      "Sadness",                "Satisfaction", "Sexual Desire",
    "Surprise",     "Sympathy"};

const std::vector<std::string> kClasses = {"Ball",  "Clothing", "Flower",   "Human face",
                                           "Plant", "Tree",     "Furniture"};

Tensor uniform(std::vector<int> shape, std::mt19937& rng, float scale) {
    std::uniform_real_distribution<float> dist(-scale, scale);
    Tensor t = Tensor::zeros(std::move(shape));
    for (float& v : t.data) v = dist(rng);
    return t;
}

void add_conv(nlohmann::json& layers, std::map<std::string, Tensor>& tensors,
              const std::string& name, int in_c, int out_c, std::mt19937& rng) {
    layers.push_back({{"name", name}, {"kind", "conv2d"}, {"out_channels", out_c}, {"kernel", 3},
                      {"stride", 1}, {"padding", 1}, {"weights", name + ".weight"},
                      {"bias", name + ".bias"}});
    const float s = 1.0f / std::sqrt(static_cast<float>(in_c * 9));
    tensors[name + ".weight"] = uniform({out_c, in_c, 3, 3}, rng, s);
    tensors[name + ".bias"] = uniform({out_c}, rng, s);
}

void add_linear(nlohmann::json& layers, std::map<std::string, Tensor>& tensors,
                const std::string& name, int in_f, int out_f, std::mt19937& rng) {
    layers.push_back({{"name", name}, {"kind", "linear"}, {"out_features", out_f},
                      {"weights", name + ".weight"}, {"bias", name + ".bias"}});
    const float s = 1.0f / std::sqrt(static_cast<float>(in_f));
    tensors[name + ".weight"] = uniform({out_f, in_f}, rng, s);
    tensors[name + ".bias"] = uniform({out_f}, rng, s);
}

void write_model(const std::filesystem::path& dir, unsigned seed, int side) {
    std::mt19937 rng(seed);
    nlohmann::json layers = nlohmann::json::array();
    std::map<std::string, Tensor> tensors;
    add_conv(layers, tensors, "conv1", 3, 8, rng);
    layers.push_back({{"name", "relu1"}, {"kind", "relu"}});
    layers.push_back({{"name", "pool1"}, {"kind", "maxpool"}, {"kernel", 2}, {"stride", 2}});
    add_conv(layers, tensors, "conv2", 8, 16, rng);
    layers.push_back({{"name", "relu2"}, {"kind", "relu"}});
    layers.push_back({{"name", "pool2"}, {"kind", "maxpool"}, {"kernel", 2}, {"stride", 2}});
    add_conv(layers, tensors, "conv3", 16, 32, rng);
    layers.push_back({{"name", "relu3"}, {"kind", "relu"}});
    layers.push_back({{"name", "avgpool"}, {"kind", "adaptive-avgpool"}, {"output", 4}});
    layers.push_back({{"name", "flatten"}, {"kind", "flatten"}});
    add_linear(layers, tensors, "fc1", 32 * 4 * 4, 64, rng);
    layers.push_back({{"name", "relu4"}, {"kind", "relu"}});
    add_linear(layers, tensors, "fc2", 64, static_cast<int>(kEmotions.size()), rng);

    nlohmann::json descriptor = {
        {"input", {{"channels", 3}, {"height", side}, {"width", side}}},
        {"normalization", {{"mean", {0.5, 0.5, 0.5}}, {"std", {0.25, 0.25, 0.25}}}},
        {"labels", kEmotions},
        {"layers", layers}};
    std::ofstream desc(dir / "model.json");
    desc << descriptor.dump(2) << "\n";
    emocam::write_container((dir / "model.bin").string(), tensors);
}

ImageRGBA noise_image(int w, int h, std::mt19937& rng) {
    std::uniform_int_distribution<int> byte(0, 255);
    ImageRGBA img = ImageRGBA::blank(w, h);
    for (std::size_t i = 0; i < img.pixels.size(); ++i)
        img.pixels[i] = (i % 4 == 3) ? 255 : static_cast<std::uint8_t>(byte(rng));
    return img;
}

// Simple painted stand-ins for the paste experiment: an ellipse "rugby
// ball", a spotted "soccer ball" disc and a petaled "lotus flower", all with
// transparent backgrounds.
ImageRGBA rugby_ball() {
    ImageRGBA img = ImageRGBA::blank(96, 64, 0, 0, 0, 0);
    for (int y = 0; y < 64; ++y)
        for (int x = 0; x < 96; ++x) {
            const double dx = (x - 48.0) / 46.0, dy = (y - 32.0) / 28.0;
            if (dx * dx + dy * dy <= 1.0) {
                std::uint8_t* p = img.px(x, y);
                p[0] = 139;
                p[1] = 69;
                p[2] = 19;
                p[3] = 255;
                if (std::abs(y - 32) <= 2 && x > 30 && x < 66 && (x / 6) % 2 == 0)
                    p[0] = p[1] = p[2] = 240;  // lacing
            }
        }
    return img;
}

ImageRGBA soccer_ball() {
    ImageRGBA img = ImageRGBA::blank(64, 64, 0, 0, 0, 0);
    for (int y = 0; y < 64; ++y)
        for (int x = 0; x < 64; ++x) {
            const double dx = (x - 32.0) / 30.0, dy = (y - 32.0) / 30.0;
            if (dx * dx + dy * dy <= 1.0) {
                std::uint8_t* p = img.px(x, y);
                const bool spot = ((x / 10) + (y / 10)) % 3 == 0;
                p[0] = p[1] = p[2] = spot ? 20 : 235;
                p[3] = 255;
            }
        }
    return img;
}

ImageRGBA lotus_flower() {
    ImageRGBA img = ImageRGBA::blank(72, 72, 0, 0, 0, 0);
    for (int y = 0; y < 72; ++y)
        for (int x = 0; x < 72; ++x) {
            const double dx = x - 36.0, dy = y - 36.0;
            const double r = std::sqrt(dx * dx + dy * dy);
            const double theta = std::atan2(dy, dx);
            const double petal = 34.0 * (0.55 + 0.45 * std::abs(std::cos(3.0 * theta)));
            if (r <= petal) {
                std::uint8_t* p = img.px(x, y);
                p[0] = 243;
                p[1] = r < 8 ? 220 : 130;
                p[2] = r < 8 ? 90 : 180;
                p[3] = 255;
            }
        }
    return img;
}

}  // namespace

int main(int argc, char** argv) {
    std::string out = "fixtures";
    int image_count = 20;
    int image_side = 64;
    unsigned seed = 1234;
    bool patches_only = false;

    CLI::App app{"synthetic model/corpus/detections/patch generator", "emocam-fixtures"};
    app.add_option("--out", out, "output directory");
    app.add_option("--images", image_count, "number of corpus images");
    app.add_option("--size", image_side, "image side length in pixels");
    app.add_option("--seed", seed, "RNG seed");
    app.add_flag("--patches-only", patches_only, "only write the patch images");
    CLI11_PARSE(app, argc, argv);

    const std::filesystem::path dir(out);
    std::filesystem::create_directories(dir / "patches");
    emocam::write_png((dir / "patches" / "rugby_ball.png").string(), rugby_ball());
    emocam::write_png((dir / "patches" / "soccer_ball.png").string(), soccer_ball());
    emocam::write_png((dir / "patches" / "lotus_flower.png").string(), lotus_flower());
    if (patches_only) {
        std::cout << "patches written to " << (dir / "patches").string() << "\n";
        return 0;
    }

    std::filesystem::create_directories(dir / "images");
    write_model(dir, seed, image_side);

    std::mt19937 rng(seed + 1);
    std::uniform_real_distribution<double> unit(0, 1);
    emocam::DetectionMap dets;
    for (int i = 0; i < image_count; ++i) {
        char name[16];
        std::snprintf(name, sizeof(name), "img%04d", i);
        emocam::write_ppm((dir / "images" / (std::string(name) + ".ppm")).string(),
                          noise_image(image_side, image_side, rng));

        emocam::ImageDetections entry;
        entry.width = image_side;
        entry.height = image_side;
        const int boxes = 1 + static_cast<int>(rng() % 4);
        for (int b = 0; b < boxes; ++b) {
            const double x0 = unit(rng) * (image_side - 8);
            const double y0 = unit(rng) * (image_side - 8);
            const double w = 4 + unit(rng) * (image_side - x0 - 4);
            const double h = 4 + unit(rng) * (image_side - y0 - 4);
            entry.detections.push_back({kClasses[rng() % kClasses.size()],
                                        0.001 + unit(rng) * 0.999,
                                        {x0, y0, std::min<double>(x0 + w, image_side),
                                         std::min<double>(y0 + h, image_side)}});
        }
        dets[name] = entry;
    }
    emocam::serialize_detections(dets, (dir / "detections.jsonl").string());

    std::ofstream classes(dir / "classes.txt");
    for (const auto& c : kClasses) classes << c << "\n";

    std::cout << "fixture bundle written to " << dir.string() << "\n";
    return 0;
}
