#pragma once

#include <algorithm>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "emocam/analytics.hpp"
#include "emocam/cam.hpp"
#include "emocam/detections.hpp"
#include "emocam/engine.hpp"
#include "emocam/image.hpp"
#include "emocam/image_io.hpp"
#include "emocam/importance.hpp"
#include "emocam/model.hpp"
#include "emocam/perturb.hpp"
#include "emocam/util.hpp"

namespace emocam::cli {

struct RunConfig {
    std::string model_path;
    std::string weights_path;
    std::string detections_path;
    std::string images_dir;
    std::string out_dir = "out";
    std::vector<std::string> methods = {"gradcam"};
    double det_threshold = 0.005;
    double cact_threshold = 0.3;
    int grid_n = 7;
    int workers = 1;
    std::string positions_path;
    std::string classes_path;
    std::vector<std::string> patch_paths;
    bool rsa_normalized = false;

    void validate_common() const {
        if (!(det_threshold >= 0.0 && det_threshold <= 1.0))
            throw Error("--det-threshold must be in [0,1]");
        if (!(cact_threshold >= 0.0 && cact_threshold <= 1.0))
            throw Error("--cact-threshold must be in [0,1]");
        if (workers < 1) throw Error("--workers must be >= 1");
        if (grid_n < 1) throw Error("--grid-n must be >= 1");
    }
};

namespace detail {

inline std::string lower(std::string s) {
    for (char& c : s) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
    return s;
}

inline bool is_image_file(const std::filesystem::path& p) {
    static const std::set<std::string> exts = {".png", ".jpg", ".jpeg", ".ppm", ".pgm"};
    return exts.count(lower(p.extension().string())) > 0;
}

}  // namespace detail

// Sorted (image_id, path) listing of the corpus directory; image_id is the
// file stem.
inline std::vector<std::pair<std::string, std::string>> list_images(const std::string& dir) {
    if (!std::filesystem::is_directory(dir)) throw Error("not a directory: " + dir);
    std::vector<std::pair<std::string, std::string>> out;
    for (const auto& entry : std::filesystem::directory_iterator(dir)) {
        if (!entry.is_regular_file() || !detail::is_image_file(entry.path())) continue;
        out.emplace_back(entry.path().stem().string(), entry.path().string());
    }
    std::sort(out.begin(), out.end());
    for (std::size_t i = 1; i < out.size(); ++i)
        if (out[i].first == out[i - 1].first)
            throw Error("duplicate image id in corpus: " + out[i].first);
    return out;
}

namespace detail {

inline void ensure_dir(const std::filesystem::path& dir) {
    std::error_code ec;
    std::filesystem::create_directories(dir, ec);
    if (ec) throw Error("cannot create directory " + dir.string() + ": " + ec.message());
}

inline std::string hash_hex(std::uint64_t h) {
    char buf[17];
    std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
    return buf;
}

// Cache key for a method: occlusion maps depend on the grid size, so it is
// folded into the directory name.
inline std::string method_cache_key(CamMethod method, int grid_n) {
    if (method == CamMethod::OcclusionGrid) return "occlusion_g" + std::to_string(grid_n);
    return to_string(method);
}

struct CamOutput {
    ActivationMap map;        // at original image resolution
    int predicted_index = 0;
    std::vector<float> probabilities;
};

// Computes (or loads from cache) the normalized CAM for one image. The
// predicted class and probabilities are cached alongside the float map so
// cache hits skip inference entirely.
inline CamOutput compute_or_load_cam(const ModelSpec& model, const ImageRGBA& image,
                                     const std::string& image_id, CamMethod method, int grid_n,
                                     const std::filesystem::path& cache_root) {
    const auto method_dir =
        cache_root / hash_hex(model.weights_hash) / method_cache_key(method, grid_n);
    const auto map_path = method_dir / (image_id + ".camf32");
    const auto pred_path =
        cache_root / hash_hex(model.weights_hash) / "pred" / (image_id + ".json");

    CamOutput out;
    if (std::filesystem::exists(map_path) && std::filesystem::exists(pred_path)) {
        out.map = read_map_file(map_path.string());
        std::ifstream in(pred_path);
        nlohmann::json j;
        in >> j;
        out.predicted_index = j.at("predicted_index").get<int>();
        out.probabilities = j.at("probabilities").get<std::vector<float>>();
        if (out.map.width == image.width && out.map.height == image.height) return out;
    }

    const Tensor input = to_model_input(image, model);
    const std::string target = model.last_conv_layer();
    const auto [acts, trace] = forward_split(model, input, target);
    out.predicted_index = argmax_index(trace.logits);
    out.probabilities = softmax(trace.logits);

    RawMap raw;
    switch (method) {
        case CamMethod::GradCam:
            raw = grad_cam_raw(model, acts, trace, out.predicted_index, target);
            break;
        case CamMethod::AblationCam:
            raw = ablation_cam_from_activations(model, acts, out.predicted_index, target);
            break;
        case CamMethod::OcclusionGrid:
            raw = occlusion_grid_raw(model, input, out.predicted_index, grid_n, 0.0f);
            break;
    }
    out.map = normalize_map(raw, image.width, image.height);

    ensure_dir(method_dir);
    ensure_dir(pred_path.parent_path());
    write_map_file(map_path.string(), out.map);
    {
        std::ofstream pred(pred_path, std::ios::binary | std::ios::trunc);
        nlohmann::json j = {{"predicted_index", out.predicted_index},
                            {"probabilities", out.probabilities}};
        pred << j.dump() << "\n";
    }
    return out;
}

inline std::vector<std::string> read_classes_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw Error("cannot open classes file: " + path);
    std::vector<std::string> classes;
    std::string line;
    while (std::getline(in, line)) {
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (!line.empty()) classes.push_back(line);
    }
    if (classes.empty()) throw Error("classes file is empty: " + path);
    return classes;
}

// Global class ordering: the classes file when given, otherwise the sorted
// union of class names in the detections file (deterministic either way and
// shared across methods).
inline std::vector<std::string> class_ordering(const RunConfig& cfg, const DetectionMap& dets) {
    if (!cfg.classes_path.empty()) return read_classes_file(cfg.classes_path);
    std::set<std::string> names;
    for (const auto& [id, entry] : dets)
        for (const auto& d : entry.detections) names.insert(d.class_name);
    return {names.begin(), names.end()};
}

}  // namespace detail

inline int cmd_predict(const RunConfig& cfg) {
    cfg.validate_common();
    const ModelSpec model = load_model(cfg.model_path, cfg.weights_path);
    const auto corpus = list_images(cfg.images_dir);
    detail::ensure_dir(cfg.out_dir);
    const auto out_path = std::filesystem::path(cfg.out_dir) / "predictions.jsonl";

    if (corpus.empty()) {
        std::cerr << "warning: no images found in " << cfg.images_dir << "\n";
        std::ofstream out(out_path, std::ios::binary | std::ios::trunc);
        return 0;
    }

    struct Slot {
        std::string line;
        std::string error;
    };
    std::vector<Slot> slots(corpus.size());
    parallel_for(corpus.size(), cfg.workers, [&](std::size_t i) {
        try {
            const ImageRGBA image = decode_image(corpus[i].second);
            const auto pred = forward(model, to_model_input(image, model));
            nlohmann::json j = {{"image_id", corpus[i].first},
                                {"label", model.labels[pred.predicted_index]},
                                {"probabilities", pred.probabilities}};
            slots[i].line = j.dump();
        } catch (const std::exception& e) {
            slots[i].error = e.what();
        }
    });

    std::ofstream out(out_path, std::ios::binary | std::ios::trunc);
    if (!out) throw Error("cannot open for writing: " + out_path.string());
    int failures = 0;
    for (std::size_t i = 0; i < slots.size(); ++i) {
        if (!slots[i].error.empty()) {
            ++failures;
            std::cerr << "skipping " << corpus[i].first << ": " << slots[i].error << "\n";
            continue;
        }
        out << slots[i].line << "\n";
    }
    if (failures > 0)
        std::cerr << failures << " of " << corpus.size() << " images failed\n";
    return failures == static_cast<int>(corpus.size()) ? 1 : 0;
}

inline int cmd_analyze(const RunConfig& cfg) {
    cfg.validate_common();
    if (cfg.methods.empty()) throw Error("analyze requires at least one --methods entry");
    const ModelSpec model = load_model(cfg.model_path, cfg.weights_path);
    const DetectionMap dets = parse_detections(cfg.detections_path);
    const auto corpus = list_images(cfg.images_dir);
    detail::ensure_dir(cfg.out_dir);
    const auto out_dir = std::filesystem::path(cfg.out_dir);
    const auto cache_root = out_dir / "cache";

    const std::vector<std::string> classes = detail::class_ordering(cfg, dets);

    int decode_failures = 0, images_without_detections = 0, degenerate_boxes = 0;

    for (const auto& method_name : cfg.methods) {
        const CamMethod method = cam_method_from_string(method_name);

        struct Slot {
            bool ok = false;
            std::string error;
            std::string predicted_label;
            std::set<std::string> bstar_classes;
            std::string bstar_line;
            int degenerate = 0;
            bool had_detections = false;
        };
        std::vector<Slot> slots(corpus.size());

        parallel_for(corpus.size(), cfg.workers, [&](std::size_t i) {
            Slot& slot = slots[i];
            try {
                const ImageRGBA image = decode_image(corpus[i].second);
                const auto cam = detail::compute_or_load_cam(model, image, corpus[i].first, method,
                                                             cfg.grid_n, cache_root);
                slot.predicted_label = model.labels[cam.predicted_index];

                std::vector<Detection> filtered;
                const auto it = dets.find(corpus[i].first);
                if (it != dets.end()) {
                    slot.had_detections = true;
                    filtered = filter_detections(it->second.detections, cfg.det_threshold);
                }
                std::vector<Detection> usable;
                for (const auto& d : filtered) {
                    if (box_has_pixels(cam.map.width, cam.map.height, d.box))
                        usable.push_back(d);
                    else
                        ++slot.degenerate;
                }
                const auto bstar = select_important(usable, cam.map, cfg.cact_threshold);

                nlohmann::json bj = nlohmann::json::array();
                for (const auto& s : bstar) {
                    slot.bstar_classes.insert(s.detection.class_name);
                    bj.push_back({{"class", s.detection.class_name}, {"c_act", s.c_act}});
                }
                nlohmann::json line = {{"image_id", corpus[i].first},
                                       {"predicted_label", slot.predicted_label},
                                       {"method", to_string(method)},
                                       {"bstar", bj}};
                slot.bstar_line = line.dump();
                slot.ok = true;
            } catch (const std::exception& e) {
                slot.error = e.what();
            }
        });

        std::vector<ImageRecord> records;
        std::ofstream bstar_out(out_dir / ("bstar_" + to_string(method) + ".jsonl"),
                                std::ios::binary | std::ios::trunc);
        for (std::size_t i = 0; i < slots.size(); ++i) {
            const Slot& slot = slots[i];
            if (!slot.ok) {
                ++decode_failures;
                std::cerr << "skipping " << corpus[i].first << ": " << slot.error << "\n";
                continue;
            }
            if (!slot.had_detections) ++images_without_detections;
            degenerate_boxes += slot.degenerate;
            bstar_out << slot.bstar_line << "\n";
            records.push_back({slot.predicted_label, slot.bstar_classes});
        }

        const AssociationMatrix ma = accumulate(classes, model.labels, records);
        const NormalizedAssociation norm = normalize(ma);
        write_matrix_csv(ma, (out_dir / ("ma_" + to_string(method) + ".csv")).string());
        write_matrix_json(ma, (out_dir / ("ma_" + to_string(method) + ".json")).string());
        write_normalized_csv(norm, (out_dir / ("ma_norm_" + to_string(method) + ".csv")).string());

        const std::size_t k = std::min<std::size_t>(25, norm.class_names.size());
        if (k > 0) {
            const auto top = top_k_classes(norm, k);
            write_normalized_csv(
                norm, (out_dir / ("ma_norm_top25_" + to_string(method) + ".csv")).string(), &top);

            NormalizedAssociation restricted;
            restricted.emotion_labels = norm.emotion_labels;
            for (const auto& name : top) {
                const auto it = std::find(norm.class_names.begin(), norm.class_names.end(), name);
                restricted.class_names.push_back(name);
                restricted.percentages.push_back(
                    norm.percentages[static_cast<std::size_t>(it - norm.class_names.begin())]);
            }
            write_png((out_dir / ("ma_norm_top25_" + to_string(method) + ".png")).string(),
                      render_matrix_heatmap(restricted));
        }
    }

    if (images_without_detections > 0)
        std::cerr << images_without_detections / static_cast<int>(cfg.methods.size())
                  << " images had no detections entry (empty B*)\n";
    if (degenerate_boxes > 0)
        std::cerr << degenerate_boxes << " boxes had no pixel coverage and were skipped\n";
    return 0;
}

inline int cmd_rsa(const RunConfig& cfg) {
    cfg.validate_common();
    if (cfg.methods.size() < 2) throw Error("rsa requires at least two --methods entries");
    const auto out_dir = std::filesystem::path(cfg.out_dir);

    std::vector<std::pair<std::string, std::vector<double>>> flat;
    for (const auto& method_name : cfg.methods) {
        const CamMethod method = cam_method_from_string(method_name);
        const auto path = out_dir / ("ma_" + to_string(method) + ".json");
        if (!std::filesystem::exists(path))
            throw Error("missing association matrix for method '" + to_string(method) +
                        "': run analyze first (expected " + path.string() + ")");
        const AssociationMatrix m = read_matrix_json(path.string());
        flat.emplace_back(to_string(method),
                          cfg.rsa_normalized ? flatten(normalize(m)) : flatten(m));
    }
    const RsaMatrix r = rsa_from_vectors(flat);
    write_rsa_csv(r, (out_dir / "rsa_rho.csv").string(), (out_dir / "rsa_p.csv").string());
    return 0;
}

inline int cmd_perturb(const RunConfig& cfg) {
    cfg.validate_common();
    if (cfg.patch_paths.empty()) throw Error("perturb requires at least one --patches entry");
    const ModelSpec model = load_model(cfg.model_path, cfg.weights_path);
    const auto listing = list_images(cfg.images_dir);
    detail::ensure_dir(cfg.out_dir);

    std::vector<std::pair<std::string, ImageRGBA>> patches;
    for (const auto& path : cfg.patch_paths)
        patches.emplace_back(std::filesystem::path(path).stem().string(), decode_image(path));

    const PositionGrid grid =
        cfg.positions_path.empty() ? default_grid() : parse_positions_file(cfg.positions_path);

    std::vector<std::pair<std::string, ImageRGBA>> corpus;
    int decode_failures = 0;
    for (const auto& [id, path] : listing) {
        try {
            corpus.emplace_back(id, decode_image(path));
        } catch (const std::exception& e) {
            ++decode_failures;
            std::cerr << "skipping " << id << ": " << e.what() << "\n";
        }
    }
    if (corpus.empty()) throw Error("no decodable images in " + cfg.images_dir);

    const ExperimentResult result = run_experiment(model, corpus, patches, grid, cfg.workers);
    const auto out_dir = std::filesystem::path(cfg.out_dir);
    write_outcomes_jsonl(result.outcomes, (out_dir / "outcomes.jsonl").string());
    write_summary_csv(summarize(result.outcomes), grid,
                      (out_dir / "perturb_summary.csv").string());
    if (decode_failures + result.skipped > 0)
        std::cerr << decode_failures << " images failed to decode, " << result.skipped
                  << " skipped during the experiment\n";
    return 0;
}

inline int cmd_overlay(const RunConfig& cfg, const std::string& image_id) {
    cfg.validate_common();
    if (cfg.methods.empty()) throw Error("overlay requires a --methods entry");
    const ModelSpec model = load_model(cfg.model_path, cfg.weights_path);
    const DetectionMap dets = parse_detections(cfg.detections_path);
    const auto corpus = list_images(cfg.images_dir);

    const auto it = std::find_if(corpus.begin(), corpus.end(),
                                 [&](const auto& e) { return e.first == image_id; });
    if (it == corpus.end()) throw Error("unknown image id: " + image_id);

    detail::ensure_dir(cfg.out_dir);
    const auto out_dir = std::filesystem::path(cfg.out_dir);
    const CamMethod method = cam_method_from_string(cfg.methods.front());

    const ImageRGBA image = decode_image(it->second);
    const auto cam = detail::compute_or_load_cam(model, image, image_id, method, cfg.grid_n,
                                                 out_dir / "cache");

    ImageRGBA overlay = render_heatmap_overlay(image, cam.map);
    const auto det_it = dets.find(image_id);
    if (det_it != dets.end()) {
        std::vector<Detection> usable;
        for (const auto& d : filter_detections(det_it->second.detections, cfg.det_threshold))
            if (box_has_pixels(cam.map.width, cam.map.height, d.box)) usable.push_back(d);
        const std::uint8_t green[4] = {0, 255, 0, 255};
        for (const auto& s : select_important(usable, cam.map, cfg.cact_threshold))
            draw_rect(overlay, s.detection.box.x_min, s.detection.box.y_min,
                      s.detection.box.x_max, s.detection.box.y_max, green);
    }
    write_png((out_dir / ("overlay_" + image_id + ".png")).string(), overlay);
    write_pgm((out_dir / ("overlay_" + image_id + "_map.pgm")).string(), cam.map.width,
              cam.map.height, quantize_map(cam.map));
    return 0;
}

namespace detail {

// Config-file merge: command-line flags override config-file values, which
// override defaults. EMOCAM_WORKERS is the fallback for --workers.
inline void merge_config(RunConfig& cfg, const CLI::App& app, const std::string& config_path) {
    nlohmann::json j = nlohmann::json::object();
    if (!config_path.empty()) {
        std::ifstream in(config_path);
        if (!in) throw Error("cannot open config file: " + config_path);
        try {
            in >> j;
        } catch (const nlohmann::json::exception& e) {
            throw Error("malformed config file '" + config_path + "': " + e.what());
        }
    }
    auto flag_given = [&](const std::string& name) { return app.count(name) > 0; };
    auto take_str = [&](const char* flag, const char* key, std::string& dst) {
        if (!flag_given(flag) && j.contains(key)) dst = j.at(key).get<std::string>();
    };
    take_str("--model", "model", cfg.model_path);
    take_str("--weights", "weights", cfg.weights_path);
    take_str("--detections", "detections", cfg.detections_path);
    take_str("--images", "images", cfg.images_dir);
    take_str("--out", "out", cfg.out_dir);
    take_str("--positions", "positions", cfg.positions_path);
    take_str("--classes", "classes", cfg.classes_path);
    if (!flag_given("--methods") && j.contains("methods"))
        cfg.methods = j.at("methods").get<std::vector<std::string>>();
    if (!flag_given("--patches") && j.contains("patches"))
        cfg.patch_paths = j.at("patches").get<std::vector<std::string>>();
    if (!flag_given("--det-threshold") && j.contains("det_threshold"))
        cfg.det_threshold = j.at("det_threshold").get<double>();
    if (!flag_given("--cact-threshold") && j.contains("cact_threshold"))
        cfg.cact_threshold = j.at("cact_threshold").get<double>();
    if (!flag_given("--grid-n") && j.contains("grid_n")) cfg.grid_n = j.at("grid_n").get<int>();
    if (!flag_given("--rsa-normalized") && j.contains("rsa_normalized"))
        cfg.rsa_normalized = j.at("rsa_normalized").get<bool>();
    if (!flag_given("--workers")) {
        if (j.contains("workers")) {
            cfg.workers = j.at("workers").get<int>();
        } else if (const char* env = std::getenv("EMOCAM_WORKERS")) {
            cfg.workers = std::atoi(env);
            if (cfg.workers < 1) throw Error("EMOCAM_WORKERS must be a positive integer");
        }
    }
}

}  // namespace detail

// Entry point shared by the binary and the in-process tests.
inline int run(const std::vector<std::string>& args) {
    RunConfig cfg;
    std::string config_path;
    std::string overlay_image_id;

    CLI::App app{"corpus-level CAM/object-detection attribution toolkit for CNN emotion classifiers",
                 "emocam"};
    app.require_subcommand(1);
    app.fallthrough();
    app.add_option("--config", config_path, "JSON config file; flags override its values");
    app.add_option("--model", cfg.model_path, "architecture descriptor (JSON)");
    app.add_option("--weights", cfg.weights_path, "weights container");
    app.add_option("--detections", cfg.detections_path, "detections file (JSON lines)");
    app.add_option("--images", cfg.images_dir, "corpus image directory");
    app.add_option("--out", cfg.out_dir, "output directory");
    app.add_option("--methods", cfg.methods, "CAM methods: gradcam,ablationcam,occlusion")
        ->delimiter(',');
    app.add_option("--det-threshold", cfg.det_threshold, "detector score threshold (strict >)");
    app.add_option("--cact-threshold", cfg.cact_threshold, "box importance threshold (strict >)");
    app.add_option("--grid-n", cfg.grid_n, "occlusion grid size");
    app.add_option("--workers", cfg.workers, "worker threads (EMOCAM_WORKERS as fallback)");
    app.add_option("--positions", cfg.positions_path, "paste positions file");
    app.add_option("--classes", cfg.classes_path, "object class ordering file");
    app.add_option("--patches", cfg.patch_paths, "patch image paths")->delimiter(',');
    app.add_flag("--rsa-normalized", cfg.rsa_normalized,
                 "flatten the normalized matrix for RSA instead of raw counts");

    CLI::App* predict = app.add_subcommand("predict", "run the model over the corpus");
    CLI::App* analyze =
        app.add_subcommand("analyze", "CAM + box importance + association matrices");
    CLI::App* rsa_cmd = app.add_subcommand("rsa", "cross-method Spearman analysis");
    CLI::App* perturb = app.add_subcommand("perturb", "patch pasting experiment");
    CLI::App* overlay = app.add_subcommand("overlay", "render heatmap overlay with B* boxes");
    overlay->add_option("image_id", overlay_image_id, "image id to render")->required();

    std::vector<const char*> argv;
    argv.push_back("emocam");
    for (const auto& a : args) argv.push_back(a.c_str());
    try {
        app.parse(static_cast<int>(argv.size()), argv.data());
    } catch (const CLI::ParseError& e) {
        return app.exit(e);
    }

    try {
        detail::merge_config(cfg, app, config_path);
        if (predict->parsed()) return cmd_predict(cfg);
        if (analyze->parsed()) return cmd_analyze(cfg);
        if (rsa_cmd->parsed()) return cmd_rsa(cfg);
        if (perturb->parsed()) return cmd_perturb(cfg);
        if (overlay->parsed()) return cmd_overlay(cfg, overlay_image_id);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 1;
}

}  // namespace emocam::cli
