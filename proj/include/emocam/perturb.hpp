#pragma once

#include <algorithm>
#include <fstream>
#include <map>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "emocam/engine.hpp"
#include "emocam/image.hpp"
#include "emocam/util.hpp"

namespace emocam {

struct PositionGrid {
    std::vector<std::pair<double, double>> positions;  // relative (cx, cy)

    void validate() const {
        if (positions.empty()) throw Error("position grid must be nonempty");
        for (const auto& [cx, cy] : positions)
            if (!(cx >= 0.0 && cx <= 1.0 && cy >= 0.0 && cy <= 1.0))
                throw Error("grid positions must lie in [0,1]^2");
        for (std::size_t i = 0; i < positions.size(); ++i)
            for (std::size_t j = i + 1; j < positions.size(); ++j)
                if (positions[i] == positions[j]) throw Error("duplicate grid position");
    }
};

// 17 paste positions: the 4x4 lattice over {0.2,0.4,0.6,0.8}^2 in row-major
// order, plus the image center last.
inline PositionGrid default_grid() {
    PositionGrid grid;
    const double steps[] = {0.2, 0.4, 0.6, 0.8};
    for (double cy : steps)
        for (double cx : steps) grid.positions.emplace_back(cx, cy);
    grid.positions.emplace_back(0.5, 0.5);
    return grid;
}

// Positions file: one "cx cy" pair per line; blank lines and '#' comments
// are skipped.
inline PositionGrid parse_positions_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw Error("cannot open positions file: " + path);
    PositionGrid grid;
    std::string line;
    int line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        const auto first = line.find_first_not_of(" \t\r");
        if (first == std::string::npos || line[first] == '#') continue;
        double cx, cy;
        if (std::sscanf(line.c_str(), "%lf %lf", &cx, &cy) != 2)
            throw Error("malformed positions file line " + std::to_string(line_no) + ": " + line);
        grid.positions.emplace_back(cx, cy);
    }
    grid.validate();
    return grid;
}

struct PerturbationOutcome {
    std::string image_id;
    std::string patch_name;
    int position_index = 0;
    std::string original_label;
    std::string new_label;
    bool changed = false;
};

struct PerturbResult {
    PerturbationOutcome outcome;
    PredictionResult original;
    PredictionResult altered;
};

constexpr double kPatchHeightFraction = 0.2;

// Pastes the patch (resized to 0.2x the image height) at the given relative
// position and reports how the prediction moved. Original and altered
// predictions go through identical preprocessing.
inline PerturbResult perturb_and_predict(const ModelSpec& model, const std::string& image_id,
                                         const ImageRGBA& image, const std::string& patch_name,
                                         const ImageRGBA& patch, int position_index,
                                         std::pair<double, double> position,
                                         double height_fraction = kPatchHeightFraction) {
    if (!(position.first >= 0.0 && position.first <= 1.0 && position.second >= 0.0 &&
          position.second <= 1.0))
        throw Error("paste position must lie in [0,1]^2");

    PerturbResult result;
    result.original = forward(model, to_model_input(image, model));
    const ImageRGBA altered =
        composite_over(image, patch, position.first, position.second, height_fraction);
    result.altered = forward(model, to_model_input(altered, model));

    result.outcome.image_id = image_id;
    result.outcome.patch_name = patch_name;
    result.outcome.position_index = position_index;
    result.outcome.original_label = model.labels[result.original.predicted_index];
    result.outcome.new_label = model.labels[result.altered.predicted_index];
    result.outcome.changed = result.outcome.original_label != result.outcome.new_label;
    return result;
}

struct ExperimentResult {
    std::vector<PerturbationOutcome> outcomes;  // sorted (image_id, patch, position)
    int skipped = 0;
};

// Full paste experiment over corpus x patches x grid. Per-image failures are
// counted and skipped rather than aborting the sweep. Output ordering is
// deterministic regardless of execution order.
inline ExperimentResult run_experiment(
    const ModelSpec& model,
    const std::vector<std::pair<std::string, ImageRGBA>>& corpus,
    const std::vector<std::pair<std::string, ImageRGBA>>& patches, const PositionGrid& grid,
    int workers = 1) {
    if (corpus.empty()) throw Error("perturbation experiment requires a nonempty corpus");
    if (patches.empty()) throw Error("perturbation experiment requires at least one patch");
    grid.validate();

    struct Slot {
        std::vector<PerturbationOutcome> outcomes;
        int skipped = 0;
    };
    std::vector<Slot> slots(corpus.size());
    parallel_for(corpus.size(), workers, [&](std::size_t i) {
        const auto& [image_id, image] = corpus[i];
        try {
            // One original prediction per (image, patch) pair comes from
            // perturb_and_predict itself; failures skip the whole image.
            for (const auto& [patch_name, patch] : patches) {
                for (std::size_t pos = 0; pos < grid.positions.size(); ++pos) {
                    const auto r =
                        perturb_and_predict(model, image_id, image, patch_name, patch,
                                            static_cast<int>(pos), grid.positions[pos]);
                    slots[i].outcomes.push_back(r.outcome);
                }
            }
        } catch (const std::exception&) {
            slots[i].outcomes.clear();
            ++slots[i].skipped;
        }
    });

    ExperimentResult result;
    for (auto& slot : slots) {
        result.skipped += slot.skipped;
        result.outcomes.insert(result.outcomes.end(), slot.outcomes.begin(), slot.outcomes.end());
    }
    std::sort(result.outcomes.begin(), result.outcomes.end(),
              [](const PerturbationOutcome& a, const PerturbationOutcome& b) {
                  if (a.image_id != b.image_id) return a.image_id < b.image_id;
                  if (a.patch_name != b.patch_name) return a.patch_name < b.patch_name;
                  return a.position_index < b.position_index;
              });
    return result;
}

struct SummaryRow {
    std::string patch_name;
    int position_index = 0;
    double percent_changed = 0.0;
    std::optional<std::string> modal_new_label;
};

// Per (patch, position): share of outcomes whose label changed and the most
// frequent switched-to label (ties break lexicographically; none when no
// outcome changed).
inline std::vector<SummaryRow> summarize(const std::vector<PerturbationOutcome>& outcomes) {
    std::map<std::pair<std::string, int>, std::pair<int, std::map<std::string, int>>> cells;
    std::map<std::pair<std::string, int>, int> totals;
    for (const auto& o : outcomes) {
        const auto key = std::make_pair(o.patch_name, o.position_index);
        ++totals[key];
        if (o.changed) {
            auto& cell = cells[key];
            ++cell.first;
            ++cell.second[o.new_label];
        }
    }
    std::vector<SummaryRow> rows;
    for (const auto& [key, total] : totals) {
        SummaryRow row;
        row.patch_name = key.first;
        row.position_index = key.second;
        const auto it = cells.find(key);
        if (it != cells.end() && it->second.first > 0) {
            row.percent_changed = 100.0 * it->second.first / total;
            int best = 0;
            for (const auto& [label, count] : it->second.second)
                if (count > best) {
                    best = count;
                    row.modal_new_label = label;
                }
        }
        rows.push_back(std::move(row));
    }
    return rows;
}

inline void write_outcomes_jsonl(const std::vector<PerturbationOutcome>& outcomes,
                                 const std::string& path) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw Error("cannot open for writing: " + path);
    for (const auto& o : outcomes) {
        nlohmann::json j = {{"image_id", o.image_id},
                            {"patch_name", o.patch_name},
                            {"position_index", o.position_index},
                            {"original_label", o.original_label},
                            {"new_label", o.new_label},
                            {"changed", o.changed}};
        out << j.dump() << "\n";
    }
}

// Summary CSV rows: patch, position_index, cx, cy, percent_changed,
// modal_new_label (empty when nothing changed).
inline void write_summary_csv(const std::vector<SummaryRow>& rows, const PositionGrid& grid,
                              const std::string& path) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw Error("cannot open for writing: " + path);
    out << "patch,position_index,cx,cy,percent_changed,modal_new_label\n";
    for (const auto& row : rows) {
        const auto& pos = grid.positions.at(static_cast<std::size_t>(row.position_index));
        out << csv_field(row.patch_name) << "," << row.position_index << ","
            << csv_float(pos.first) << "," << csv_float(pos.second) << ","
            << csv_float(row.percent_changed) << ","
            << (row.modal_new_label ? csv_field(*row.modal_new_label) : "") << "\n";
    }
}

}  // namespace emocam
