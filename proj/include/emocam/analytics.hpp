#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <map>
#include <numeric>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include <boost/math/distributions/students_t.hpp>
#include <nlohmann/json.hpp>

#include "emocam/image.hpp"
#include "emocam/util.hpp"

namespace emocam {

// a_ij = number of images predicted with emotion j whose B* contains object
// class i at least once; n_j = number of images predicted with emotion j.
struct AssociationMatrix {
    std::vector<std::string> class_names;     // rows
    std::vector<std::string> emotion_labels;  // columns
    std::vector<std::vector<std::int64_t>> counts;
    std::vector<std::int64_t> images_per_emotion;
};

struct NormalizedAssociation {
    std::vector<std::string> class_names;
    std::vector<std::string> emotion_labels;
    std::vector<std::vector<double>> percentages;
};

struct RsaMatrix {
    std::vector<std::string> methods;
    std::vector<std::vector<double>> rho;
    std::vector<std::vector<double>> p_values;
};

struct ImageRecord {
    std::string predicted_label;
    std::set<std::string> bstar_classes;  // deduplicated per image
};

inline AssociationMatrix accumulate(const std::vector<std::string>& class_names,
                                    const std::vector<std::string>& emotion_labels,
                                    const std::vector<ImageRecord>& records) {
    AssociationMatrix m;
    m.class_names = class_names;
    m.emotion_labels = emotion_labels;
    m.counts.assign(class_names.size(), std::vector<std::int64_t>(emotion_labels.size(), 0));
    m.images_per_emotion.assign(emotion_labels.size(), 0);

    std::map<std::string, std::size_t> class_index, label_index;
    for (std::size_t i = 0; i < class_names.size(); ++i) class_index[class_names[i]] = i;
    for (std::size_t j = 0; j < emotion_labels.size(); ++j) label_index[emotion_labels[j]] = j;

    for (const auto& rec : records) {
        const auto lj = label_index.find(rec.predicted_label);
        if (lj == label_index.end())
            throw Error("unknown emotion label in corpus record: " + rec.predicted_label);
        ++m.images_per_emotion[lj->second];
        for (const auto& cls : rec.bstar_classes) {
            const auto ci = class_index.find(cls);
            if (ci == class_index.end())
                throw Error("unknown object class in corpus record: " + cls);
            ++m.counts[ci->second][lj->second];
        }
    }
    return m;
}

inline NormalizedAssociation normalize(const AssociationMatrix& m) {
    NormalizedAssociation out;
    out.class_names = m.class_names;
    out.emotion_labels = m.emotion_labels;
    out.percentages.assign(m.class_names.size(),
                           std::vector<double>(m.emotion_labels.size(), 0.0));
    for (std::size_t i = 0; i < m.class_names.size(); ++i)
        for (std::size_t j = 0; j < m.emotion_labels.size(); ++j)
            if (m.images_per_emotion[j] > 0)
                out.percentages[i][j] =
                    100.0 * static_cast<double>(m.counts[i][j]) / m.images_per_emotion[j];
    return out;
}

inline double row_mean(const std::vector<double>& row) {
    return std::accumulate(row.begin(), row.end(), 0.0) / static_cast<double>(row.size());
}

// Classes ranked by descending row mean; ties break lexicographically.
inline std::vector<std::string> top_k_classes(const NormalizedAssociation& m, std::size_t k = 25) {
    if (k < 1) throw Error("top-k requires k >= 1");
    std::vector<std::size_t> order(m.class_names.size());
    std::iota(order.begin(), order.end(), 0);
    std::vector<double> means(m.class_names.size());
    for (std::size_t i = 0; i < means.size(); ++i) means[i] = row_mean(m.percentages[i]);
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        if (means[a] != means[b]) return means[a] > means[b];
        return m.class_names[a] < m.class_names[b];
    });
    std::vector<std::string> out;
    for (std::size_t i = 0; i < order.size() && i < k; ++i)
        out.push_back(m.class_names[order[i]]);
    return out;
}

inline std::vector<double> flatten(const AssociationMatrix& m) {
    std::vector<double> v;
    v.reserve(m.class_names.size() * m.emotion_labels.size());
    for (const auto& row : m.counts)
        for (std::int64_t c : row) v.push_back(static_cast<double>(c));
    return v;
}

inline std::vector<double> flatten(const NormalizedAssociation& m) {
    std::vector<double> v;
    v.reserve(m.class_names.size() * m.emotion_labels.size());
    for (const auto& row : m.percentages) v.insert(v.end(), row.begin(), row.end());
    return v;
}

struct SpearmanResult {
    double rho = 0.0;
    double p = 0.0;
};

namespace detail {

inline std::vector<double> average_ranks(const std::vector<double>& v) {
    const std::size_t n = v.size();
    std::vector<std::size_t> idx(n);
    std::iota(idx.begin(), idx.end(), 0);
    std::stable_sort(idx.begin(), idx.end(),
                     [&](std::size_t a, std::size_t b) { return v[a] < v[b]; });
    std::vector<double> ranks(n);
    std::size_t i = 0;
    while (i < n) {
        std::size_t j = i;
        while (j + 1 < n && v[idx[j + 1]] == v[idx[i]]) ++j;
        // ties get the average of the ranks they span
        const double rank = (static_cast<double>(i + j)) / 2.0 + 1.0;
        for (std::size_t k = i; k <= j; ++k) ranks[idx[k]] = rank;
        i = j + 1;
    }
    return ranks;
}

}  // namespace detail

// Spearman rank correlation with average ranks for ties; the two-sided p
// comes from t = rho*sqrt((n-2)/(1-rho^2)) against Student's t with n-2
// degrees of freedom.
inline SpearmanResult spearman(const std::vector<double>& x, const std::vector<double>& y) {
    if (x.size() != y.size()) throw Error("spearman: input lengths differ");
    const std::size_t n = x.size();
    if (n < 3) throw Error("spearman: need at least 3 observations");

    const auto rx = detail::average_ranks(x);
    const auto ry = detail::average_ranks(y);
    double mean_x = 0.0, mean_y = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        mean_x += rx[i];
        mean_y += ry[i];
    }
    mean_x /= static_cast<double>(n);
    mean_y /= static_cast<double>(n);

    double sxy = 0.0, sxx = 0.0, syy = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        const double dx = rx[i] - mean_x, dy = ry[i] - mean_y;
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    if (sxx == 0.0 || syy == 0.0)
        throw Error("spearman: correlation undefined for a constant vector");

    SpearmanResult result;
    result.rho = sxy / std::sqrt(sxx * syy);
    result.rho = std::clamp(result.rho, -1.0, 1.0);

    const double dof = static_cast<double>(n) - 2.0;
    const double one_minus_r2 = 1.0 - result.rho * result.rho;
    if (one_minus_r2 <= 1e-14) {
        result.p = 0.0;
    } else {
        const double t = result.rho * std::sqrt(dof / one_minus_r2);
        boost::math::students_t_distribution<double> dist(dof);
        result.p = 2.0 * boost::math::cdf(boost::math::complement(dist, std::abs(t)));
    }
    return result;
}

// Pairwise Spearman over flattened per-method vectors. The result is
// symmetric with an exact unit diagonal.
inline RsaMatrix rsa_from_vectors(const std::vector<std::pair<std::string, std::vector<double>>>& flat) {
    if (flat.size() < 2) throw Error("RSA requires at least 2 methods");
    for (std::size_t i = 1; i < flat.size(); ++i)
        if (flat[i].second.size() != flat[0].second.size())
            throw Error("RSA requires identically shaped matrices across methods");

    RsaMatrix r;
    for (const auto& [name, _] : flat) r.methods.push_back(name);
    const std::size_t k = flat.size();
    r.rho.assign(k, std::vector<double>(k, 1.0));
    r.p_values.assign(k, std::vector<double>(k, 0.0));
    for (std::size_t i = 0; i < k; ++i)
        for (std::size_t j = i + 1; j < k; ++j) {
            const SpearmanResult s = spearman(flat[i].second, flat[j].second);
            r.rho[i][j] = r.rho[j][i] = s.rho;
            r.p_values[i][j] = r.p_values[j][i] = s.p;
        }
    return r;
}

inline RsaMatrix rsa(const std::vector<std::pair<std::string, AssociationMatrix>>& matrices) {
    if (matrices.size() < 2) throw Error("RSA requires at least 2 methods");
    for (std::size_t i = 1; i < matrices.size(); ++i)
        if (matrices[i].second.class_names != matrices[0].second.class_names ||
            matrices[i].second.emotion_labels != matrices[0].second.emotion_labels)
            throw Error("RSA requires identical class and emotion orderings across methods");
    std::vector<std::pair<std::string, std::vector<double>>> flat;
    for (const auto& [name, m] : matrices) flat.emplace_back(name, flatten(m));
    return rsa_from_vectors(flat);
}

// --- exports: CSV (UTF-8, comma separated, '.' decimal, 4 fractional
// digits) and a JSON sidecar used to reload matrices across commands.

inline void write_matrix_csv(const AssociationMatrix& m, const std::string& path) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw Error("cannot open for writing: " + path);
    out << "class";
    for (const auto& label : m.emotion_labels) out << "," << csv_field(label);
    out << "\n";
    for (std::size_t i = 0; i < m.class_names.size(); ++i) {
        out << csv_field(m.class_names[i]);
        for (std::size_t j = 0; j < m.emotion_labels.size(); ++j) out << "," << m.counts[i][j];
        out << "\n";
    }
}

inline void write_normalized_csv(const NormalizedAssociation& m, const std::string& path,
                                 const std::vector<std::string>* row_subset = nullptr) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw Error("cannot open for writing: " + path);
    out << "class";
    for (const auto& label : m.emotion_labels) out << "," << csv_field(label);
    out << "\n";
    auto write_row = [&](std::size_t i) {
        out << csv_field(m.class_names[i]);
        for (std::size_t j = 0; j < m.emotion_labels.size(); ++j)
            out << "," << csv_float(m.percentages[i][j]);
        out << "\n";
    };
    if (row_subset) {
        for (const auto& name : *row_subset) {
            const auto it = std::find(m.class_names.begin(), m.class_names.end(), name);
            if (it == m.class_names.end()) throw Error("unknown class in row subset: " + name);
            write_row(static_cast<std::size_t>(it - m.class_names.begin()));
        }
    } else {
        for (std::size_t i = 0; i < m.class_names.size(); ++i) write_row(i);
    }
}

inline void write_rsa_csv(const RsaMatrix& r, const std::string& rho_path,
                          const std::string& p_path) {
    auto write = [&](const std::vector<std::vector<double>>& grid, const std::string& path) {
        std::ofstream out(path, std::ios::binary | std::ios::trunc);
        if (!out) throw Error("cannot open for writing: " + path);
        out << "method";
        for (const auto& name : r.methods) out << "," << csv_field(name);
        out << "\n";
        for (std::size_t i = 0; i < r.methods.size(); ++i) {
            out << csv_field(r.methods[i]);
            for (std::size_t j = 0; j < r.methods.size(); ++j) out << "," << csv_float(grid[i][j]);
            out << "\n";
        }
    };
    write(r.rho, rho_path);
    write(r.p_values, p_path);
}

inline void write_matrix_json(const AssociationMatrix& m, const std::string& path) {
    nlohmann::json j;
    j["class_names"] = m.class_names;
    j["emotion_labels"] = m.emotion_labels;
    j["counts"] = m.counts;
    j["images_per_emotion"] = m.images_per_emotion;
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw Error("cannot open for writing: " + path);
    out << j.dump() << "\n";
}

inline AssociationMatrix read_matrix_json(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw Error("cannot open association matrix file: " + path);
    nlohmann::json j;
    try {
        in >> j;
        AssociationMatrix m;
        m.class_names = j.at("class_names").get<std::vector<std::string>>();
        m.emotion_labels = j.at("emotion_labels").get<std::vector<std::string>>();
        m.counts = j.at("counts").get<std::vector<std::vector<std::int64_t>>>();
        m.images_per_emotion = j.at("images_per_emotion").get<std::vector<std::int64_t>>();
        return m;
    } catch (const nlohmann::json::exception& e) {
        throw Error("malformed association matrix file '" + path + "': " + e.what());
    }
}

// Small colormapped grid render of a normalized matrix (values are
// percentages). Cell intensity uses the shared blue-to-red colormap.
inline ImageRGBA render_matrix_heatmap(const NormalizedAssociation& m, int cell_px = 12) {
    const int rows = static_cast<int>(m.class_names.size());
    const int cols = static_cast<int>(m.emotion_labels.size());
    if (rows < 1 || cols < 1) throw Error("cannot render an empty matrix");
    ImageRGBA img = ImageRGBA::blank(cols * cell_px, rows * cell_px);
    for (int i = 0; i < rows; ++i)
        for (int j = 0; j < cols; ++j) {
            std::uint8_t rgb[3];
            colormap_blue_red(static_cast<float>(m.percentages[i][j] / 100.0), rgb);
            for (int y = i * cell_px; y < (i + 1) * cell_px; ++y)
                for (int x = j * cell_px; x < (j + 1) * cell_px; ++x) {
                    std::uint8_t* p = img.px(x, y);
                    p[0] = rgb[0];
                    p[1] = rgb[1];
                    p[2] = rgb[2];
                }
        }
    return img;
}

}  // namespace emocam
