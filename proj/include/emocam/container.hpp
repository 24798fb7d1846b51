#pragma once

#include <algorithm>
#include <bit>
#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "emocam/tensor.hpp"
#include "emocam/util.hpp"

namespace emocam {

// Weights container layout:
//   bytes 0..7    little-endian u64: header length N
//   bytes 8..8+N  UTF-8 JSON: { "<tensor name>": {"dtype":"f32",
//                 "shape":[...], "offset":<bytes into payload>}, ... }
//   remainder     payload: little-endian IEEE-754 f32 values, row-major,
//                 non-overlapping, offsets 8-byte aligned
struct Container {
    std::map<std::string, Tensor> tensors;
    std::uint64_t content_hash = 0;  // FNV-1a over the full file bytes
};

namespace detail {

inline std::uint64_t read_u64_le(const std::uint8_t* p) {
    std::uint64_t v = 0;
    for (int i = 7; i >= 0; --i) v = (v << 8) | p[i];
    return v;
}

inline float read_f32_le(const std::uint8_t* p) {
    const std::uint32_t v = static_cast<std::uint32_t>(p[0]) |
                            (static_cast<std::uint32_t>(p[1]) << 8) |
                            (static_cast<std::uint32_t>(p[2]) << 16) |
                            (static_cast<std::uint32_t>(p[3]) << 24);
    return std::bit_cast<float>(v);
}

inline void write_u64_le(std::vector<std::uint8_t>& out, std::uint64_t v) {
    for (int i = 0; i < 8; ++i) out.push_back(static_cast<std::uint8_t>((v >> (8 * i)) & 0xff));
}

inline void write_f32_le(std::vector<std::uint8_t>& out, float f) {
    const auto v = std::bit_cast<std::uint32_t>(f);
    out.push_back(static_cast<std::uint8_t>(v & 0xff));
    out.push_back(static_cast<std::uint8_t>((v >> 8) & 0xff));
    out.push_back(static_cast<std::uint8_t>((v >> 16) & 0xff));
    out.push_back(static_cast<std::uint8_t>((v >> 24) & 0xff));
}

}  // namespace detail

inline Container parse_container(const std::vector<std::uint8_t>& bytes, const std::string& origin) {
    if (bytes.size() < 8) throw Error("malformed container header: " + origin + " is too short");
    const std::uint64_t header_len = detail::read_u64_le(bytes.data());
    if (8 + header_len > bytes.size())
        throw Error("malformed container header: declared header length exceeds file size in " + origin);

    nlohmann::json header;
    try {
        header = nlohmann::json::parse(bytes.begin() + 8, bytes.begin() + 8 + header_len);
    } catch (const nlohmann::json::exception& e) {
        throw Error("malformed container header in " + origin + ": " + e.what());
    }
    if (!header.is_object()) throw Error("malformed container header in " + origin + ": not a JSON object");

    const std::uint8_t* payload = bytes.data() + 8 + header_len;
    const std::uint64_t payload_size = bytes.size() - 8 - header_len;

    Container container;
    container.content_hash = fnv1a64(bytes.data(), bytes.size());

    std::vector<std::pair<std::uint64_t, std::uint64_t>> extents;  // (offset, byte length)
    for (auto it = header.begin(); it != header.end(); ++it) {
        const std::string& name = it.key();
        const auto& entry = it.value();
        try {
            if (entry.at("dtype").get<std::string>() != "f32")
                throw Error("tensor '" + name + "': unsupported dtype (only f32)");
            const auto shape = entry.at("shape").get<std::vector<int>>();
            const auto offset = entry.at("offset").get<std::uint64_t>();
            if (offset % 8 != 0)
                throw Error("tensor '" + name + "': offset not 8-byte aligned");
            const std::uint64_t n = static_cast<std::uint64_t>(Tensor::numel_of(shape));
            if (offset + n * 4 > payload_size)
                throw Error("tensor '" + name + "': extends past end of payload");
            std::vector<float> data(n);
            for (std::uint64_t i = 0; i < n; ++i)
                data[i] = detail::read_f32_le(payload + offset + i * 4);
            container.tensors.emplace(name, Tensor(shape, std::move(data)));
            extents.emplace_back(offset, n * 4);
        } catch (const nlohmann::json::exception& e) {
            throw Error("malformed container entry for tensor '" + name + "' in " + origin + ": " +
                        e.what());
        }
    }

    std::sort(extents.begin(), extents.end());
    for (std::size_t i = 1; i < extents.size(); ++i)
        if (extents[i - 1].first + extents[i - 1].second > extents[i].first)
            throw Error("overlapping tensors in container " + origin);

    return container;
}

inline Container read_container(const std::string& path) {
    return parse_container(read_file_bytes(path), path);
}

inline std::vector<std::uint8_t> serialize_container(const std::map<std::string, Tensor>& tensors) {
    nlohmann::json header = nlohmann::json::object();
    std::uint64_t offset = 0;
    for (const auto& [name, tensor] : tensors) {
        header[name] = {{"dtype", "f32"}, {"shape", tensor.shape}, {"offset", offset}};
        const std::uint64_t len = static_cast<std::uint64_t>(tensor.numel()) * 4;
        offset += (len + 7) / 8 * 8;
    }
    const std::string header_str = header.dump();

    std::vector<std::uint8_t> bytes;
    bytes.reserve(8 + header_str.size() + offset);
    detail::write_u64_le(bytes, header_str.size());
    bytes.insert(bytes.end(), header_str.begin(), header_str.end());
    for (const auto& [name, tensor] : tensors) {
        for (float f : tensor.data) detail::write_f32_le(bytes, f);
        while ((bytes.size() - 8 - header_str.size()) % 8 != 0) bytes.push_back(0);
    }
    return bytes;
}

inline void write_container(const std::string& path, const std::map<std::string, Tensor>& tensors) {
    const auto bytes = serialize_container(tensors);
    write_file_bytes(path, bytes.data(), bytes.size());
}

}  // namespace emocam
