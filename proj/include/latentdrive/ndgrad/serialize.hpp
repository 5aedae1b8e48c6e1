#pragma once

#include <cstdint>
#include <cstring>
#include <fstream>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <vector>

#include "latentdrive/ndgrad/layers.hpp"

namespace latentdrive::ndgrad {

// Checkpoint layout (little endian throughout):
//   magic "NDGC", u32 version (= 1), u32 tensor count,
//   manifest: per tensor { u32 name_len, name bytes, u8 dtype (0 = f32),
//                          u8 ndim, u32 dims[ndim] },
//   payload: f32 values for each tensor, row major, in manifest order.

namespace detail {

inline constexpr char kCkptMagic[4] = {'N', 'D', 'G', 'C'};
inline constexpr uint32_t kCkptVersion = 1;

inline void write_u32(std::ostream& os, uint32_t v) {
    unsigned char b[4] = {static_cast<unsigned char>(v), static_cast<unsigned char>(v >> 8),
                          static_cast<unsigned char>(v >> 16), static_cast<unsigned char>(v >> 24)};
    os.write(reinterpret_cast<const char*>(b), 4);
}

inline uint32_t read_u32(std::istream& is) {
    unsigned char b[4];
    is.read(reinterpret_cast<char*>(b), 4);
    if (!is) throw std::runtime_error("checkpoint truncated while reading header");
    return static_cast<uint32_t>(b[0]) | (static_cast<uint32_t>(b[1]) << 8) |
           (static_cast<uint32_t>(b[2]) << 16) | (static_cast<uint32_t>(b[3]) << 24);
}

inline void write_f32(std::ostream& os, float v) {
    uint32_t bits;
    std::memcpy(&bits, &v, 4);
    write_u32(os, bits);
}

inline float read_f32(const unsigned char* p) {
    uint32_t bits = static_cast<uint32_t>(p[0]) | (static_cast<uint32_t>(p[1]) << 8) |
                    (static_cast<uint32_t>(p[2]) << 16) | (static_cast<uint32_t>(p[3]) << 24);
    float v;
    std::memcpy(&v, &bits, 4);
    return v;
}

}  // namespace detail

template <typename T>
void save_params(const std::string& path, const NamedState<T>& state) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw std::runtime_error("cannot open checkpoint for writing: " + path);
    os.write(detail::kCkptMagic, 4);
    detail::write_u32(os, detail::kCkptVersion);
    detail::write_u32(os, static_cast<uint32_t>(state.size()));
    for (const auto& [name, t] : state) {
        detail::write_u32(os, static_cast<uint32_t>(name.size()));
        os.write(name.data(), static_cast<std::streamsize>(name.size()));
        os.put(0);  // dtype f32
        os.put(static_cast<char>(t.ndim()));
        for (size_t d = 0; d < t.ndim(); ++d)
            detail::write_u32(os, static_cast<uint32_t>(t.shape()[d]));
    }
    for (const auto& [name, t] : state)
        for (T v : t.data()) detail::write_f32(os, static_cast<float>(v));
    if (!os) throw std::runtime_error("write failed for checkpoint: " + path);
}

struct CheckpointEntry {
    std::string name;
    Shape shape;
    std::vector<float> values;
};

/// Parse an entire checkpoint file. Throws on bad magic, unknown version or
/// dtype, and truncation; never returns partial content.
inline std::vector<CheckpointEntry> read_checkpoint(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw std::runtime_error("cannot open checkpoint: " + path);
    char magic[4];
    is.read(magic, 4);
    if (!is || std::memcmp(magic, detail::kCkptMagic, 4) != 0)
        throw std::runtime_error("not a checkpoint file (bad magic): " + path);
    uint32_t version = detail::read_u32(is);
    if (version != detail::kCkptVersion)
        throw std::runtime_error("unsupported checkpoint version " + std::to_string(version));
    uint32_t count = detail::read_u32(is);
    std::vector<CheckpointEntry> entries(count);
    for (auto& e : entries) {
        uint32_t name_len = detail::read_u32(is);
        if (name_len > 4096) throw std::runtime_error("checkpoint manifest corrupt (name too long)");
        e.name.resize(name_len);
        is.read(e.name.data(), name_len);
        int dtype = is.get();
        int ndim = is.get();
        if (!is) throw std::runtime_error("checkpoint truncated in manifest");
        if (dtype != 0) throw std::runtime_error("unsupported tensor dtype in checkpoint");
        if (ndim <= 0 || ndim > 8) throw std::runtime_error("checkpoint manifest corrupt (ndim)");
        e.shape.resize(static_cast<size_t>(ndim));
        for (auto& d : e.shape) d = static_cast<int>(detail::read_u32(is));
    }
    for (auto& e : entries) {
        size_t n = shape_numel(e.shape);
        std::vector<unsigned char> raw(n * 4);
        is.read(reinterpret_cast<char*>(raw.data()), static_cast<std::streamsize>(raw.size()));
        if (!is) throw std::runtime_error("checkpoint truncated in payload of '" + e.name + "'");
        e.values.resize(n);
        for (size_t i = 0; i < n; ++i) e.values[i] = detail::read_f32(raw.data() + i * 4);
    }
    return entries;
}

namespace detail {

template <typename T>
void load_by_name(const std::vector<CheckpointEntry>& entries, NamedState<T>& state,
                  const std::string& path) {
    std::unordered_map<std::string, const CheckpointEntry*> by_name;
    for (const auto& e : entries) by_name[e.name] = &e;
    for (auto& [name, t] : state) {
        auto it = by_name.find(name);
        if (it == by_name.end())
            throw std::runtime_error("checkpoint " + path + " missing tensor '" + name + "'");
        const CheckpointEntry& e = *it->second;
        if (e.shape != t.shape())
            throw std::runtime_error("checkpoint tensor '" + name + "' has shape " + shape_str(e.shape) +
                                     ", expected " + shape_str(t.shape()));
        auto dst = t.mutable_data();
        for (size_t i = 0; i < dst.size(); ++i) dst[i] = static_cast<T>(e.values[i]);
    }
}

}  // namespace detail

/// Load a checkpoint into an existing state. Entries are matched by name and
/// must cover the state exactly (same set, same shapes).
template <typename T>
void load_params(const std::string& path, NamedState<T>& state) {
    auto entries = read_checkpoint(path);
    if (entries.size() != state.size())
        throw std::runtime_error("checkpoint has " + std::to_string(entries.size()) +
                                 " tensors, expected " + std::to_string(state.size()));
    detail::load_by_name(entries, state, path);
}

/// Same matching rules, but the file may hold additional tensors (one
/// combined checkpoint feeding several networks).
template <typename T>
void load_params_subset(const std::string& path, NamedState<T>& state) {
    auto entries = read_checkpoint(path);
    detail::load_by_name(entries, state, path);
}

/// Manifest names only, e.g. to identify which networks a checkpoint holds.
inline std::vector<std::string> param_names(const std::string& path) {
    std::vector<std::string> names;
    for (const auto& e : read_checkpoint(path)) names.push_back(e.name);
    return names;
}

}  // namespace latentdrive::ndgrad
