#pragma once

// Checkpoint archive layout (all integers little-endian):
//   "MWALKCK1"            8-byte magic
//   u64 config_hash
//   u64 step              Adam step counter
//   u64 epoch             last completed epoch
//   f64 baseline          PG moving-average baseline (bit pattern as u64)
//   u32 entry_count
//   entry_count x { u32 name_len, name bytes, u32 ndim, u32 dims[ndim], f32 data[prod(dims)] }
// Parameter values are stored under their path; Adam moments under
// "adam.m/<path>" and "adam.v/<path>".

#include <bit>
#include <cstdint>
#include <fstream>
#include <istream>
#include <map>
#include <ostream>
#include <string>

#include "mwalk/errors.hpp"
#include "mwalk/tensor.hpp"

namespace mwalk {

namespace detail {

inline void put_u32(std::ostream& os, std::uint32_t v) {
    char b[4];
    for (int i = 0; i < 4; ++i) b[i] = static_cast<char>((v >> (8 * i)) & 0xFF);
    os.write(b, 4);
}
inline void put_u64(std::ostream& os, std::uint64_t v) {
    char b[8];
    for (int i = 0; i < 8; ++i) b[i] = static_cast<char>((v >> (8 * i)) & 0xFF);
    os.write(b, 8);
}
inline std::uint64_t get_bytes(std::istream& is, int n) {
    unsigned char b[8] = {};
    is.read(reinterpret_cast<char*>(b), n);
    if (!is) throw DataError("checkpoint: truncated archive");
    std::uint64_t v = 0;
    for (int i = 0; i < n; ++i) v |= static_cast<std::uint64_t>(b[i]) << (8 * i);
    return v;
}
inline std::uint32_t get_u32(std::istream& is) { return static_cast<std::uint32_t>(get_bytes(is, 4)); }
inline std::uint64_t get_u64(std::istream& is) { return get_bytes(is, 8); }

}  // namespace detail

inline constexpr char kCheckpointMagic[8] = {'M', 'W', 'A', 'L', 'K', 'C', 'K', '1'};

struct Checkpoint {
    std::uint64_t config_hash = 0;
    std::uint64_t step = 0;   // Adam step count
    std::uint64_t epoch = 0;  // last completed training epoch
    double baseline = 0;      // PG baseline
    std::map<std::string, Tensor<float>> entries;
};

inline void write_checkpoint(std::ostream& os, const Checkpoint& ck) {
    os.write(kCheckpointMagic, 8);
    detail::put_u64(os, ck.config_hash);
    detail::put_u64(os, ck.step);
    detail::put_u64(os, ck.epoch);
    detail::put_u64(os, std::bit_cast<std::uint64_t>(ck.baseline));
    detail::put_u32(os, static_cast<std::uint32_t>(ck.entries.size()));
    for (const auto& [name, t] : ck.entries) {
        detail::put_u32(os, static_cast<std::uint32_t>(name.size()));
        os.write(name.data(), static_cast<std::streamsize>(name.size()));
        detail::put_u32(os, static_cast<std::uint32_t>(t.shape.size()));
        for (auto d : t.shape) detail::put_u32(os, static_cast<std::uint32_t>(d));
        for (float x : t.data) detail::put_u32(os, std::bit_cast<std::uint32_t>(x));
    }
    if (!os) throw Error("checkpoint: write failed");
}

inline Checkpoint read_checkpoint(std::istream& is) {
    char magic[8];
    is.read(magic, 8);
    if (!is || !std::equal(magic, magic + 8, kCheckpointMagic)) throw DataError("checkpoint: bad magic");
    Checkpoint ck;
    ck.config_hash = detail::get_u64(is);
    ck.step = detail::get_u64(is);
    ck.epoch = detail::get_u64(is);
    ck.baseline = std::bit_cast<double>(detail::get_u64(is));
    const auto count = detail::get_u32(is);
    for (std::uint32_t e = 0; e < count; ++e) {
        const auto len = detail::get_u32(is);
        std::string name(len, '\0');
        is.read(name.data(), len);
        const auto ndim = detail::get_u32(is);
        Shape shape(ndim);
        for (auto& d : shape) d = detail::get_u32(is);
        std::vector<float> data(shape_size(shape));
        for (auto& x : data) x = std::bit_cast<float>(detail::get_u32(is));
        ck.entries.emplace(std::move(name), Tensor<float>(std::move(shape), std::move(data)));
    }
    return ck;
}

inline Checkpoint make_checkpoint(const ParamStore<float>& store, std::uint64_t config_hash, std::uint64_t epoch = 0,
                                  double baseline = 0) {
    Checkpoint ck;
    ck.config_hash = config_hash;
    ck.epoch = epoch;
    ck.baseline = baseline;
    ck.step = store.step();
    for (const auto& [name, p] : store) {
        ck.entries.emplace(name, p.value);
        ck.entries.emplace("adam.m/" + name, Tensor<float>(p.value.shape, p.m));
        ck.entries.emplace("adam.v/" + name, Tensor<float>(p.value.shape, p.v));
    }
    return ck;
}

/// Restores values, moments and step into an already-constructed store of the same topology.
inline void restore_checkpoint(ParamStore<float>& store, const Checkpoint& ck) {
    for (auto& [name, p] : store) {
        auto load = [&](const std::string& key) -> const Tensor<float>& {
            auto it = ck.entries.find(key);
            if (it == ck.entries.end()) throw DataError("checkpoint: missing entry " + key);
            if (it->second.shape != p.value.shape)
                throw DimensionError("checkpoint: shape mismatch for " + key + ": " + shape_string(it->second.shape) +
                                     " vs " + shape_string(p.value.shape));
            return it->second;
        };
        p.value.data = load(name).data;
        p.m = load("adam.m/" + name).data;
        p.v = load("adam.v/" + name).data;
        p.zero_grad();
    }
    store.set_step(ck.step);
}

inline void save_checkpoint_file(const std::string& path, const Checkpoint& ck) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw Error("cannot open checkpoint for writing: " + path);
    write_checkpoint(os, ck);
}

inline Checkpoint load_checkpoint_file(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw DataError("cannot open checkpoint: " + path);
    return read_checkpoint(is);
}

}  // namespace mwalk
