#pragma once

#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>

#include "adroit/errors.hpp"
#include "adroit/nets.hpp"

namespace adroit {

// Checkpoint file: 8-byte magic, u32 version, u64 architecture hash,
// u64 parameter count, then the parameters as little-endian 64-bit floats.
// Loading against a different architecture hash is a hard error.

inline constexpr char kCheckpointMagic[8] = {'A', 'D', 'R', 'T', 'C', 'K', 'P', 'T'};
inline constexpr std::uint32_t kCheckpointVersion = 1;

namespace detail {

template <typename T>
void write_le(std::ofstream& out, T v) {
    // host is little-endian on every supported platform
    out.write(reinterpret_cast<const char*>(&v), sizeof(v));
}

template <typename T>
T read_le(std::ifstream& in, const std::string& file) {
    T v;
    if (!in.read(reinterpret_cast<char*>(&v), sizeof(v))) {
        throw io_error(file + ": short read");
    }
    return v;
}

} // namespace detail

inline void save_checkpoint(const std::filesystem::path& file, const Params& p,
                            std::uint64_t arch_hash) {
    std::ofstream out(file, std::ios::binary);
    if (!out) throw io_error("cannot create " + file.string());
    out.write(kCheckpointMagic, sizeof(kCheckpointMagic));
    detail::write_le(out, kCheckpointVersion);
    detail::write_le(out, arch_hash);
    detail::write_le(out, static_cast<std::uint64_t>(p.values.size()));
    out.write(reinterpret_cast<const char*>(p.values.data()),
              static_cast<std::streamsize>(p.values.size() * sizeof(double)));
    if (!out) throw io_error("write failed: " + file.string());
}

inline Params load_checkpoint(const std::filesystem::path& file, std::uint64_t expected_hash) {
    std::ifstream in(file, std::ios::binary);
    if (!in) throw io_error("cannot open " + file.string());
    char magic[8];
    if (!in.read(magic, sizeof(magic)) || std::memcmp(magic, kCheckpointMagic, 8) != 0) {
        throw format_error(file.string() + ": bad checkpoint magic");
    }
    auto version = detail::read_le<std::uint32_t>(in, file.string());
    if (version != kCheckpointVersion) {
        throw format_error(file.string() + ": unsupported checkpoint version " +
                           std::to_string(version));
    }
    auto hash = detail::read_le<std::uint64_t>(in, file.string());
    if (hash != expected_hash) {
        throw format_error(file.string() + ": architecture hash mismatch");
    }
    auto count = detail::read_le<std::uint64_t>(in, file.string());
    Params p;
    p.values.resize(count);
    if (!in.read(reinterpret_cast<char*>(p.values.data()),
                 static_cast<std::streamsize>(count * sizeof(double)))) {
        throw io_error(file.string() + ": short read");
    }
    return p;
}

} // namespace adroit
