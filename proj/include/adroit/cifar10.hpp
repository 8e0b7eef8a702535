#pragma once

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "adroit/config.hpp"
#include "adroit/dataset.hpp"
#include "adroit/errors.hpp"

namespace adroit {

// CIFAR-10 binary record: 1 label byte, then 3072 pixel bytes laid out as
// 1024 red, 1024 green, 1024 blue, row-major within each plane. That matches
// the Dataset's CHW byte layout exactly, so loading is a straight copy.

inline constexpr int kCifarSide = 32;
inline constexpr int kCifarChannels = 3;
inline constexpr int kCifarClasses = 10;
inline constexpr std::int64_t kCifarRecordBytes = 1 + 3 * 32 * 32;
inline constexpr int kCifarRecordsPerFile = 10000;

namespace detail {

inline void read_records(const std::filesystem::path& file, int expected_records,
                         int num_classes, std::int64_t image_bytes, Dataset& out) {
    std::ifstream in(file, std::ios::binary);
    if (!in) throw io_error("cannot open " + file.string());
    in.seekg(0, std::ios::end);
    std::int64_t bytes = in.tellg();
    in.seekg(0, std::ios::beg);

    const std::int64_t record = 1 + image_bytes;
    if (bytes % record != 0) {
        throw format_error(file.string() + ": size " + std::to_string(bytes) +
                           " is not a whole number of " + std::to_string(record) +
                           "-byte records");
    }
    std::int64_t records = bytes / record;
    if (expected_records >= 0 && records != expected_records) {
        throw format_error(file.string() + ": expected " + std::to_string(expected_records) +
                           " records, found " + std::to_string(records));
    }

    std::vector<char> buf(static_cast<std::size_t>(record));
    for (std::int64_t r = 0; r < records; ++r) {
        if (!in.read(buf.data(), record)) {
            throw io_error(file.string() + ": short read");
        }
        int label = static_cast<unsigned char>(buf[0]);
        if (label >= num_classes) {
            throw format_error(file.string() + ": label " + std::to_string(label) +
                               " out of range");
        }
        out.labels.push_back(label);
        out.pixels.insert(out.pixels.end(),
                          reinterpret_cast<const std::uint8_t*>(buf.data()) + 1,
                          reinterpret_cast<const std::uint8_t*>(buf.data()) + record);
    }
}

} // namespace detail

// Loads the five standard training batch files (data_batch_1.bin ... _5.bin).
inline Dataset load_cifar10(const std::filesystem::path& dir) {
    Dataset d;
    d.channels = kCifarChannels;
    d.height = kCifarSide;
    d.width = kCifarSide;
    d.num_classes = kCifarClasses;
    d.pixels.reserve(static_cast<std::size_t>(5 * kCifarRecordsPerFile) * 3072u);
    d.labels.reserve(5 * kCifarRecordsPerFile);
    for (int i = 1; i <= 5; ++i) {
        auto file = dir / ("data_batch_" + std::to_string(i) + ".bin");
        if (!std::filesystem::exists(file)) {
            throw io_error("missing " + file.string());
        }
        detail::read_records(file, kCifarRecordsPerFile, kCifarClasses,
                             3 * 32 * 32, d);
    }
    d.validate();
    return d;
}

// Serializes a dataset in the same record layout (label byte + CHW planes).
// Works for any image geometry; a 3x32x32 dataset round-trips through the
// CIFAR reader bit-exactly.
inline void save_records(const Dataset& d, const std::filesystem::path& file) {
    std::ofstream out(file, std::ios::binary);
    if (!out) throw io_error("cannot create " + file.string());
    for (int i = 0; i < d.size(); ++i) {
        char label = static_cast<char>(d.labels[static_cast<std::size_t>(i)]);
        out.write(&label, 1);
        out.write(reinterpret_cast<const char*>(d.image_ptr(i)), d.image_size());
    }
    if (!out) throw io_error("write failed: " + file.string());
}

// Companion metadata so generic record files are self-describing.
inline void save_records_with_meta(const Dataset& d, const std::filesystem::path& prefix) {
    save_records(d, prefix.string() + ".bin");
    std::ofstream meta(prefix.string() + ".meta");
    if (!meta) throw io_error("cannot create " + prefix.string() + ".meta");
    meta << "channels = " << d.channels << "\n"
         << "height = " << d.height << "\n"
         << "width = " << d.width << "\n"
         << "num_classes = " << d.num_classes << "\n"
         << "count = " << d.size() << "\n";
}

inline Dataset load_records_with_meta(const std::filesystem::path& prefix) {
    std::ifstream meta_in(prefix.string() + ".meta");
    if (!meta_in) throw io_error("cannot open " + prefix.string() + ".meta");
    std::string text((std::istreambuf_iterator<char>(meta_in)), std::istreambuf_iterator<char>());
    KeyValues kv = KeyValues::parse(text);
    for (const char* key : {"channels", "height", "width", "num_classes", "count"}) {
        if (!kv.has(key)) throw format_error(prefix.string() + ".meta: missing key " + key);
    }
    Dataset d;
    d.channels = static_cast<int>(detail::parse_int("channels", kv.raw("channels")));
    d.height = static_cast<int>(detail::parse_int("height", kv.raw("height")));
    d.width = static_cast<int>(detail::parse_int("width", kv.raw("width")));
    d.num_classes = static_cast<int>(detail::parse_int("num_classes", kv.raw("num_classes")));
    int count = static_cast<int>(detail::parse_int("count", kv.raw("count")));
    detail::read_records(prefix.string() + ".bin", count, d.num_classes, d.image_size(), d);
    d.validate();
    return d;
}

} // namespace adroit
