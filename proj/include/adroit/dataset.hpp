#pragma once

#include <algorithm>
#include <cstdint>
#include <stdexcept>
#include <vector>

#include "adroit/errors.hpp"
#include "adroit/rng.hpp"
#include "adroit/tensor.hpp"

namespace adroit {

// Image classification dataset. Pixels are stored as bytes (the CIFAR
// interchange granularity) and scaled to [0,1] doubles when batches are
// assembled, so a loaded record can be re-serialized bit-exactly.
struct Dataset {
    int channels = 0;
    int height = 0;
    int width = 0;
    int num_classes = 0;
    std::vector<std::uint8_t> pixels; // N * channels * height * width, CHW per image
    std::vector<int> labels;

    int size() const { return static_cast<int>(labels.size()); }
    std::int64_t image_size() const {
        return static_cast<std::int64_t>(channels) * height * width;
    }

    const std::uint8_t* image_ptr(int i) const {
        return pixels.data() + static_cast<std::size_t>(i) * static_cast<std::size_t>(image_size());
    }

    // Single image scaled to [0,1], shape [channels, height, width].
    Tensor image(int i) const {
        Tensor t({channels, height, width});
        const std::uint8_t* p = image_ptr(i);
        for (std::int64_t k = 0; k < image_size(); ++k) t[k] = p[k] / 255.0;
        return t;
    }

    void validate() const {
        if (static_cast<std::int64_t>(pixels.size()) !=
            static_cast<std::int64_t>(labels.size()) * image_size()) {
            throw format_error("Dataset: pixel buffer does not match label count");
        }
        if (num_classes <= 0) throw format_error("Dataset: num_classes must be positive");
        for (int y : labels) {
            if (y < 0 || y >= num_classes) {
                throw format_error("Dataset: label out of range");
            }
        }
    }
};

inline std::vector<int> class_counts(const Dataset& d) {
    std::vector<int> counts(static_cast<std::size_t>(d.num_classes), 0);
    for (int y : d.labels) counts[static_cast<std::size_t>(y)]++;
    return counts;
}

// New dataset holding the given examples, in the given order.
inline Dataset subset(const Dataset& d, const std::vector<int>& indices) {
    Dataset out;
    out.channels = d.channels;
    out.height = d.height;
    out.width = d.width;
    out.num_classes = d.num_classes;
    out.pixels.reserve(indices.size() * static_cast<std::size_t>(d.image_size()));
    out.labels.reserve(indices.size());
    for (int i : indices) {
        if (i < 0 || i >= d.size()) throw std::invalid_argument("subset: index out of range");
        const std::uint8_t* p = d.image_ptr(i);
        out.pixels.insert(out.pixels.end(), p, p + d.image_size());
        out.labels.push_back(d.labels[static_cast<std::size_t>(i)]);
    }
    return out;
}

// Keep floor(count/ratio) randomly chosen samples of each affected class;
// other classes untouched. Retained examples keep their original order, so
// images and labels are never altered, only membership.
inline Dataset apply_imbalance(const Dataset& d, double ratio,
                               const std::vector<int>& affected_classes, Rng rng) {
    if (ratio < 1.0) throw std::invalid_argument("apply_imbalance: ratio must be >= 1");
    std::vector<bool> affected(static_cast<std::size_t>(d.num_classes), false);
    for (int c : affected_classes) {
        if (c < 0 || c >= d.num_classes) {
            throw std::invalid_argument("apply_imbalance: affected class out of range");
        }
        affected[static_cast<std::size_t>(c)] = true;
    }

    std::vector<std::vector<int>> per_class(static_cast<std::size_t>(d.num_classes));
    for (int i = 0; i < d.size(); ++i) {
        per_class[static_cast<std::size_t>(d.labels[static_cast<std::size_t>(i)])].push_back(i);
    }

    std::vector<bool> keep(static_cast<std::size_t>(d.size()), true);
    for (int c = 0; c < d.num_classes; ++c) {
        if (!affected[static_cast<std::size_t>(c)]) continue;
        auto& members = per_class[static_cast<std::size_t>(c)];
        int want = static_cast<int>(static_cast<double>(members.size()) / ratio);
        Rng stream = rng.fork("imbalance", static_cast<std::uint64_t>(c));
        std::vector<int> chosen =
            stream.sample_without_replacement(static_cast<int>(members.size()), want);
        std::vector<bool> chosen_mask(members.size(), false);
        for (int k : chosen) chosen_mask[static_cast<std::size_t>(k)] = true;
        for (std::size_t k = 0; k < members.size(); ++k) {
            if (!chosen_mask[k]) keep[static_cast<std::size_t>(members[k])] = false;
        }
    }

    std::vector<int> kept;
    for (int i = 0; i < d.size(); ++i) {
        if (keep[static_cast<std::size_t>(i)]) kept.push_back(i);
    }
    return subset(d, kept);
}

} // namespace adroit
