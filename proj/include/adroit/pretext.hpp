#pragma once

#include <stdexcept>

#include "adroit/tensor.hpp"

namespace adroit {

// The six pretext transforms. Integer codes double as the rotation-head
// class labels. Rotations are counter-clockwise.
enum class PretextTransform : int {
    Rot0 = 0,
    Rot90 = 1,
    Rot180 = 2,
    Rot270 = 3,
    HFlip = 4,
    VFlip = 5,
};

inline constexpr int kNumPretextTransforms = 6;

// Applies t to a [channels, height, width] image. Channels are untouched;
// HFlip reverses columns, VFlip reverses rows. Rot90/Rot270 require a square
// spatial extent.
inline Tensor apply_pretext(const Tensor& image, PretextTransform t) {
    if (image.rank() != 3) {
        throw std::invalid_argument("apply_pretext: expected a [C,H,W] image");
    }
    const int c = image.dim(0), h = image.dim(1), w = image.dim(2);
    if ((t == PretextTransform::Rot90 || t == PretextTransform::Rot270) && h != w) {
        throw std::invalid_argument("apply_pretext: 90/270 rotation needs a square image");
    }
    if (t == PretextTransform::Rot0) return image;

    Tensor out({c, h, w});
    auto src = [&](int ch, int y, int x) {
        return image[(static_cast<std::int64_t>(ch) * h + y) * w + x];
    };
    std::int64_t k = 0;
    for (int ch = 0; ch < c; ++ch) {
        for (int y = 0; y < h; ++y) {
            for (int x = 0; x < w; ++x, ++k) {
                switch (t) {
                    case PretextTransform::Rot90: out[k] = src(ch, x, w - 1 - y); break;
                    case PretextTransform::Rot180: out[k] = src(ch, h - 1 - y, w - 1 - x); break;
                    case PretextTransform::Rot270: out[k] = src(ch, h - 1 - x, y); break;
                    case PretextTransform::HFlip: out[k] = src(ch, y, w - 1 - x); break;
                    case PretextTransform::VFlip: out[k] = src(ch, h - 1 - y, x); break;
                    case PretextTransform::Rot0: out[k] = src(ch, y, x); break;
                }
            }
        }
    }
    return out;
}

} // namespace adroit
