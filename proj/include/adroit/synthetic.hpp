#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numbers>
#include <stdexcept>

#include "adroit/dataset.hpp"
#include "adroit/rng.hpp"

namespace adroit {

// Number of deterministic pattern variants each synthetic class renders as.
inline constexpr int kSyntheticVariants = 25;

// Class-conditional synthetic images: every class owns a bank of
// kSyntheticVariants deterministic wave patterns (two random low-frequency
// plane waves per channel), and each example is one of its class's variants
// plus seeded Gaussian noise. A variant tells the class apart only once a
// labeled example of it has been seen, so accuracy keeps improving as labels
// accumulate, while a small classifier still clears chance easily.
inline Dataset make_synthetic(int num_classes, int per_class, int side, Rng rng) {
    if (num_classes <= 0 || per_class <= 0 || side <= 0) {
        throw std::invalid_argument("make_synthetic: counts must be positive");
    }
    Dataset d;
    d.channels = 3;
    d.height = side;
    d.width = side;
    d.num_classes = num_classes;
    d.labels.reserve(static_cast<std::size_t>(num_classes) * static_cast<std::size_t>(per_class));
    d.pixels.reserve(d.labels.capacity() * 3u * static_cast<std::size_t>(side) * static_cast<std::size_t>(side));

    struct Wave {
        double a1, fx1, fy1, p1;
        double a2, fx2, fy2, p2;
    };
    std::vector<Wave> bank(static_cast<std::size_t>(num_classes) * kSyntheticVariants * 3);
    Rng proto = rng.fork("synthetic_prototypes");
    for (auto& w : bank) {
        auto freq = [&proto]() { return static_cast<double>(proto.uniform_below(3)); };
        auto amp = [&proto]() {
            return proto.uniform(0.10, 0.22) * (proto.uniform() < 0.5 ? -1.0 : 1.0);
        };
        w.a1 = amp();
        w.fx1 = freq();
        w.fy1 = freq();
        if (w.fx1 == 0 && w.fy1 == 0) w.fx1 = 1;
        w.p1 = proto.uniform(0.0, 2.0 * std::numbers::pi);
        w.a2 = amp();
        w.fx2 = freq();
        w.fy2 = freq();
        if (w.fx2 == 0 && w.fy2 == 0) w.fy2 = 1;
        w.p2 = proto.uniform(0.0, 2.0 * std::numbers::pi);
    }

    Rng noise = rng.fork("synthetic_noise");
    const double sigma = 0.10;
    for (int k = 0; k < num_classes; ++k) {
        for (int n = 0; n < per_class; ++n) {
            d.labels.push_back(k);
            int variant = static_cast<int>(noise.uniform_below(kSyntheticVariants));
            for (int c = 0; c < 3; ++c) {
                const Wave& w = bank[(static_cast<std::size_t>(k) * kSyntheticVariants +
                                      static_cast<std::size_t>(variant)) * 3 +
                                     static_cast<std::size_t>(c)];
                for (int y = 0; y < side; ++y) {
                    for (int x = 0; x < side; ++x) {
                        double xn = static_cast<double>(x) / side;
                        double yn = static_cast<double>(y) / side;
                        double v =
                            0.5 +
                            w.a1 * std::sin(2.0 * std::numbers::pi * (w.fx1 * xn + w.fy1 * yn) +
                                            w.p1) +
                            w.a2 * std::sin(2.0 * std::numbers::pi * (w.fx2 * xn + w.fy2 * yn) +
                                            w.p2) +
                            sigma * noise.normal();
                        v = std::clamp(v, 0.0, 1.0);
                        d.pixels.push_back(static_cast<std::uint8_t>(std::lround(v * 255.0)));
                    }
                }
            }
        }
    }
    return d;
}

} // namespace adroit
