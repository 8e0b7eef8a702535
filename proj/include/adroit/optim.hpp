#pragma once

#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <vector>

#include "adroit/nets.hpp"

namespace adroit {

// Optimizer state for one parameter vector. SGD uses classic coupled weight
// decay: v <- momentum*v + (g + wd*p); p <- p - lr*v. Adam is the standard
// bias-corrected form.
struct OptimizerState {
    enum class Kind { SgdMomentum, Adam };

    Kind kind = Kind::SgdMomentum;
    double lr = 0.0;
    double momentum = 0.0;
    double weight_decay = 0.0;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    std::int64_t step = 0;
    std::vector<double> m1; // velocity (SGD) or first moment (Adam)
    std::vector<double> m2; // second moment (Adam)

    static OptimizerState sgd(double lr, double momentum, double weight_decay,
                              std::size_t n) {
        OptimizerState s;
        s.kind = Kind::SgdMomentum;
        s.lr = lr;
        s.momentum = momentum;
        s.weight_decay = weight_decay;
        s.m1.assign(n, 0.0);
        return s;
    }

    static OptimizerState adam(double lr, std::size_t n) {
        OptimizerState s;
        s.kind = Kind::Adam;
        s.lr = lr;
        s.m1.assign(n, 0.0);
        s.m2.assign(n, 0.0);
        return s;
    }
};

inline void sgd_momentum_step(Params& p, const std::vector<double>& grads, OptimizerState& s) {
    if (s.kind != OptimizerState::Kind::SgdMomentum || p.values.size() != grads.size() ||
        p.values.size() != s.m1.size()) {
        throw std::invalid_argument("sgd_momentum_step: shape/kind mismatch");
    }
    ++s.step;
    for (std::size_t i = 0; i < p.values.size(); ++i) {
        double g = grads[i] + s.weight_decay * p.values[i];
        s.m1[i] = s.momentum * s.m1[i] + g;
        p.values[i] -= s.lr * s.m1[i];
    }
}

inline void adam_step(Params& p, const std::vector<double>& grads, OptimizerState& s) {
    if (s.kind != OptimizerState::Kind::Adam || p.values.size() != grads.size() ||
        p.values.size() != s.m1.size()) {
        throw std::invalid_argument("adam_step: shape/kind mismatch");
    }
    ++s.step;
    const double c1 = 1.0 - std::pow(s.beta1, static_cast<double>(s.step));
    const double c2 = 1.0 - std::pow(s.beta2, static_cast<double>(s.step));
    for (std::size_t i = 0; i < p.values.size(); ++i) {
        double g = grads[i] + s.weight_decay * p.values[i];
        s.m1[i] = s.beta1 * s.m1[i] + (1.0 - s.beta1) * g;
        s.m2[i] = s.beta2 * s.m2[i] + (1.0 - s.beta2) * g * g;
        double mhat = s.m1[i] / c1;
        double vhat = s.m2[i] / c2;
        p.values[i] -= s.lr * mhat / (std::sqrt(vhat) + s.eps);
    }
}

inline void optimizer_step(Params& p, const std::vector<double>& grads, OptimizerState& s) {
    if (s.kind == OptimizerState::Kind::SgdMomentum) {
        sgd_momentum_step(p, grads, s);
    } else {
        adam_step(p, grads, s);
    }
}

// Scales the gradient in place so its global L2 norm is at most max_norm.
// max_norm <= 0 disables clipping.
inline void clip_global_norm(std::vector<double>& grads, double max_norm) {
    if (max_norm <= 0.0) return;
    double sq = 0.0;
    for (double g : grads) sq += g * g;
    double norm = std::sqrt(sq);
    if (norm <= max_norm) return;
    double scale = max_norm / norm;
    for (double& g : grads) g *= scale;
}

} // namespace adroit
