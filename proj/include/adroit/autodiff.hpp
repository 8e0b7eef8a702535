#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <stdexcept>
#include <vector>

#include "adroit/tensor.hpp"

namespace adroit {

// Reverse-mode autodiff on a linear tape. Every operation appends a node
// holding its value and a closure that scatters the node's gradient back to
// its parents. Nodes built purely from constants stay constant, so gradients
// stop exactly where a constant or detach() is introduced — the freeze
// contracts in the losses rely on that being exact, not approximate.
//
// Tapes are single-use: build a graph, call backward once, read gradients.
class Tape {
public:
    using Var = int;

    Tape() = default;
    Tape(const Tape&) = delete;
    Tape& operator=(const Tape&) = delete;

    Var input(Tensor v) { return push(std::move(v), true, {}); }
    Var constant(Tensor v) { return push(std::move(v), false, {}); }

    const Tensor& value(Var v) const { return node(v).value; }

    double scalar(Var v) const {
        const Tensor& t = node(v).value;
        if (t.size() != 1) throw std::invalid_argument("Tape::scalar: tensor is not scalar");
        return t[0];
    }

    // Valid after backward(); zero tensor for vars gradient never reached.
    const Tensor& grad(Var v) const { return node(v).grad; }

    bool requires_grad(Var v) const { return node(v).requires_grad; }

    void backward(Var out) {
        if (node(out).value.size() != 1) {
            throw std::invalid_argument("Tape::backward: output must be scalar");
        }
        for (auto& n : nodes_) {
            n.grad = Tensor(n.value.shape);
        }
        node(out).grad[0] = 1.0;
        for (int i = out; i >= 0; --i) {
            Node& n = nodes_[static_cast<std::size_t>(i)];
            if (n.requires_grad && n.backprop) n.backprop(*this);
        }
    }

    // ----- elementwise -----

    Var add(Var a, Var b) {
        check_same_shape(a, b, "add");
        Tensor out = value(a);
        const Tensor& vb = value(b);
        for (std::int64_t i = 0; i < out.size(); ++i) out[i] += vb[i];
        return unary_or_binary(std::move(out), {a, b}, [a, b](Tape& t, const Tensor& g) {
            t.accumulate(a, g);
            t.accumulate(b, g);
        });
    }

    Var sub(Var a, Var b) {
        check_same_shape(a, b, "sub");
        Tensor out = value(a);
        const Tensor& vb = value(b);
        for (std::int64_t i = 0; i < out.size(); ++i) out[i] -= vb[i];
        return unary_or_binary(std::move(out), {a, b}, [a, b](Tape& t, const Tensor& g) {
            t.accumulate(a, g);
            t.accumulate_scaled(b, g, -1.0);
        });
    }

    Var mul(Var a, Var b) {
        check_same_shape(a, b, "mul");
        Tensor out = value(a);
        const Tensor& vb = value(b);
        for (std::int64_t i = 0; i < out.size(); ++i) out[i] *= vb[i];
        return unary_or_binary(std::move(out), {a, b}, [a, b](Tape& t, const Tensor& g) {
            if (t.requires_grad(a)) {
                Tensor& ga = t.mutable_grad(a);
                const Tensor& vb2 = t.value(b);
                for (std::int64_t i = 0; i < g.size(); ++i) ga[i] += g[i] * vb2[i];
            }
            if (t.requires_grad(b)) {
                Tensor& gb = t.mutable_grad(b);
                const Tensor& va = t.value(a);
                for (std::int64_t i = 0; i < g.size(); ++i) gb[i] += g[i] * va[i];
            }
        });
    }

    Var affine(Var a, double scale, double shift) {
        Tensor out = value(a);
        for (double& x : out.data) x = scale * x + shift;
        return unary_or_binary(std::move(out), {a}, [a, scale](Tape& t, const Tensor& g) {
            t.accumulate_scaled(a, g, scale);
        });
    }

    Var relu(Var a) {
        Tensor out = value(a);
        for (double& x : out.data) x = x > 0 ? x : 0.0;
        return unary_or_binary(std::move(out), {a}, [a](Tape& t, const Tensor& g) {
            Tensor& ga = t.mutable_grad(a);
            const Tensor& va = t.value(a);
            for (std::int64_t i = 0; i < g.size(); ++i) {
                if (va[i] > 0) ga[i] += g[i];
            }
        });
    }

    Var leaky_relu(Var a, double slope) {
        Tensor out = value(a);
        for (double& x : out.data) x = x > 0 ? x : slope * x;
        return unary_or_binary(std::move(out), {a}, [a, slope](Tape& t, const Tensor& g) {
            Tensor& ga = t.mutable_grad(a);
            const Tensor& va = t.value(a);
            for (std::int64_t i = 0; i < g.size(); ++i) {
                ga[i] += g[i] * (va[i] > 0 ? 1.0 : slope);
            }
        });
    }

    Var sigmoid(Var a) {
        Tensor out = value(a);
        for (double& x : out.data) {
            x = x >= 0 ? 1.0 / (1.0 + std::exp(-x))
                       : std::exp(x) / (1.0 + std::exp(x));
        }
        Var r = unary_or_binary(std::move(out), {a}, {});
        attach_backprop(r, [a, r](Tape& t, const Tensor& g) {
            Tensor& ga = t.mutable_grad(a);
            const Tensor& y = t.value(r);
            for (std::int64_t i = 0; i < g.size(); ++i) ga[i] += g[i] * y[i] * (1.0 - y[i]);
        });
        return r;
    }

    Var exp(Var a) {
        Tensor out = value(a);
        for (double& x : out.data) x = std::exp(x);
        Var r = unary_or_binary(std::move(out), {a}, {});
        attach_backprop(r, [a, r](Tape& t, const Tensor& g) {
            Tensor& ga = t.mutable_grad(a);
            const Tensor& y = t.value(r);
            for (std::int64_t i = 0; i < g.size(); ++i) ga[i] += g[i] * y[i];
        });
        return r;
    }

    Var log(Var a) {
        Tensor out = value(a);
        for (double& x : out.data) x = std::log(x);
        return unary_or_binary(std::move(out), {a}, [a](Tape& t, const Tensor& g) {
            Tensor& ga = t.mutable_grad(a);
            const Tensor& va = t.value(a);
            for (std::int64_t i = 0; i < g.size(); ++i) ga[i] += g[i] / va[i];
        });
    }

    // Hard clamp; gradient passes only strictly inside the range.
    Var clamp(Var a, double lo, double hi) {
        Tensor out = value(a);
        for (double& x : out.data) x = std::clamp(x, lo, hi);
        return unary_or_binary(std::move(out), {a}, [a, lo, hi](Tape& t, const Tensor& g) {
            Tensor& ga = t.mutable_grad(a);
            const Tensor& va = t.value(a);
            for (std::int64_t i = 0; i < g.size(); ++i) {
                if (va[i] > lo && va[i] < hi) ga[i] += g[i];
            }
        });
    }

    Var square(Var a) { return mul(a, a); }

    // Value copy with the gradient link severed.
    Var detach(Var a) { return constant(value(a)); }

    // ----- shape -----

    Var reshape(Var a, std::vector<int> shape) {
        if (Tensor::count(shape) != value(a).size()) {
            throw std::invalid_argument("Tape::reshape: element count mismatch");
        }
        Tensor out(std::move(shape), value(a).data);
        return unary_or_binary(std::move(out), {a}, [a](Tape& t, const Tensor& g) {
            Tensor& ga = t.mutable_grad(a);
            for (std::int64_t i = 0; i < g.size(); ++i) ga[i] += g[i];
        });
    }

    // ----- linear algebra -----

    Var matmul(Var a, Var b) {
        const Tensor& va = value(a);
        const Tensor& vb = value(b);
        if (va.rank() != 2 || vb.rank() != 2 || va.dim(1) != vb.dim(0)) {
            throw std::invalid_argument("Tape::matmul: shape mismatch " +
                                        Tensor::shape_string(va.shape) + " x " +
                                        Tensor::shape_string(vb.shape));
        }
        const int M = va.dim(0), K = va.dim(1), N = vb.dim(1);
        Tensor out({M, N});
        matmul_accumulate(va.data.data(), vb.data.data(), out.data.data(), M, K, N);
        return unary_or_binary(std::move(out), {a, b}, [a, b, M, K, N](Tape& t, const Tensor& g) {
            const Tensor& va2 = t.value(a);
            const Tensor& vb2 = t.value(b);
            if (t.requires_grad(a)) {
                // dA[i][k] += sum_j g[i][j] * B[k][j]
                Tensor& ga = t.mutable_grad(a);
                for (int i = 0; i < M; ++i) {
                    for (int k = 0; k < K; ++k) {
                        const double* grow = &g.data[static_cast<std::size_t>(i) * N];
                        const double* brow = &vb2.data[static_cast<std::size_t>(k) * N];
                        double s = 0.0;
                        for (int j = 0; j < N; ++j) s += grow[j] * brow[j];
                        ga[static_cast<std::int64_t>(i) * K + k] += s;
                    }
                }
            }
            if (t.requires_grad(b)) {
                // dB[k][j] += sum_i A[i][k] * g[i][j]
                Tensor& gb = t.mutable_grad(b);
                for (int i = 0; i < M; ++i) {
                    const double* arow = &va2.data[static_cast<std::size_t>(i) * K];
                    const double* grow = &g.data[static_cast<std::size_t>(i) * N];
                    for (int k = 0; k < K; ++k) {
                        double av = arow[k];
                        double* gbrow = &gb.data[static_cast<std::size_t>(k) * N];
                        for (int j = 0; j < N; ++j) gbrow[j] += av * grow[j];
                    }
                }
            }
        });
    }

    Var add_rowvec(Var m, Var v) {
        const Tensor& vm = value(m);
        const Tensor& vv = value(v);
        if (vm.rank() != 2 || vv.rank() != 1 || vm.dim(1) != vv.dim(0)) {
            throw std::invalid_argument("Tape::add_rowvec: shape mismatch");
        }
        const int M = vm.dim(0), N = vm.dim(1);
        Tensor out = vm;
        for (int i = 0; i < M; ++i) {
            for (int j = 0; j < N; ++j) out[static_cast<std::int64_t>(i) * N + j] += vv[j];
        }
        return unary_or_binary(std::move(out), {m, v}, [m, v, M, N](Tape& t, const Tensor& g) {
            t.accumulate(m, g);
            if (t.requires_grad(v)) {
                Tensor& gv = t.mutable_grad(v);
                for (int i = 0; i < M; ++i) {
                    const double* grow = &g.data[static_cast<std::size_t>(i) * N];
                    for (int j = 0; j < N; ++j) gv[j] += grow[j];
                }
            }
        });
    }

    Var linear(Var x, Var w, Var b) { return add_rowvec(matmul(x, w), b); }

    // ----- convolution -----

    // x [B,IC,H,W], w [OC,IC,KH,KW], b [OC]; zero padding, square stride.
    Var conv2d(Var x, Var w, Var b, int stride, int pad) {
        const Tensor& vx = value(x);
        const Tensor& vw = value(w);
        const Tensor& vb = value(b);
        if (vx.rank() != 4 || vw.rank() != 4 || vb.rank() != 1 ||
            vx.dim(1) != vw.dim(1) || vw.dim(0) != vb.dim(0)) {
            throw std::invalid_argument("Tape::conv2d: shape mismatch");
        }
        const int B = vx.dim(0), IC = vx.dim(1), H = vx.dim(2), W = vx.dim(3);
        const int OC = vw.dim(0), KH = vw.dim(2), KW = vw.dim(3);
        const int OH = (H + 2 * pad - KH) / stride + 1;
        const int OW = (W + 2 * pad - KW) / stride + 1;
        if (OH <= 0 || OW <= 0) throw std::invalid_argument("Tape::conv2d: empty output");

        Tensor out({B, OC, OH, OW});
        for (int n = 0; n < B; ++n) {
            for (int oc = 0; oc < OC; ++oc) {
                double* plane = &out.data[(static_cast<std::size_t>(n) * OC + oc) *
                                          static_cast<std::size_t>(OH) * OW];
                std::fill(plane, plane + static_cast<std::size_t>(OH) * OW, vb[oc]);
            }
        }
        conv2d_core(vx.data.data(), vw.data.data(), out.data.data(), B, IC, H, W, OC, KH, KW,
                    OH, OW, stride, pad, ConvMode::Forward);

        return unary_or_binary(std::move(out), {x, w, b},
                               [x, w, b, B, IC, H, W, OC, KH, KW, OH, OW, stride,
                                pad](Tape& t, const Tensor& g) {
            const Tensor& vx2 = t.value(x);
            const Tensor& vw2 = t.value(w);
            if (t.requires_grad(b)) {
                Tensor& gb = t.mutable_grad(b);
                for (int n = 0; n < B; ++n) {
                    for (int oc = 0; oc < OC; ++oc) {
                        const double* plane = &g.data[(static_cast<std::size_t>(n) * OC + oc) *
                                                      static_cast<std::size_t>(OH) * OW];
                        double s = 0.0;
                        for (std::int64_t i = 0; i < static_cast<std::int64_t>(OH) * OW; ++i) {
                            s += plane[i];
                        }
                        gb[oc] += s;
                    }
                }
            }
            if (t.requires_grad(w)) {
                conv2d_core(vx2.data.data(), t.mutable_grad(w).data.data(), g.data.data(), B, IC,
                            H, W, OC, KH, KW, OH, OW, stride, pad, ConvMode::GradWeight);
            }
            if (t.requires_grad(x)) {
                conv2d_core(t.mutable_grad(x).data.data(), vw2.data.data(), g.data.data(), B, IC,
                            H, W, OC, KH, KW, OH, OW, stride, pad, ConvMode::GradInput);
            }
        });
    }

    // x [B,IC,H,W], w [IC,OC,KH,KW], b [OC];
    // output spatial size (H-1)*stride - 2*pad + KH + out_pad.
    Var conv_transpose2d(Var x, Var w, Var b, int stride, int pad, int out_pad) {
        const Tensor& vx = value(x);
        const Tensor& vw = value(w);
        const Tensor& vb = value(b);
        if (vx.rank() != 4 || vw.rank() != 4 || vb.rank() != 1 ||
            vx.dim(1) != vw.dim(0) || vw.dim(1) != vb.dim(0)) {
            throw std::invalid_argument("Tape::conv_transpose2d: shape mismatch");
        }
        const int B = vx.dim(0), IC = vx.dim(1), H = vx.dim(2), W = vx.dim(3);
        const int OC = vw.dim(1), KH = vw.dim(2), KW = vw.dim(3);
        const int OH = (H - 1) * stride - 2 * pad + KH + out_pad;
        const int OW = (W - 1) * stride - 2 * pad + KW + out_pad;
        if (OH <= 0 || OW <= 0) throw std::invalid_argument("Tape::conv_transpose2d: empty output");

        Tensor out({B, OC, OH, OW});
        for (int n = 0; n < B; ++n) {
            for (int oc = 0; oc < OC; ++oc) {
                double* plane = &out.data[(static_cast<std::size_t>(n) * OC + oc) *
                                          static_cast<std::size_t>(OH) * OW];
                std::fill(plane, plane + static_cast<std::size_t>(OH) * OW, vb[oc]);
            }
        }
        // Forward scatter is the adjoint of conv2d's input gradient.
        tconv_core(vx.data.data(), vw.data.data(), out.data.data(), B, IC, H, W, OC, KH, KW, OH,
                   OW, stride, pad, ConvMode::Forward);

        return unary_or_binary(std::move(out), {x, w, b},
                               [x, w, b, B, IC, H, W, OC, KH, KW, OH, OW, stride,
                                pad](Tape& t, const Tensor& g) {
            const Tensor& vx2 = t.value(x);
            const Tensor& vw2 = t.value(w);
            if (t.requires_grad(b)) {
                Tensor& gb = t.mutable_grad(b);
                for (int n = 0; n < B; ++n) {
                    for (int oc = 0; oc < OC; ++oc) {
                        const double* plane = &g.data[(static_cast<std::size_t>(n) * OC + oc) *
                                                      static_cast<std::size_t>(OH) * OW];
                        double s = 0.0;
                        for (std::int64_t i = 0; i < static_cast<std::int64_t>(OH) * OW; ++i) {
                            s += plane[i];
                        }
                        gb[oc] += s;
                    }
                }
            }
            if (t.requires_grad(w)) {
                tconv_core(vx2.data.data(), t.mutable_grad(w).data.data(), g.data.data(), B, IC,
                           H, W, OC, KH, KW, OH, OW, stride, pad, ConvMode::GradWeight);
            }
            if (t.requires_grad(x)) {
                tconv_core(t.mutable_grad(x).data.data(), vw2.data.data(), g.data.data(), B, IC,
                           H, W, OC, KH, KW, OH, OW, stride, pad, ConvMode::GradInput);
            }
        });
    }

    // ----- reductions & fused losses -----

    Var sum(Var a) {
        double s = 0.0;
        for (double x : value(a).data) s += x;
        return unary_or_binary(Tensor::scalar(s), {a}, [a](Tape& t, const Tensor& g) {
            Tensor& ga = t.mutable_grad(a);
            for (double& x : ga.data) x += g[0];
        });
    }

    // Mean over rows of (logsumexp(row) - row[label]); natural log.
    Var softmax_cross_entropy_mean(Var logits, std::vector<int> labels) {
        const Tensor& vl = value(logits);
        if (vl.rank() != 2 || static_cast<std::size_t>(vl.dim(0)) != labels.size()) {
            throw std::invalid_argument("Tape::softmax_cross_entropy_mean: shape mismatch");
        }
        const int B = vl.dim(0), K = vl.dim(1);
        for (int y : labels) {
            if (y < 0 || y >= K) {
                throw std::invalid_argument("Tape::softmax_cross_entropy_mean: label out of range");
            }
        }
        double loss = 0.0;
        for (int i = 0; i < B; ++i) {
            const double* row = &vl.data[static_cast<std::size_t>(i) * K];
            double m = row[0];
            for (int j = 1; j < K; ++j) m = std::max(m, row[j]);
            double z = 0.0;
            for (int j = 0; j < K; ++j) z += std::exp(row[j] - m);
            loss += m + std::log(z) - row[labels[static_cast<std::size_t>(i)]];
        }
        loss /= B;
        return unary_or_binary(Tensor::scalar(loss), {logits},
                               [logits, labels = std::move(labels), B, K](Tape& t, const Tensor& g) {
            const Tensor& vl2 = t.value(logits);
            Tensor& gl = t.mutable_grad(logits);
            const double scale = g[0] / B;
            for (int i = 0; i < B; ++i) {
                const double* row = &vl2.data[static_cast<std::size_t>(i) * K];
                double* grow = &gl.data[static_cast<std::size_t>(i) * K];
                double m = row[0];
                for (int j = 1; j < K; ++j) m = std::max(m, row[j]);
                double z = 0.0;
                for (int j = 0; j < K; ++j) z += std::exp(row[j] - m);
                for (int j = 0; j < K; ++j) {
                    double p = std::exp(row[j] - m) / z;
                    grow[j] += scale * (p - (j == labels[static_cast<std::size_t>(i)] ? 1.0 : 0.0));
                }
            }
        });
    }

    std::size_t node_count() const { return nodes_.size(); }

private:
    enum class ConvMode { Forward, GradWeight, GradInput };

    struct Node {
        Tensor value;
        Tensor grad;
        bool requires_grad = false;
        std::function<void(Tape&)> backprop;
    };

    const Node& node(Var v) const { return nodes_.at(static_cast<std::size_t>(v)); }
    Node& node(Var v) { return nodes_.at(static_cast<std::size_t>(v)); }

    Tensor& mutable_grad(Var v) { return node(v).grad; }

    void accumulate(Var v, const Tensor& g) {
        if (!requires_grad(v)) return;
        Tensor& gv = mutable_grad(v);
        for (std::int64_t i = 0; i < g.size(); ++i) gv[i] += g[i];
    }

    void accumulate_scaled(Var v, const Tensor& g, double s) {
        if (!requires_grad(v)) return;
        Tensor& gv = mutable_grad(v);
        for (std::int64_t i = 0; i < g.size(); ++i) gv[i] += s * g[i];
    }

    Var push(Tensor v, bool needs_grad, std::function<void(Tape&)> backprop) {
        Node n;
        n.value = std::move(v);
        n.requires_grad = needs_grad;
        n.backprop = std::move(backprop);
        nodes_.push_back(std::move(n));
        return static_cast<Var>(nodes_.size() - 1);
    }

    Var unary_or_binary(Tensor out, std::initializer_list<Var> parents,
                        std::function<void(Tape&, const Tensor&)> scatter) {
        bool needs_grad = false;
        for (Var p : parents) needs_grad = needs_grad || requires_grad(p);
        if (!needs_grad || !scatter) {
            return push(std::move(out), needs_grad, {});
        }
        Var r = push(std::move(out), true, {});
        attach_backprop(r, std::move(scatter));
        return r;
    }

    void attach_backprop(Var r, std::function<void(Tape&, const Tensor&)> scatter) {
        if (!node(r).requires_grad) return;
        node(r).backprop = [r, scatter = std::move(scatter)](Tape& t) {
            scatter(t, t.node(r).grad);
        };
    }

    void check_same_shape(Var a, Var b, const char* op) const {
        if (!value(a).same_shape(value(b))) {
            throw std::invalid_argument(std::string("Tape::") + op + ": shape mismatch " +
                                        Tensor::shape_string(value(a).shape) + " vs " +
                                        Tensor::shape_string(value(b).shape));
        }
    }

    // C[M,N] += A[M,K] * B[K,N]
    static void matmul_accumulate(const double* a, const double* b, double* c, int M, int K,
                                  int N) {
        for (int i = 0; i < M; ++i) {
            const double* arow = a + static_cast<std::size_t>(i) * K;
            double* crow = c + static_cast<std::size_t>(i) * N;
            for (int k = 0; k < K; ++k) {
                const double av = arow[k];
                const double* brow = b + static_cast<std::size_t>(k) * N;
                for (int j = 0; j < N; ++j) crow[j] += av * brow[j];
            }
        }
    }

    // C[M,N] += A[M,K] * B[N,K]^T  (rows of both operands contiguous)
    static void matmul_nt_accumulate(const double* a, const double* b, double* c, int M, int K,
                                     int N) {
        for (int i = 0; i < M; ++i) {
            const double* arow = a + static_cast<std::size_t>(i) * K;
            double* crow = c + static_cast<std::size_t>(i) * N;
            for (int j = 0; j < N; ++j) {
                const double* brow = b + static_cast<std::size_t>(j) * K;
                double s = 0.0;
                for (int k = 0; k < K; ++k) s += arow[k] * brow[k];
                crow[j] += s;
            }
        }
    }

    // C[N,K] += A[M,N]^T * B[M,K]
    static void matmul_tn_accumulate(const double* a, const double* b, double* c, int M, int N,
                                     int K) {
        for (int m = 0; m < M; ++m) {
            const double* arow = a + static_cast<std::size_t>(m) * N;
            const double* brow = b + static_cast<std::size_t>(m) * K;
            for (int n = 0; n < N; ++n) {
                const double av = arow[n];
                double* crow = c + static_cast<std::size_t>(n) * K;
                for (int k = 0; k < K; ++k) crow[k] += av * brow[k];
            }
        }
    }

    // Patch matrix for one sample: rows index (oh, ow), columns (ic, kh, kw);
    // out-of-bounds taps are zero.
    static void im2col(const double* x, int IC, int H, int W, int KH, int KW, int stride,
                       int pad, int OH, int OW, double* col) {
        const int K = IC * KH * KW;
        std::fill(col, col + static_cast<std::size_t>(OH) * OW * K, 0.0);
        for (int oh = 0; oh < OH; ++oh) {
            for (int ow = 0; ow < OW; ++ow) {
                double* row = col + (static_cast<std::size_t>(oh) * OW + ow) * K;
                for (int ic = 0; ic < IC; ++ic) {
                    for (int kh = 0; kh < KH; ++kh) {
                        const int ih = oh * stride + kh - pad;
                        if (ih < 0 || ih >= H) continue;
                        const double* xrow = x + (static_cast<std::size_t>(ic) * H + ih) * W;
                        for (int kw = 0; kw < KW; ++kw) {
                            const int iw = ow * stride + kw - pad;
                            if (iw < 0 || iw >= W) continue;
                            row[(ic * KH + kh) * KW + kw] = xrow[iw];
                        }
                    }
                }
            }
        }
    }

    // Adjoint of im2col: scatter-add patch rows back into the image.
    static void col2im(const double* col, int IC, int H, int W, int KH, int KW, int stride,
                       int pad, int OH, int OW, double* x) {
        const int K = IC * KH * KW;
        for (int oh = 0; oh < OH; ++oh) {
            for (int ow = 0; ow < OW; ++ow) {
                const double* row = col + (static_cast<std::size_t>(oh) * OW + ow) * K;
                for (int ic = 0; ic < IC; ++ic) {
                    for (int kh = 0; kh < KH; ++kh) {
                        const int ih = oh * stride + kh - pad;
                        if (ih < 0 || ih >= H) continue;
                        double* xrow = x + (static_cast<std::size_t>(ic) * H + ih) * W;
                        for (int kw = 0; kw < KW; ++kw) {
                            const int iw = ow * stride + kw - pad;
                            if (iw < 0 || iw >= W) continue;
                            xrow[iw] += row[(ic * KH + kh) * KW + kw];
                        }
                    }
                }
            }
        }
    }

    // [C,S] -> [S,C]
    static void chw_to_rows(const double* src, int C, int S, double* dst) {
        for (int c = 0; c < C; ++c) {
            const double* s = src + static_cast<std::size_t>(c) * S;
            for (int i = 0; i < S; ++i) dst[static_cast<std::size_t>(i) * C + c] = s[i];
        }
    }

    // [S,C] accumulated into [C,S]
    static void rows_add_to_chw(const double* src, int C, int S, double* dst) {
        for (int c = 0; c < C; ++c) {
            double* d = dst + static_cast<std::size_t>(c) * S;
            for (int i = 0; i < S; ++i) d[i] += src[static_cast<std::size_t>(i) * C + c];
        }
    }

    // Convolution via im2col so the heavy work is three dense matmul shapes;
    // iteration order is fixed, keeping every mode bitwise deterministic.
    // Weight layout [OC, IC, KH, KW]: each w[oc] is one contiguous patch row.
    static void conv2d_core(const double* x, const double* w, const double* y, int B, int IC,
                            int H, int W, int OC, int KH, int KW, int OH, int OW, int stride,
                            int pad, ConvMode mode) {
        auto* xw = const_cast<double*>(x); // written only in GradInput mode
        auto* ww = const_cast<double*>(w); // written only in GradWeight mode
        auto* yw = const_cast<double*>(y); // written only in Forward mode
        const int K = IC * KH * KW;
        const int OHW = OH * OW;
        std::vector<double> col(static_cast<std::size_t>(OHW) * K);
        std::vector<double> rows(static_cast<std::size_t>(OHW) * OC);
        for (int n = 0; n < B; ++n) {
            const double* xn = x + static_cast<std::size_t>(n) * IC * H * W;
            const double* yn = y + static_cast<std::size_t>(n) * OC * OHW;
            switch (mode) {
                case ConvMode::Forward:
                    im2col(xn, IC, H, W, KH, KW, stride, pad, OH, OW, col.data());
                    std::fill(rows.begin(), rows.end(), 0.0);
                    matmul_nt_accumulate(col.data(), w, rows.data(), OHW, K, OC);
                    rows_add_to_chw(rows.data(),
                                    OC, OHW,
                                    yw + static_cast<std::size_t>(n) * OC * OHW);
                    break;
                case ConvMode::GradWeight:
                    im2col(xn, IC, H, W, KH, KW, stride, pad, OH, OW, col.data());
                    chw_to_rows(yn, OC, OHW, rows.data());
                    matmul_tn_accumulate(rows.data(), col.data(), ww, OHW, OC, K);
                    break;
                case ConvMode::GradInput:
                    chw_to_rows(yn, OC, OHW, rows.data());
                    std::fill(col.begin(), col.end(), 0.0);
                    matmul_accumulate(rows.data(), w, col.data(), OHW, OC, K);
                    col2im(col.data(), IC, H, W, KH, KW, stride, pad, OH, OW,
                           xw + static_cast<std::size_t>(n) * IC * H * W);
                    break;
            }
        }
    }

    // Transposed convolution is the adjoint pairing: the forward scatters
    // through col2im, the input gradient gathers through im2col. Weight
    // layout [IC, OC, KH, KW]: each w[ic] is one contiguous patch row.
    static void tconv_core(const double* x, const double* w, const double* y, int B, int IC,
                           int H, int W, int OC, int KH, int KW, int OH, int OW, int stride,
                           int pad, ConvMode mode) {
        auto* xw = const_cast<double*>(x);
        auto* ww = const_cast<double*>(w);
        auto* yw = const_cast<double*>(y);
        const int K = OC * KH * KW;
        const int HW = H * W;
        std::vector<double> col(static_cast<std::size_t>(HW) * K);
        std::vector<double> rows(static_cast<std::size_t>(HW) * IC);
        for (int n = 0; n < B; ++n) {
            const double* xn = x + static_cast<std::size_t>(n) * IC * HW;
            const double* yn = y + static_cast<std::size_t>(n) * OC * OH * OW;
            switch (mode) {
                case ConvMode::Forward:
                    chw_to_rows(xn, IC, HW, rows.data());
                    std::fill(col.begin(), col.end(), 0.0);
                    matmul_accumulate(rows.data(), w, col.data(), HW, IC, K);
                    col2im(col.data(), OC, OH, OW, KH, KW, stride, pad, H, W,
                           yw + static_cast<std::size_t>(n) * OC * OH * OW);
                    break;
                case ConvMode::GradWeight:
                    chw_to_rows(xn, IC, HW, rows.data());
                    im2col(yn, OC, OH, OW, KH, KW, stride, pad, H, W, col.data());
                    matmul_tn_accumulate(rows.data(), col.data(), ww, HW, IC, K);
                    break;
                case ConvMode::GradInput:
                    im2col(yn, OC, OH, OW, KH, KW, stride, pad, H, W, col.data());
                    std::fill(rows.begin(), rows.end(), 0.0);
                    matmul_nt_accumulate(col.data(), w, rows.data(), HW, K, IC);
                    rows_add_to_chw(rows.data(), IC, HW,
                                    xw + static_cast<std::size_t>(n) * IC * HW);
                    break;
            }
        }
    }

    std::vector<Node> nodes_;
};

} // namespace adroit
