#pragma once

#include <cstdint>
#include <cstring>
#include <string>
#include <string_view>
#include <vector>

#include "adroit/autodiff.hpp"
#include "adroit/batch.hpp"
#include "adroit/config.hpp"
#include "adroit/dataset.hpp"
#include "adroit/rng.hpp"
#include "adroit/tensor.hpp"

namespace adroit {

// Discriminator outputs are clamped to [kEpsProb, 1-kEpsProb] so the
// adversarial log terms stay finite.
inline constexpr double kEpsProb = 1e-7;
// Encoder log-variances are clamped to +-kLogVarClamp before exp().
inline constexpr double kLogVarClamp = 10.0;

enum class Head { Label, Rotation };

// ----- flat parameter vectors with per-layer views -----

struct LayerSpec {
    std::string name;
    std::vector<int> shape;
    std::int64_t offset = 0;
    std::int64_t size = 0;
    int fan_in = 0;  // 0 for biases (initialized to zero)
    int fan_out = 0;
};

struct ParamLayout {
    std::vector<LayerSpec> layers;
    std::int64_t total = 0;

    void add(std::string name, std::vector<int> shape, int fan_in, int fan_out) {
        LayerSpec s;
        s.name = std::move(name);
        s.size = Tensor::count(shape);
        s.shape = std::move(shape);
        s.offset = total;
        s.fan_in = fan_in;
        s.fan_out = fan_out;
        total += s.size;
        layers.push_back(std::move(s));
    }

    std::uint64_t hash(std::string_view kind) const {
        std::uint64_t h = 1469598103934665603ULL;
        auto feed = [&h](std::uint64_t x) {
            for (int i = 0; i < 8; ++i) {
                h ^= (x >> (8 * i)) & 0xff;
                h *= 1099511628211ULL;
            }
        };
        for (char c : kind) feed(static_cast<std::uint64_t>(static_cast<unsigned char>(c)));
        for (const auto& l : layers) {
            for (char c : l.name) feed(static_cast<std::uint64_t>(static_cast<unsigned char>(c)));
            for (int d : l.shape) feed(static_cast<std::uint64_t>(d));
        }
        return h;
    }
};

// A flat parameter vector; layer views come from the owning net's layout.
struct Params {
    std::vector<double> values;

    bool all_finite() const {
        for (double v : values) {
            if (!std::isfinite(v)) return false;
        }
        return true;
    }
};

inline std::uint64_t params_checksum(const Params& p) {
    std::uint64_t h = 1469598103934665603ULL;
    for (double v : p.values) {
        std::uint64_t bits;
        static_assert(sizeof(bits) == sizeof(v));
        std::memcpy(&bits, &v, sizeof(bits));
        for (int i = 0; i < 8; ++i) {
            h ^= (bits >> (8 * i)) & 0xff;
            h *= 1099511628211ULL;
        }
    }
    return h;
}

namespace detail {

inline std::vector<Tape::Var> bind_layers(Tape& tape, const ParamLayout& layout,
                                          const Params& p, bool trainable) {
    if (static_cast<std::int64_t>(p.values.size()) != layout.total) {
        throw std::invalid_argument("bind_layers: parameter vector size mismatch");
    }
    std::vector<Tape::Var> vars;
    vars.reserve(layout.layers.size());
    for (const auto& l : layout.layers) {
        Tensor t(l.shape,
                 std::vector<double>(p.values.begin() + l.offset,
                                     p.values.begin() + l.offset + l.size));
        vars.push_back(trainable ? tape.input(std::move(t)) : tape.constant(std::move(t)));
    }
    return vars;
}

inline std::vector<double> gather_grads(const Tape& tape, const ParamLayout& layout,
                                        const std::vector<Tape::Var>& vars) {
    std::vector<double> flat(static_cast<std::size_t>(layout.total), 0.0);
    for (std::size_t i = 0; i < layout.layers.size(); ++i) {
        const auto& l = layout.layers[i];
        const Tensor& g = tape.grad(vars[i]);
        std::copy(g.data.begin(), g.data.end(), flat.begin() + l.offset);
    }
    return flat;
}

// Glorot-uniform weights, zero biases; draw order follows the layout.
inline Params init_params(const ParamLayout& layout, Rng rng) {
    Params p;
    p.values.assign(static_cast<std::size_t>(layout.total), 0.0);
    for (const auto& l : layout.layers) {
        if (l.fan_in == 0) continue;
        double limit = std::sqrt(6.0 / (l.fan_in + l.fan_out));
        for (std::int64_t k = 0; k < l.size; ++k) {
            p.values[static_cast<std::size_t>(l.offset + k)] = rng.uniform(-limit, limit);
        }
    }
    return p;
}

inline int conv_down(int s) { return (s + 2 - 3) / 2 + 1; } // 3x3, stride 2, pad 1

} // namespace detail

// Architecture geometry shared by every network, derived from config +
// dataset shape.
struct ArchConfig {
    int image_channels = 3;
    int image_side = 32;
    int num_classes = 10;
    int latent_dim = 32;
    std::vector<int> enc_channels{16, 32, 64};
    int cls_hidden = 64;
    int disc_hidden = 64;
    std::vector<int> target_channels{16, 32, 32, 64};

    static ArchConfig from(const ALConfig& cfg, const Dataset& d) {
        if (d.height != d.width) {
            throw std::invalid_argument("ArchConfig: images must be square");
        }
        ArchConfig a;
        a.image_channels = d.channels;
        a.image_side = d.height;
        a.num_classes = d.num_classes;
        a.latent_dim = cfg.latent_dim;
        a.enc_channels = cfg.enc_channels;
        a.cls_hidden = cfg.cls_hidden;
        a.disc_hidden = cfg.disc_hidden;
        a.target_channels = cfg.target_channels;
        return a;
    }
};

// ----- encoder: stride-2 conv stack -> (mu, logvar) heads -----

struct EncoderNet {
    ParamLayout layout;
    std::vector<int> channels; // [image_channels, enc_channels...]
    std::vector<int> sizes;    // spatial side after each stage
    int latent_dim = 0;
    int flat = 0;

    EncoderNet() = default;

    explicit EncoderNet(const ArchConfig& a) : latent_dim(a.latent_dim) {
        channels.push_back(a.image_channels);
        for (int c : a.enc_channels) channels.push_back(c);
        sizes.push_back(a.image_side);
        for (std::size_t i = 0; i + 1 < channels.size(); ++i) {
            int ic = channels[i], oc = channels[i + 1];
            layout.add("conv" + std::to_string(i) + ".w", {oc, ic, 3, 3}, ic * 9, oc * 9);
            layout.add("conv" + std::to_string(i) + ".b", {oc}, 0, 0);
            sizes.push_back(detail::conv_down(sizes.back()));
            if (sizes.back() <= 0) throw std::invalid_argument("EncoderNet: image too small");
        }
        flat = channels.back() * sizes.back() * sizes.back();
        layout.add("mu.w", {flat, latent_dim}, flat, latent_dim);
        layout.add("mu.b", {latent_dim}, 0, 0);
        layout.add("logvar.w", {flat, latent_dim}, flat, latent_dim);
        layout.add("logvar.b", {latent_dim}, 0, 0);
    }

    std::uint64_t arch_hash() const { return layout.hash("encoder"); }

    void check_input(const Tensor& x) const {
        if (x.rank() != 4 || x.dim(1) != channels.front() || x.dim(2) != sizes.front() ||
            x.dim(3) != sizes.front()) {
            throw std::invalid_argument("encode: image shape does not match architecture");
        }
    }

    // Returns (mu, logvar); logvar comes out clamped.
    std::pair<Tape::Var, Tape::Var> forward(Tape& t, const std::vector<Tape::Var>& p,
                                            Tape::Var x) const {
        check_input(t.value(x));
        Tape::Var h = x;
        std::size_t li = 0;
        for (std::size_t i = 0; i + 1 < channels.size(); ++i) {
            h = t.relu(t.conv2d(h, p[li], p[li + 1], 2, 1));
            li += 2;
        }
        h = t.reshape(h, {t.value(h).dim(0), flat});
        Tape::Var mu = t.linear(h, p[li], p[li + 1]);
        Tape::Var lv = t.clamp(t.linear(h, p[li + 2], p[li + 3]), -kLogVarClamp, kLogVarClamp);
        return {mu, lv};
    }
};

// ----- generator: latent -> mirrored transposed-conv stack -> sigmoid -----

struct GeneratorNet {
    ParamLayout layout;
    std::vector<int> channels;  // [enc_last, ..., enc_first, image_channels]
    std::vector<int> sizes;     // spatial side per stage, smallest first
    std::vector<int> out_pads;  // per transposed conv
    int latent_dim = 0;
    int seed_spatial = 0;

    GeneratorNet() = default;

    explicit GeneratorNet(const ArchConfig& a) : latent_dim(a.latent_dim) {
        EncoderNet enc(a); // reuse the spatial chain
        for (auto it = enc.channels.rbegin(); it != enc.channels.rend(); ++it) {
            channels.push_back(*it);
        }
        for (auto it = enc.sizes.rbegin(); it != enc.sizes.rend(); ++it) {
            sizes.push_back(*it);
        }
        seed_spatial = sizes.front();
        int seed_flat = channels.front() * seed_spatial * seed_spatial;
        layout.add("lin.w", {latent_dim, seed_flat}, latent_dim, seed_flat);
        layout.add("lin.b", {seed_flat}, 0, 0);
        for (std::size_t i = 0; i + 1 < channels.size(); ++i) {
            int ic = channels[i], oc = channels[i + 1];
            layout.add("tconv" + std::to_string(i) + ".w", {ic, oc, 3, 3}, ic * 9, oc * 9);
            layout.add("tconv" + std::to_string(i) + ".b", {oc}, 0, 0);
            // (s-1)*2 - 2 + 3 = 2s - 1; out_pad tops it up to the encoder size
            int produced = 2 * sizes[i] - 1;
            out_pads.push_back(sizes[i + 1] - produced);
        }
    }

    std::uint64_t arch_hash() const { return layout.hash("generator"); }

    Tape::Var forward(Tape& t, const std::vector<Tape::Var>& p, Tape::Var z) const {
        const Tensor& vz = t.value(z);
        if (vz.rank() != 2 || vz.dim(1) != latent_dim) {
            throw std::invalid_argument("decode: latent shape does not match architecture");
        }
        int b = vz.dim(0);
        Tape::Var h = t.relu(t.linear(z, p[0], p[1]));
        h = t.reshape(h, {b, channels.front(), seed_spatial, seed_spatial});
        std::size_t li = 2;
        for (std::size_t i = 0; i + 1 < channels.size(); ++i) {
            h = t.conv_transpose2d(h, p[li], p[li + 1], 2, 1, out_pads[i]);
            li += 2;
            bool last = (i + 2 == channels.size());
            h = last ? t.sigmoid(h) : t.relu(h);
        }
        return h;
    }
};

// ----- proxy classifier: 2-hidden-layer MLP on z, label + rotation heads -----

struct ClassifierNet {
    ParamLayout layout;
    int latent_dim = 0, hidden = 0, num_classes = 0;

    ClassifierNet() = default;

    explicit ClassifierNet(const ArchConfig& a)
        : latent_dim(a.latent_dim), hidden(a.cls_hidden), num_classes(a.num_classes) {
        layout.add("h0.w", {latent_dim, hidden}, latent_dim, hidden);
        layout.add("h0.b", {hidden}, 0, 0);
        layout.add("h1.w", {hidden, hidden}, hidden, hidden);
        layout.add("h1.b", {hidden}, 0, 0);
        layout.add("label.w", {hidden, num_classes}, hidden, num_classes);
        layout.add("label.b", {num_classes}, 0, 0);
        layout.add("rot.w", {hidden, kNumPretextTransforms}, hidden, kNumPretextTransforms);
        layout.add("rot.b", {kNumPretextTransforms}, 0, 0);
    }

    std::uint64_t arch_hash() const { return layout.hash("classifier"); }

    int head_width(Head h) const {
        return h == Head::Label ? num_classes : kNumPretextTransforms;
    }

    Tape::Var forward(Tape& t, const std::vector<Tape::Var>& p, Tape::Var z, Head head) const {
        const Tensor& vz = t.value(z);
        if (vz.rank() != 2 || vz.dim(1) != latent_dim) {
            throw std::invalid_argument("classify_proxy: latent shape mismatch");
        }
        Tape::Var h = t.relu(t.linear(z, p[0], p[1]));
        h = t.relu(t.linear(h, p[2], p[3]));
        return head == Head::Label ? t.linear(h, p[4], p[5]) : t.linear(h, p[6], p[7]);
    }
};

// ----- state discriminator: 5 linear layers, leaky relu, clamped sigmoid -----

struct DiscriminatorNet {
    ParamLayout layout;
    int latent_dim = 0, hidden = 0;

    DiscriminatorNet() = default;

    explicit DiscriminatorNet(const ArchConfig& a)
        : latent_dim(a.latent_dim), hidden(a.disc_hidden) {
        int in = latent_dim;
        for (int i = 0; i < 4; ++i) {
            layout.add("l" + std::to_string(i) + ".w", {in, hidden}, in, hidden);
            layout.add("l" + std::to_string(i) + ".b", {hidden}, 0, 0);
            in = hidden;
        }
        layout.add("l4.w", {in, 1}, in, 1);
        layout.add("l4.b", {1}, 0, 0);
    }

    std::uint64_t arch_hash() const { return layout.hash("discriminator"); }

    // Probability of "labeled" per row, in [kEpsProb, 1-kEpsProb].
    Tape::Var forward(Tape& t, const std::vector<Tape::Var>& p, Tape::Var z) const {
        const Tensor& vz = t.value(z);
        if (vz.rank() != 2 || vz.dim(1) != latent_dim) {
            throw std::invalid_argument("discriminate: latent shape mismatch");
        }
        Tape::Var h = z;
        for (int i = 0; i < 4; ++i) {
            h = t.leaky_relu(t.linear(h, p[static_cast<std::size_t>(2 * i)],
                                      p[static_cast<std::size_t>(2 * i + 1)]),
                             0.2);
        }
        h = t.linear(h, p[8], p[9]);
        return t.clamp(t.sigmoid(h), kEpsProb, 1.0 - kEpsProb);
    }
};

// ----- target task-learner: conv stack with label + rotation heads -----

struct TargetNet {
    ParamLayout layout;
    std::vector<int> channels; // [image_channels, target_channels...]
    std::vector<int> strides;
    std::vector<int> sizes;
    int num_classes = 0;
    int flat = 0;

    TargetNet() = default;

    explicit TargetNet(const ArchConfig& a) : num_classes(a.num_classes) {
        channels.push_back(a.image_channels);
        for (int c : a.target_channels) channels.push_back(c);
        sizes.push_back(a.image_side);
        for (std::size_t i = 0; i + 1 < channels.size(); ++i) {
            int ic = channels[i], oc = channels[i + 1];
            int stride = (i % 2 == 1) ? 2 : 1; // alternate 1,2,1,2,...
            strides.push_back(stride);
            layout.add("conv" + std::to_string(i) + ".w", {oc, ic, 3, 3}, ic * 9, oc * 9);
            layout.add("conv" + std::to_string(i) + ".b", {oc}, 0, 0);
            int s = sizes.back();
            sizes.push_back(stride == 1 ? s : detail::conv_down(s));
            if (sizes.back() <= 0) throw std::invalid_argument("TargetNet: image too small");
        }
        flat = channels.back() * sizes.back() * sizes.back();
        layout.add("label.w", {flat, num_classes}, flat, num_classes);
        layout.add("label.b", {num_classes}, 0, 0);
        layout.add("rot.w", {flat, kNumPretextTransforms}, flat, kNumPretextTransforms);
        layout.add("rot.b", {kNumPretextTransforms}, 0, 0);
    }

    std::uint64_t arch_hash() const { return layout.hash("target"); }

    int head_width(Head h) const {
        return h == Head::Label ? num_classes : kNumPretextTransforms;
    }

    void check_input(const Tensor& x) const {
        if (x.rank() != 4 || x.dim(1) != channels.front() || x.dim(2) != sizes.front() ||
            x.dim(3) != sizes.front()) {
            throw std::invalid_argument("target_forward: image shape mismatch");
        }
    }

    Tape::Var forward(Tape& t, const std::vector<Tape::Var>& p, Tape::Var x, Head head) const {
        check_input(t.value(x));
        Tape::Var h = x;
        std::size_t li = 0;
        for (std::size_t i = 0; i + 1 < channels.size(); ++i) {
            h = t.relu(t.conv2d(h, p[li], p[li + 1], strides[i], 1));
            li += 2;
        }
        h = t.reshape(h, {t.value(h).dim(0), flat});
        return head == Head::Label ? t.linear(h, p[li], p[li + 1])
                                   : t.linear(h, p[li + 2], p[li + 3]);
    }
};

// ----- bundle -----

// Parameter sets for the whole framework: encoder/generator/classifier make
// up the VAE, plus the state discriminator and the target task-learner.
struct ModelBundle {
    ArchConfig arch;
    EncoderNet enc;
    GeneratorNet gen;
    ClassifierNet cls;
    DiscriminatorNet disc;
    TargetNet target;
    Params enc_p, gen_p, cls_p, disc_p, target_p;

    static ModelBundle create(const ArchConfig& a) {
        ModelBundle m;
        m.arch = a;
        m.enc = EncoderNet(a);
        m.gen = GeneratorNet(a);
        m.cls = ClassifierNet(a);
        m.disc = DiscriminatorNet(a);
        m.target = TargetNet(a);
        m.enc_p.values.assign(static_cast<std::size_t>(m.enc.layout.total), 0.0);
        m.gen_p.values.assign(static_cast<std::size_t>(m.gen.layout.total), 0.0);
        m.cls_p.values.assign(static_cast<std::size_t>(m.cls.layout.total), 0.0);
        m.disc_p.values.assign(static_cast<std::size_t>(m.disc.layout.total), 0.0);
        m.target_p.values.assign(static_cast<std::size_t>(m.target.layout.total), 0.0);
        return m;
    }

    void init_vae(const Rng& rng) {
        enc_p = detail::init_params(enc.layout, rng.fork("init_encoder"));
        gen_p = detail::init_params(gen.layout, rng.fork("init_generator"));
        cls_p = detail::init_params(cls.layout, rng.fork("init_classifier"));
    }

    void init_disc(const Rng& rng) {
        disc_p = detail::init_params(disc.layout, rng.fork("init_discriminator"));
    }

    void init_target(const Rng& rng) {
        target_p = detail::init_params(target.layout, rng.fork("init_target"));
    }
};

// ----- latent codes -----

// Per-example posterior: mean, log-variance, and the reparameterized sample
// with its recorded noise (sample = mu + exp(logvar/2) * eps elementwise).
struct LatentCode {
    Tensor mean;
    Tensor log_variance;
    Tensor sample;
    Tensor noise;
};

inline LatentCode reparameterize(const Tensor& mu, const Tensor& logvar, Rng& rng) {
    if (!mu.same_shape(logvar)) {
        throw std::invalid_argument("reparameterize: mu/logvar shape mismatch");
    }
    LatentCode code;
    code.mean = mu;
    code.log_variance = logvar;
    code.noise = Tensor(mu.shape);
    rng.fill_normal(code.noise.data);
    code.sample = Tensor(mu.shape);
    for (std::int64_t i = 0; i < mu.size(); ++i) {
        double lv = std::clamp(logvar[i], -kLogVarClamp, kLogVarClamp);
        code.sample[i] = mu[i] + std::exp(0.5 * lv) * code.noise[i];
    }
    return code;
}

// ----- value-level forwards (no gradients) -----

inline std::pair<Tensor, Tensor> encode(const EncoderNet& net, const Params& p,
                                        const Tensor& images) {
    Tape t;
    auto leaves = detail::bind_layers(t, net.layout, p, false);
    auto [mu, lv] = net.forward(t, leaves, t.constant(images));
    return {t.value(mu), t.value(lv)};
}

inline Tensor decode(const GeneratorNet& net, const Params& p, const Tensor& z) {
    Tape t;
    auto leaves = detail::bind_layers(t, net.layout, p, false);
    return t.value(net.forward(t, leaves, t.constant(z)));
}

inline Tensor classify_proxy(const ClassifierNet& net, const Params& p, const Tensor& z,
                             Head head) {
    Tape t;
    auto leaves = detail::bind_layers(t, net.layout, p, false);
    return t.value(net.forward(t, leaves, t.constant(z), head));
}

inline Tensor discriminate(const DiscriminatorNet& net, const Params& p, const Tensor& z) {
    Tape t;
    auto leaves = detail::bind_layers(t, net.layout, p, false);
    return t.value(net.forward(t, leaves, t.constant(z)));
}

inline Tensor target_forward(const TargetNet& net, const Params& p, const Tensor& images,
                             Head head) {
    Tape t;
    auto leaves = detail::bind_layers(t, net.layout, p, false);
    return t.value(net.forward(t, leaves, t.constant(images), head));
}

} // namespace adroit
