#pragma once

#include <cstdio>
#include <string>

#include "adroit/autodiff.hpp"
#include "adroit/batch.hpp"
#include "adroit/config.hpp"
#include "adroit/nets.hpp"
#include "adroit/rng.hpp"

namespace adroit {

// All objectives are returned in minimization form: reconstruction negative
// log-likelihood realized as pixel-sum MSE, KL added positively, cross
// entropies in nats. The training loop descends every value here.
struct LossBreakdown {
    double url = 0;
    double proxy_sup = 0;
    double proxy_ssl = 0;
    double kd = 0;
    double adv_gen = 0;
    double total = 0;
    double disc = 0;

    static const char* csv_header() {
        return "epoch,step,url,proxy_sup,proxy_ssl,kd,adv_gen,total,disc";
    }

    std::string csv_row(int epoch, int step) const {
        char buf[360];
        std::snprintf(buf, sizeof(buf),
                      "%d,%d,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g", epoch, step, url,
                      proxy_sup, proxy_ssl, kd, adv_gen, total, disc);
        return buf;
    }
};

namespace loss_graph {

// 0.5 * sum_d(mu^2 + e^lv - lv - 1), averaged over the batch.
inline Tape::Var kl_unit_gaussian(Tape& t, Tape::Var mu, Tape::Var logvar) {
    const int b = t.value(mu).dim(0);
    Tape::Var s = t.affine(t.sub(t.add(t.square(mu), t.exp(logvar)), logvar), 1.0, -1.0);
    return t.affine(t.sum(s), 0.5 / b, 0.0);
}

// Squared error summed over pixels, averaged over the batch.
inline Tape::Var reconstruction(Tape& t, Tape::Var x, Tape::Var x_hat) {
    const int b = t.value(x).dim(0);
    return t.affine(t.sum(t.square(t.sub(x_hat, x))), 1.0 / b, 0.0);
}

// z = mu + exp(logvar / 2) * eps with recorded noise.
inline Tape::Var reparameterize(Tape& t, Tape::Var mu, Tape::Var logvar, const Tensor& eps) {
    return t.add(mu, t.mul(t.exp(t.affine(logvar, 0.5, 0.0)), t.constant(eps)));
}

inline Tape::Var mean_neg_log(Tape& t, Tape::Var p) {
    const int b = t.value(p).dim(0);
    return t.affine(t.sum(t.log(p)), -1.0 / b, 0.0);
}

inline Tape::Var mean_neg_log1m(Tape& t, Tape::Var p) {
    const int b = t.value(p).dim(0);
    return t.affine(t.sum(t.log(t.affine(p, -1.0, 1.0))), -1.0 / b, 0.0);
}

// Mean squared logit distance; the teacher side is detached, so distillation
// never backpropagates into the target learner.
inline Tape::Var kd_pair(Tape& t, Tape::Var teacher_logits, Tape::Var student_logits) {
    if (!t.value(teacher_logits).same_shape(t.value(student_logits))) {
        throw std::invalid_argument("kd_pair: teacher/student head widths differ");
    }
    const int b = t.value(teacher_logits).dim(0);
    Tape::Var frozen = t.detach(teacher_logits);
    return t.affine(t.sum(t.square(t.sub(frozen, student_logits))), 1.0 / b, 0.0);
}

} // namespace loss_graph

namespace detail {

inline std::vector<Tape::Var> detach_all(Tape& t, const std::vector<Tape::Var>& vars) {
    std::vector<Tape::Var> out;
    out.reserve(vars.size());
    for (Tape::Var v : vars) out.push_back(t.detach(v));
    return out;
}

inline Tensor draw_noise(const Rng& rng, const char* label, int batch, int dim) {
    Tensor eps({batch, dim});
    Rng stream = rng.fork(label);
    stream.fill_normal(eps.data);
    return eps;
}

} // namespace detail

// Shared forward state for one pool: a single encode feeds reconstruction,
// KL, the proxy heads, and the adversarial terms.
struct PoolForward {
    Tape::Var x = -1;
    Tape::Var mu = -1, logvar = -1, z = -1, recon = -1;
    Tape::Var kl = -1;    // scalar
    Tape::Var rec = -1;   // scalar
};

inline PoolForward vae_pool_forward(Tape& t, const ModelBundle& m,
                                    const std::vector<Tape::Var>& enc_l,
                                    const std::vector<Tape::Var>& gen_l, const Tensor& images,
                                    const Tensor& eps) {
    PoolForward f;
    f.x = t.constant(images);
    auto [mu, lv] = m.enc.forward(t, enc_l, f.x);
    f.mu = mu;
    f.logvar = lv;
    f.z = loss_graph::reparameterize(t, mu, lv, eps);
    f.recon = m.gen.forward(t, gen_l, f.z);
    f.kl = loss_graph::kl_unit_gaussian(t, mu, lv);
    f.rec = loss_graph::reconstruction(t, f.x, f.recon);
    return f;
}

// Every VAE-side objective built on one tape with shared forwards.
struct VaeLossGraph {
    PoolForward labeled, unlabeled;
    Tape::Var url = -1, proxy_sup = -1, proxy_ssl = -1, kd = -1, adv_gen = -1, total = -1;
};

// The discriminator and target leaves participate value-wise only: the
// adversarial generator term freezes the discriminator parameters, and the
// distillation term freezes the teacher logits.
inline VaeLossGraph build_vae_loss(Tape& t, const ModelBundle& m,
                                   const std::vector<Tape::Var>& enc_l,
                                   const std::vector<Tape::Var>& gen_l,
                                   const std::vector<Tape::Var>& cls_l,
                                   const std::vector<Tape::Var>& disc_l,
                                   const std::vector<Tape::Var>& target_l, const Batch& labeled,
                                   const Batch& unlabeled, const ALConfig& cfg, const Rng& rng) {
    if (labeled.size() == 0 || unlabeled.size() == 0) {
        throw std::invalid_argument("build_vae_loss: both pools must be nonempty");
    }
    if (!labeled.has_labels()) {
        throw std::invalid_argument("build_vae_loss: labeled batch is missing labels");
    }
    if (!unlabeled.has_pretext()) {
        throw std::invalid_argument("build_vae_loss: unlabeled batch is missing pretext labels");
    }

    VaeLossGraph g;
    Tensor eps_l = detail::draw_noise(rng, "reparam_L", labeled.size(), m.arch.latent_dim);
    Tensor eps_u = detail::draw_noise(rng, "reparam_U", unlabeled.size(), m.arch.latent_dim);
    g.labeled = vae_pool_forward(t, m, enc_l, gen_l, labeled.images, eps_l);
    g.unlabeled = vae_pool_forward(t, m, enc_l, gen_l, unlabeled.images, eps_u);

    // unified representation term: [rec_L + beta kl_L] + [rec_U + beta kl_U]
    g.url = t.add(t.add(g.labeled.rec, t.affine(g.labeled.kl, cfg.beta, 0.0)),
                  t.add(g.unlabeled.rec, t.affine(g.unlabeled.kl, cfg.beta, 0.0)));

    // proxy heads consume the sampled code
    Tape::Var ce_sup = t.softmax_cross_entropy_mean(
        m.cls.forward(t, cls_l, g.labeled.z, Head::Label), labeled.labels);
    Tape::Var ce_ssl = t.softmax_cross_entropy_mean(
        m.cls.forward(t, cls_l, g.unlabeled.z, Head::Rotation), unlabeled.pretext_labels);
    g.proxy_sup = cfg.proxy_kl ? t.add(ce_sup, g.labeled.kl) : ce_sup;
    g.proxy_ssl = cfg.proxy_kl ? t.add(ce_ssl, g.unlabeled.kl) : ce_ssl;

    // distillation on the deterministic mean codes
    Tape::Var teacher_label = m.target.forward(t, target_l, g.labeled.x, Head::Label);
    Tape::Var student_label = m.cls.forward(t, cls_l, g.labeled.mu, Head::Label);
    Tape::Var teacher_rot = m.target.forward(t, target_l, g.unlabeled.x, Head::Rotation);
    Tape::Var student_rot = m.cls.forward(t, cls_l, g.unlabeled.mu, Head::Rotation);
    g.kd = t.add(loss_graph::kd_pair(t, teacher_label, student_label),
                 loss_graph::kd_pair(t, teacher_rot, student_rot));

    // Generator-side adversarial term against frozen discriminator weights.
    // The discriminator consumes the deterministic mean codes, the same view
    // it is trained and queried on.
    auto disc_frozen = detail::detach_all(t, disc_l);
    Tape::Var p_l = m.disc.forward(t, disc_frozen, g.labeled.mu);
    Tape::Var p_u = m.disc.forward(t, disc_frozen, g.unlabeled.mu);
    g.adv_gen = t.add(loss_graph::mean_neg_log(t, p_l), loss_graph::mean_neg_log(t, p_u));

    g.total = t.add(
        t.add(g.url, t.affine(g.proxy_sup, cfg.lambda1, 0.0)),
        t.add(t.add(t.affine(g.proxy_ssl, cfg.lambda2, 0.0),
                    t.affine(g.kd, cfg.lambda3, 0.0)),
              t.affine(g.adv_gen, cfg.lambda4, 0.0)));
    return g;
}

// Discriminator objective: labeled codes are class 1, unlabeled class 0.
// The discriminator sees deterministic mean codes, detached so no gradient
// reaches the encoder.
inline Tape::Var build_disc_loss(Tape& t, const ModelBundle& m,
                                 const std::vector<Tape::Var>& enc_l,
                                 const std::vector<Tape::Var>& disc_l, const Batch& labeled,
                                 const Batch& unlabeled) {
    if (labeled.size() == 0 || unlabeled.size() == 0) {
        throw std::invalid_argument("build_disc_loss: both pools must be nonempty");
    }
    auto encode_detached = [&](const Tensor& images) {
        auto [mu, lv] = m.enc.forward(t, enc_l, t.constant(images));
        (void)lv;
        return t.detach(mu);
    };
    Tape::Var p_l = m.disc.forward(t, disc_l, encode_detached(labeled.images));
    Tape::Var p_u = m.disc.forward(t, disc_l, encode_detached(unlabeled.images));
    return t.add(loss_graph::mean_neg_log(t, p_l), loss_graph::mean_neg_log1m(t, p_u));
}

// Target task-learner objective: label cross entropy plus xi times the
// pretext cross entropy. An empty unlabeled batch drops the pretext term
// (late rounds can exhaust the unlabeled pool).
inline Tape::Var build_target_loss(Tape& t, const TargetNet& net,
                                   const std::vector<Tape::Var>& target_l, const Batch& labeled,
                                   const Batch& unlabeled, double xi, Tape::Var* ce_label_out,
                                   Tape::Var* ce_pretext_out) {
    if (labeled.size() == 0 || !labeled.has_labels()) {
        throw std::invalid_argument("build_target_loss: labeled batch with labels required");
    }
    Tape::Var ce_l = t.softmax_cross_entropy_mean(
        net.forward(t, target_l, t.constant(labeled.images), Head::Label), labeled.labels);
    if (ce_label_out) *ce_label_out = ce_l;
    if (unlabeled.size() == 0) {
        if (ce_pretext_out) *ce_pretext_out = -1;
        return ce_l;
    }
    if (!unlabeled.has_pretext()) {
        throw std::invalid_argument("build_target_loss: unlabeled batch is missing pretext labels");
    }
    Tape::Var ce_u = t.softmax_cross_entropy_mean(
        net.forward(t, target_l, t.constant(unlabeled.images), Head::Rotation),
        unlabeled.pretext_labels);
    if (ce_pretext_out) *ce_pretext_out = ce_u;
    return t.add(ce_l, t.affine(ce_u, xi, 0.0));
}

// ----- value-level operations -----

inline double kl_unit_gaussian(const Tensor& mu, const Tensor& logvar) {
    if (!mu.same_shape(logvar)) {
        throw std::invalid_argument("kl_unit_gaussian: shape mismatch");
    }
    const int b = mu.rank() >= 1 ? mu.dim(0) : 1;
    double s = 0.0;
    for (std::int64_t i = 0; i < mu.size(); ++i) {
        s += mu[i] * mu[i] + std::exp(logvar[i]) - logvar[i] - 1.0;
    }
    return 0.5 * s / b;
}

inline double reconstruction_loss(const Tensor& x, const Tensor& x_hat) {
    if (!x.same_shape(x_hat)) {
        throw std::invalid_argument("reconstruction_loss: shape mismatch");
    }
    const int b = x.rank() >= 1 ? x.dim(0) : 1;
    double s = 0.0;
    for (std::int64_t i = 0; i < x.size(); ++i) {
        double d = x_hat[i] - x[i];
        s += d * d;
    }
    return s / b;
}

namespace detail {

struct ConstVaeTape {
    Tape t;
    std::vector<Tape::Var> enc, gen, cls, disc, target;

    explicit ConstVaeTape(const ModelBundle& m) {
        enc = bind_layers(t, m.enc.layout, m.enc_p, false);
        gen = bind_layers(t, m.gen.layout, m.gen_p, false);
        cls = bind_layers(t, m.cls.layout, m.cls_p, false);
        disc = bind_layers(t, m.disc.layout, m.disc_p, false);
        target = bind_layers(t, m.target.layout, m.target_p, false);
    }
};

} // namespace detail

inline double url_loss(const Batch& labeled, const Batch& unlabeled, const ModelBundle& m,
                       double beta, const Rng& rng) {
    if (labeled.size() == 0 || unlabeled.size() == 0) {
        throw std::invalid_argument("url_loss: both batches must be nonempty");
    }
    detail::ConstVaeTape ct(m);
    Tape& t = ct.t;
    Tensor eps_l = detail::draw_noise(rng, "reparam_L", labeled.size(), m.arch.latent_dim);
    Tensor eps_u = detail::draw_noise(rng, "reparam_U", unlabeled.size(), m.arch.latent_dim);
    auto fl = vae_pool_forward(t, m, ct.enc, ct.gen, labeled.images, eps_l);
    auto fu = vae_pool_forward(t, m, ct.enc, ct.gen, unlabeled.images, eps_u);
    return t.scalar(fl.rec) + beta * t.scalar(fl.kl) + t.scalar(fu.rec) + beta * t.scalar(fu.kl);
}

inline double proxy_sup_loss(const Batch& labeled, const ModelBundle& m, const Rng& rng,
                             bool include_kl = true) {
    if (!labeled.has_labels()) {
        throw std::invalid_argument("proxy_sup_loss: labels required");
    }
    detail::ConstVaeTape ct(m);
    Tape& t = ct.t;
    Tensor eps = detail::draw_noise(rng, "reparam_L", labeled.size(), m.arch.latent_dim);
    auto [mu, lv] = m.enc.forward(t, ct.enc, t.constant(labeled.images));
    Tape::Var z = loss_graph::reparameterize(t, mu, lv, eps);
    Tape::Var ce = t.softmax_cross_entropy_mean(m.cls.forward(t, ct.cls, z, Head::Label),
                                                labeled.labels);
    double out = t.scalar(ce);
    if (include_kl) out += t.scalar(loss_graph::kl_unit_gaussian(t, mu, lv));
    return out;
}

inline double proxy_ssl_loss(const Batch& unlabeled, const ModelBundle& m, const Rng& rng,
                             bool include_kl = true) {
    if (!unlabeled.has_pretext()) {
        throw std::invalid_argument("proxy_ssl_loss: pretext labels required");
    }
    detail::ConstVaeTape ct(m);
    Tape& t = ct.t;
    Tensor eps = detail::draw_noise(rng, "reparam_U", unlabeled.size(), m.arch.latent_dim);
    auto [mu, lv] = m.enc.forward(t, ct.enc, t.constant(unlabeled.images));
    Tape::Var z = loss_graph::reparameterize(t, mu, lv, eps);
    Tape::Var ce = t.softmax_cross_entropy_mean(m.cls.forward(t, ct.cls, z, Head::Rotation),
                                                unlabeled.pretext_labels);
    double out = t.scalar(ce);
    if (include_kl) out += t.scalar(loss_graph::kl_unit_gaussian(t, mu, lv));
    return out;
}

// Distillation; either batch may be empty, dropping that pool's term.
inline double kd_loss(const Batch& labeled, const Batch& unlabeled, const ModelBundle& m) {
    detail::ConstVaeTape ct(m);
    Tape& t = ct.t;
    double out = 0.0;
    auto term = [&](const Batch& batch, Head head) {
        auto [mu, lv] = m.enc.forward(t, ct.enc, t.constant(batch.images));
        (void)lv;
        Tape::Var teacher = m.target.forward(t, ct.target, t.constant(batch.images), head);
        Tape::Var student = m.cls.forward(t, ct.cls, mu, head);
        return t.scalar(loss_graph::kd_pair(t, teacher, student));
    };
    if (labeled.size() > 0) out += term(labeled, Head::Label);
    if (unlabeled.size() > 0) out += term(unlabeled, Head::Rotation);
    return out;
}

inline double adv_gen_loss(const Batch& labeled, const Batch& unlabeled, const ModelBundle& m) {
    detail::ConstVaeTape ct(m);
    Tape& t = ct.t;
    auto code = [&](const Batch& batch) {
        auto [mu, lv] = m.enc.forward(t, ct.enc, t.constant(batch.images));
        (void)lv;
        return mu;
    };
    Tape::Var p_l = m.disc.forward(t, ct.disc, code(labeled));
    Tape::Var p_u = m.disc.forward(t, ct.disc, code(unlabeled));
    return t.scalar(loss_graph::mean_neg_log(t, p_l)) +
           t.scalar(loss_graph::mean_neg_log(t, p_u));
}

inline double disc_loss(const Batch& labeled, const Batch& unlabeled, const ModelBundle& m) {
    detail::ConstVaeTape ct(m);
    return ct.t.scalar(build_disc_loss(ct.t, m, ct.enc, ct.disc, labeled, unlabeled));
}

inline LossBreakdown total_vae_loss(const Batch& labeled, const Batch& unlabeled,
                                    const ModelBundle& m, const ALConfig& cfg, const Rng& rng) {
    detail::ConstVaeTape ct(m);
    Tape& t = ct.t;
    auto g = build_vae_loss(t, m, ct.enc, ct.gen, ct.cls, ct.disc, ct.target, labeled, unlabeled,
                            cfg, rng);
    LossBreakdown out;
    out.url = t.scalar(g.url);
    out.proxy_sup = t.scalar(g.proxy_sup);
    out.proxy_ssl = t.scalar(g.proxy_ssl);
    out.kd = t.scalar(g.kd);
    out.adv_gen = t.scalar(g.adv_gen);
    out.total = t.scalar(g.total);
    // Reported discriminator objective on the same shared mean codes.
    Tape::Var p_l = m.disc.forward(t, ct.disc, t.detach(g.labeled.mu));
    Tape::Var p_u = m.disc.forward(t, ct.disc, t.detach(g.unlabeled.mu));
    out.disc = t.scalar(t.add(loss_graph::mean_neg_log(t, p_l),
                              loss_graph::mean_neg_log1m(t, p_u)));
    return out;
}

inline double target_loss(const Batch& labeled, const Batch& unlabeled, const TargetNet& net,
                          const Params& target_p, double xi) {
    Tape t;
    auto leaves = detail::bind_layers(t, net.layout, target_p, false);
    return t.scalar(build_target_loss(t, net, leaves, labeled, unlabeled, xi, nullptr, nullptr));
}

} // namespace adroit
