#pragma once

#include <chrono>
#include <cmath>
#include <optional>
#include <ostream>

#include "adroit/batch.hpp"
#include "adroit/config.hpp"
#include "adroit/dataset.hpp"
#include "adroit/errors.hpp"
#include "adroit/losses.hpp"
#include "adroit/nets.hpp"
#include "adroit/optim.hpp"
#include "adroit/pool.hpp"

namespace adroit {

struct LossRow {
    int epoch = 0;
    int step = 0;
    LossBreakdown losses;
};

struct TrainReport {
    std::vector<LossRow> rows;
    double wall_seconds = 0.0;
    std::uint64_t checksum = 0;
};

namespace detail {

class RowSink {
public:
    RowSink(TrainReport& report, std::ostream* stream) : report_(report), stream_(stream) {
        if (stream_) *stream_ << LossBreakdown::csv_header() << "\n";
    }

    void emit(int epoch, int step, const LossBreakdown& b) {
        report_.rows.push_back({epoch, step, b});
        if (stream_) *stream_ << b.csv_row(epoch, step) << "\n";
    }

private:
    TrainReport& report_;
    std::ostream* stream_;
};

inline void require_finite(double v, const char* what) {
    if (!std::isfinite(v)) {
        throw divergence_error(std::string(what) + " became non-finite");
    }
}

} // namespace detail

// Target task-learner training, one run per AL round: paired iteration over
// labeled batches (class labels) and unlabeled batches (pretext labels), an
// epoch being one pass over the larger pool with the smaller one cycling.
// Returns freshly initialized-and-trained parameters.
inline std::pair<Params, TrainReport> train_target(const Dataset& dataset,
                                                   const PoolState& pool, const ALConfig& cfg,
                                                   const Rng& rng,
                                                   std::ostream* stream = nullptr) {
    if (pool.labeled.empty()) {
        throw invalid_state("train_target: labeled pool is empty");
    }
    auto start = std::chrono::steady_clock::now();
    ArchConfig arch = ArchConfig::from(cfg, dataset);
    TargetNet net(arch);
    Params params = detail::init_params(net.layout, rng.fork("init_target"));
    auto opt = OptimizerState::sgd(cfg.lr_target, cfg.momentum, cfg.weight_decay,
                                   params.values.size());

    BatchStream labeled(dataset, pool.labeled, cfg.batch_size, {.with_labels = true},
                        rng.fork("batch_target_L"));
    std::optional<BatchStream> unlabeled;
    if (!pool.unlabeled.empty()) {
        unlabeled.emplace(dataset, pool.unlabeled, cfg.batch_size,
                          BatchOptions{.with_pretext = true}, rng.fork("batch_target_U"));
    }
    const int steps_per_epoch =
        std::max(labeled.batches_per_pass(),
                 unlabeled ? unlabeled->batches_per_pass() : 0);

    TrainReport report;
    detail::RowSink sink(report, stream);
    for (int epoch = 0; epoch < cfg.epochs_target; ++epoch) {
        for (int step = 0; step < steps_per_epoch; ++step) {
            Batch bl = labeled.next();
            Batch bu = unlabeled ? unlabeled->next() : Batch{};

            Tape t;
            auto leaves = detail::bind_layers(t, net.layout, params, true);
            Tape::Var ce_l = -1, ce_u = -1;
            Tape::Var loss =
                build_target_loss(t, net, leaves, bl, bu, cfg.xi, &ce_l, &ce_u);
            detail::require_finite(t.scalar(loss), "target loss");
            t.backward(loss);
            auto grads = detail::gather_grads(t, net.layout, leaves);
            clip_global_norm(grads, cfg.grad_clip);
            sgd_momentum_step(params, grads, opt);

            LossBreakdown b;
            b.proxy_sup = t.scalar(ce_l);
            b.proxy_ssl = ce_u >= 0 ? t.scalar(ce_u) : 0.0;
            b.total = t.scalar(loss);
            sink.emit(epoch, step, b);
        }
    }
    report.wall_seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    report.checksum = params_checksum(params);
    return {std::move(params), std::move(report)};
}

// Joint adversarial training of the VAE (encoder, generator, proxy
// classifier) and the state discriminator against a frozen target learner.
// Per step: one Adam step on the VAE against the weighted total objective,
// then one Adam step on the discriminator using codes from the just-updated
// encoder, strictly in that order. bundle.target_p is never touched.
inline TrainReport train_adroit(const Dataset& dataset, const PoolState& pool,
                                ModelBundle& bundle, const ALConfig& cfg, const Rng& rng,
                                std::ostream* stream = nullptr) {
    if (pool.labeled.empty() || pool.unlabeled.empty()) {
        throw invalid_state("train_adroit: both pools must be nonempty");
    }
    auto start = std::chrono::steady_clock::now();

    auto opt_enc = OptimizerState::adam(cfg.lr_vae, bundle.enc_p.values.size());
    auto opt_gen = OptimizerState::adam(cfg.lr_vae, bundle.gen_p.values.size());
    auto opt_cls = OptimizerState::adam(cfg.lr_vae, bundle.cls_p.values.size());
    auto opt_disc = OptimizerState::adam(cfg.lr_disc, bundle.disc_p.values.size());

    BatchStream labeled(dataset, pool.labeled, cfg.batch_size, {.with_labels = true},
                        rng.fork("batch_adroit_L"));
    BatchStream unlabeled(dataset, pool.unlabeled, cfg.batch_size,
                          BatchOptions{.with_pretext = true}, rng.fork("batch_adroit_U"));
    const int steps_per_epoch =
        std::max(labeled.batches_per_pass(), unlabeled.batches_per_pass());

    TrainReport report;
    detail::RowSink sink(report, stream);
    std::uint64_t global_step = 0;
    for (int epoch = 0; epoch < cfg.epochs_vae; ++epoch) {
        for (int step = 0; step < steps_per_epoch; ++step, ++global_step) {
            Batch bl = labeled.next();
            Batch bu = unlabeled.next();

            LossBreakdown b;
            {
                Tape t;
                auto enc_l = detail::bind_layers(t, bundle.enc.layout, bundle.enc_p, true);
                auto gen_l = detail::bind_layers(t, bundle.gen.layout, bundle.gen_p, true);
                auto cls_l = detail::bind_layers(t, bundle.cls.layout, bundle.cls_p, true);
                auto disc_l = detail::bind_layers(t, bundle.disc.layout, bundle.disc_p, false);
                auto tgt_l =
                    detail::bind_layers(t, bundle.target.layout, bundle.target_p, false);
                auto g = build_vae_loss(t, bundle, enc_l, gen_l, cls_l, disc_l, tgt_l, bl, bu,
                                        cfg, rng.fork("vae_step", global_step));
                b.url = t.scalar(g.url);
                b.proxy_sup = t.scalar(g.proxy_sup);
                b.proxy_ssl = t.scalar(g.proxy_ssl);
                b.kd = t.scalar(g.kd);
                b.adv_gen = t.scalar(g.adv_gen);
                b.total = t.scalar(g.total);
                detail::require_finite(b.total, "vae loss");

                t.backward(g.total);
                auto g_enc = detail::gather_grads(t, bundle.enc.layout, enc_l);
                auto g_gen = detail::gather_grads(t, bundle.gen.layout, gen_l);
                auto g_cls = detail::gather_grads(t, bundle.cls.layout, cls_l);
                clip_global_norm(g_enc, cfg.grad_clip);
                clip_global_norm(g_gen, cfg.grad_clip);
                clip_global_norm(g_cls, cfg.grad_clip);
                adam_step(bundle.enc_p, g_enc, opt_enc);
                adam_step(bundle.gen_p, g_gen, opt_gen);
                adam_step(bundle.cls_p, g_cls, opt_cls);
            }
            {
                // discriminator update on codes from the just-updated encoder
                Tape t;
                auto enc_l = detail::bind_layers(t, bundle.enc.layout, bundle.enc_p, false);
                auto disc_l = detail::bind_layers(t, bundle.disc.layout, bundle.disc_p, true);
                auto loss = build_disc_loss(t, bundle, enc_l, disc_l, bl, bu,
                                            rng.fork("disc_step", global_step));
                b.disc = t.scalar(loss);
                detail::require_finite(b.disc, "discriminator loss");
                t.backward(loss);
                auto g_disc = detail::gather_grads(t, bundle.disc.layout, disc_l);
                clip_global_norm(g_disc, cfg.grad_clip);
                adam_step(bundle.disc_p, g_disc, opt_disc);
            }
            sink.emit(epoch, step, b);
        }
    }
    report.wall_seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    report.checksum = params_checksum(bundle.enc_p) ^ (params_checksum(bundle.gen_p) << 1) ^
                      (params_checksum(bundle.cls_p) << 2) ^
                      (params_checksum(bundle.disc_p) << 3);
    return report;
}

// Balanced accuracy of the discriminator at threshold 0.5 on deterministic
// mean codes (labeled pool is class 1). Caps each side at `cap` examples.
inline double discriminator_accuracy(const Dataset& dataset, const PoolState& pool,
                                     const ModelBundle& bundle, int cap = 512) {
    if (pool.labeled.empty() || pool.unlabeled.empty()) {
        throw invalid_state("discriminator_accuracy: both pools must be nonempty");
    }
    auto side_accuracy = [&](const std::vector<int>& indices, bool labeled_side) {
        std::vector<int> take(indices.begin(),
                              indices.begin() +
                                  std::min<std::size_t>(indices.size(),
                                                        static_cast<std::size_t>(cap)));
        int correct = 0, total = 0;
        const int chunk = 256;
        for (std::size_t at = 0; at < take.size(); at += chunk) {
            std::size_t stop = std::min(take.size(), at + chunk);
            Tensor images({static_cast<int>(stop - at), dataset.channels, dataset.height,
                           dataset.width});
            for (std::size_t k = at; k < stop; ++k) {
                Tensor img = dataset.image(take[k]);
                std::copy(img.data.begin(), img.data.end(),
                          images.data.begin() +
                              static_cast<std::ptrdiff_t>((k - at) *
                                                          static_cast<std::size_t>(
                                                              dataset.image_size())));
            }
            auto [mu, lv] = encode(bundle.enc, bundle.enc_p, images);
            (void)lv;
            auto p = discriminate(bundle.disc, bundle.disc_p, mu);
            for (double v : p.data) {
                bool says_labeled = v > 0.5;
                if (says_labeled == labeled_side) ++correct;
                ++total;
            }
        }
        return std::make_pair(correct, total);
    };
    auto [cl, tl] = side_accuracy(pool.labeled, true);
    auto [cu, tu] = side_accuracy(pool.unlabeled, false);
    return 0.5 * (static_cast<double>(cl) / tl + static_cast<double>(cu) / tu);
}

} // namespace adroit
