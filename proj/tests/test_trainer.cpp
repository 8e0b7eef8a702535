#include <catch2/catch_amalgamated.hpp>

#include <cmath>

#define ADROIT_TESTING_NETS
#include "adroit/harness.hpp"
#include "adroit/trainer.hpp"
#include "reference_vae.hpp"
#include "testing.hpp"

using namespace adroit;

namespace {

// Small-but-trainable configuration shared by the trainer tests.
ALConfig desk_cfg() {
    ALConfig cfg;
    cfg.latent_dim = 4;
    cfg.enc_channels = {4, 6};
    cfg.cls_hidden = 8;
    cfg.disc_hidden = 8;
    cfg.target_channels = {6, 8};
    cfg.batch_size = 32;
    cfg.epochs_target = 4;
    cfg.epochs_vae = 3;
    cfg.lr_target = 5e-3;
    return cfg;
}

} // namespace

TEST_CASE("train_target with zero learning rate still reports but does not move") {
    auto data = make_synthetic(4, 30, 8, Rng(1));
    auto pool = init_pool(data, 40, Rng(2));
    ALConfig cfg = desk_cfg();
    cfg.lr_target = 0.0;
    cfg.epochs_target = 2;

    Rng rng(77);
    auto [params, report] = train_target(data, pool, cfg, rng);
    ArchConfig arch = ArchConfig::from(cfg, data);
    TargetNet net(arch);
    Params fresh = detail::init_params(net.layout, rng.fork("init_target"));
    REQUIRE(params.values == fresh.values);

    // rows = epochs x steps per epoch (larger pool: 80 unlabeled / 32 -> 3)
    REQUIRE(report.rows.size() == 2 * 3);
    REQUIRE(report.checksum == params_checksum(params));
}

TEST_CASE("train_target rejects an empty labeled pool") {
    auto data = make_synthetic(2, 10, 8, Rng(1));
    PoolState pool;
    pool.unlabeled = {0, 1, 2, 3};
    for (int i = 4; i < data.size(); ++i) pool.unlabeled.push_back(i);
    REQUIRE_THROWS_AS(train_target(data, pool, desk_cfg(), Rng(1)), invalid_state);
}

TEST_CASE("train_target learns the synthetic classes") {
    auto full = make_synthetic(4, 150, 8, Rng(11));
    std::vector<int> train_idx, hold_idx;
    for (int i = 0; i < full.size(); ++i) (i % 5 == 4 ? hold_idx : train_idx).push_back(i);
    Dataset train = subset(full, train_idx);
    Dataset holdout = subset(full, hold_idx);

    ALConfig cfg = desk_cfg();
    cfg.epochs_target = 30;
    auto pool = init_pool(train, 160, Rng(3));

    auto [params, report] = train_target(train, pool, cfg, Rng(1234));

    // training label cross entropy ends strictly below the chance level ln 4
    double final_ce = report.rows.back().losses.proxy_sup;
    REQUIRE(final_ce < std::log(4.0));

    ArchConfig arch = ArchConfig::from(cfg, train);
    TargetNet net(arch);
    std::vector<int> all(static_cast<std::size_t>(holdout.size()));
    for (int i = 0; i < holdout.size(); ++i) all[static_cast<std::size_t>(i)] = i;
    double acc = evaluate_accuracy(net, params, holdout, all);
    INFO("holdout accuracy " << acc);
    REQUIRE(acc > 0.5);
}

TEST_CASE("train_target is deterministic in the seed") {
    auto data = make_synthetic(3, 40, 8, Rng(5));
    auto pool = init_pool(data, 30, Rng(6));
    ALConfig cfg = desk_cfg();
    cfg.epochs_target = 2;
    auto [p1, r1] = train_target(data, pool, cfg, Rng(999));
    auto [p2, r2] = train_target(data, pool, cfg, Rng(999));
    REQUIRE(r1.checksum == r2.checksum);
    REQUIRE(p1.values == p2.values);
    REQUIRE(r1.rows.size() == r2.rows.size());
    for (std::size_t i = 0; i < r1.rows.size(); ++i) {
        REQUIRE(r1.rows[i].losses.total == r2.rows[i].losses.total);
    }
}

TEST_CASE("train_adroit with zero learning rates changes nothing") {
    auto data = make_synthetic(3, 40, 8, Rng(7));
    auto pool = init_pool(data, 30, Rng(8));
    ALConfig cfg = desk_cfg();
    cfg.lr_vae = 0.0;
    cfg.lr_disc = 0.0;
    cfg.epochs_vae = 2;

    ModelBundle bundle = ModelBundle::create(ArchConfig::from(cfg, data));
    Rng rng(42);
    bundle.init_vae(rng.fork("vae"));
    bundle.init_disc(rng.fork("disc"));
    bundle.init_target(rng.fork("target"));
    auto enc_before = bundle.enc_p.values;
    auto gen_before = bundle.gen_p.values;
    auto cls_before = bundle.cls_p.values;
    auto disc_before = bundle.disc_p.values;

    auto report = train_adroit(data, pool, bundle, cfg, Rng(1));
    REQUIRE(bundle.enc_p.values == enc_before);
    REQUIRE(bundle.gen_p.values == gen_before);
    REQUIRE(bundle.cls_p.values == cls_before);
    REQUIRE(bundle.disc_p.values == disc_before);
    REQUIRE_FALSE(report.rows.empty());
}

TEST_CASE("train_adroit keeps the target learner frozen") {
    auto data = make_synthetic(3, 40, 8, Rng(9));
    auto pool = init_pool(data, 40, Rng(10));
    ALConfig cfg = desk_cfg();
    cfg.epochs_vae = 2;

    ModelBundle bundle = ModelBundle::create(ArchConfig::from(cfg, data));
    Rng rng(43);
    bundle.init_vae(rng.fork("vae"));
    bundle.init_disc(rng.fork("disc"));
    bundle.init_target(rng.fork("target"));
    auto zeta_before = params_checksum(bundle.target_p);
    auto report = train_adroit(data, pool, bundle, cfg, Rng(2));
    REQUIRE(params_checksum(bundle.target_p) == zeta_before);
    // and the VAE actually moved
    REQUIRE(report.rows.size() == 2u * 3u);

    PoolState empty_side;
    empty_side.labeled.assign(pool.labeled.begin(), pool.labeled.end());
    empty_side.labeled.insert(empty_side.labeled.end(), pool.unlabeled.begin(),
                              pool.unlabeled.end());
    std::sort(empty_side.labeled.begin(), empty_side.labeled.end());
    REQUIRE_THROWS_AS(train_adroit(data, empty_side, bundle, cfg, Rng(2)), invalid_state);
}

TEST_CASE("train_adroit is deterministic in the seed") {
    auto data = make_synthetic(3, 30, 8, Rng(20));
    auto pool = init_pool(data, 30, Rng(21));
    ALConfig cfg = desk_cfg();
    cfg.epochs_vae = 2;

    auto run = [&]() {
        ModelBundle bundle = ModelBundle::create(ArchConfig::from(cfg, data));
        Rng rng(4242);
        bundle.init_vae(rng.fork("vae"));
        bundle.init_disc(rng.fork("disc"));
        bundle.init_target(rng.fork("target"));
        auto report = train_adroit(data, pool, bundle, cfg, Rng(31337));
        return std::make_pair(report.checksum, report.rows);
    };
    auto [c1, rows1] = run();
    auto [c2, rows2] = run();
    REQUIRE(c1 == c2);
    REQUIRE(rows1.size() == rows2.size());
    for (std::size_t i = 0; i < rows1.size(); ++i) {
        REQUIRE(rows1[i].losses.total == rows2[i].losses.total);
        REQUIRE(rows1[i].losses.disc == rows2[i].losses.disc);
    }
}

TEST_CASE("discriminator separates visibly different pools") {
    // labeled pool drawn from classes {0,1}, unlabeled from {2,3}
    auto data = make_synthetic(4, 60, 8, Rng(30));
    std::vector<int> labeled, unlabeled;
    for (int i = 0; i < data.size(); ++i) {
        (data.labels[static_cast<std::size_t>(i)] < 2 ? labeled : unlabeled).push_back(i);
    }
    PoolState pool;
    pool.labeled = std::move(labeled);
    pool.unlabeled = std::move(unlabeled);
    std::sort(pool.labeled.begin(), pool.labeled.end());
    std::sort(pool.unlabeled.begin(), pool.unlabeled.end());

    ALConfig cfg = desk_cfg();
    cfg.epochs_vae = 40;
    cfg.lr_vae = 2e-3;
    cfg.lr_disc = 2e-3;
    ModelBundle bundle = ModelBundle::create(ArchConfig::from(cfg, data));
    Rng rng(50);
    bundle.init_vae(rng.fork("vae"));
    bundle.init_disc(rng.fork("disc"));
    bundle.init_target(rng.fork("target"));
    train_adroit(data, pool, bundle, cfg, Rng(51));

    double acc = discriminator_accuracy(data, pool, bundle);
    INFO("discriminator accuracy " << acc);
    REQUIRE(acc > 0.5);
}

TEST_CASE("train_adroit aborts with a diagnostic on non-finite losses") {
    auto data = make_synthetic(3, 30, 8, Rng(60));
    auto pool = init_pool(data, 30, Rng(61));
    ALConfig cfg = desk_cfg();
    ModelBundle bundle = ModelBundle::create(ArchConfig::from(cfg, data));
    Rng rng(62);
    bundle.init_vae(rng.fork("vae"));
    bundle.init_disc(rng.fork("disc"));
    bundle.init_target(rng.fork("target"));
    for (auto& v : bundle.enc_p.values) v = 1e200; // poisoned weights overflow the forward
    REQUIRE_THROWS_AS(train_adroit(data, pool, bundle, cfg, Rng(63)), divergence_error);
}

TEST_CASE("ablation: training with only URL and supervised terms matches the reference") {
    auto data = make_synthetic(3, 80, 8, Rng(70));
    auto pool = init_pool(data, 64, Rng(71));

    ALConfig cfg = desk_cfg();
    cfg.lambda2 = 0.0;
    cfg.lambda3 = 0.0;
    cfg.lambda4 = 0.0;
    cfg.batch_size = 16;
    // 176 unlabeled / 16 -> 11 steps per epoch; 10 epochs > 100 steps
    cfg.epochs_vae = 10;

    ModelBundle bundle = ModelBundle::create(ArchConfig::from(cfg, data));
    Rng init_rng(4711);
    bundle.init_vae(init_rng.fork("vae"));
    bundle.init_disc(init_rng.fork("disc"));
    bundle.init_target(init_rng.fork("target"));

    refvae::ReferenceVae reference(bundle.arch, bundle.enc_p.values, bundle.gen_p.values,
                                   bundle.cls_p.values);

    Rng train_rng(31415);
    auto report = train_adroit(data, pool, bundle, cfg, train_rng);
    REQUIRE(report.rows.size() >= 100);

    // replay the exact batch schedule against the independent implementation
    BatchStream labeled(data, pool.labeled, cfg.batch_size, {.with_labels = true},
                        train_rng.fork("batch_adroit_L"));
    BatchStream unlabeled(data, pool.unlabeled, cfg.batch_size,
                          BatchOptions{.with_pretext = true}, train_rng.fork("batch_adroit_U"));
    double worst = 0.0;
    for (std::size_t step = 0; step < 100; ++step) {
        Batch bl = labeled.next();
        Batch bu = unlabeled.next();
        double ref_total = reference.step(bl, bu, cfg, train_rng.fork("vae_step", step));
        double lib_total = report.rows[step].losses.total;
        worst = std::max(worst, std::abs(ref_total - lib_total));
    }
    INFO("worst per-step deviation " << worst);
    REQUIRE(worst < 1e-8);
}
