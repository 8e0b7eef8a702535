#pragma once

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <set>
#include <string>
#include <vector>

#include "adroit/acquire.hpp"
#include "adroit/checkpoint.hpp"
#include "adroit/cifar10.hpp"
#include "adroit/config.hpp"
#include "adroit/synthetic.hpp"
#include "adroit/trainer.hpp"

namespace adroit {

namespace detail {

inline std::string fmt17(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

} // namespace detail

// Where the data comes from and how it is modified before the experiment.
struct DatasetSpec {
    enum class Source { Synthetic, SyntheticFile, Cifar10 };
    Source source = Source::Synthetic;
    std::string path;        // directory for cifar10, file prefix for synthetic_file
    int synth_classes = 4;
    int synth_per_class = 500;
    int synth_side = 16;
    double imbalance_ratio = 1.0;
    std::vector<int> imbalance_classes;
};

struct ExperimentSpec {
    DatasetSpec dataset;
    std::string strategy = "adroit";       // adroit | random | entropy
    std::string init_strategy = "random";  // random | kcenter | kmeans
    ALConfig config;
    std::vector<std::uint64_t> seeds;      // defaults to {config.seed}
    std::string out_dir = "runs";

    static ExperimentSpec parse(const KeyValues& kv) {
        ExperimentSpec spec;
        std::set<std::string> consumed;
        spec.config.apply(kv, consumed);

        auto take = [&](const char* key) -> const std::string* {
            auto it = kv.items.find(key);
            if (it == kv.items.end()) return nullptr;
            consumed.insert(key);
            return &it->second;
        };
        if (auto* v = take("dataset")) {
            if (*v == "synthetic") {
                spec.dataset.source = DatasetSpec::Source::Synthetic;
            } else if (*v == "synthetic_file") {
                spec.dataset.source = DatasetSpec::Source::SyntheticFile;
            } else if (*v == "cifar10") {
                spec.dataset.source = DatasetSpec::Source::Cifar10;
            } else {
                throw config_error("config: unknown dataset '" + *v + "'");
            }
        }
        if (auto* v = take("data_path")) spec.dataset.path = *v;
        if (auto* v = take("synth_classes")) {
            spec.dataset.synth_classes = static_cast<int>(detail::parse_int("synth_classes", *v));
        }
        if (auto* v = take("synth_per_class")) {
            spec.dataset.synth_per_class =
                static_cast<int>(detail::parse_int("synth_per_class", *v));
        }
        if (auto* v = take("synth_side")) {
            spec.dataset.synth_side = static_cast<int>(detail::parse_int("synth_side", *v));
        }
        if (auto* v = take("imbalance_ratio")) {
            spec.dataset.imbalance_ratio = detail::parse_double("imbalance_ratio", *v);
        }
        if (auto* v = take("imbalance_classes")) {
            spec.dataset.imbalance_classes = detail::parse_int_list("imbalance_classes", *v);
        }
        if (auto* v = take("strategy")) spec.strategy = *v;
        if (auto* v = take("init_strategy")) spec.init_strategy = *v;
        if (auto* v = take("out_dir")) spec.out_dir = *v;
        if (auto* v = take("seeds")) {
            spec.seeds.clear();
            std::istringstream in(*v);
            std::string tok;
            while (std::getline(in, tok, ',')) {
                spec.seeds.push_back(detail::parse_u64("seeds", tok));
            }
        }
        if (spec.seeds.empty()) spec.seeds.push_back(spec.config.seed);

        for (const auto& [key, value] : kv.items) {
            if (!consumed.count(key)) {
                throw config_error("config: unknown key '" + key + "'");
            }
        }
        for (const char* s : {"adroit", "random", "entropy"}) {
            if (spec.strategy == s) goto strategy_ok;
        }
        throw config_error("config: unknown strategy '" + spec.strategy + "'");
    strategy_ok:
        for (const char* s : {"random", "kcenter", "kmeans"}) {
            if (spec.init_strategy == s) return spec;
        }
        throw config_error("config: unknown init_strategy '" + spec.init_strategy + "'");
    }

    // Full resolved snapshot, sorted keys, for the run directory.
    std::string snapshot() const {
        std::map<std::string, std::string> kv = config.to_kv();
        switch (dataset.source) {
            case DatasetSpec::Source::Synthetic: kv["dataset"] = "synthetic"; break;
            case DatasetSpec::Source::SyntheticFile: kv["dataset"] = "synthetic_file"; break;
            case DatasetSpec::Source::Cifar10: kv["dataset"] = "cifar10"; break;
        }
        kv["data_path"] = dataset.path;
        kv["synth_classes"] = std::to_string(dataset.synth_classes);
        kv["synth_per_class"] = std::to_string(dataset.synth_per_class);
        kv["synth_side"] = std::to_string(dataset.synth_side);
        kv["imbalance_ratio"] = detail::fmt17(dataset.imbalance_ratio);
        kv["imbalance_classes"] = detail::int_list_string(dataset.imbalance_classes);
        kv["strategy"] = strategy;
        kv["init_strategy"] = init_strategy;
        kv["out_dir"] = out_dir;
        std::string seeds_text;
        for (std::size_t i = 0; i < seeds.size(); ++i) {
            if (i) seeds_text += ",";
            seeds_text += std::to_string(seeds[i]);
        }
        kv["seeds"] = seeds_text;
        std::string out;
        for (const auto& [k, v] : kv) out += k + " = " + v + "\n";
        return out;
    }
};

// One AL round as recorded: pool size, holdout accuracy, what was selected
// next, and end-of-phase loss summaries.
struct RoundRecord {
    int round = 0;
    int labeled_count = 0;
    double accuracy = 0.0;
    std::vector<int> selected; // chosen at the end of this round; empty for the final round
    double target_loss_final = 0.0;
    double vae_total_final = 0.0;
    double disc_loss_final = 0.0;
    double disc_accuracy = 0.0;
};

// Fraction of holdout examples whose label-head argmax (ties to the lowest
// class index) equals the ground truth.
inline double evaluate_accuracy(const TargetNet& net, const Params& target_p,
                                const Dataset& dataset, const std::vector<int>& indices) {
    if (indices.empty()) {
        throw std::invalid_argument("evaluate_accuracy: empty holdout");
    }
    const int k = net.head_width(Head::Label);
    int correct = 0;
    for (std::size_t at = 0; at < indices.size(); at += detail::kScoreChunk) {
        std::size_t stop = std::min(indices.size(), at + detail::kScoreChunk);
        Tensor images = detail::gather_images(dataset, indices, at, stop);
        Tensor logits = target_forward(net, target_p, images, Head::Label);
        for (std::size_t r = at; r < stop; ++r) {
            const double* row = &logits.data[(r - at) * static_cast<std::size_t>(k)];
            int best = 0;
            for (int j = 1; j < k; ++j) {
                if (row[j] > row[best]) best = j;
            }
            if (best == dataset.labels[static_cast<std::size_t>(indices[r])]) ++correct;
        }
    }
    return static_cast<double>(correct) / static_cast<double>(indices.size());
}

struct AggregateRow {
    int round = 0;
    int labeled_count = 0;
    double mean_acc = 0.0;
    double std_acc = 0.0;
};

// Per-round sample mean and sample standard deviation (n-1 denominator;
// reported as 0 for a single seed).
inline std::vector<AggregateRow> aggregate(const std::vector<std::vector<RoundRecord>>& per_seed) {
    if (per_seed.empty()) {
        throw std::invalid_argument("aggregate: need at least one seed");
    }
    const std::size_t rounds = per_seed.front().size();
    for (const auto& seq : per_seed) {
        if (seq.size() != rounds) {
            throw std::invalid_argument("aggregate: seeds have mismatched round counts");
        }
    }
    std::vector<AggregateRow> out;
    out.reserve(rounds);
    for (std::size_t r = 0; r < rounds; ++r) {
        AggregateRow row;
        row.round = per_seed.front()[r].round;
        row.labeled_count = per_seed.front()[r].labeled_count;
        double sum = 0.0;
        for (const auto& seq : per_seed) sum += seq[r].accuracy;
        row.mean_acc = sum / static_cast<double>(per_seed.size());
        double sq = 0.0;
        for (const auto& seq : per_seed) {
            double d = seq[r].accuracy - row.mean_acc;
            sq += d * d;
        }
        row.std_acc = per_seed.size() > 1
                          ? std::sqrt(sq / static_cast<double>(per_seed.size() - 1))
                          : 0.0;
        out.push_back(row);
    }
    return out;
}

inline constexpr const char* kPlotDataHeader = "strategy,labeled_count,mean_acc,std_acc";

inline void emit_plot_data(const std::map<std::string, std::vector<AggregateRow>>& per_strategy,
                           const std::filesystem::path& file) {
    std::ofstream out(file);
    if (!out) throw io_error("cannot create " + file.string());
    out << kPlotDataHeader << "\n";
    for (const auto& [strategy, rows] : per_strategy) {
        for (const auto& row : rows) {
            out << strategy << "," << row.labeled_count << "," << detail::fmt17(row.mean_acc)
                << "," << detail::fmt17(row.std_acc) << "\n";
        }
    }
    if (!out) throw io_error("write failed: " + file.string());
}

// ----- run directory pieces -----

inline void save_pool(const PoolState& pool, const std::filesystem::path& file) {
    std::ofstream out(file);
    if (!out) throw io_error("cannot create " + file.string());
    for (int i : pool.labeled) out << i << "\n";
    if (!out) throw io_error("write failed: " + file.string());
}

inline PoolState load_pool(const std::filesystem::path& file, const Dataset& dataset) {
    std::ifstream in(file);
    if (!in) throw io_error("cannot open " + file.string());
    std::vector<int> labeled;
    std::string line;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        labeled.push_back(static_cast<int>(detail::parse_int("pool index", line)));
    }
    return pool_from_labeled(dataset, std::move(labeled));
}

// Builds the experiment-level dataset: the source plus the imbalance
// modifier, derived from the config seed so every strategy and every run
// seed sees the same data.
inline Dataset build_dataset(const ExperimentSpec& spec) {
    Rng root(spec.config.seed);
    Dataset d;
    switch (spec.dataset.source) {
        case DatasetSpec::Source::Synthetic:
            d = make_synthetic(spec.dataset.synth_classes, spec.dataset.synth_per_class,
                               spec.dataset.synth_side, root.fork("dataset"));
            break;
        case DatasetSpec::Source::SyntheticFile:
            d = load_records_with_meta(spec.dataset.path);
            break;
        case DatasetSpec::Source::Cifar10:
            d = load_cifar10(spec.dataset.path);
            break;
    }
    if (spec.dataset.imbalance_ratio != 1.0 || !spec.dataset.imbalance_classes.empty()) {
        d = apply_imbalance(d, spec.dataset.imbalance_ratio, spec.dataset.imbalance_classes,
                            root.fork("imbalance"));
    }
    return d;
}

// The fixed seeded holdout split: (train indices, holdout indices).
inline std::pair<std::vector<int>, std::vector<int>> holdout_split(const Dataset& d,
                                                                   const ExperimentSpec& spec) {
    Rng stream = Rng(spec.config.seed).fork("holdout");
    int hold = static_cast<int>(spec.config.holdout_fraction * d.size());
    std::vector<int> hold_idx = stream.sample_without_replacement(d.size(), hold);
    std::sort(hold_idx.begin(), hold_idx.end());
    std::vector<int> train_idx;
    train_idx.reserve(static_cast<std::size_t>(d.size() - hold));
    std::size_t j = 0;
    for (int i = 0; i < d.size(); ++i) {
        if (j < hold_idx.size() && hold_idx[j] == i) {
            ++j;
        } else {
            train_idx.push_back(i);
        }
    }
    return {std::move(train_idx), std::move(hold_idx)};
}

namespace detail {

inline void write_checkpoints(const std::filesystem::path& dir, const ModelBundle& m,
                              const PoolState& pool, bool with_vae) {
    std::filesystem::create_directories(dir);
    save_checkpoint(dir / "target.ckpt", m.target_p, m.target.arch_hash());
    if (with_vae) {
        save_checkpoint(dir / "encoder.ckpt", m.enc_p, m.enc.arch_hash());
        save_checkpoint(dir / "generator.ckpt", m.gen_p, m.gen.arch_hash());
        save_checkpoint(dir / "classifier.ckpt", m.cls_p, m.cls.arch_hash());
        save_checkpoint(dir / "discriminator.ckpt", m.disc_p, m.disc.arch_hash());
    }
    save_pool(pool, dir / "pool.txt");
}

} // namespace detail

inline constexpr const char* kRoundsHeader =
    "strategy,seed,round,labeled,accuracy,target_loss,vae_total,disc_loss,disc_accuracy";
inline constexpr const char* kSelectionsHeader = "strategy,seed,round,index,score,rank";

// Runs the configured strategy for every seed. Directory layout per seed:
// <out>/<strategy>/seed_<s>/{config.snapshot, rounds.csv, selections.csv,
// losses_target_r<k>.csv, losses_adroit_r<k>.csv, checkpoints/round<k>/...}.
// Throws divergence_error on non-finite losses; whatever was already written
// stays on disk.
inline std::vector<std::vector<RoundRecord>> run_experiment(const ExperimentSpec& spec,
                                                            std::ostream* log = nullptr) {
    namespace fs = std::filesystem;
    Dataset full = build_dataset(spec);
    auto [train_idx, hold_idx] = holdout_split(full, spec);
    if (train_idx.empty() || hold_idx.empty()) {
        throw config_error("experiment: holdout split left an empty side");
    }
    Dataset train = subset(full, train_idx);
    Dataset holdout = subset(full, hold_idx);
    std::vector<int> all_holdout(static_cast<std::size_t>(holdout.size()));
    for (int i = 0; i < holdout.size(); ++i) all_holdout[static_cast<std::size_t>(i)] = i;

    const ALConfig& cfg = spec.config;
    if (static_cast<long long>(cfg.rounds) * cfg.budget + cfg.initial_pool > train.size()) {
        throw config_error("experiment: rounds*budget + initial_pool exceeds the train pool");
    }

    std::vector<std::vector<RoundRecord>> per_seed;
    for (std::uint64_t seed : spec.seeds) {
        Rng seed_root(seed);
        // initial pool is strategy-independent so strategies compare fairly
        PoolState pool;
        if (spec.init_strategy == "random") {
            pool = init_pool(train, cfg.initial_pool, seed_root.fork("init_pool"));
        } else {
            auto features = flattened_pixels(train);
            std::vector<int> chosen =
                spec.init_strategy == "kcenter"
                    ? kcenter_greedy(features, {}, cfg.initial_pool)
                    : kmeans_init(features, cfg.initial_pool, seed_root.fork("init_pool"));
            pool = pool_from_labeled(train, std::move(chosen));
        }

        Rng strat_rng = seed_root.fork("strategy").fork(spec.strategy);

        fs::path run_dir = fs::path(spec.out_dir) / spec.strategy / ("seed_" + std::to_string(seed));
        fs::create_directories(run_dir);
        {
            std::ofstream snap(run_dir / "config.snapshot");
            snap << spec.snapshot();
        }
        std::ofstream rounds_csv(run_dir / "rounds.csv");
        rounds_csv << kRoundsHeader << "\n";
        std::ofstream selections_csv(run_dir / "selections.csv");
        selections_csv << kSelectionsHeader << "\n";

        ModelBundle bundle = ModelBundle::create(ArchConfig::from(cfg, train));
        std::vector<RoundRecord> records;
        for (int round = 0; round <= cfg.rounds; ++round) {
            Rng round_rng = strat_rng.fork("round", static_cast<std::uint64_t>(round));
            // Target training is keyed by seed and round only, so strategies
            // that share a pool (always true at round 0) get identical models
            // and acquisition is the only source of divergence.
            Rng target_rng =
                seed_root.fork("round", static_cast<std::uint64_t>(round)).fork("target");
            RoundRecord rec;
            rec.round = round;
            rec.labeled_count = static_cast<int>(pool.labeled.size());

            {
                std::ofstream losses(run_dir / ("losses_target_r" + std::to_string(round) +
                                                ".csv"));
                auto [target_p, report] = train_target(train, pool, cfg, target_rng, &losses);
                bundle.target_p = std::move(target_p);
                rec.target_loss_final = report.rows.empty() ? 0.0 : report.rows.back().losses.total;
            }
            rec.accuracy =
                evaluate_accuracy(bundle.target, bundle.target_p, holdout, all_holdout);

            bool last_round = (round == cfg.rounds);
            if (!last_round) {
                std::vector<AcquisitionScore> scores;
                if (spec.strategy == "adroit") {
                    if (!cfg.warm_start || round == 0) {
                        bundle.init_vae(round_rng.fork("vae_init"));
                        bundle.init_disc(round_rng.fork("disc_init"));
                    }
                    std::ofstream losses(run_dir / ("losses_adroit_r" + std::to_string(round) +
                                                    ".csv"));
                    auto report =
                        train_adroit(train, pool, bundle, cfg, round_rng.fork("adroit"), &losses);
                    rec.vae_total_final =
                        report.rows.empty() ? 0.0 : report.rows.back().losses.total;
                    rec.disc_loss_final =
                        report.rows.empty() ? 0.0 : report.rows.back().losses.disc;
                    rec.disc_accuracy = discriminator_accuracy(train, pool, bundle);
                    scores = score_adroit(train, pool, bundle);
                    rec.selected = select_min_b(scores, cfg.budget);
                } else if (spec.strategy == "entropy") {
                    scores = score_entropy(train, pool, bundle.target, bundle.target_p);
                    rec.selected = select_min_b(scores, cfg.budget);
                } else { // random
                    rec.selected = select_random(pool, cfg.budget, round_rng.fork("select"));
                    scores.clear();
                }

                std::map<int, double> score_of;
                for (const auto& s : scores) score_of[s.index] = s.score;
                int rank = 0;
                for (int idx : rec.selected) {
                    double sc = score_of.count(idx) ? score_of[idx] : 0.0;
                    selections_csv << spec.strategy << "," << seed << "," << round << "," << idx
                                   << "," << detail::fmt17(sc) << "," << rank++ << "\n";
                }
                detail::write_checkpoints(run_dir / "checkpoints" / ("round" + std::to_string(round)),
                                          bundle, pool, spec.strategy == "adroit");
                pool = annotate(pool, rec.selected);
            } else {
                detail::write_checkpoints(run_dir / "checkpoints" / ("round" + std::to_string(round)),
                                          bundle, pool, false);
            }

            rounds_csv << spec.strategy << "," << seed << "," << rec.round << ","
                       << rec.labeled_count << "," << detail::fmt17(rec.accuracy) << ","
                       << detail::fmt17(rec.target_loss_final) << ","
                       << detail::fmt17(rec.vae_total_final) << ","
                       << detail::fmt17(rec.disc_loss_final) << ","
                       << detail::fmt17(rec.disc_accuracy) << "\n";
            rounds_csv.flush();
            if (log) {
                *log << spec.strategy << " seed " << seed << " round " << rec.round
                     << " labeled " << rec.labeled_count << " accuracy " << rec.accuracy
                     << "\n";
            }
            records.push_back(std::move(rec));
        }
        per_seed.push_back(std::move(records));
    }
    return per_seed;
}

} // namespace adroit
