// Command-line front end for the active-learning framework.
//
// Subcommands:
//   run        full experiment from a config file
//   select     one acquisition step from saved checkpoints
//   eval       holdout accuracy of a target checkpoint
//   plot-data  aggregate rounds.csv files into plot-ready CSV
//   gen-data   write a synthetic dataset to disk
//
// Exit codes: 0 success, 2 configuration error, 3 runtime divergence.

#include <CLI11.hpp>

#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include "adroit/harness.hpp"

namespace fs = std::filesystem;
using namespace adroit;

namespace {

constexpr int kExitConfig = 2;
constexpr int kExitDivergence = 3;

ExperimentSpec load_spec(const std::string& config_path) {
    std::ifstream in(config_path);
    if (!in) throw config_error("cannot open config file " + config_path);
    std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    return ExperimentSpec::parse(KeyValues::parse(text));
}

std::vector<std::string> split_list(const std::string& csv) {
    std::vector<std::string> out;
    std::istringstream in(csv);
    std::string tok;
    while (std::getline(in, tok, ',')) {
        if (!tok.empty()) out.push_back(tok);
    }
    return out;
}

int cmd_run(const std::string& config_path, const std::string& seed_override,
            const std::string& strategy_override, const std::string& out_override) {
    ExperimentSpec spec = load_spec(config_path);
    if (!seed_override.empty()) {
        spec.seeds.clear();
        for (const auto& s : split_list(seed_override)) {
            spec.seeds.push_back(detail::parse_u64("--seed", s));
        }
    }
    if (!out_override.empty()) spec.out_dir = out_override;

    std::vector<std::string> strategies{spec.strategy};
    if (!strategy_override.empty()) strategies = split_list(strategy_override);

    for (const auto& strategy : strategies) {
        ExperimentSpec one = spec;
        one.strategy = strategy;
        auto per_seed = run_experiment(one, &std::cout);
        auto rows = aggregate(per_seed);
        for (const auto& row : rows) {
            std::cout << strategy << " round " << row.round << " labeled "
                      << row.labeled_count << " mean_acc " << row.mean_acc << " std "
                      << row.std_acc << "\n";
        }
    }
    return 0;
}

int cmd_select(const std::string& config_path, const std::string& run_dir, int round,
               const std::string& strategy_override, const std::string& out_path) {
    ExperimentSpec spec = load_spec(config_path);
    if (!strategy_override.empty()) spec.strategy = strategy_override;

    Dataset full = build_dataset(spec);
    auto [train_idx, hold_idx] = holdout_split(full, spec);
    Dataset train = subset(full, train_idx);

    fs::path ckpt = fs::path(run_dir) / "checkpoints" / ("round" + std::to_string(round));
    PoolState pool = load_pool(ckpt / "pool.txt", train);

    ModelBundle bundle = ModelBundle::create(ArchConfig::from(spec.config, train));
    bundle.target_p = load_checkpoint(ckpt / "target.ckpt", bundle.target.arch_hash());

    std::vector<AcquisitionScore> scores;
    std::vector<int> selected;
    if (spec.strategy == "adroit") {
        bundle.enc_p = load_checkpoint(ckpt / "encoder.ckpt", bundle.enc.arch_hash());
        bundle.gen_p = load_checkpoint(ckpt / "generator.ckpt", bundle.gen.arch_hash());
        bundle.cls_p = load_checkpoint(ckpt / "classifier.ckpt", bundle.cls.arch_hash());
        bundle.disc_p = load_checkpoint(ckpt / "discriminator.ckpt", bundle.disc.arch_hash());
        scores = score_adroit(train, pool, bundle);
        selected = select_min_b(scores, spec.config.budget);
    } else if (spec.strategy == "entropy") {
        scores = score_entropy(train, pool, bundle.target, bundle.target_p);
        selected = select_min_b(scores, spec.config.budget);
    } else {
        Rng rng = Rng(spec.seeds.front()).fork("strategy").fork("random")
                      .fork("round", static_cast<std::uint64_t>(round))
                      .fork("select");
        selected = select_random(pool, spec.config.budget, rng);
    }

    std::map<int, double> score_of;
    for (const auto& s : scores) score_of[s.index] = s.score;

    std::ostream* out = &std::cout;
    std::ofstream file;
    if (!out_path.empty()) {
        file.open(out_path);
        if (!file) throw io_error("cannot create " + out_path);
        out = &file;
    }
    *out << "index,score,strategy,round\n";
    for (int idx : selected) {
        *out << idx << "," << detail::fmt17(score_of.count(idx) ? score_of[idx] : 0.0) << ","
             << spec.strategy << "," << round << "\n";
    }
    return 0;
}

int cmd_eval(const std::string& config_path, const std::string& checkpoint_path) {
    ExperimentSpec spec = load_spec(config_path);
    Dataset full = build_dataset(spec);
    auto [train_idx, hold_idx] = holdout_split(full, spec);
    Dataset holdout = subset(full, hold_idx);
    std::vector<int> all(static_cast<std::size_t>(holdout.size()));
    for (int i = 0; i < holdout.size(); ++i) all[static_cast<std::size_t>(i)] = i;

    TargetNet net(ArchConfig::from(spec.config, holdout));
    Params target_p = load_checkpoint(checkpoint_path, net.arch_hash());
    std::cout << "accuracy " << detail::fmt17(evaluate_accuracy(net, target_p, holdout, all))
              << "\n";
    return 0;
}

int cmd_plot_data(const std::vector<std::string>& run_roots, const std::string& out_path) {
    // Gather rounds.csv files under <root>/<strategy>/seed_*/ and aggregate
    // accuracy per strategy across seeds.
    std::map<std::string, std::vector<std::vector<RoundRecord>>> per_strategy;
    for (const auto& root : run_roots) {
        if (!fs::exists(root)) throw io_error("no such run directory: " + root);
        for (const auto& strat_dir : fs::directory_iterator(root)) {
            if (!strat_dir.is_directory()) continue;
            for (const auto& seed_dir : fs::directory_iterator(strat_dir)) {
                fs::path rounds = seed_dir.path() / "rounds.csv";
                if (!fs::exists(rounds)) continue;
                std::ifstream in(rounds);
                std::string line;
                std::getline(in, line); // header
                std::vector<RoundRecord> records;
                while (std::getline(in, line)) {
                    if (line.empty()) continue;
                    std::istringstream ls(line);
                    std::string strategy, seed, field;
                    RoundRecord rec;
                    std::getline(ls, strategy, ',');
                    std::getline(ls, seed, ',');
                    std::getline(ls, field, ',');
                    rec.round = std::stoi(field);
                    std::getline(ls, field, ',');
                    rec.labeled_count = std::stoi(field);
                    std::getline(ls, field, ',');
                    rec.accuracy = std::stod(field);
                    records.push_back(rec);
                }
                if (!records.empty()) {
                    per_strategy[strat_dir.path().filename().string()].push_back(
                        std::move(records));
                }
            }
        }
    }
    if (per_strategy.empty()) throw io_error("plot-data: no rounds.csv files found");
    std::map<std::string, std::vector<AggregateRow>> aggregated;
    for (auto& [strategy, seeds] : per_strategy) {
        aggregated[strategy] = aggregate(seeds);
    }
    emit_plot_data(aggregated, out_path);
    std::cout << "wrote " << out_path << "\n";
    return 0;
}

int cmd_gen_data(const std::string& config_path, int classes, int per_class, int side,
                 std::uint64_t seed, const std::string& out_prefix) {
    if (!config_path.empty()) {
        ExperimentSpec spec = load_spec(config_path);
        classes = spec.dataset.synth_classes;
        per_class = spec.dataset.synth_per_class;
        side = spec.dataset.synth_side;
        seed = spec.config.seed;
    }
    Dataset d = make_synthetic(classes, per_class, side, Rng(seed).fork("dataset"));
    save_records_with_meta(d, out_prefix);
    std::cout << "wrote " << out_prefix << ".bin (" << d.size() << " records) and "
              << out_prefix << ".meta\n";
    return 0;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"ADROIT-style task-aware active learning experiments"};
    app.require_subcommand(1);

    std::string config_path, seed_override, strategy_override, out_override;

    auto* run = app.add_subcommand("run", "run a full experiment from a config file");
    run->add_option("--config", config_path, "config file")->required();
    run->add_option("--seed", seed_override, "override the seed list (comma separated)");
    run->add_option("--strategy", strategy_override,
                    "override the strategy, or a comma-separated list to run several");
    run->add_option("--out", out_override, "override the output directory");

    std::string run_dir, out_path;
    int round = 0;
    auto* select = app.add_subcommand("select", "one acquisition step from checkpoints");
    select->add_option("--config", config_path, "config file")->required();
    select->add_option("--run", run_dir, "seed run directory (contains checkpoints/)")
        ->required();
    select->add_option("--round", round, "round whose checkpoints to use")->required();
    select->add_option("--strategy", strategy_override, "strategy override");
    select->add_option("--out", out_path, "write CSV here instead of stdout");

    std::string checkpoint_path;
    auto* eval = app.add_subcommand("eval", "holdout accuracy of a target checkpoint");
    eval->add_option("--config", config_path, "config file")->required();
    eval->add_option("--checkpoint", checkpoint_path, "target checkpoint file")->required();

    std::vector<std::string> run_roots;
    auto* plot = app.add_subcommand("plot-data", "aggregate runs into plot-ready CSV");
    plot->add_option("--runs", run_roots, "run directories (out_dir of `run`)")->required();
    plot->add_option("--out", out_path, "output CSV path")->required();

    int classes = 4, per_class = 500, side = 16;
    std::uint64_t seed = 1;
    std::string gen_config;
    auto* gen = app.add_subcommand("gen-data", "write a synthetic dataset to disk");
    gen->add_option("--config", gen_config, "take shape parameters from this config file");
    gen->add_option("--classes", classes, "number of classes");
    gen->add_option("--per-class", per_class, "examples per class");
    gen->add_option("--side", side, "image side length");
    gen->add_option("--seed", seed, "generator seed");
    gen->add_option("--out", out_path, "output file prefix")->required();

    CLI11_PARSE(app, argc, argv);

    try {
        if (run->parsed()) {
            return cmd_run(config_path, seed_override, strategy_override, out_override);
        }
        if (select->parsed()) {
            return cmd_select(config_path, run_dir, round, strategy_override, out_path);
        }
        if (eval->parsed()) {
            return cmd_eval(config_path, checkpoint_path);
        }
        if (plot->parsed()) {
            return cmd_plot_data(run_roots, out_path);
        }
        if (gen->parsed()) {
            return cmd_gen_data(gen_config, classes, per_class, side, seed, out_path);
        }
    } catch (const config_error& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return kExitConfig;
    } catch (const divergence_error& e) {
        std::cerr << "divergence: " << e.what() << "\n";
        return kExitDivergence;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
