#include <catch2/catch_amalgamated.hpp>

#include <algorithm>
#include <cmath>
#include <set>

#define ADROIT_TESTING_NETS
#include "adroit/acquire.hpp"
#include "adroit/synthetic.hpp"
#include "testing.hpp"

using namespace adroit;
using testing_util::tiny_arch;

namespace {

std::vector<std::vector<double>> points_1d(std::initializer_list<double> xs) {
    std::vector<std::vector<double>> out;
    for (double x : xs) out.push_back({x});
    return out;
}

double sqd(const std::vector<double>& a, const std::vector<double>& b) {
    double s = 0;
    for (std::size_t i = 0; i < a.size(); ++i) s += (a[i] - b[i]) * (a[i] - b[i]);
    return s;
}

// Brute-force greedy oracle for k-center: recompute everything each round.
std::vector<int> kcenter_oracle(const std::vector<std::vector<double>>& features,
                                std::vector<int> centers, int k) {
    std::vector<int> selected;
    for (int round = 0; round < k; ++round) {
        int best = -1;
        double best_d = -1;
        for (std::size_t i = 0; i < features.size(); ++i) {
            if (std::find(centers.begin(), centers.end(), static_cast<int>(i)) != centers.end()) {
                continue;
            }
            double near = std::numeric_limits<double>::infinity();
            for (int c : centers) {
                near = std::min(near, sqd(features[i], features[static_cast<std::size_t>(c)]));
            }
            if (near > best_d) {
                best_d = near;
                best = static_cast<int>(i);
            }
        }
        centers.push_back(best);
        selected.push_back(best);
    }
    std::sort(selected.begin(), selected.end());
    return selected;
}

double covering_radius(const std::vector<std::vector<double>>& features,
                       const std::vector<int>& centers) {
    double r = 0;
    for (std::size_t i = 0; i < features.size(); ++i) {
        double near = std::numeric_limits<double>::infinity();
        for (int c : centers) {
            near = std::min(near, std::sqrt(sqd(features[i], features[static_cast<std::size_t>(c)])));
        }
        r = std::max(r, near);
    }
    return r;
}

} // namespace

TEST_CASE("score_adroit with a constant discriminator gives constant scores") {
    auto arch = tiny_arch();
    ALConfig cfg;
    cfg.latent_dim = arch.latent_dim;
    auto data = make_synthetic(3, 10, arch.image_side, Rng(1));
    auto m = ModelBundle::create(arch);
    m.init_vae(Rng(2)); // discriminator stays zero -> p = 0.5 everywhere
    auto pool = init_pool(data, 5, Rng(3));

    auto scores = score_adroit(data, pool, m);
    REQUIRE(scores.size() == pool.unlabeled.size());
    for (const auto& s : scores) {
        REQUIRE(s.score == 0.5);
    }
    // scores cover exactly the unlabeled indices, ascending
    for (std::size_t i = 0; i < scores.size(); ++i) {
        REQUIRE(scores[i].index == pool.unlabeled[i]);
    }

    PoolState exhausted;
    exhausted.labeled.resize(static_cast<std::size_t>(data.size()));
    for (int i = 0; i < data.size(); ++i) exhausted.labeled[static_cast<std::size_t>(i)] = i;
    REQUIRE_THROWS_AS(score_adroit(data, exhausted, m), invalid_state);
}

TEST_CASE("score_adroit stays inside the clamp and matches per-example evaluation") {
    auto arch = tiny_arch();
    auto data = make_synthetic(3, 12, arch.image_side, Rng(4));
    auto m = ModelBundle::create(arch);
    m.init_vae(Rng(5));
    m.init_disc(Rng(6));
    auto pool = init_pool(data, 6, Rng(7));

    auto scores = score_adroit(data, pool, m);
    for (std::size_t k = 0; k < scores.size(); ++k) {
        REQUIRE(scores[k].score >= kEpsProb);
        REQUIRE(scores[k].score <= 1.0 - kEpsProb);
        // batch-vs-loop oracle: evaluate this single example alone
        Tensor one({1, data.channels, data.height, data.width});
        Tensor img = data.image(scores[k].index);
        std::copy(img.data.begin(), img.data.end(), one.data.begin());
        auto [mu, lv] = encode(m.enc, m.enc_p, one);
        auto p = discriminate(m.disc, m.disc_p, mu);
        REQUIRE(scores[k].score == Catch::Approx(p[0]).margin(1e-12));
    }
}

TEST_CASE("select_min_b picks the smallest scores with index tie-breaks") {
    std::vector<AcquisitionScore> scores{{0, 0.9}, {1, 0.1}, {2, 0.5}, {3, 0.2}};
    REQUIRE(select_min_b(scores, 2) == std::vector<int>{1, 3});
    REQUIRE(select_min_b(scores, 0).empty());
    REQUIRE_THROWS_AS(select_min_b(scores, 5), std::invalid_argument);
}

TEST_CASE("select_min_b equals the sort-then-prefix oracle on random vectors") {
    Rng rng(1001);
    for (int trial = 0; trial < 1000; ++trial) {
        Rng t = rng.fork("trial", static_cast<std::uint64_t>(trial));
        int n = 1 + static_cast<int>(t.uniform_below(40));
        int b = static_cast<int>(t.uniform_below(static_cast<std::uint64_t>(n + 1)));
        std::vector<AcquisitionScore> scores;
        for (int i = 0; i < n; ++i) {
            // small discrete support forces plenty of ties
            scores.push_back({i, t.uniform_below(6) / 6.0});
        }
        auto got = select_min_b(scores, b);

        auto oracle = scores;
        std::stable_sort(oracle.begin(), oracle.end(), [](const auto& x, const auto& y) {
            if (x.score != y.score) return x.score < y.score;
            return x.index < y.index;
        });
        std::vector<int> expect;
        for (int i = 0; i < b; ++i) expect.push_back(oracle[static_cast<std::size_t>(i)].index);
        std::sort(expect.begin(), expect.end());
        REQUIRE(got == expect);
    }
}

TEST_CASE("select_min_b is invariant under strictly increasing score transforms") {
    Rng rng(1002);
    std::vector<AcquisitionScore> scores;
    for (int i = 0; i < 25; ++i) scores.push_back({i, rng.uniform()});
    auto base = select_min_b(scores, 10);

    auto transformed = scores;
    for (auto& s : transformed) s.score = std::exp(3.0 * s.score + 1.0);
    REQUIRE(select_min_b(transformed, 10) == base);
    for (auto& s : transformed) s.score = 2.0 * s.score + 7.0;
    REQUIRE(select_min_b(transformed, 10) == base);
}

TEST_CASE("select_random spans the unlabeled pool uniformly") {
    auto data = make_synthetic(2, 20, 4, Rng(8));
    auto pool = init_pool(data, 10, Rng(9));

    auto all = select_random(pool, static_cast<int>(pool.unlabeled.size()), Rng(10));
    REQUIRE(all == pool.unlabeled);

    auto s1 = select_random(pool, 5, Rng(11));
    auto s2 = select_random(pool, 5, Rng(11));
    REQUIRE(s1 == s2);
    REQUIRE_THROWS_AS(select_random(pool, 31, Rng(11)), std::invalid_argument);

    // inclusion frequency over many seeds is b/|unlabeled|
    std::map<int, int> counts;
    const int trials = 4000, b = 6;
    Rng seeds(12);
    for (int t = 0; t < trials; ++t) {
        for (int idx : select_random(pool, b, seeds.fork("t", static_cast<std::uint64_t>(t)))) {
            counts[idx]++;
        }
    }
    double expect = static_cast<double>(b) / static_cast<double>(pool.unlabeled.size());
    for (int idx : pool.unlabeled) {
        REQUIRE(std::abs(counts[idx] / static_cast<double>(trials) - expect) < 0.04);
    }
}

TEST_CASE("select_entropy prefers uncertain examples with the index tie rule") {
    auto arch = tiny_arch(3);
    auto m = ModelBundle::create(arch); // zero params: uniform predictor everywhere
    auto data = make_synthetic(3, 10, arch.image_side, Rng(13));
    auto pool = init_pool(data, 10, Rng(14));

    // uniform predictor: all entropies equal ln(3), ties resolve to lowest indices
    auto picked = select_entropy(data, pool, m.target, m.target_p, 4);
    std::vector<int> lowest(pool.unlabeled.begin(), pool.unlabeled.begin() + 4);
    REQUIRE(picked == lowest);
}

TEST_CASE("select_entropy selects the uniform-logit examples over confident ones") {
    // dataset rigged so some images are all-zero (logits = biases = uniform)
    // and the rest drive one logit high through positive conv weights
    Dataset d;
    d.channels = 1;
    d.height = 4;
    d.width = 4;
    d.num_classes = 3;
    const int n = 12;
    std::set<int> uncertain{2, 5, 9};
    for (int i = 0; i < n; ++i) {
        d.labels.push_back(0);
        for (int k = 0; k < 16; ++k) {
            d.pixels.push_back(uncertain.count(i) ? 0 : 255);
        }
    }
    ArchConfig arch;
    arch.image_channels = 1;
    arch.image_side = 4;
    arch.num_classes = 3;
    arch.latent_dim = 2;
    arch.enc_channels = {2};
    arch.target_channels = {1};
    auto m = ModelBundle::create(arch);
    // positive conv weight, confident label head on bright images
    testing_util::set_layer(m.target_p, m.target.layout, "conv0.w",
                            std::vector<double>(9, 0.5));
    std::vector<double> head(static_cast<std::size_t>(m.target.flat) * 3, 0.0);
    for (int f = 0; f < m.target.flat; ++f) head[static_cast<std::size_t>(f) * 3] = 1.0;
    testing_util::set_layer(m.target_p, m.target.layout, "label.w", head);

    PoolState pool;
    for (int i = 0; i < n; ++i) pool.unlabeled.push_back(i);
    auto picked = select_entropy(d, pool, m.target, m.target_p, 3);
    REQUIRE(picked == std::vector<int>{2, 5, 9});
}

TEST_CASE("select_entropy matches brute-force per-example entropy") {
    auto arch = tiny_arch(4);
    auto m = ModelBundle::create(arch);
    m.init_target(Rng(15));
    auto data = make_synthetic(4, 10, arch.image_side, Rng(16));
    auto pool = init_pool(data, 8, Rng(17));

    auto scores = score_entropy(data, pool, m.target, m.target_p);
    for (const auto& s : scores) {
        Tensor one({1, data.channels, data.height, data.width});
        Tensor img = data.image(s.index);
        std::copy(img.data.begin(), img.data.end(), one.data.begin());
        Tensor logits = target_forward(m.target, m.target_p, one, Head::Label);
        double mx = logits[0];
        for (int j = 1; j < 4; ++j) mx = std::max(mx, logits[j]);
        double z = 0;
        for (int j = 0; j < 4; ++j) z += std::exp(logits[j] - mx);
        double h = 0;
        for (int j = 0; j < 4; ++j) {
            double p = std::exp(logits[j] - mx) / z;
            h -= p * std::log(p);
        }
        REQUIRE(s.score == Catch::Approx(-h).margin(1e-12));
    }
}

TEST_CASE("kcenter_greedy picks the farthest point") {
    auto features = points_1d({0.0, 5.0, 6.0});
    auto picked = kcenter_greedy(features, {0}, 1);
    REQUIRE(picked == std::vector<int>{2}); // distance 6 beats 5

    auto everything = kcenter_greedy(features, {}, 3);
    REQUIRE(everything == std::vector<int>{0, 1, 2});

    REQUIRE_THROWS_AS(kcenter_greedy(features, {0}, 3), std::invalid_argument);
    REQUIRE_THROWS_AS(kcenter_greedy({}, {}, 1), std::invalid_argument);
}

TEST_CASE("kcenter_greedy matches the brute-force oracle") {
    Rng rng(2024);
    for (int trial = 0; trial < 200; ++trial) {
        Rng t = rng.fork("trial", static_cast<std::uint64_t>(trial));
        int n = 3 + static_cast<int>(t.uniform_below(18)); // up to 20 points
        int dim = 1 + static_cast<int>(t.uniform_below(3));
        std::vector<std::vector<double>> features(static_cast<std::size_t>(n),
                                                  std::vector<double>(static_cast<std::size_t>(dim)));
        for (auto& f : features) {
            for (auto& v : f) v = t.uniform(-1, 1);
        }
        std::vector<int> initial;
        if (t.uniform() < 0.5) initial.push_back(static_cast<int>(t.uniform_below(
            static_cast<std::uint64_t>(n))));
        int k = 1 + static_cast<int>(t.uniform_below(
                    static_cast<std::uint64_t>(n - initial.size())));
        REQUIRE(kcenter_greedy(features, initial, k) == kcenter_oracle(features, initial, k));
    }
}

TEST_CASE("kcenter_greedy covering radius is within twice the optimum") {
    Rng rng(2025);
    for (int trial = 0; trial < 40; ++trial) {
        Rng t = rng.fork("trial", static_cast<std::uint64_t>(trial));
        int n = 6 + static_cast<int>(t.uniform_below(7)); // at most 12 points
        int k = 2 + static_cast<int>(t.uniform_below(2)); // 2 or 3 centers
        std::vector<std::vector<double>> features(static_cast<std::size_t>(n),
                                                  std::vector<double>(2));
        for (auto& f : features) {
            for (auto& v : f) v = t.uniform(-1, 1);
        }
        auto greedy = kcenter_greedy(features, {}, k);
        double greedy_radius = covering_radius(features, greedy);

        // exhaustive optimum over all k-subsets
        double best = std::numeric_limits<double>::infinity();
        std::vector<int> comb(static_cast<std::size_t>(k));
        std::function<void(int, int)> rec = [&](int start, int depth) {
            if (depth == k) {
                best = std::min(best, covering_radius(features, comb));
                return;
            }
            for (int i = start; i < n; ++i) {
                comb[static_cast<std::size_t>(depth)] = i;
                rec(i + 1, depth + 1);
            }
        };
        rec(0, 0);
        REQUIRE(greedy_radius <= 2.0 * best + 1e-12);
    }
}

TEST_CASE("kmeans_init centers on the global mean for m = 1") {
    auto features = points_1d({0.0, 1.0, 2.0, 7.0});
    // mean is 2.5; nearest point is x=2 (index 2)
    REQUIRE(kmeans_init(features, 1, Rng(1)) == std::vector<int>{2});
}

TEST_CASE("kmeans_init separates two well-spaced clusters") {
    auto features = points_1d({0.0, 0.1, 0.2, 10.0, 10.1, 10.2});
    auto picked = kmeans_init(features, 2, Rng(2));
    REQUIRE(picked.size() == 2);
    bool low = picked[0] <= 2, high = picked[1] >= 3;
    REQUIRE(low);
    REQUIRE(high);
}

TEST_CASE("kmeans_init handles degenerate identical points") {
    std::vector<std::vector<double>> features(8, std::vector<double>{3.0, 3.0});
    auto picked = kmeans_init(features, 3, Rng(3));
    REQUIRE(picked == std::vector<int>{0, 1, 2});
    REQUIRE_THROWS_AS(kmeans_init(features, 9, Rng(3)), std::invalid_argument);
}

TEST_CASE("kmeans_init WCSS is near the multi-restart oracle") {
    Rng rng(3030);
    for (int trial = 0; trial < 8; ++trial) {
        Rng t = rng.fork("trial", static_cast<std::uint64_t>(trial));
        int n = 24 + static_cast<int>(t.uniform_below(16));
        int m = 2 + static_cast<int>(t.uniform_below(3));
        std::vector<std::vector<double>> features(static_cast<std::size_t>(n),
                                                  std::vector<double>(2));
        for (auto& f : features) {
            for (auto& v : f) v = t.uniform(-1, 1);
        }
        auto result = kmeans_cluster(features, m, t.fork("run"));

        auto wcss_of = [&](const std::vector<std::vector<double>>& centers) {
            double s = 0;
            for (const auto& f : features) {
                double near = std::numeric_limits<double>::infinity();
                for (const auto& c : centers) near = std::min(near, sqd(f, c));
                s += near;
            }
            return s;
        };

        // 100-restart Lloyd oracle (plain implementation)
        double best = std::numeric_limits<double>::infinity();
        for (int r = 0; r < 100; ++r) {
            Rng rr = t.fork("oracle", static_cast<std::uint64_t>(r));
            std::vector<std::vector<double>> centers;
            for (int c : rr.sample_without_replacement(n, m)) {
                centers.push_back(features[static_cast<std::size_t>(c)]);
            }
            for (int iter = 0; iter < 100; ++iter) {
                std::vector<std::vector<double>> acc(static_cast<std::size_t>(m),
                                                     std::vector<double>(2, 0.0));
                std::vector<int> cnt(static_cast<std::size_t>(m), 0);
                for (const auto& f : features) {
                    int bc = 0;
                    double near = std::numeric_limits<double>::infinity();
                    for (int c = 0; c < m; ++c) {
                        double dd = sqd(f, centers[static_cast<std::size_t>(c)]);
                        if (dd < near) {
                            near = dd;
                            bc = c;
                        }
                    }
                    acc[static_cast<std::size_t>(bc)][0] += f[0];
                    acc[static_cast<std::size_t>(bc)][1] += f[1];
                    cnt[static_cast<std::size_t>(bc)]++;
                }
                bool moved = false;
                for (int c = 0; c < m; ++c) {
                    if (cnt[static_cast<std::size_t>(c)] == 0) continue;
                    std::vector<double> nc{acc[static_cast<std::size_t>(c)][0] /
                                               cnt[static_cast<std::size_t>(c)],
                                           acc[static_cast<std::size_t>(c)][1] /
                                               cnt[static_cast<std::size_t>(c)]};
                    if (sqd(nc, centers[static_cast<std::size_t>(c)]) > 1e-20) moved = true;
                    centers[static_cast<std::size_t>(c)] = std::move(nc);
                }
                if (!moved) break;
            }
            best = std::min(best, wcss_of(centers));
        }

        INFO("trial " << trial << " ours " << result.wcss << " oracle " << best);
        REQUIRE(result.wcss <= best * 1.05 + 1e-12);
        REQUIRE(result.selected.size() == static_cast<std::size_t>(m));
    }
}
