#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <vector>

#include "adroit/dataset.hpp"
#include "adroit/errors.hpp"
#include "adroit/nets.hpp"
#include "adroit/pool.hpp"
#include "adroit/rng.hpp"

namespace adroit {

// Lower score = more informative. Every selector breaks ties by ascending
// dataset index and returns its result as a sorted index set.
struct AcquisitionScore {
    int index = 0;
    double score = 0.0;
};

namespace detail {

inline Tensor gather_images(const Dataset& d, const std::vector<int>& indices,
                            std::size_t from, std::size_t to) {
    Tensor images({static_cast<int>(to - from), d.channels, d.height, d.width});
    for (std::size_t k = from; k < to; ++k) {
        Tensor img = d.image(indices[k]);
        std::copy(img.data.begin(), img.data.end(),
                  images.data.begin() + static_cast<std::ptrdiff_t>(
                                            (k - from) * static_cast<std::size_t>(d.image_size())));
    }
    return images;
}

inline constexpr std::size_t kScoreChunk = 256;

} // namespace detail

// Discriminator probability on the deterministic encoder mean of every
// unlabeled example. Minimal probability of "looks labeled" marks the samples
// the oracle should see next.
inline std::vector<AcquisitionScore> score_adroit(const Dataset& dataset, const PoolState& pool,
                                                  const ModelBundle& bundle) {
    if (pool.unlabeled.empty()) {
        throw invalid_state("score_adroit: unlabeled pool is empty");
    }
    std::vector<AcquisitionScore> scores;
    scores.reserve(pool.unlabeled.size());
    for (std::size_t at = 0; at < pool.unlabeled.size(); at += detail::kScoreChunk) {
        std::size_t stop = std::min(pool.unlabeled.size(), at + detail::kScoreChunk);
        Tensor images = detail::gather_images(dataset, pool.unlabeled, at, stop);
        auto [mu, lv] = encode(bundle.enc, bundle.enc_p, images);
        (void)lv;
        Tensor p = discriminate(bundle.disc, bundle.disc_p, mu);
        for (std::size_t k = at; k < stop; ++k) {
            scores.push_back({pool.unlabeled[k], p[static_cast<std::int64_t>(k - at)]});
        }
    }
    return scores;
}

// Negative predictive entropy of the target's label head, so that the
// min-score rule selects the most uncertain examples.
inline std::vector<AcquisitionScore> score_entropy(const Dataset& dataset,
                                                   const PoolState& pool, const TargetNet& net,
                                                   const Params& target_p) {
    if (pool.unlabeled.empty()) {
        throw invalid_state("score_entropy: unlabeled pool is empty");
    }
    std::vector<AcquisitionScore> scores;
    scores.reserve(pool.unlabeled.size());
    const int k = net.head_width(Head::Label);
    for (std::size_t at = 0; at < pool.unlabeled.size(); at += detail::kScoreChunk) {
        std::size_t stop = std::min(pool.unlabeled.size(), at + detail::kScoreChunk);
        Tensor images = detail::gather_images(dataset, pool.unlabeled, at, stop);
        Tensor logits = target_forward(net, target_p, images, Head::Label);
        for (std::size_t r = at; r < stop; ++r) {
            const double* row = &logits.data[(r - at) * static_cast<std::size_t>(k)];
            double mx = row[0];
            for (int j = 1; j < k; ++j) mx = std::max(mx, row[j]);
            double z = 0.0;
            for (int j = 0; j < k; ++j) z += std::exp(row[j] - mx);
            double entropy = 0.0;
            for (int j = 0; j < k; ++j) {
                double p = std::exp(row[j] - mx) / z;
                if (p > 0.0) entropy -= p * std::log(p);
            }
            scores.push_back({pool.unlabeled[r], -entropy});
        }
    }
    return scores;
}

// The b indices with smallest scores; ties broken by ascending dataset index.
inline std::vector<int> select_min_b(const std::vector<AcquisitionScore>& scores, int b) {
    if (b < 0 || static_cast<std::size_t>(b) > scores.size()) {
        throw std::invalid_argument("select_min_b: b exceeds the number of scores");
    }
    std::vector<AcquisitionScore> sorted = scores;
    std::sort(sorted.begin(), sorted.end(), [](const auto& x, const auto& y) {
        if (x.score != y.score) return x.score < y.score;
        return x.index < y.index;
    });
    std::vector<int> out;
    out.reserve(static_cast<std::size_t>(b));
    for (int i = 0; i < b; ++i) out.push_back(sorted[static_cast<std::size_t>(i)].index);
    std::sort(out.begin(), out.end());
    return out;
}

inline std::vector<int> select_random(const PoolState& pool, int b, Rng rng) {
    if (b < 0 || static_cast<std::size_t>(b) > pool.unlabeled.size()) {
        throw std::invalid_argument("select_random: b exceeds the unlabeled pool");
    }
    auto positions =
        rng.sample_without_replacement(static_cast<int>(pool.unlabeled.size()), b);
    std::vector<int> out;
    out.reserve(static_cast<std::size_t>(b));
    for (int k : positions) out.push_back(pool.unlabeled[static_cast<std::size_t>(k)]);
    std::sort(out.begin(), out.end());
    return out;
}

inline std::vector<int> select_entropy(const Dataset& dataset, const PoolState& pool,
                                       const TargetNet& net, const Params& target_p, int b) {
    return select_min_b(score_entropy(dataset, pool, net, target_p), b);
}

// Features for the initialization strategies: flattened raw pixels.
inline std::vector<std::vector<double>> flattened_pixels(const Dataset& d) {
    std::vector<std::vector<double>> out(static_cast<std::size_t>(d.size()));
    for (int i = 0; i < d.size(); ++i) {
        Tensor img = d.image(i);
        out[static_cast<std::size_t>(i)] = std::move(img.data);
    }
    return out;
}

namespace detail {

inline double sq_dist(const std::vector<double>& a, const std::vector<double>& b) {
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        double d = a[i] - b[i];
        s += d * d;
    }
    return s;
}

} // namespace detail

// Greedy k-center: repeatedly add the candidate farthest from its nearest
// already-selected center (Euclidean). With no initial centers the first pick
// falls to the tie rule, i.e. index 0. Returns only the newly selected
// indices.
inline std::vector<int> kcenter_greedy(const std::vector<std::vector<double>>& features,
                                       const std::vector<int>& initial, int k) {
    std::vector<bool> taken(features.size(), false);
    for (int i : initial) {
        if (i < 0 || static_cast<std::size_t>(i) >= features.size()) {
            throw std::invalid_argument("kcenter_greedy: initial index out of range");
        }
        taken[static_cast<std::size_t>(i)] = true;
    }
    std::size_t candidates = features.size() - initial.size();
    if (k < 0 || static_cast<std::size_t>(k) > candidates) {
        throw std::invalid_argument("kcenter_greedy: k exceeds the candidate set");
    }

    std::vector<double> nearest(features.size(), std::numeric_limits<double>::infinity());
    for (std::size_t i = 0; i < features.size(); ++i) {
        for (int c : initial) {
            nearest[i] = std::min(nearest[i],
                                  detail::sq_dist(features[i],
                                                  features[static_cast<std::size_t>(c)]));
        }
    }

    std::vector<int> selected;
    selected.reserve(static_cast<std::size_t>(k));
    for (int round = 0; round < k; ++round) {
        int best = -1;
        double best_dist = -1.0;
        for (std::size_t i = 0; i < features.size(); ++i) {
            if (taken[i]) continue;
            if (nearest[i] > best_dist) {
                best_dist = nearest[i];
                best = static_cast<int>(i);
            }
        }
        taken[static_cast<std::size_t>(best)] = true;
        selected.push_back(best);
        for (std::size_t i = 0; i < features.size(); ++i) {
            if (taken[i]) continue;
            nearest[i] = std::min(nearest[i],
                                  detail::sq_dist(features[i],
                                                  features[static_cast<std::size_t>(best)]));
        }
    }
    std::sort(selected.begin(), selected.end());
    return selected;
}

namespace detail {

struct KMeansRun {
    std::vector<std::vector<double>> centroids;
    double wcss = std::numeric_limits<double>::infinity();
};

inline KMeansRun lloyd(const std::vector<std::vector<double>>& features, int m, Rng rng,
                       int max_iters, double tol) {
    const std::size_t n = features.size();
    KMeansRun run;

    // k-means++ seeding
    std::vector<std::size_t> seeds;
    std::vector<double> d2(n, std::numeric_limits<double>::infinity());
    seeds.push_back(static_cast<std::size_t>(rng.uniform_below(n)));
    for (int c = 1; c < m; ++c) {
        double total = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            d2[i] = std::min(d2[i], sq_dist(features[i], features[seeds.back()]));
            total += d2[i];
        }
        std::size_t pick = 0;
        if (total > 0.0) {
            double r = rng.uniform() * total;
            double acc = 0.0;
            pick = n - 1;
            for (std::size_t i = 0; i < n; ++i) {
                acc += d2[i];
                if (acc >= r) {
                    pick = i;
                    break;
                }
            }
        } else {
            // all remaining distances zero: fall back to the lowest unused index
            std::vector<bool> used(n, false);
            for (std::size_t s : seeds) used[s] = true;
            while (pick < n && used[pick]) ++pick;
            if (pick == n) pick = 0;
        }
        seeds.push_back(pick);
    }
    run.centroids.reserve(static_cast<std::size_t>(m));
    for (std::size_t s : seeds) run.centroids.push_back(features[s]);

    std::vector<int> assign(n, 0);
    for (int iter = 0; iter < max_iters; ++iter) {
        for (std::size_t i = 0; i < n; ++i) {
            double best = std::numeric_limits<double>::infinity();
            int bc = 0;
            for (int c = 0; c < m; ++c) {
                double d = sq_dist(features[i], run.centroids[static_cast<std::size_t>(c)]);
                if (d < best) {
                    best = d;
                    bc = c;
                }
            }
            assign[i] = bc;
        }
        double shift = 0.0, scale = 0.0;
        std::vector<std::vector<double>> next(static_cast<std::size_t>(m),
                                              std::vector<double>(features[0].size(), 0.0));
        std::vector<int> counts(static_cast<std::size_t>(m), 0);
        for (std::size_t i = 0; i < n; ++i) {
            auto& acc = next[static_cast<std::size_t>(assign[i])];
            for (std::size_t j = 0; j < acc.size(); ++j) acc[j] += features[i][j];
            counts[static_cast<std::size_t>(assign[i])]++;
        }
        for (int c = 0; c < m; ++c) {
            auto& ctr = run.centroids[static_cast<std::size_t>(c)];
            if (counts[static_cast<std::size_t>(c)] == 0) continue; // keep empty clusters put
            auto& acc = next[static_cast<std::size_t>(c)];
            for (std::size_t j = 0; j < acc.size(); ++j) {
                acc[j] /= counts[static_cast<std::size_t>(c)];
            }
            shift += sq_dist(ctr, acc);
            scale += dot(ctr, ctr);
            ctr = acc;
        }
        if (std::sqrt(shift) <= tol * (1.0 + std::sqrt(scale))) break;
    }

    run.wcss = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        double best = std::numeric_limits<double>::infinity();
        for (int c = 0; c < m; ++c) {
            best = std::min(best, sq_dist(features[i], run.centroids[static_cast<std::size_t>(c)]));
        }
        run.wcss += best;
    }
    return run;
}

} // namespace detail

inline constexpr int kKMeansMaxIters = 100;
inline constexpr double kKMeansTol = 1e-6;
inline constexpr int kKMeansRestarts = 10;

struct KMeansResult {
    std::vector<std::vector<double>> centroids;
    double wcss = 0.0;
    std::vector<int> selected; // nearest distinct data index per centroid
};

// Seeded k-means++ plus Lloyd iterations (best of a few internal restarts),
// then each centroid snaps to the nearest distinct data index; shortfall from
// deduplication is filled with the next-nearest unselected points.
inline KMeansResult kmeans_cluster(const std::vector<std::vector<double>>& features, int m,
                                   Rng rng) {
    const std::size_t n = features.size();
    if (m <= 0 || static_cast<std::size_t>(m) > n) {
        throw std::invalid_argument("kmeans_cluster: need 0 < m <= number of points");
    }
    detail::KMeansRun best;
    for (int r = 0; r < kKMeansRestarts; ++r) {
        auto run = detail::lloyd(features, m, rng.fork("restart", static_cast<std::uint64_t>(r)),
                                 kKMeansMaxIters, kKMeansTol);
        if (run.wcss < best.wcss) best = std::move(run);
    }

    KMeansResult result;
    result.wcss = best.wcss;
    std::vector<bool> taken(n, false);
    result.selected.reserve(static_cast<std::size_t>(m));
    for (int c = 0; c < m; ++c) {
        int pick = -1;
        double pick_dist = std::numeric_limits<double>::infinity();
        for (std::size_t i = 0; i < n; ++i) {
            if (taken[i]) continue;
            double d = detail::sq_dist(features[i], best.centroids[static_cast<std::size_t>(c)]);
            if (d < pick_dist) {
                pick_dist = d;
                pick = static_cast<int>(i);
            }
        }
        taken[static_cast<std::size_t>(pick)] = true;
        result.selected.push_back(pick);
    }
    std::sort(result.selected.begin(), result.selected.end());
    result.centroids = std::move(best.centroids);
    return result;
}

inline std::vector<int> kmeans_init(const std::vector<std::vector<double>>& features, int m,
                                    Rng rng) {
    return kmeans_cluster(features, m, rng).selected;
}

} // namespace adroit
