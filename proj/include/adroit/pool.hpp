#pragma once

#include <algorithm>
#include <stdexcept>
#include <vector>

#include "adroit/dataset.hpp"
#include "adroit/rng.hpp"

namespace adroit {

// Partition of {0, ..., N-1} into labeled and unlabeled index sets. Both are
// kept sorted ascending; every iteration order elsewhere derives from sorted
// order plus an explicitly seeded shuffle.
struct PoolState {
    std::vector<int> labeled;
    std::vector<int> unlabeled;

    int total() const {
        return static_cast<int>(labeled.size() + unlabeled.size());
    }

    void check_invariants() const {
        if (!std::is_sorted(labeled.begin(), labeled.end()) ||
            !std::is_sorted(unlabeled.begin(), unlabeled.end())) {
            throw std::logic_error("PoolState: index sets must be sorted");
        }
        std::vector<int> all;
        all.reserve(labeled.size() + unlabeled.size());
        std::merge(labeled.begin(), labeled.end(), unlabeled.begin(), unlabeled.end(),
                   std::back_inserter(all));
        for (std::size_t i = 0; i < all.size(); ++i) {
            if (all[i] != static_cast<int>(i)) {
                throw std::logic_error("PoolState: labeled/unlabeled must partition 0..N-1");
            }
        }
    }
};

// Uniformly random m-subset of the dataset becomes the initial labeled pool.
inline PoolState init_pool(const Dataset& dataset, int m, Rng rng) {
    const int n = dataset.size();
    if (m <= 0 || m > n) {
        throw std::invalid_argument("init_pool: need 0 < m <= dataset size");
    }
    std::vector<int> chosen = rng.sample_without_replacement(n, m);
    std::sort(chosen.begin(), chosen.end());

    PoolState pool;
    pool.labeled = std::move(chosen);
    pool.unlabeled.reserve(static_cast<std::size_t>(n - m));
    std::size_t j = 0;
    for (int i = 0; i < n; ++i) {
        if (j < pool.labeled.size() && pool.labeled[j] == i) {
            ++j;
        } else {
            pool.unlabeled.push_back(i);
        }
    }
    return pool;
}

// Build a pool from an explicit labeled index set (used by the k-center /
// k-means initialization strategies). Indices must be distinct and in range.
inline PoolState pool_from_labeled(const Dataset& dataset, std::vector<int> labeled) {
    const int n = dataset.size();
    std::sort(labeled.begin(), labeled.end());
    if (!labeled.empty() &&
        (labeled.front() < 0 || labeled.back() >= n ||
         std::adjacent_find(labeled.begin(), labeled.end()) != labeled.end())) {
        throw std::invalid_argument("pool_from_labeled: bad labeled index set");
    }
    PoolState pool;
    pool.labeled = std::move(labeled);
    pool.unlabeled.reserve(static_cast<std::size_t>(n) - pool.labeled.size());
    std::size_t j = 0;
    for (int i = 0; i < n; ++i) {
        if (j < pool.labeled.size() && pool.labeled[j] == i) {
            ++j;
        } else {
            pool.unlabeled.push_back(i);
        }
    }
    return pool;
}

// Move the selected indices from unlabeled to labeled. The simulated oracle
// reads ground-truth labels straight from the Dataset, so no label store
// changes hands here.
inline PoolState annotate(const PoolState& pool, const std::vector<int>& selected) {
    std::vector<int> sel = selected;
    std::sort(sel.begin(), sel.end());
    if (std::adjacent_find(sel.begin(), sel.end()) != sel.end()) {
        throw std::invalid_argument("annotate: duplicate indices in selection");
    }
    if (!std::includes(pool.unlabeled.begin(), pool.unlabeled.end(), sel.begin(), sel.end())) {
        throw std::invalid_argument("annotate: selection must be a subset of the unlabeled pool");
    }

    PoolState out;
    out.labeled.reserve(pool.labeled.size() + sel.size());
    std::merge(pool.labeled.begin(), pool.labeled.end(), sel.begin(), sel.end(),
               std::back_inserter(out.labeled));
    out.unlabeled.reserve(pool.unlabeled.size() - sel.size());
    std::set_difference(pool.unlabeled.begin(), pool.unlabeled.end(), sel.begin(), sel.end(),
                        std::back_inserter(out.unlabeled));
    return out;
}

} // namespace adroit
