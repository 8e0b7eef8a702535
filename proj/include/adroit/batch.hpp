#pragma once

#include <cstdint>
#include <stdexcept>
#include <vector>

#include "adroit/dataset.hpp"
#include "adroit/pretext.hpp"
#include "adroit/rng.hpp"
#include "adroit/tensor.hpp"

namespace adroit {

// One mini-batch. labels are present iff the batch was drawn from the
// labeled pool; pretext_labels are present iff a transform was applied
// (in which case `images` already holds the transformed pixels).
struct Batch {
    Tensor images; // [B, C, H, W], values in [0,1]
    std::vector<int> labels;
    std::vector<int> pretext_labels;
    std::vector<int> indices; // dataset indices, batch order

    int size() const { return images.rank() > 0 ? images.dim(0) : 0; }
    bool has_labels() const { return !labels.empty(); }
    bool has_pretext() const { return !pretext_labels.empty(); }
};

struct BatchOptions {
    bool with_labels = false;
    bool with_pretext = false;
};

// One epoch of mini-batches over the given indices: one seeded shuffle, then
// contiguous chunks; the final short batch is kept. When with_pretext is set,
// each image gets one transform drawn uniformly from the six.
inline std::vector<Batch> batches(const Dataset& dataset, const std::vector<int>& indices,
                                  int batch_size, BatchOptions opts, Rng rng) {
    if (batch_size <= 0) throw std::invalid_argument("batches: batch_size must be positive");
    std::vector<Batch> out;
    if (indices.empty()) return out;

    std::vector<int> order = indices;
    rng.shuffle(order);

    const int c = dataset.channels, h = dataset.height, w = dataset.width;
    const std::int64_t img = dataset.image_size();
    for (std::size_t start = 0; start < order.size(); start += static_cast<std::size_t>(batch_size)) {
        std::size_t stop = std::min(order.size(), start + static_cast<std::size_t>(batch_size));
        int b = static_cast<int>(stop - start);
        Batch batch;
        batch.images = Tensor({b, c, h, w});
        batch.indices.assign(order.begin() + static_cast<std::ptrdiff_t>(start),
                             order.begin() + static_cast<std::ptrdiff_t>(stop));
        for (int k = 0; k < b; ++k) {
            int idx = batch.indices[static_cast<std::size_t>(k)];
            Tensor image = dataset.image(idx);
            if (opts.with_pretext) {
                auto t = static_cast<PretextTransform>(rng.uniform_below(kNumPretextTransforms));
                image = apply_pretext(image, t);
                batch.pretext_labels.push_back(static_cast<int>(t));
            }
            std::copy(image.data.begin(), image.data.end(),
                      batch.images.data.begin() + static_cast<std::ptrdiff_t>(k * img));
            if (opts.with_labels) {
                batch.labels.push_back(dataset.labels[static_cast<std::size_t>(idx)]);
            }
        }
        out.push_back(std::move(batch));
    }
    return out;
}

// Endless batch source: each pass over the index set is one seeded shuffle
// (pass counter forked into the stream), so two streams with equal seeds
// deliver identical sequences.
class BatchStream {
public:
    BatchStream(const Dataset& dataset, std::vector<int> indices, int batch_size,
                BatchOptions opts, Rng rng)
        : dataset_(&dataset), indices_(std::move(indices)), batch_size_(batch_size),
          opts_(opts), rng_(rng) {
        if (indices_.empty()) throw std::invalid_argument("BatchStream: empty index set");
    }

    int batches_per_pass() const {
        return static_cast<int>((indices_.size() + static_cast<std::size_t>(batch_size_) - 1) /
                                static_cast<std::size_t>(batch_size_));
    }

    Batch next() {
        if (pos_ == current_.size()) {
            current_ = batches(*dataset_, indices_, batch_size_, opts_, rng_.fork("pass", pass_));
            ++pass_;
            pos_ = 0;
        }
        return current_[pos_++];
    }

private:
    const Dataset* dataset_;
    std::vector<int> indices_;
    int batch_size_;
    BatchOptions opts_;
    Rng rng_;
    std::vector<Batch> current_;
    std::size_t pos_ = 0;
    std::uint64_t pass_ = 0;
};

} // namespace adroit
