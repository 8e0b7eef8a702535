#include <catch2/catch_amalgamated.hpp>

#include <cstdio>
#include <filesystem>
#include <fstream>

#include "adroit/autodiff.hpp"
#include "adroit/batch.hpp"
#include "adroit/cifar10.hpp"
#include "adroit/synthetic.hpp"

using namespace adroit;
namespace fs = std::filesystem;

namespace {

struct TempDir {
    fs::path path;
    TempDir() {
        path = fs::temp_directory_path() /
               ("adroit_test_" + std::to_string(::getpid()) + "_" +
                std::to_string(counter()++));
        fs::create_directories(path);
    }
    ~TempDir() {
        std::error_code ec;
        fs::remove_all(path, ec);
    }
    static int& counter() {
        static int c = 0;
        return c;
    }
};

// Five fake CIFAR training batch files: 5000 records per class overall,
// deterministic pixel pattern.
void write_fake_cifar(const fs::path& dir) {
    int written_per_class[10] = {0};
    int record_id = 0;
    for (int f = 1; f <= 5; ++f) {
        std::ofstream out(dir / ("data_batch_" + std::to_string(f) + ".bin"),
                          std::ios::binary);
        REQUIRE(out.good());
        std::vector<char> buf(3073);
        for (int r = 0; r < kCifarRecordsPerFile; ++r, ++record_id) {
            int label = record_id % 10;
            buf[0] = static_cast<char>(label);
            written_per_class[label]++;
            for (int i = 0; i < 3072; ++i) {
                buf[static_cast<std::size_t>(i + 1)] =
                    static_cast<char>((record_id * 31 + i * 7) & 0xff);
            }
            out.write(buf.data(), 3073);
        }
    }
    for (int c = 0; c < 10; ++c) REQUIRE(written_per_class[c] == 5000);
}

} // namespace

TEST_CASE("synthetic generator is balanced and deterministic") {
    auto d = make_synthetic(4, 25, 8, Rng(5));
    REQUIRE(d.size() == 100);
    auto counts = class_counts(d);
    for (int c : counts) REQUIRE(c == 25);
    d.validate();

    auto d2 = make_synthetic(4, 25, 8, Rng(5));
    REQUIRE(d.pixels == d2.pixels);
    REQUIRE(d.labels == d2.labels);
}

TEST_CASE("synthetic classes are separable by a small classifier") {
    // Independent separability oracle: flatten pixels, train a 2-layer MLP
    // for 200 steps of plain gradient descent, check holdout accuracy.
    auto d = make_synthetic(4, 250, 8, Rng(17));
    const int n = d.size();
    const int input = static_cast<int>(d.image_size());
    const int hidden = 64, classes = 4;

    // deterministic split: last fifth is holdout
    std::vector<int> train_idx, hold_idx;
    for (int i = 0; i < n; ++i) (i % 5 == 4 ? hold_idx : train_idx).push_back(i);

    Rng rng(99);
    auto init = [&](int rows, int cols, double scale) {
        Tensor t({rows, cols});
        for (auto& v : t.data) v = rng.uniform(-scale, scale);
        return t;
    };
    Tensor w1 = init(input, hidden, 0.1), b1({hidden});
    Tensor w2 = init(hidden, classes, 0.1), b2({classes});

    auto batch_tensor = [&](const std::vector<int>& idx) {
        Tensor x({static_cast<int>(idx.size()), input});
        std::vector<int> y;
        for (std::size_t k = 0; k < idx.size(); ++k) {
            Tensor img = d.image(idx[k]);
            std::copy(img.data.begin(), img.data.end(),
                      x.data.begin() + static_cast<std::ptrdiff_t>(k) * input);
            y.push_back(d.labels[static_cast<std::size_t>(idx[k])]);
        }
        return std::make_pair(x, y);
    };

    auto [xtr, ytr] = batch_tensor(train_idx);
    const double lr = 0.05, mom = 0.9;
    Tensor vw1m(w1.shape), vb1m(b1.shape), vw2m(w2.shape), vb2m(b2.shape);
    for (int step = 0; step < 200; ++step) {
        Tape t;
        auto vw1 = t.input(w1), vb1 = t.input(b1), vw2 = t.input(w2), vb2 = t.input(b2);
        auto h = t.relu(t.linear(t.constant(xtr), vw1, vb1));
        auto logits = t.linear(h, vw2, vb2);
        auto loss = t.softmax_cross_entropy_mean(logits, ytr);
        t.backward(loss);
        auto update = [lr, mom](Tensor& p, Tensor& v, const Tensor& g) {
            for (std::int64_t i = 0; i < p.size(); ++i) {
                v[i] = mom * v[i] + g[i];
                p[i] -= lr * v[i];
            }
        };
        update(w1, vw1m, t.grad(vw1));
        update(b1, vb1m, t.grad(vb1));
        update(w2, vw2m, t.grad(vw2));
        update(b2, vb2m, t.grad(vb2));
    }

    auto [xho, yho] = batch_tensor(hold_idx);
    Tape t;
    auto h = t.relu(t.linear(t.constant(xho), t.constant(w1), t.constant(b1)));
    auto logits = t.value(t.linear(h, t.constant(w2), t.constant(b2)));
    int correct = 0;
    for (int i = 0; i < logits.dim(0); ++i) {
        int best = 0;
        for (int j = 1; j < classes; ++j) {
            if (logits[static_cast<std::int64_t>(i) * classes + j] >
                logits[static_cast<std::int64_t>(i) * classes + best]) {
                best = j;
            }
        }
        if (best == yho[static_cast<std::size_t>(i)]) ++correct;
    }
    double acc = correct / static_cast<double>(logits.dim(0));
    INFO("holdout accuracy " << acc);
    REQUIRE(acc > 0.6);
}

TEST_CASE("apply_imbalance trims affected classes by floor(count/ratio)") {
    auto d = make_synthetic(10, 5000, 4, Rng(2));
    auto out = apply_imbalance(d, 10.0, {0, 1, 2, 3, 4}, Rng(8));
    auto counts = class_counts(out);
    for (int c = 0; c < 5; ++c) REQUIRE(counts[static_cast<std::size_t>(c)] == 500);
    for (int c = 5; c < 10; ++c) REQUIRE(counts[static_cast<std::size_t>(c)] == 5000);

    auto out25 = apply_imbalance(d, 25.0, {0, 1, 2, 3, 4}, Rng(8));
    auto counts25 = class_counts(out25);
    for (int c = 0; c < 5; ++c) REQUIRE(counts25[static_cast<std::size_t>(c)] == 200);
}

TEST_CASE("apply_imbalance with ratio 1 is the identity") {
    auto d = make_synthetic(3, 20, 4, Rng(2));
    auto out = apply_imbalance(d, 1.0, {0, 1, 2}, Rng(8));
    REQUIRE(out.pixels == d.pixels);
    REQUIRE(out.labels == d.labels);
}

TEST_CASE("apply_imbalance keeps retained examples byte-identical and ordered") {
    auto d = make_synthetic(4, 50, 4, Rng(2));
    auto out = apply_imbalance(d, 3.0, {1, 3}, Rng(9));
    // kept examples must be a subsequence of the original dataset
    int j = 0;
    for (int i = 0; i < out.size(); ++i) {
        bool found = false;
        while (j < d.size()) {
            bool same_label = d.labels[static_cast<std::size_t>(j)] ==
                              out.labels[static_cast<std::size_t>(i)];
            bool same_pixels =
                std::equal(out.image_ptr(i), out.image_ptr(i) + out.image_size(),
                           d.image_ptr(j));
            ++j;
            if (same_label && same_pixels) {
                found = true;
                break;
            }
        }
        REQUIRE(found);
    }
}

TEST_CASE("apply_imbalance validates inputs") {
    auto d = make_synthetic(3, 10, 4, Rng(2));
    REQUIRE_THROWS_AS(apply_imbalance(d, 0.5, {0}, Rng(1)), std::invalid_argument);
    REQUIRE_THROWS_AS(apply_imbalance(d, 2.0, {3}, Rng(1)), std::invalid_argument);
}

TEST_CASE("cifar10 loader reads the five training files") {
    TempDir tmp;
    write_fake_cifar(tmp.path);
    auto d = load_cifar10(tmp.path);
    REQUIRE(d.size() == 50000);
    REQUIRE(d.channels == 3);
    REQUIRE(d.height == 32);
    REQUIRE(d.width == 32);
    REQUIRE(d.num_classes == 10);
    auto counts = class_counts(d);
    for (int c : counts) REQUIRE(c == 5000);
    // pixels scale into [0,1]
    Tensor img = d.image(0);
    for (double v : img.data) {
        REQUIRE(v >= 0.0);
        REQUIRE(v <= 1.0);
    }
}

TEST_CASE("re-serializing loaded records reproduces the source bytes") {
    TempDir tmp;
    write_fake_cifar(tmp.path);
    auto d = load_cifar10(tmp.path);

    std::vector<int> first_file(kCifarRecordsPerFile);
    for (int i = 0; i < kCifarRecordsPerFile; ++i) first_file[static_cast<std::size_t>(i)] = i;
    auto head = subset(d, first_file);
    save_records(head, tmp.path / "roundtrip.bin");

    auto read_all = [](const fs::path& p) {
        std::ifstream in(p, std::ios::binary);
        return std::string((std::istreambuf_iterator<char>(in)),
                           std::istreambuf_iterator<char>());
    };
    REQUIRE(read_all(tmp.path / "roundtrip.bin") ==
            read_all(tmp.path / "data_batch_1.bin"));
}

TEST_CASE("record files round-trip through the meta reader") {
    TempDir tmp;
    auto d = make_synthetic(4, 12, 8, Rng(21));
    save_records_with_meta(d, tmp.path / "synth");
    auto back = load_records_with_meta(tmp.path / "synth");
    REQUIRE(back.pixels == d.pixels);
    REQUIRE(back.labels == d.labels);
    REQUIRE(back.num_classes == d.num_classes);
}

TEST_CASE("cifar10 loader rejects bad directories and files") {
    TempDir tmp;
    REQUIRE_THROWS_AS(load_cifar10(tmp.path), io_error);

    write_fake_cifar(tmp.path);
    // truncate one file mid-record
    fs::resize_file(tmp.path / "data_batch_3.bin", 3073 * 100 + 17);
    REQUIRE_THROWS_AS(load_cifar10(tmp.path), format_error);

    // whole records but the wrong count
    fs::resize_file(tmp.path / "data_batch_3.bin", 3073 * 100);
    REQUIRE_THROWS_AS(load_cifar10(tmp.path), format_error);
}

TEST_CASE("batches splits indices with the final short batch kept") {
    auto d = make_synthetic(2, 10, 4, Rng(1));
    std::vector<int> idx(10);
    for (int i = 0; i < 10; ++i) idx[static_cast<std::size_t>(i)] = i;
    auto bs = batches(d, idx, 4, {}, Rng(3));
    REQUIRE(bs.size() == 3);
    REQUIRE(bs[0].size() == 4);
    REQUIRE(bs[1].size() == 4);
    REQUIRE(bs[2].size() == 2);
    REQUIRE_FALSE(bs[0].has_labels());
    REQUIRE_FALSE(bs[0].has_pretext());
    // all ten indices appear exactly once
    std::vector<int> seen;
    for (const auto& b : bs) seen.insert(seen.end(), b.indices.begin(), b.indices.end());
    std::sort(seen.begin(), seen.end());
    REQUIRE(seen == idx);
}

TEST_CASE("batches draws pretext transforms uniformly") {
    auto d = make_synthetic(4, 1500, 4, Rng(1));
    std::vector<int> idx(static_cast<std::size_t>(d.size()));
    for (int i = 0; i < d.size(); ++i) idx[static_cast<std::size_t>(i)] = i;
    std::vector<int> counts(6, 0);
    int total = 0;
    Rng rng(500);
    for (int epoch = 0; epoch < 10; ++epoch) {
        auto bs = batches(d, idx, 128, {.with_labels = false, .with_pretext = true},
                          rng.fork("epoch", static_cast<std::uint64_t>(epoch)));
        for (const auto& b : bs) {
            REQUIRE(b.has_pretext());
            for (int t : b.pretext_labels) {
                counts[static_cast<std::size_t>(t)]++;
                ++total;
            }
        }
    }
    REQUIRE(total == 60000);
    for (int c : counts) {
        REQUIRE(std::abs(c / static_cast<double>(total) - 1.0 / 6) < 0.01);
    }
}

TEST_CASE("batches with the same seed are identical") {
    auto d = make_synthetic(3, 30, 4, Rng(1));
    std::vector<int> idx;
    for (int i = 0; i < d.size(); i += 2) idx.push_back(i);
    auto a = batches(d, idx, 8, {.with_labels = true, .with_pretext = true}, Rng(42));
    auto b = batches(d, idx, 8, {.with_labels = true, .with_pretext = true}, Rng(42));
    REQUIRE(a.size() == b.size());
    for (std::size_t i = 0; i < a.size(); ++i) {
        REQUIRE(a[i].indices == b[i].indices);
        REQUIRE(a[i].labels == b[i].labels);
        REQUIRE(a[i].pretext_labels == b[i].pretext_labels);
        REQUIRE(a[i].images.data == b[i].images.data);
    }
}

TEST_CASE("batches over an empty index set yields no batches") {
    auto d = make_synthetic(2, 4, 4, Rng(1));
    REQUIRE(batches(d, {}, 4, {}, Rng(1)).empty());
    std::vector<int> idx{0};
    REQUIRE_THROWS_AS(batches(d, idx, 0, {}, Rng(1)), std::invalid_argument);
}

TEST_CASE("labeled batches carry ground-truth labels") {
    auto d = make_synthetic(3, 10, 4, Rng(1));
    std::vector<int> idx{0, 5, 12, 20, 29};
    auto bs = batches(d, idx, 3, {.with_labels = true}, Rng(17));
    for (const auto& b : bs) {
        REQUIRE(b.has_labels());
        for (int k = 0; k < b.size(); ++k) {
            REQUIRE(b.labels[static_cast<std::size_t>(k)] ==
                    d.labels[static_cast<std::size_t>(b.indices[static_cast<std::size_t>(k)])]);
        }
    }
}
