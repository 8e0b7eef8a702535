#include <catch2/catch_amalgamated.hpp>

#include "adroit/pretext.hpp"
#include "adroit/rng.hpp"

using namespace adroit;

namespace {

Tensor random_image(Rng& rng, int c, int h, int w) {
    Tensor t({c, h, w});
    for (auto& v : t.data) v = rng.uniform();
    return t;
}

} // namespace

TEST_CASE("Rot0 is the identity") {
    Rng rng(1);
    auto img = random_image(rng, 3, 5, 5);
    auto out = apply_pretext(img, PretextTransform::Rot0);
    REQUIRE(out.data == img.data);
}

TEST_CASE("Rot90 follows the counter-clockwise convention") {
    // [[a,b],[c,d]] -> [[b,d],[a,c]]
    Tensor img({1, 2, 2}, {1.0, 2.0, 3.0, 4.0}); // a=1 b=2 c=3 d=4
    auto out = apply_pretext(img, PretextTransform::Rot90);
    REQUIRE(out.data == std::vector<double>{2.0, 4.0, 1.0, 3.0});
}

TEST_CASE("flips reverse the expected axis") {
    Tensor img({1, 2, 3}, {1, 2, 3, 4, 5, 6});
    auto h = apply_pretext(img, PretextTransform::HFlip);
    REQUIRE(h.data == std::vector<double>{3, 2, 1, 6, 5, 4});
    auto v = apply_pretext(img, PretextTransform::VFlip);
    REQUIRE(v.data == std::vector<double>{4, 5, 6, 1, 2, 3});
}

TEST_CASE("group laws hold exactly on random images") {
    Rng rng(99);
    for (int trial = 0; trial < 100; ++trial) {
        auto img = random_image(rng, 3, 8, 8);

        auto r = img;
        for (int i = 0; i < 4; ++i) r = apply_pretext(r, PretextTransform::Rot90);
        REQUIRE(r.data == img.data); // Rot90^4 = id

        auto h2 = apply_pretext(apply_pretext(img, PretextTransform::HFlip),
                                PretextTransform::HFlip);
        REQUIRE(h2.data == img.data); // HFlip involution

        auto v2 = apply_pretext(apply_pretext(img, PretextTransform::VFlip),
                                PretextTransform::VFlip);
        REQUIRE(v2.data == img.data); // VFlip involution

        auto hv = apply_pretext(apply_pretext(img, PretextTransform::VFlip),
                                PretextTransform::HFlip);
        REQUIRE(hv.data == apply_pretext(img, PretextTransform::Rot180).data);

        auto cycle = apply_pretext(apply_pretext(img, PretextTransform::Rot270),
                                   PretextTransform::Rot90);
        REQUIRE(cycle.data == img.data); // Rot90 o Rot270 = id
    }
}

TEST_CASE("90-degree rotations require square images") {
    Tensor img({1, 2, 3}, {1, 2, 3, 4, 5, 6});
    REQUIRE_THROWS_AS(apply_pretext(img, PretextTransform::Rot90), std::invalid_argument);
    REQUIRE_THROWS_AS(apply_pretext(img, PretextTransform::Rot270), std::invalid_argument);
    REQUIRE_NOTHROW(apply_pretext(img, PretextTransform::Rot180));
    REQUIRE_NOTHROW(apply_pretext(img, PretextTransform::HFlip));
}
