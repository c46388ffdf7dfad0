#include <doctest.h>

#include <algorithm>
#include <numeric>
#include <set>

#include "fgns/attribution.hpp"
#include "fgns/errors.hpp"
#include "fgns/segmentation.hpp"
#include "test_support.hpp"

using namespace fgns;
using namespace fgns::testing;

namespace {

// Weight `w[s] / |s|` on every pixel of superpixel s, so P(class 1) = b + sum_s w[s] * mean(s).
LinearProbabilityModel planted(const Segmentation& seg, const std::vector<double>& w, double bias) {
    std::vector<double> pixel_weights(seg.shape.size(), 0.0);
    for (int s = 0; s < seg.superpixel_count(); ++s) {
        auto px = seg.pixels_of(s);
        for (auto p : px) pixel_weights[p] = w[static_cast<std::size_t>(s)] / static_cast<double>(px.size());
    }
    return LinearProbabilityModel(seg.shape, std::move(pixel_weights), bias);
}

}  // namespace

TEST_CASE("grid segmentation geometry") {
    SUBCASE("cell 4 on 28x28") {
        auto seg = grid_segmentation(28, 28, 4);
        CHECK(seg.superpixel_count() == 49);
        for (int s = 0; s < 49; ++s) CHECK(seg.pixels_of(s).size() == 16);
    }
    SUBCASE("cell 28 on 28x28") {
        auto seg = grid_segmentation(28, 28, 28);
        CHECK(seg.superpixel_count() == 1);
        CHECK(seg.pixels_of(0).size() == 784);
    }
    SUBCASE("cell 5 on 28x28 truncates the edge cells") {
        auto seg = grid_segmentation(28, 28, 5);
        CHECK(seg.superpixel_count() == 36);
        CHECK(seg.pixels_of(0).size() == 25);
        CHECK(seg.pixels_of(5).size() == 15);
        CHECK(seg.pixels_of(35).size() == 9);
    }
    SUBCASE("every pixel belongs to exactly one non-empty superpixel") {
        for (int cell : {1, 3, 4, 5, 7, 9, 28}) {
            auto seg = grid_segmentation(28, 28, cell);
            std::vector<int> seen(784, 0);
            for (int s = 0; s < seg.superpixel_count(); ++s) {
                auto px = seg.pixels_of(s);
                CHECK_FALSE(px.empty());
                for (auto p : px) ++seen[p];
            }
            CHECK(std::all_of(seen.begin(), seen.end(), [](int n) { return n == 1; }));
            for (int a : seg.assignment) {
                CHECK(a >= 0);
                CHECK(a < seg.superpixel_count());
            }
        }
    }
    SUBCASE("image independent") {
        CHECK(grid_segmentation(28, 28, 4).assignment == grid_segmentation(28, 28, 4).assignment);
    }
    SUBCASE("invalid cells") {
        CHECK_THROWS_AS(grid_segmentation(28, 28, 0), ArgumentError);
        CHECK_THROWS_AS(grid_segmentation(28, 28, 29), ArgumentError);
        CHECK_THROWS_AS(grid_segmentation(10, 30, 12), ArgumentError);
    }
}

TEST_CASE("perturbation") {
    auto seg = grid_segmentation(28, 28, 4);
    Rng rng(1);
    auto img = random_real_image(rng, 5);

    CHECK(perturb(img, seg, std::vector<bool>(49, true), 0.0).pixels == img.pixels);

    std::vector<bool> keep(49, true);
    keep[3] = false;
    auto out = perturb(img, seg, keep, 0.25);
    auto off = seg.pixels_of(3);
    std::set<std::size_t> off_set(off.begin(), off.end());
    for (std::size_t p = 0; p < 784; ++p) CHECK(out.pixels[p] == (off_set.contains(p) ? 0.25 : img.pixels[p]));
    CHECK(out.id == img.id);

    CHECK(neutralize(img, seg.mask_of(3), 0.25).pixels == out.pixels);
    CHECK_THROWS_AS(perturb(img, seg, std::vector<bool>(48, true), 0.0), ArgumentError);
}

TEST_CASE("top_k_positive") {
    CHECK(top_k_positive({0.1, -2.0, 0.5, 0.5, 0.0, 0.3}, 3) == std::vector<int>{2, 3, 5});
    CHECK(top_k_positive({-1.0, 0.0}, 5).empty());
    CHECK(top_k_positive({0.2, 0.1}, 5) == std::vector<int>{0, 1});
}

TEST_CASE("constant model gives near-zero coefficients") {
    auto seg = grid_segmentation(28, 28, 4);
    ConstantModel m(seg.shape, {0.3, 0.7});
    Rng rng(2);
    auto a = lime_attribute(m, random_real_image(rng, 0), seg, 1, LimeConfig{}, 5);
    REQUIRE(a.coefficients.size() == 49);
    for (double c : a.coefficients) CHECK(std::abs(c) <= 1e-9);
}

TEST_CASE("probability tied to superpixel 3 puts superpixel 3 on top") {
    auto seg = grid_segmentation(28, 28, 4);
    std::vector<double> w(49, 0.0);
    w[3] = 1.0;
    auto m = planted(seg, w, 0.0);
    Rng rng(3);
    for (int trial = 0; trial < 10; ++trial) {
        Image img(static_cast<std::size_t>(trial), seg.shape);
        for (auto& p : img.pixels) p = 0.2 + 0.8 * rng.uniform();
        auto a = lime_attribute(m, img, seg, 1, LimeConfig{}, static_cast<std::uint64_t>(trial));
        auto best = std::max_element(a.coefficients.begin(), a.coefficients.end()) - a.coefficients.begin();
        CHECK(best == 3);
        REQUIRE_FALSE(a.selected.empty());
        CHECK(a.selected.front() == 3);
    }
}

TEST_CASE("planted linear weights are recovered in order") {
    auto seg = grid_segmentation(28, 28, 7);
    const int S = seg.superpixel_count();
    Rng rng(44);
    int recovered = 0;
    for (int trial = 0; trial < 20; ++trial) {
        std::vector<double> w(static_cast<std::size_t>(S));
        for (auto& v : w) v = rng.uniform(-0.1, 0.1);
        Image img(0, seg.shape);
        for (auto& p : img.pixels) p = 1.0;
        auto a = lime_attribute(planted(seg, w, 0.5), img, seg, 1, LimeConfig{}, static_cast<std::uint64_t>(trial));
        std::vector<int> want(static_cast<std::size_t>(S)), got(static_cast<std::size_t>(S));
        std::iota(want.begin(), want.end(), 0);
        std::iota(got.begin(), got.end(), 0);
        std::sort(want.begin(), want.end(), [&](int x, int y) { return w[x] > w[y]; });
        std::sort(got.begin(), got.end(), [&](int x, int y) { return a.coefficients[x] > a.coefficients[y]; });
        recovered += want == got;
    }
    CHECK(recovered >= 19);
}

TEST_CASE("selected ids are the distinct k largest positives") {
    auto seg = grid_segmentation(28, 28, 4);
    auto m = random_mlp(5, 16, 3);
    Rng rng(6);
    auto a = lime_attribute(m, random_real_image(rng, 2), seg, 1, LimeConfig{}, 9);
    CHECK(a.selected.size() <= 5);
    CHECK(std::set<int>(a.selected.begin(), a.selected.end()).size() == a.selected.size());
    CHECK(a.selected == top_k_positive(a.coefficients, 5));
    for (int s : a.selected) CHECK(a.coefficients[static_cast<std::size_t>(s)] > 0.0);

    auto j = to_json(a);
    CHECK(j["image_id"] == 2);
    CHECK(j["class"] == 1);
    CHECK(j["coefficients"].size() == 49);
}

TEST_CASE("same seed gives identical coefficients") {
    auto seg = grid_segmentation(28, 28, 4);
    auto m = random_mlp(3, 16, 3);
    Rng rng(7);
    auto img = random_real_image(rng, 0);
    auto a = lime_attribute(m, img, seg, 0, LimeConfig{}, 123);
    auto b = lime_attribute(m, img, seg, 0, LimeConfig{}, 123);
    auto c = lime_attribute(m, img, seg, 0, LimeConfig{}, 124);
    CHECK(a.coefficients == b.coefficients);
    CHECK(a.coefficients != c.coefficients);
}

TEST_CASE("degenerate inputs") {
    auto seg = grid_segmentation(28, 28, 4);
    ConstantModel m(seg.shape, {0.5, 0.5});
    Image img(0, seg.shape);

    LimeConfig cfg;
    cfg.n_perturb = 0;
    CHECK_THROWS_AS(lime_attribute(m, img, seg, 0, cfg, 1), DegenerateInputError);

    Segmentation empty;
    empty.shape = seg.shape;
    CHECK_THROWS_AS(lime_attribute(m, img, empty, 0, LimeConfig{}, 1), DegenerateInputError);

    cfg = LimeConfig{};
    cfg.keep_probability = 1.0;
    CHECK_THROWS_AS(lime_attribute(m, img, seg, 0, cfg, 1), DegenerateInputError);

    CHECK_THROWS_AS(lime_attribute(m, img, seg, 2, LimeConfig{}, 1), ArgumentError);
}
