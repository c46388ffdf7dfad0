#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <numeric>

#include "fgns/errors.hpp"
#include "fgns/neighbors.hpp"
#include "fgns/segmentation.hpp"
#include "test_support.hpp"

using namespace fgns;
using namespace fgns::testing;

namespace {

struct Pool {
    LabeledDataset train;
    ClassFeatureCatalog catalog;
    PrototypeSet protos;
};

// `size` candidates of class c plus a few instances of other classes, random masks for class c.
Pool random_pool(Rng& rng, int c, std::size_t size, Shape shape, std::size_t n_masks) {
    std::vector<Image> images;
    std::vector<int> labels;
    std::size_t id = 0;
    for (std::size_t i = 0; i < size; ++i) {
        images.push_back(random_real_image(rng, id++, shape));
        labels.push_back(c);
        if (rng.bernoulli(0.3)) {
            images.push_back(random_real_image(rng, id++, shape));
            labels.push_back((c + 1) % 3);
        }
    }
    Pool pool{LabeledDataset(std::move(images), std::move(labels), Split::train, "pool"), {}, {}};
    pool.catalog.shape = shape;
    for (std::size_t k = 0; k < n_masks; ++k) {
        FeatureMask fm;
        fm.mask = BinaryMask(shape);
        for (auto& b : fm.mask.bits) b = rng.bernoulli(0.2) ? 1 : 0;
        fm.mask.bits[static_cast<std::size_t>(rng.below(shape.size()))] = 1;
        pool.catalog.classes[c].push_back(fm);
    }
    pool.protos = PrototypeSet::build(pool.train);
    return pool;
}

double oracle_loss(const Image& x, const Image& proto, const std::vector<FeatureMask>& masks, double rho) {
    double total = 0;
    for (const auto& m : masks)
        for (std::size_t p = 0; p < x.pixels.size(); ++p) {
            const double d = m.mask.bits[p] * (x.pixels[p] - proto.pixels[p]);
            total += d * d;
        }
    return rho * total;
}

// Score everything, sort by (score, id), keep n.
std::vector<std::size_t> brute_force(const std::vector<std::pair<double, std::size_t>>& scored_in, std::size_t n) {
    auto scored = scored_in;
    std::sort(scored.begin(), scored.end());
    std::vector<std::size_t> ids;
    for (std::size_t i = 0; i < std::min(n, scored.size()); ++i) ids.push_back(scored[i].second);
    return ids;
}

std::vector<std::size_t> ids_of(const Explanation& ex) {
    std::vector<std::size_t> ids;
    for (const auto& nb : ex.neighbors) ids.push_back(nb.train_id);
    return ids;
}

}  // namespace

TEST_CASE("feature loss arithmetic") {
    const Shape s{3, 3};
    Prototype proto{0, filled(0, 0.25, s), 1};
    FeatureMask one;
    one.mask = BinaryMask(s);
    one.mask.bits[4] = 1;
    std::vector<FeatureMask> masks{one};

    CHECK(feature_loss(proto.image, proto, masks, 1.0) == 0.0);

    Image cand = proto.image;
    cand.pixels[4] = 0.75;
    cand.pixels[0] = 1.0;  // outside the mask
    CHECK(feature_loss(cand, proto, masks, 1.0) == 0.25);
    CHECK(feature_loss(cand, proto, masks, 2.0) == 0.5);

    std::vector<FeatureMask> none;
    CHECK_THROWS_AS(feature_loss(cand, proto, none, 1.0), ArgumentError);
    CHECK_THROWS_AS(feature_loss(cand, proto, masks, 0.0), ArgumentError);
    CHECK_THROWS_AS(feature_loss(Image(0, Shape{2, 2}), proto, masks, 1.0), ArgumentError);
}

TEST_CASE("feature loss matches the masked sum of squares") {
    Rng rng(1);
    for (int t = 0; t < 100; ++t) {
        auto pool = random_pool(rng, 0, 2, Shape{6, 6}, 1 + rng.below(4));
        const auto& masks = pool.catalog.masks_for(0);
        const double rho = rng.uniform(0.1, 3.0);
        auto x = random_real_image(rng, 99, Shape{6, 6});
        CHECK(feature_loss(x, pool.protos.at(0), masks, rho) ==
              doctest::Approx(oracle_loss(x, pool.protos.at(0).image, masks, rho)).epsilon(1e-12));
    }
}

TEST_CASE("rank_fgns equals a brute-force sort") {
    Rng rng(2);
    for (int t = 0; t < 30; ++t) {
        const std::size_t size = 1 + rng.below(40);
        auto pool = random_pool(rng, 1, size, Shape{5, 5}, 3);
        auto q = random_real_image(rng, 500, Shape{5, 5});
        const std::size_t n = 1 + rng.below(5);
        auto ex = rank_fgns(q, 1, pool.train, pool.catalog, pool.protos, 1.0, n);

        std::vector<std::pair<double, std::size_t>> scored;
        for (auto pos : pool.train.positions_of(1))
            scored.emplace_back(oracle_loss(pool.train.image(pos), pool.protos.at(1).image, pool.catalog.masks_for(1), 1.0),
                                pool.train.image(pos).id);
        CHECK(ids_of(ex) == brute_force(scored, n));
        CHECK(ex.neighbors.size() == std::min(n, size));
        CHECK(ex.method == Method::fgns);
        CHECK_FALSE(ex.fallback);
        for (std::size_t i = 0; i < ex.neighbors.size(); ++i) {
            CHECK(ex.neighbors[i].label == 1);
            if (i > 0) CHECK(ex.neighbors[i - 1].score <= ex.neighbors[i].score);
        }
    }
}

TEST_CASE("rank_fgns edge cases") {
    Rng rng(3);
    auto pool = random_pool(rng, 0, 6, Shape{4, 4}, 2);

    SUBCASE("the prototype itself ranks first at zero") {
        std::vector<Image> images = pool.train.images();
        std::vector<int> labels = pool.train.labels();
        Image p = pool.protos.at(0).image;
        p.id = 1000;
        images.push_back(p);
        labels.push_back(0);
        LabeledDataset with(std::move(images), std::move(labels), Split::train, "with-proto");
        auto ex = rank_fgns(p, 0, with, pool.catalog, pool.protos, 1.0, 3);
        CHECK(ex.neighbors.front().train_id == 1000);
        CHECK(ex.neighbors.front().score == 0.0);
    }
    SUBCASE("pool smaller than n is returned without padding") {
        std::vector<Image> images{pool.train.image(pool.train.positions_of(0)[0]), pool.train.image(pool.train.positions_of(0)[1])};
        LabeledDataset small(images, {0, 0}, Split::train, "small");
        CHECK(rank_fgns(images[0], 0, small, pool.catalog, pool.protos, 1.0, 3).neighbors.size() == 2);
    }
    SUBCASE("ties break by ascending id") {
        const auto& base = pool.train.image(pool.train.positions_of(0)[0]);
        std::vector<Image> images;
        for (std::size_t id : {7u, 3u, 5u}) images.emplace_back(id, base.shape, base.pixels);
        LabeledDataset dup(images, {0, 0, 0}, Split::train, "dup");
        auto ex = rank_fgns(base, 0, dup, pool.catalog, pool.protos, 1.0, 3);
        CHECK(ids_of(ex) == std::vector<std::size_t>{3, 5, 7});
    }
    SUBCASE("scaling rho keeps the order") {
        auto q = random_real_image(rng, 0, Shape{4, 4});
        auto a = rank_fgns(q, 0, pool.train, pool.catalog, pool.protos, 1.0, 6);
        auto b = rank_fgns(q, 0, pool.train, pool.catalog, pool.protos, 3.5, 6);
        CHECK(ids_of(a) == ids_of(b));
        for (std::size_t i = 0; i < a.neighbors.size(); ++i)
            CHECK(b.neighbors[i].score == doctest::Approx(3.5 * a.neighbors[i].score).epsilon(1e-12));
    }
    SUBCASE("adding a candidate never worsens the best score") {
        auto q = random_real_image(rng, 0, Shape{4, 4});
        const double best = rank_fgns(q, 0, pool.train, pool.catalog, pool.protos, 1.0, 1).neighbors[0].score;
        for (int k = 0; k < 20; ++k) {
            std::vector<Image> images = pool.train.images();
            std::vector<int> labels = pool.train.labels();
            images.push_back(random_real_image(rng, 5000, Shape{4, 4}));
            labels.push_back(0);
            LabeledDataset more(std::move(images), std::move(labels), Split::train, "more");
            CHECK(rank_fgns(q, 0, more, pool.catalog, pool.protos, 1.0, 1).neighbors[0].score <= best);
        }
    }
    SUBCASE("empty class pool") {
        CHECK_THROWS_AS(rank_fgns(pool.train.image(0), 2, pool.train, pool.catalog, pool.protos, 1.0, 3), ArgumentError);
    }
}

TEST_CASE("rank_knn equals a brute-force scan") {
    Rng rng(4);
    const Shape shape{6, 6};
    for (int t = 0; t < 20; ++t) {
        auto m = random_mlp(static_cast<std::uint64_t>(t), 10, 3, shape);
        auto pool = random_pool(rng, 2, 1 + rng.below(30), shape, 1);
        auto q = random_real_image(rng, 900, shape);
        const std::size_t n = 1 + rng.below(4);
        auto ex = rank_knn(q, 2, m, pool.train, n);

        const auto qv = m.contribution_vector(q, 2).values;
        std::vector<std::pair<double, std::size_t>> scored;
        for (auto pos : pool.train.positions_of(2)) {
            const auto v = m.contribution_vector(pool.train.image(pos), 2).values;
            double s = 0;
            for (Eigen::Index j = 0; j < v.size(); ++j) s += (v(j) - qv(j)) * (v(j) - qv(j));
            scored.emplace_back(std::sqrt(s), pool.train.image(pos).id);
        }
        CHECK(ids_of(ex) == brute_force(scored, n));
        CHECK(ex.method == Method::knn_baseline);
        for (const auto& nb : ex.neighbors) CHECK(nb.label == 2);
    }
}

TEST_CASE("rank_knn exact match and argmin") {
    Rng rng(5);
    auto m = random_mlp(5, 12, 3, Shape{6, 6});
    auto pool = random_pool(rng, 0, 15, Shape{6, 6}, 1);
    const auto& target = pool.train.image(pool.train.positions_of(0)[4]);
    auto ex = rank_knn(target, 0, m, pool.train, 3);
    CHECK(ex.neighbors.front().train_id == target.id);
    CHECK(ex.neighbors.front().score == 0.0);

    auto q = random_real_image(rng, 77, Shape{6, 6});
    auto one = rank_knn(q, 0, m, pool.train, 1);
    auto all = rank_knn(q, 0, m, pool.train, 100);
    REQUIRE(one.neighbors.size() == 1);
    CHECK(one.neighbors[0].train_id == all.neighbors[0].train_id);
    for (const auto& nb : all.neighbors) CHECK(one.neighbors[0].score <= nb.score);

    auto wide = rank_knn(q, 0, m, pool.train, pool.train.size(), true);
    CHECK(wide.neighbors.size() == pool.train.size());
    CHECK_THROWS_AS(rank_knn(q, 2, m, pool.train, 3), ArgumentError);
}

TEST_CASE("explain dispatches, falls back and is pure") {
    auto train_set = banded_dataset(3, 12, 6);
    auto m = random_mlp(2, 16, 3);
    ClassFeatureCatalog catalog;
    catalog.shape = train_set.shape();
    auto seg = grid_segmentation(28, 28, 4);
    for (int c = 0; c < 3; ++c) {
        FeatureMask fm;
        fm.mask = seg.mask_of(c * 7);
        catalog.classes[c] = {fm};
    }
    auto protos = PrototypeSet::build(train_set);
    KnnIndex index(m, train_set);
    NeighborConfig cfg;
    Rng rng(6);

    for (int t = 0; t < 10; ++t) {
        auto q = random_real_image(rng, 100 + static_cast<std::size_t>(t));
        const int predicted = m.predict(q);
        for (Method method : {Method::fgns, Method::knn_baseline}) {
            auto a = explain(q, m, train_set, catalog, protos, method, cfg, &index);
            auto b = explain(q, m, train_set, catalog, protos, method, cfg);
            CHECK(a.to_json() == b.to_json());
            CHECK(a.predicted_class == predicted);
            CHECK(a.method == method);
            CHECK(a.neighbors.size() == 3);
            for (const auto& nb : a.neighbors) CHECK(nb.label == predicted);
        }
    }

    SUBCASE("class without masks uses the baseline") {
        auto q = random_real_image(rng, 1);
        const int c = m.predict(q);
        catalog.classes[c].clear();
        catalog.fallback_classes.insert(c);
        auto ex = explain(q, m, train_set, catalog, protos, Method::fgns, cfg, &index);
        CHECK(ex.fallback);
        CHECK(ex.method == Method::knn_baseline);
        CHECK(ids_of(ex) == ids_of(rank_knn(q, c, index, 3)));
    }
    SUBCASE("prefilter re-ranks the baseline shortlist") {
        auto q = random_real_image(rng, 2);
        auto pre = cfg;
        pre.fgns_prefilter = 5;
        auto ex = explain(q, m, train_set, catalog, protos, Method::fgns, pre, &index);
        auto shortlist = ids_of(rank_knn(q, ex.predicted_class, index, 5));
        for (auto id : ids_of(ex)) CHECK(std::find(shortlist.begin(), shortlist.end(), id) != shortlist.end());
    }
}

TEST_CASE("explanation json round trip") {
    Explanation ex;
    ex.query_id = 12;
    ex.predicted_class = 4;
    ex.true_class = 5;
    ex.method = Method::knn_baseline;
    ex.fallback = true;
    ex.neighbors = {{3, 0.5, 4}, {9, 0.75, 4}};
    auto back = Explanation::from_json(ex.to_json());
    CHECK(back.to_json() == ex.to_json());
    CHECK(back.true_class == 5);
    CHECK(ex.to_json()["method"] == "knn_baseline");

    CHECK(method_from_string("fgns") == Method::fgns);
    CHECK_THROWS_AS(method_from_string("bogus"), ArgumentError);
}
