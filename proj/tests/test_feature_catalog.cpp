#include <doctest.h>

#include <algorithm>
#include <json.hpp>
#include <limits>
#include <set>

#include "fgns/checksum.hpp"
#include "fgns/classifier.hpp"
#include "fgns/errors.hpp"
#include "fgns/feature_catalog.hpp"
#include "test_support.hpp"

using namespace fgns;
using namespace fgns::testing;

namespace {

BinaryMask mask_from(Shape s, std::initializer_list<std::size_t> on) {
    BinaryMask m(s);
    for (auto p : on) m.bits[p] = 1;
    return m;
}

LocalAttribution attr(std::size_t id, std::vector<int> selected) {
    LocalAttribution a;
    a.image_id = id;
    a.selected = std::move(selected);
    return a;
}

FeatureMask scored(BinaryMask m, double score) {
    FeatureMask f;
    f.mask = std::move(m);
    f.sage_score = score;
    f.frequency = 1;
    return f;
}

// Straight transcription of the clustering rules: seeded first centre, farthest
// point for the rest, Lloyd iterations, lowest index wins every tie.
std::vector<int> reference_clusters(const std::vector<std::vector<double>>& pts, std::size_t k, std::uint64_t seed) {
    auto d2 = [](const std::vector<double>& a, const std::vector<double>& b) {
        double s = 0;
        for (std::size_t i = 0; i < a.size(); ++i) s += (a[i] - b[i]) * (a[i] - b[i]);
        return s;
    };
    k = std::min(k, pts.size());
    Rng rng(seed);
    std::vector<std::size_t> centres{static_cast<std::size_t>(rng.below(pts.size()))};
    while (centres.size() < k) {
        std::size_t far = 0;
        double far_d = -1;
        for (std::size_t i = 0; i < pts.size(); ++i) {
            double m = std::numeric_limits<double>::infinity();
            for (auto c : centres) m = std::min(m, d2(pts[i], pts[c]));
            if (m > far_d) {
                far_d = m;
                far = i;
            }
        }
        centres.push_back(far);
    }
    std::vector<std::vector<double>> cent;
    for (auto c : centres) cent.push_back(pts[c]);
    auto assign = [&] {
        std::vector<int> a(pts.size());
        for (std::size_t i = 0; i < pts.size(); ++i) {
            std::size_t best = 0;
            for (std::size_t j = 1; j < k; ++j)
                if (d2(pts[i], cent[j]) < d2(pts[i], cent[best])) best = j;
            a[i] = static_cast<int>(best);
        }
        return a;
    };
    auto a = assign();
    for (int it = 0; it < 100; ++it) {
        for (std::size_t j = 0; j < k; ++j) {
            std::vector<double> sum(pts[0].size(), 0.0);
            std::size_t n = 0;
            for (std::size_t i = 0; i < pts.size(); ++i)
                if (a[i] == static_cast<int>(j)) {
                    for (std::size_t p = 0; p < sum.size(); ++p) sum[p] += pts[i][p];
                    ++n;
                }
            if (n > 0)
                for (auto& v : sum) v /= static_cast<double>(n);
            if (n > 0) cent[j] = sum;
        }
        auto next = assign();
        if (next == a) break;
        a = next;
    }
    return a;
}

// Toy set: class 0 has a bright top-left 4x4 cell, class 1 a bright bottom-right cell.
LabeledDataset corner_dataset(std::size_t per_class, std::uint64_t seed) {
    Rng rng(seed);
    std::vector<Image> images;
    std::vector<int> labels;
    std::size_t id = 0;
    for (std::size_t i = 0; i < per_class; ++i)
        for (int c = 0; c < 2; ++c) {
            Image img(id++, Shape{});
            for (auto& p : img.pixels) p = 0.1 * rng.uniform();
            const int r0 = c == 0 ? 0 : 24;
            for (int r = r0; r < r0 + 4; ++r)
                for (int col = r0; col < r0 + 4; ++col) img.at(r, col) = 0.9 + 0.1 * rng.uniform();
            images.push_back(std::move(img));
            labels.push_back(c);
        }
    return LabeledDataset(std::move(images), std::move(labels), Split::train, "corners");
}

CatalogConfig small_config() {
    CatalogConfig cfg;
    cfg.n_samples = 40;
    cfg.lime.n_perturb = 200;
    return cfg;
}

}  // namespace

TEST_CASE("iou") {
    const Shape s{2, 4};
    auto a = mask_from(s, {0, 1, 2, 3});
    CHECK(iou(a, a) == 1.0);
    CHECK(iou(a, mask_from(s, {4, 5})) == 0.0);
    CHECK(iou(a, mask_from(s, {2, 3, 4, 5})) == doctest::Approx(2.0 / 6.0).epsilon(1e-15));
    CHECK(iou(BinaryMask(s), BinaryMask(s)) == 0.0);
    CHECK_THROWS_AS(iou(a, BinaryMask(Shape{4, 2})), ArgumentError);
}

TEST_CASE("run-length encoding") {
    const Shape s{3, 3};
    auto m = mask_from(s, {0, 1, 5});
    CHECK(rle_encode(m) == std::vector<std::size_t>{0, 2, 3, 1, 3});
    CHECK(rle_encode(mask_from(s, {4})) == std::vector<std::size_t>{4, 1, 4});
    CHECK(rle_encode(BinaryMask(s)) == std::vector<std::size_t>{9});

    Rng rng(3);
    for (int t = 0; t < 100; ++t) {
        BinaryMask r(Shape{28, 28});
        for (auto& b : r.bits) b = rng.bernoulli(0.3) ? 1 : 0;
        auto runs = rle_encode(r);
        CHECK(rle_decode(runs, r.shape) == r);
    }
    const std::vector<std::size_t> bad{3, 3};
    CHECK_THROWS_AS(rle_decode(bad, s), FormatError);
}

TEST_CASE("aggregate") {
    auto seg = grid_segmentation(28, 28, 4);

    SUBCASE("unanimous vote for one cell") {
        std::vector<LocalAttribution> attrs;
        for (std::size_t i = 0; i < 1000; ++i) attrs.push_back(attr(i, {12}));
        auto out = aggregate(attrs, seg, 0.5, 0.05);
        REQUIRE(out.size() == 1);
        CHECK(out[0].mask == seg.mask_of(12));
        CHECK(out[0].frequency == 1000);
        CHECK(out[0].provenance == std::vector<int>{12});
    }
    SUBCASE("rare cells fall below the frequency floor") {
        std::vector<LocalAttribution> attrs;
        for (std::size_t i = 0; i < 1000; ++i) attrs.push_back(attr(i, i < 30 ? std::vector<int>{7, 1} : std::vector<int>{1}));
        auto out = aggregate(attrs, seg, 0.5, 0.05);
        REQUIRE(out.size() == 1);
        CHECK(out[0].mask == seg.mask_of(1));
    }
    SUBCASE("distinct grid cells never merge") {
        std::vector<LocalAttribution> attrs;
        for (std::size_t i = 0; i < 100; ++i) attrs.push_back(attr(i, {static_cast<int>(i % 5), 40}));
        auto out = aggregate(attrs, seg, 0.5, 0.05);
        CHECK(out.size() == 6);
        for (std::size_t i = 0; i < out.size(); ++i) {
            CHECK_FALSE(out[i].mask.empty());
            CHECK(out[i].frequency <= 100);
            for (std::size_t j = i + 1; j < out.size(); ++j) CHECK(iou(out[i].mask, out[j].mask) == 0.0);
        }
    }
    SUBCASE("errors") {
        std::vector<LocalAttribution> none;
        CHECK_THROWS_AS(aggregate(none, seg, 0.5, 0.05), ArgumentError);
        std::vector<LocalAttribution> one{attr(0, {1})};
        CHECK_THROWS_AS(aggregate(one, seg, 0.0, 0.05), ArgumentError);
        CHECK_THROWS_AS(aggregate(one, seg, 0.5, 1.5), ArgumentError);
    }
}

TEST_CASE("sage score") {
    auto seg = grid_segmentation(28, 28, 4);
    Rng rng(8);
    std::vector<Image> samples;
    for (std::size_t i = 0; i < 120; ++i) samples.push_back(random_real_image(rng, i));

    SUBCASE("a region the model ignores scores zero") {
        auto m = random_mlp(3, 16, 3);
        for (auto p : seg.pixels_of(0)) m.mutable_params().w1.col(static_cast<Eigen::Index>(p)).setZero();
        auto est = sage_score(m, seg.mask_of(0), samples, 1, EarlyStopPolicy{false});
        CHECK(std::abs(est.score) <= 1e-9);
        CHECK(est.n_used == samples.size());
    }
    SUBCASE("a constant model scores exactly zero") {
        ConstantModel m(Shape{}, {0.2, 0.8});
        auto est = sage_score(m, seg.mask_of(20), samples, 1, EarlyStopPolicy{});
        CHECK(est.score == 0.0);
    }
    SUBCASE("equals the mean drop computed directly") {
        auto m = random_mlp(4, 16, 3);
        auto mask = seg.mask_of(24);
        double want = 0;
        for (const auto& x : samples) want += m.predict_proba(x)[2] - m.predict_proba(neutralize(x, mask, 0.0))[2];
        want /= static_cast<double>(samples.size());
        auto est = sage_score(m, mask, samples, 2, EarlyStopPolicy{false});
        CHECK(est.score == doctest::Approx(want).epsilon(1e-12));
        CHECK_FALSE(est.stopped_early);
    }
    SUBCASE("early stop respects the minimum sample count") {
        ConstantModel m(Shape{}, {0.2, 0.8});
        auto est = sage_score(m, seg.mask_of(20), samples, 1, EarlyStopPolicy{true, 0.01, 50});
        CHECK(est.n_used == 50);
        CHECK(est.stopped_early);
    }
    SUBCASE("errors") {
        auto m = random_mlp(4, 16, 3);
        std::vector<Image> none;
        CHECK_THROWS_AS(sage_score(m, seg.mask_of(0), none, 0, EarlyStopPolicy{}), ArgumentError);
        CHECK_THROWS_AS(sage_score(m, seg.mask_of(0), samples, 3, EarlyStopPolicy{}), ArgumentError);
    }
}

TEST_CASE("pinned sage score") {
    auto ds = banded_dataset(4, 100, 21);
    TrainingConfig tc;
    tc.hidden = 16;
    tc.epochs = 2;
    auto m = train(ds, tc, 5);
    auto seg = grid_segmentation(28, 28, 4);
    BinaryMask mask = seg.mask_of(8);
    for (auto p : seg.pixels_of(9)) mask.bits[p] = 1;
    auto samples = sample_class(ds, 1, 100, 3);

    auto full = sage_score(m, mask, samples, 1, EarlyStopPolicy{false});
    auto early = sage_score(m, mask, samples, 1, EarlyStopPolicy{true, 0.01, 50});

    const auto golden = nlohmann::json::parse(read_text(golden_path("pinned_sage.json")));
    CHECK(full.score == doctest::Approx(golden["score"].get<double>()).epsilon(1e-12));
    CHECK(full.n_used == golden["n"].get<std::size_t>());
    CHECK(std::abs(early.score - full.score) <= 2.0 * early.standard_error);
}

TEST_CASE("kmeans") {
    Rng rng(5);
    for (int trial = 0; trial < 20; ++trial) {
        std::vector<Eigen::VectorXd> pts;
        for (int i = 0; i < 30; ++i) {
            Eigen::VectorXd v(3);
            for (int d = 0; d < 3; ++d) v(d) = rng.uniform(-1, 1);
            pts.push_back(v);
        }
        auto res = kmeans(pts, 4, static_cast<std::uint64_t>(trial));
        CHECK(res.centroids.size() == 4);
        CHECK(res.iterations <= 100);
        for (std::size_t i = 1; i < res.wcss_history.size(); ++i)
            CHECK(res.wcss_history[i] <= res.wcss_history[i - 1] + 1e-12);
        REQUIRE(res.converged);
        for (std::size_t i = 0; i < pts.size(); ++i) {
            int best = 0;
            for (int j = 1; j < 4; ++j)
                if ((pts[i] - res.centroids[static_cast<std::size_t>(j)]).squaredNorm() <
                    (pts[i] - res.centroids[static_cast<std::size_t>(best)]).squaredNorm())
                    best = j;
            CHECK(res.assignment[i] == best);
        }
    }
    std::vector<Eigen::VectorXd> two{Eigen::VectorXd::Zero(2), Eigen::VectorXd::Ones(2)};
    CHECK(kmeans(two, 5, 1).centroids.size() == 2);
}

TEST_CASE("diversify") {
    const Shape s{};
    auto seg = grid_segmentation(28, 28, 4);

    SUBCASE("seven disjoint masks all survive") {
        std::vector<FeatureMask> cands;
        for (int i = 0; i < 7; ++i) cands.push_back(scored(seg.mask_of(i * 5), 0.1 + 0.01 * i));
        auto out = diversify(cands, 7, 0.8, 3);
        REQUIRE(out.size() == 7);
        for (std::size_t i = 1; i < out.size(); ++i) CHECK(out[i - 1].sage_score >= out[i].sage_score);
    }
    SUBCASE("identical masks keep only the better one") {
        std::vector<FeatureMask> cands{scored(seg.mask_of(3), 0.2), scored(seg.mask_of(3), 0.3)};
        auto out = diversify(cands, 7, 0.8, 3);
        REQUIRE(out.size() == 1);
        CHECK(out[0].sage_score == 0.3);
    }
    SUBCASE("empty input") {
        std::vector<FeatureMask> none;
        CHECK(diversify(none, 7, 0.8, 1).empty());
    }
    SUBCASE("20 random candidates match the reference run") {
        Rng rng(77);
        for (int trial = 0; trial < 25; ++trial) {
            std::vector<FeatureMask> cands;
            std::vector<std::vector<double>> pts;
            for (int i = 0; i < 20; ++i) {
                BinaryMask m(s);
                const int a = static_cast<int>(rng.below(49));
                const int b = static_cast<int>(rng.below(49));
                for (auto p : seg.pixels_of(a)) m.bits[p] = 1;
                if (rng.bernoulli(0.5))
                    for (auto p : seg.pixels_of(b)) m.bits[p] = 1;
                pts.emplace_back(m.bits.begin(), m.bits.end());
                cands.push_back(scored(m, rng.uniform()));
            }
            const std::uint64_t seed = 1000 + static_cast<std::uint64_t>(trial);
            auto clusters = reference_clusters(pts, 7, seed);

            std::vector<int> best(7, -1);
            for (int i = 0; i < 20; ++i) {
                int& b = best[static_cast<std::size_t>(clusters[static_cast<std::size_t>(i)])];
                if (b < 0 || cands[static_cast<std::size_t>(i)].sage_score > cands[static_cast<std::size_t>(b)].sage_score) b = i;
            }
            std::vector<int> kept;
            for (int b : best)
                if (b >= 0) kept.push_back(b);
            std::sort(kept.begin(), kept.end(), [&](int x, int y) {
                return cands[static_cast<std::size_t>(x)].sage_score > cands[static_cast<std::size_t>(y)].sage_score;
            });
            std::vector<BinaryMask> want;
            for (int i : kept) {
                bool dup = false;
                for (const auto& w : want) dup = dup || iou(w, cands[static_cast<std::size_t>(i)].mask) >= 0.8;
                if (!dup) want.push_back(cands[static_cast<std::size_t>(i)].mask);
            }

            auto out = diversify(cands, 7, 0.8, seed);
            REQUIRE(out.size() == want.size());
            for (std::size_t i = 0; i < out.size(); ++i) CHECK(out[i].mask == want[i]);
            for (std::size_t i = 0; i < out.size(); ++i)
                for (std::size_t j = i + 1; j < out.size(); ++j) CHECK(iou(out[i].mask, out[j].mask) < 0.8);
        }
    }
}

TEST_CASE("build_catalog on a corner toy set") {
    auto ds = corner_dataset(60, 4);
    TrainingConfig tc;
    tc.hidden = 16;
    tc.epochs = 5;
    auto m = train(ds, tc, 3);
    REQUIRE(m.accuracy(ds) == 1.0);

    std::vector<ClassBuildLog> log;
    auto cat = build_catalog(m, ds, small_config(), 9, &log);
    REQUIRE(log.size() == 2);

    const auto& masks0 = cat.masks_for(0);
    REQUIRE_FALSE(masks0.empty());
    auto seg = grid_segmentation(28, 28, 4);
    CHECK(masks0.front().mask == seg.mask_of(0));

    for (const auto& [c, masks] : cat.classes) {
        CHECK(masks.size() <= 7);
        for (std::size_t i = 0; i < masks.size(); ++i) {
            CHECK_FALSE(masks[i].mask.empty());
            CHECK(masks[i].frequency <= 40);
            CHECK(masks[i].sage_score >= 0.01);
            if (i > 0) CHECK(masks[i - 1].sage_score >= masks[i].sage_score);
            for (std::size_t j = i + 1; j < masks.size(); ++j) CHECK(iou(masks[i].mask, masks[j].mask) < 0.8);
        }
    }

    SUBCASE("rebuild is byte-identical, worker count included") {
        auto cfg = small_config();
        cfg.workers = 3;
        CHECK(build_catalog(m, ds, cfg, 9).dump() == cat.dump());
    }
    SUBCASE("json round trip") {
        auto dir = scratch_dir("catalog-io");
        cat.save(dir / "c.json");
        auto back = ClassFeatureCatalog::load(dir / "c.json");
        CHECK(back.dump() == cat.dump());
        auto j = nlohmann::json::parse(read_text(dir / "c.json"));
        CHECK(j.contains("mask_rle") == false);
        CHECK(j["classes"]["0"][0].contains("mask_rle"));
        CHECK(j["hyperparameters"]["k_masks"] == 7);
    }
    SUBCASE("raising the threshold never adds a mask") {
        std::size_t prev_retained = std::numeric_limits<std::size_t>::max();
        for (double tau : {0.0, 0.01, 0.05, 0.2, 0.6, 2.0}) {
            auto cfg = small_config();
            cfg.tau_g = tau;
            std::vector<ClassBuildLog> lg;
            auto c = build_catalog(m, ds, cfg, 9, &lg);
            std::size_t retained = 0;
            for (const auto& e : lg) retained += e.n_retained;
            CHECK(retained <= prev_retained);
            prev_retained = retained;
            for (const auto& [cls, masks] : c.classes)
                for (const auto& fm : masks) CHECK(fm.sage_score >= tau);
            if (tau > 1.0) {
                CHECK(c.fallback_classes == std::set<int>{0, 1});
                CHECK(c.masks_for(0).empty());
            }
        }
    }
}

TEST_CASE("build_catalog attaches the class to component errors") {
    auto ds = corner_dataset(5, 1);
    auto m = random_mlp(1, 4, 2);
    auto cfg = small_config();
    cfg.lime.n_perturb = 0;
    try {
        build_catalog(m, ds, cfg, 1);
        FAIL("expected an error");
    } catch (const Error& e) {
        CHECK(std::string(e.what()).find("class 0") != std::string::npos);
    }
}
