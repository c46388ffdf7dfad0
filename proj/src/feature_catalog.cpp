#include "fgns/feature_catalog.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <string>

#include "fgns/errors.hpp"
#include "fgns/file_util.hpp"
#include "fgns/parallel.hpp"
#include "fgns/random.hpp"

namespace fgns {

namespace {

constexpr std::uint64_t kSampleStream = 1;
constexpr std::uint64_t kLimeStream = 2;
constexpr std::uint64_t kClusterStream = 3;
constexpr std::size_t kSageChunk = 64;

const std::vector<FeatureMask> kNoMasks;

double squared_distance(const Eigen::VectorXd& a, const Eigen::VectorXd& b) { return (a - b).squaredNorm(); }

std::vector<int> assign_nearest(std::span<const Eigen::VectorXd> points, const std::vector<Eigen::VectorXd>& centroids,
                                double& wcss) {
    std::vector<int> out(points.size());
    wcss = 0.0;
    for (std::size_t i = 0; i < points.size(); ++i) {
        int best = 0;
        double best_d = squared_distance(points[i], centroids[0]);
        for (std::size_t j = 1; j < centroids.size(); ++j) {
            const double d = squared_distance(points[i], centroids[j]);
            if (d < best_d) {
                best_d = d;
                best = static_cast<int>(j);
            }
        }
        out[i] = best;
        wcss += best_d;
    }
    return out;
}

}  // namespace

const std::vector<FeatureMask>& ClassFeatureCatalog::masks_for(int c) const {
    auto it = classes.find(c);
    return it == classes.end() ? kNoMasks : it->second;
}

double iou(const BinaryMask& a, const BinaryMask& b) {
    require_same_shape(a.shape, b.shape, "iou");
    if (a.bits.size() != b.bits.size()) throw ArgumentError("iou: mask sizes differ");
    std::size_t inter = 0;
    std::size_t uni = 0;
    for (std::size_t p = 0; p < a.bits.size(); ++p) {
        const bool x = a.bits[p] != 0;
        const bool y = b.bits[p] != 0;
        inter += (x && y) ? 1 : 0;
        uni += (x || y) ? 1 : 0;
    }
    return uni == 0 ? 0.0 : static_cast<double>(inter) / static_cast<double>(uni);
}

std::vector<std::size_t> rle_encode(const BinaryMask& mask) {
    std::vector<std::size_t> runs;
    std::uint8_t current = 0;
    std::size_t length = 0;
    for (std::uint8_t b : mask.bits) {
        const std::uint8_t bit = b != 0 ? 1 : 0;
        if (bit != current) {
            runs.push_back(length);
            current = bit;
            length = 0;
        }
        ++length;
    }
    runs.push_back(length);
    return runs;
}

BinaryMask rle_decode(std::span<const std::size_t> runs, Shape shape) {
    BinaryMask out(shape);
    std::size_t pos = 0;
    std::uint8_t bit = 0;
    for (std::size_t run : runs) {
        if (pos + run > out.bits.size()) throw FormatError("rle_decode: runs exceed mask size");
        std::fill_n(out.bits.begin() + static_cast<std::ptrdiff_t>(pos), run, bit);
        pos += run;
        bit ^= 1;
    }
    if (pos != out.bits.size()) throw FormatError("rle_decode: runs do not cover the mask");
    return out;
}

std::vector<FeatureMask> aggregate(std::span<const LocalAttribution> attrs, const Segmentation& seg, double iou_group,
                                   double min_freq) {
    if (attrs.empty()) throw ArgumentError("aggregate: no attributions");
    if (!(iou_group > 0.0 && iou_group <= 1.0)) throw ArgumentError("aggregate: iou_group must be in (0, 1]");
    if (!(min_freq >= 0.0 && min_freq <= 1.0)) throw ArgumentError("aggregate: min_freq must be in [0, 1]");

    const int cells = seg.superpixel_count();
    std::vector<BinaryMask> cell_masks;
    cell_masks.reserve(static_cast<std::size_t>(cells));
    for (int s = 0; s < cells; ++s) cell_masks.push_back(seg.mask_of(s));

    struct Group {
        int seed_cell;
        std::vector<std::size_t> pixel_votes;
        std::size_t votes = 0;
        std::set<std::size_t> images;
        std::set<int> cells;
    };
    std::vector<Group> groups;

    for (const auto& a : attrs) {
        for (int s : a.selected) {
            if (s < 0 || s >= cells) throw ArgumentError("aggregate: selected superpixel out of range");
            Group* target = nullptr;
            for (auto& g : groups) {
                if (iou(cell_masks[static_cast<std::size_t>(s)], cell_masks[static_cast<std::size_t>(g.seed_cell)]) >= iou_group) {
                    target = &g;
                    break;
                }
            }
            if (target == nullptr) {
                groups.push_back(Group{s, std::vector<std::size_t>(seg.shape.size(), 0), 0, {}, {}});
                target = &groups.back();
            }
            const auto& m = cell_masks[static_cast<std::size_t>(s)];
            for (std::size_t p = 0; p < m.bits.size(); ++p) target->pixel_votes[p] += m.bits[p];
            target->votes += 1;
            target->images.insert(a.image_id);
            target->cells.insert(s);
        }
    }

    const double floor = min_freq * static_cast<double>(attrs.size());
    std::vector<FeatureMask> out;
    for (const auto& g : groups) {
        if (static_cast<double>(g.images.size()) < floor) continue;
        FeatureMask fm;
        fm.mask = BinaryMask(seg.shape);
        for (std::size_t p = 0; p < fm.mask.bits.size(); ++p) fm.mask.bits[p] = 2 * g.pixel_votes[p] > g.votes ? 1 : 0;
        if (fm.mask.empty()) fm.mask = cell_masks[static_cast<std::size_t>(g.seed_cell)];
        fm.frequency = g.images.size();
        fm.provenance.assign(g.cells.begin(), g.cells.end());
        out.push_back(std::move(fm));
    }
    return out;
}

SageEstimate sage_score(const ProbabilisticModel& model, const BinaryMask& mask, std::span<const Image> samples, int c,
                        const EarlyStopPolicy& policy, double baseline) {
    if (samples.empty()) throw ArgumentError("sage_score: no samples");
    std::vector<double> base(samples.size());
    for (std::size_t start = 0; start < samples.size(); start += kSageChunk) {
        const std::size_t end = std::min(samples.size(), start + kSageChunk);
        const Batch probs = model.predict_proba_batch(to_batch(samples.subspan(start, end - start)));
        for (std::size_t i = start; i < end; ++i) base[i] = probs(static_cast<Eigen::Index>(i - start), c);
    }
    return sage_score(model, mask, samples, c, policy, baseline, base);
}

SageEstimate sage_score(const ProbabilisticModel& model, const BinaryMask& mask, std::span<const Image> samples, int c,
                        const EarlyStopPolicy& policy, double baseline, std::span<const double> base_probs) {
    if (samples.empty()) throw ArgumentError("sage_score: no samples");
    if (base_probs.size() != samples.size()) throw ArgumentError("sage_score: one base probability per sample required");
    if (c < 0 || c >= model.class_count()) throw ArgumentError("sage_score: class " + std::to_string(c) + " out of range");

    // Welford running mean / variance over per-sample drops.
    double mean = 0.0;
    double m2 = 0.0;
    std::size_t n = 0;
    SageEstimate est;
    for (std::size_t start = 0; start < samples.size(); start += kSageChunk) {
        const std::size_t end = std::min(samples.size(), start + kSageChunk);
        std::vector<Image> masked;
        masked.reserve(end - start);
        for (std::size_t i = start; i < end; ++i) masked.push_back(neutralize(samples[i], mask, baseline));
        const Batch probs = model.predict_proba_batch(to_batch(masked));
        for (std::size_t i = start; i < end; ++i) {
            const double drop = base_probs[i] - probs(static_cast<Eigen::Index>(i - start), c);
            ++n;
            const double delta = drop - mean;
            mean += delta / static_cast<double>(n);
            m2 += delta * (drop - mean);
            if (policy.enabled && n >= std::max<std::size_t>(policy.min_n, 2)) {
                const double se = std::sqrt(m2 / static_cast<double>(n - 1) / static_cast<double>(n));
                if (se < policy.se_threshold) {
                    est.stopped_early = n < samples.size();
                    est.score = mean;
                    est.standard_error = se;
                    est.n_used = n;
                    return est;
                }
            }
        }
    }
    est.score = mean;
    est.n_used = n;
    est.standard_error = n > 1 ? std::sqrt(m2 / static_cast<double>(n - 1) / static_cast<double>(n)) : 0.0;
    return est;
}

KMeansResult kmeans(std::span<const Eigen::VectorXd> points, int k, std::uint64_t seed, int max_iter) {
    KMeansResult res;
    if (points.empty()) return res;
    if (k < 1) throw ArgumentError("kmeans: k must be at least 1");
    const std::size_t kk = std::min(points.size(), static_cast<std::size_t>(k));

    Rng rng(seed);
    std::vector<std::size_t> chosen{static_cast<std::size_t>(rng.below(points.size()))};
    std::vector<double> nearest(points.size(), std::numeric_limits<double>::infinity());
    while (chosen.size() < kk) {
        std::size_t far = 0;
        double far_d = -1.0;
        for (std::size_t i = 0; i < points.size(); ++i) {
            nearest[i] = std::min(nearest[i], squared_distance(points[i], points[chosen.back()]));
            if (nearest[i] > far_d) {
                far_d = nearest[i];
                far = i;
            }
        }
        chosen.push_back(far);
    }
    for (std::size_t idx : chosen) res.centroids.push_back(points[idx]);

    double wcss = 0.0;
    res.assignment = assign_nearest(points, res.centroids, wcss);
    res.wcss_history.push_back(wcss);
    for (int it = 1; it <= max_iter; ++it) {
        res.iterations = it;
        std::vector<Eigen::VectorXd> sums(kk, Eigen::VectorXd::Zero(points.front().size()));
        std::vector<std::size_t> counts(kk, 0);
        for (std::size_t i = 0; i < points.size(); ++i) {
            sums[static_cast<std::size_t>(res.assignment[i])] += points[i];
            counts[static_cast<std::size_t>(res.assignment[i])] += 1;
        }
        for (std::size_t j = 0; j < kk; ++j) {
            if (counts[j] > 0) res.centroids[j] = sums[j] / static_cast<double>(counts[j]);
        }
        auto next = assign_nearest(points, res.centroids, wcss);
        res.wcss_history.push_back(wcss);
        if (next == res.assignment) {
            res.converged = true;
            break;
        }
        res.assignment = std::move(next);
    }
    return res;
}

std::vector<FeatureMask> diversify(std::span<const FeatureMask> candidates, int k_clusters, double iou_dedup,
                                   std::uint64_t seed, int max_iter) {
    if (candidates.empty()) return {};
    if (k_clusters < 1) throw ArgumentError("diversify: k_clusters must be at least 1");

    std::vector<Eigen::VectorXd> points;
    points.reserve(candidates.size());
    for (const auto& c : candidates) {
        Eigen::VectorXd v(static_cast<Eigen::Index>(c.mask.bits.size()));
        for (std::size_t p = 0; p < c.mask.bits.size(); ++p) v(static_cast<Eigen::Index>(p)) = c.mask.bits[p] ? 1.0 : 0.0;
        points.push_back(std::move(v));
    }
    const KMeansResult km = kmeans(points, k_clusters, seed, max_iter);

    const std::size_t clusters = km.centroids.size();
    std::vector<std::ptrdiff_t> best(clusters, -1);
    for (std::size_t i = 0; i < candidates.size(); ++i) {
        auto& b = best[static_cast<std::size_t>(km.assignment[i])];
        if (b < 0 || candidates[i].sage_score > candidates[static_cast<std::size_t>(b)].sage_score) {
            b = static_cast<std::ptrdiff_t>(i);
        }
    }
    std::vector<std::size_t> kept;
    for (auto b : best) {
        if (b >= 0) kept.push_back(static_cast<std::size_t>(b));
    }
    std::sort(kept.begin(), kept.end(), [&](std::size_t a, std::size_t b) {
        if (candidates[a].sage_score != candidates[b].sage_score) return candidates[a].sage_score > candidates[b].sage_score;
        return a < b;
    });

    std::vector<FeatureMask> out;
    for (std::size_t idx : kept) {
        const bool redundant = std::any_of(out.begin(), out.end(),
                                           [&](const FeatureMask& m) { return iou(m.mask, candidates[idx].mask) >= iou_dedup; });
        if (!redundant) out.push_back(candidates[idx]);
    }
    return out;
}

nlohmann::json CatalogConfig::to_json() const {
    return {{"n_samples", n_samples},
            {"n_perturb", lime.n_perturb},
            {"cell", cell},
            {"k_local", lime.k_local},
            {"kernel_width", lime.kernel_width},
            {"ridge_lambda", lime.ridge_lambda},
            {"baseline", lime.baseline},
            {"iou_group", iou_group},
            {"min_freq", min_freq},
            {"tau_g", tau_g},
            {"k_masks", k_masks},
            {"iou_dedup", iou_dedup},
            {"sage_early_stop", early_stop.enabled},
            {"sage_se_threshold", early_stop.se_threshold},
            {"sage_min_n", early_stop.min_n},
            {"kmeans_max_iter", kmeans_max_iter}};
}

ClassFeatureCatalog build_catalog(const ProbabilisticModel& model, const LabeledDataset& train,
                                  const CatalogConfig& config, std::uint64_t seed, std::vector<ClassBuildLog>* log) {
    if (train.empty()) throw ArgumentError("build_catalog: empty training set");
    require_same_shape(train.shape(), model.input_shape(), "build_catalog");
    const Segmentation seg = grid_segmentation(train.shape().rows, train.shape().cols, config.cell);

    ClassFeatureCatalog catalog;
    catalog.shape = train.shape();
    catalog.seed = seed;
    catalog.hyperparameters = config.to_json();
    catalog.dataset_checksum = train.checksum();

    for (int c : train.classes_present()) {
        try {
            const auto positions = sample_class_positions(train, c, config.n_samples, derive_seed(seed, kSampleStream));
            std::vector<Image> samples;
            samples.reserve(positions.size());
            for (std::size_t p : positions) samples.push_back(train.image(p));

            std::vector<LocalAttribution> attrs(samples.size());
            const std::uint64_t lime_seed = derive_seed(seed, kLimeStream);
            parallel_for(samples.size(), config.workers, [&](std::size_t i) {
                attrs[i] = lime_attribute(model, samples[i], seg, c, config.lime, derive_seed(lime_seed, samples[i].id));
            });

            auto candidates = aggregate(attrs, seg, config.iou_group, config.min_freq);

            std::vector<double> base(samples.size());
            for (std::size_t start = 0; start < samples.size(); start += kSageChunk) {
                const std::size_t end = std::min(samples.size(), start + kSageChunk);
                const Batch probs = model.predict_proba_batch(
                    to_batch(std::span<const Image>(samples).subspan(start, end - start)));
                for (std::size_t i = start; i < end; ++i) base[i] = probs(static_cast<Eigen::Index>(i - start), c);
            }
            std::vector<SageEstimate> scores(candidates.size());
            parallel_for(candidates.size(), config.workers, [&](std::size_t i) {
                scores[i] = sage_score(model, candidates[i].mask, samples, c, config.early_stop, config.lime.baseline, base);
            });

            std::vector<FeatureMask> retained;
            for (std::size_t i = 0; i < candidates.size(); ++i) {
                candidates[i].sage_score = scores[i].score;
                if (scores[i].score >= config.tau_g) retained.push_back(candidates[i]);
            }
            auto masks = diversify(retained, config.k_masks, config.iou_dedup,
                                   derive_seed(derive_seed(seed, kClusterStream), static_cast<std::uint64_t>(c)),
                                   config.kmeans_max_iter);
            if (masks.empty()) catalog.fallback_classes.insert(c);
            catalog.classes[c] = std::move(masks);

            if (log != nullptr) {
                log->push_back(ClassBuildLog{c, samples.size(), candidates.size(), retained.size(), std::move(scores)});
            }
        } catch (const Error& e) {
            throw Error("build_catalog: class " + std::to_string(c) + ": " + e.what());
        }
    }
    return catalog;
}

nlohmann::json ClassFeatureCatalog::to_json() const {
    nlohmann::json j;
    j["version"] = version;
    j["seed"] = seed;
    j["shape"] = {{"rows", shape.rows}, {"cols", shape.cols}};
    j["hyperparameters"] = hyperparameters;
    j["model_checksum"] = model_checksum;
    j["dataset_checksum"] = dataset_checksum;
    nlohmann::json cls = nlohmann::json::object();
    for (const auto& [c, masks] : classes) {
        nlohmann::json arr = nlohmann::json::array();
        for (const auto& m : masks) {
            arr.push_back({{"mask_rle", rle_encode(m.mask)},
                           {"frequency", m.frequency},
                           {"sage_score", m.sage_score},
                           {"provenance", m.provenance}});
        }
        cls[std::to_string(c)] = std::move(arr);
    }
    j["classes"] = std::move(cls);
    j["fallback_classes"] = std::vector<int>(fallback_classes.begin(), fallback_classes.end());
    j["metadata"] = metadata;
    return j;
}

ClassFeatureCatalog ClassFeatureCatalog::from_json(const nlohmann::json& j) {
    try {
        ClassFeatureCatalog cat;
        cat.version = j.at("version").get<int>();
        cat.seed = j.at("seed").get<std::uint64_t>();
        cat.shape = Shape{j.at("shape").at("rows").get<int>(), j.at("shape").at("cols").get<int>()};
        cat.hyperparameters = j.at("hyperparameters");
        cat.model_checksum = j.at("model_checksum").get<std::string>();
        cat.dataset_checksum = j.at("dataset_checksum").get<std::string>();
        for (const auto& [key, arr] : j.at("classes").items()) {
            std::vector<FeatureMask> masks;
            for (const auto& m : arr) {
                FeatureMask fm;
                const auto runs = m.at("mask_rle").get<std::vector<std::size_t>>();
                fm.mask = rle_decode(runs, cat.shape);
                fm.frequency = m.at("frequency").get<std::size_t>();
                fm.sage_score = m.at("sage_score").get<double>();
                fm.provenance = m.value("provenance", std::vector<int>{});
                masks.push_back(std::move(fm));
            }
            cat.classes[std::stoi(key)] = std::move(masks);
        }
        for (int c : j.value("fallback_classes", std::vector<int>{})) cat.fallback_classes.insert(c);
        cat.metadata = j.value("metadata", nlohmann::json::object());
        return cat;
    } catch (const nlohmann::json::exception& e) {
        throw FormatError(std::string("catalog: ") + e.what());
    }
}

std::string ClassFeatureCatalog::dump() const { return to_json().dump(2) + "\n"; }

void ClassFeatureCatalog::save(const std::filesystem::path& path) const { write_file_atomic(path, dump()); }

ClassFeatureCatalog ClassFeatureCatalog::load(const std::filesystem::path& path) {
    try {
        return from_json(nlohmann::json::parse(read_file_text(path)));
    } catch (const nlohmann::json::parse_error& e) {
        throw FormatError(path.string() + ": " + e.what());
    }
}

}  // namespace fgns
