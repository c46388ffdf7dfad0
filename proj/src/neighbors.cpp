#include "fgns/neighbors.hpp"

#include <algorithm>
#include <string>

#include "fgns/errors.hpp"

namespace fgns {

namespace {

bool score_then_id(const Neighbor& a, const Neighbor& b) {
    if (a.score != b.score) return a.score < b.score;
    return a.train_id < b.train_id;
}

std::vector<Neighbor> lowest_n(std::vector<Neighbor> scored, std::size_t n) {
    const std::size_t keep = std::min(n, scored.size());
    std::partial_sort(scored.begin(), scored.begin() + static_cast<std::ptrdiff_t>(keep), scored.end(), score_then_id);
    scored.resize(keep);
    return scored;
}

std::vector<std::vector<std::size_t>> mask_pixel_lists(std::span<const FeatureMask> masks) {
    std::vector<std::vector<std::size_t>> lists;
    lists.reserve(masks.size());
    for (const auto& m : masks) {
        std::vector<std::size_t> px;
        for (std::size_t p = 0; p < m.mask.bits.size(); ++p) {
            if (m.mask.bits[p]) px.push_back(p);
        }
        lists.push_back(std::move(px));
    }
    return lists;
}

double masked_loss(const std::vector<double>& candidate, const std::vector<double>& proto,
                   const std::vector<std::vector<std::size_t>>& lists, double rho) {
    double total = 0.0;
    for (const auto& px : lists) {
        double part = 0.0;
        for (std::size_t p : px) {
            const double d = candidate[p] - proto[p];
            part += d * d;
        }
        total += part;
    }
    return rho * total;
}

}  // namespace

const char* to_string(Method m) noexcept { return m == Method::fgns ? "fgns" : "knn_baseline"; }

Method method_from_string(const std::string& s) {
    if (s == "fgns") return Method::fgns;
    if (s == "knn_baseline" || s == "knn") return Method::knn_baseline;
    throw ArgumentError("unknown method '" + s + "' (expected fgns or knn_baseline)");
}

double feature_loss(const Image& candidate, const Prototype& proto, std::span<const FeatureMask> masks, double rho) {
    if (masks.empty()) throw ArgumentError("feature_loss: no masks (route the class to the baseline ranking)");
    if (!(rho > 0.0)) throw ArgumentError("feature_loss: rho must be positive");
    require_same_shape(candidate.shape, proto.image.shape, "feature_loss");
    for (const auto& m : masks) require_same_shape(m.mask.shape, candidate.shape, "feature_loss");
    return masked_loss(candidate.pixels, proto.image.pixels, mask_pixel_lists(masks), rho);
}

KnnIndex::KnnIndex(const MlpClassifier& model, const LabeledDataset& train) : model_(&model), train_(&train) {
    require_same_shape(train.shape(), model.input_shape(), "KnnIndex");
    activations_ = Batch(static_cast<Eigen::Index>(train.size()), model.hidden_width());
    // Row-at-a-time through the same path as a query, so an instance presented
    // as a query reproduces its stored activations bit for bit.
    for (std::size_t pos = 0; pos < train.size(); ++pos) {
        activations_.row(static_cast<Eigen::Index>(pos)) = model.penultimate(train.image(pos)).transpose();
    }
}

Explanation rank_knn(const Image& query, int c, const KnnIndex& index, std::size_t n, bool all_classes) {
    const auto& model = index.model();
    const auto& train = index.train();
    if (c < 0 || c >= model.class_count()) throw ArgumentError("rank_knn: class " + std::to_string(c) + " out of range");
    const Eigen::VectorXd q = model.contribution_vector(query, c).values;
    const Eigen::RowVectorXd w = model.params().w2.row(c);

    std::vector<Neighbor> scored;
    for (std::size_t pos = 0; pos < train.size(); ++pos) {
        if (!all_classes && train.label(pos) != c) continue;
        const Eigen::RowVectorXd contrib = index.activations().row(static_cast<Eigen::Index>(pos)).cwiseProduct(w);
        const double dist = (contrib - q.transpose()).norm();
        scored.push_back(Neighbor{train.image(pos).id, dist, train.label(pos)});
    }
    if (scored.empty()) throw ArgumentError("rank_knn: no training instances of class " + std::to_string(c));

    Explanation ex;
    ex.query_id = query.id;
    ex.predicted_class = c;
    ex.method = Method::knn_baseline;
    ex.neighbors = lowest_n(std::move(scored), n);
    return ex;
}

Explanation rank_knn(const Image& query, int c, const MlpClassifier& model, const LabeledDataset& train, std::size_t n,
                     bool all_classes) {
    if (c < 0 || c >= model.class_count()) throw ArgumentError("rank_knn: class " + std::to_string(c) + " out of range");
    if (!all_classes && train.positions_of(c).empty()) {
        throw ArgumentError("rank_knn: no training instances of class " + std::to_string(c));
    }
    const KnnIndex index(model, train);
    return rank_knn(query, c, index, n, all_classes);
}

Explanation rank_fgns(const Image& query, int c, const LabeledDataset& train, const ClassFeatureCatalog& catalog,
                      const PrototypeSet& protos, double rho, std::size_t n, const KnnIndex* fallback_index) {
    const auto pool = train.positions_of(c);
    if (pool.empty()) throw ArgumentError("rank_fgns: no training instances of class " + std::to_string(c));
    const auto& masks = catalog.masks_for(c);
    if (masks.empty()) {
        if (fallback_index == nullptr) {
            throw ArgumentError("rank_fgns: class " + std::to_string(c) + " has no masks and no baseline index was given");
        }
        Explanation ex = rank_knn(query, c, *fallback_index, n);
        ex.fallback = true;
        return ex;
    }
    if (!(rho > 0.0)) throw ArgumentError("rank_fgns: rho must be positive");
    const Prototype& proto = protos.at(c);
    require_same_shape(proto.image.shape, train.shape(), "rank_fgns");
    for (const auto& m : masks) require_same_shape(m.mask.shape, train.shape(), "rank_fgns");

    const auto lists = mask_pixel_lists(masks);
    std::vector<Neighbor> scored;
    scored.reserve(pool.size());
    for (std::size_t pos : pool) {
        const auto& img = train.image(pos);
        scored.push_back(Neighbor{img.id, masked_loss(img.pixels, proto.image.pixels, lists, rho), c});
    }
    Explanation ex;
    ex.query_id = query.id;
    ex.predicted_class = c;
    ex.method = Method::fgns;
    ex.neighbors = lowest_n(std::move(scored), n);
    return ex;
}

Explanation explain(const Image& query, const MlpClassifier& model, const LabeledDataset& train,
                    const ClassFeatureCatalog& catalog, const PrototypeSet& protos, Method method,
                    const NeighborConfig& config, const KnnIndex* index) {
    std::optional<KnnIndex> local;
    if (index == nullptr) {
        local.emplace(model, train);
        index = &*local;
    }
    const int c = model.predict(query);
    if (method == Method::knn_baseline) return rank_knn(query, c, *index, config.n_neighbors, config.knn_all_classes);

    if (config.fgns_prefilter > 0 && !catalog.masks_for(c).empty()) {
        // Re-rank only the baseline's top-m candidates.
        const Explanation shortlist = rank_knn(query, c, *index, config.fgns_prefilter);
        const auto& masks = catalog.masks_for(c);
        const auto lists = mask_pixel_lists(masks);
        const Prototype& proto = protos.at(c);
        std::vector<Neighbor> scored;
        for (const auto& nb : shortlist.neighbors) {
            const auto& img = train.image(*train.find(nb.train_id));
            scored.push_back(Neighbor{nb.train_id, masked_loss(img.pixels, proto.image.pixels, lists, config.rho), c});
        }
        Explanation ex;
        ex.query_id = query.id;
        ex.predicted_class = c;
        ex.method = Method::fgns;
        ex.neighbors = lowest_n(std::move(scored), config.n_neighbors);
        return ex;
    }
    return rank_fgns(query, c, train, catalog, protos, config.rho, config.n_neighbors, index);
}

nlohmann::json Explanation::to_json() const {
    nlohmann::json nb = nlohmann::json::array();
    for (const auto& n : neighbors) nb.push_back({{"train_id", n.train_id}, {"score", n.score}, {"label", n.label}});
    return {{"query_id", query_id},
            {"predicted_class", predicted_class},
            {"true_class", true_class ? nlohmann::json(*true_class) : nlohmann::json()},
            {"method", to_string(method)},
            {"fallback", fallback},
            {"neighbors", std::move(nb)}};
}

Explanation Explanation::from_json(const nlohmann::json& j) {
    try {
        Explanation ex;
        ex.query_id = j.at("query_id").get<std::size_t>();
        ex.predicted_class = j.at("predicted_class").get<int>();
        if (j.contains("true_class") && !j.at("true_class").is_null()) ex.true_class = j.at("true_class").get<int>();
        ex.method = method_from_string(j.at("method").get<std::string>());
        ex.fallback = j.at("fallback").get<bool>();
        for (const auto& n : j.at("neighbors")) {
            ex.neighbors.push_back(Neighbor{n.at("train_id").get<std::size_t>(), n.at("score").get<double>(),
                                            n.value("label", ex.predicted_class)});
        }
        return ex;
    } catch (const nlohmann::json::exception& e) {
        throw FormatError(std::string("explanation: ") + e.what());
    }
}

}  // namespace fgns
