#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <json.hpp>

#include "fgns/classifier.hpp"
#include "fgns/dataset.hpp"
#include "fgns/feature_catalog.hpp"
#include "fgns/prototypes.hpp"

namespace fgns {

enum class Method { fgns, knn_baseline };

const char* to_string(Method m) noexcept;
Method method_from_string(const std::string& s);

struct Neighbor {
    std::size_t train_id = 0;
    double score = 0.0;
    int label = 0;
};

struct Explanation {
    std::size_t query_id = 0;
    int predicted_class = 0;
    std::optional<int> true_class;
    Method method = Method::fgns;
    bool fallback = false;  ///< FGNS had no masks for the class and used the baseline ranking
    std::vector<Neighbor> neighbors;  ///< ascending score; ties by ascending train id

    nlohmann::json to_json() const;
    static Explanation from_json(const nlohmann::json& j);
};

struct NeighborConfig {
    double rho = 1.0;
    std::size_t n_neighbors = 3;
    std::size_t fgns_prefilter = 0;  ///< if > 0, FGNS only re-ranks the baseline's top-m
    bool knn_all_classes = false;    ///< baseline searches every class (ablation)
};

/// rho * sum_i || M_i (.) (candidate - prototype) ||^2
double feature_loss(const Image& candidate, const Prototype& proto, std::span<const FeatureMask> masks, double rho);

/// Penultimate activations of every training instance, computed once so the
/// baseline does not rerun the network per query.
class KnnIndex {
public:
    KnnIndex(const MlpClassifier& model, const LabeledDataset& train);

    const MlpClassifier& model() const noexcept { return *model_; }
    const LabeledDataset& train() const noexcept { return *train_; }
    /// Row `pos` holds the activations of train.image(pos).
    const Batch& activations() const noexcept { return activations_; }

private:
    const MlpClassifier* model_;
    const LabeledDataset* train_;
    Batch activations_;
};

/// The n training instances of class c with the lowest feature loss against P_c.
/// Delegates to the baseline (and sets `fallback`) when the catalog has no masks for c.
Explanation rank_fgns(const Image& query, int c, const LabeledDataset& train, const ClassFeatureCatalog& catalog,
                      const PrototypeSet& protos, double rho, std::size_t n, const KnnIndex* fallback_index = nullptr);

/// The n training instances of class c nearest to the query in contribution-vector space.
Explanation rank_knn(const Image& query, int c, const MlpClassifier& model, const LabeledDataset& train, std::size_t n,
                     bool all_classes = false);
Explanation rank_knn(const Image& query, int c, const KnnIndex& index, std::size_t n, bool all_classes = false);

/// Predicts the query's class and ranks neighbors with the requested method.
Explanation explain(const Image& query, const MlpClassifier& model, const LabeledDataset& train,
                    const ClassFeatureCatalog& catalog, const PrototypeSet& protos, Method method,
                    const NeighborConfig& config, const KnnIndex* index = nullptr);

}  // namespace fgns
