#pragma once

#include <cstdint>
#include <map>
#include <set>
#include <string>
#include <vector>

#include <json.hpp>

#include "fgns/classifier.hpp"
#include "fgns/dataset.hpp"
#include "fgns/feature_catalog.hpp"
#include "fgns/neighbors.hpp"
#include "fgns/prototypes.hpp"
#include "fgns/stats.hpp"

namespace fgns {

enum class DistanceSpace { pixel, contribution };

struct EvalConfig {
    std::size_t n_correct = 50;
    std::size_t n_incorrect = 50;
    std::set<int> eval_classes{1, 2, 4, 5, 6, 7};  ///< empty = every class
    int histogram_bins = 30;
    DistanceSpace space = DistanceSpace::pixel;
    NeighborConfig neighbors;
};

struct EvalQuery {
    std::size_t query_id = 0;
    int true_class = 0;
    int predicted_class = 0;
    bool correct = false;
};

/// Balanced correct/incorrect query sample with both methods' explanations.
struct EvalSample {
    std::uint64_t seed = 0;
    std::vector<EvalQuery> queries;
    std::size_t n_correct = 0;
    std::size_t n_incorrect = 0;
    std::size_t available_correct = 0;
    std::size_t available_incorrect = 0;
    std::vector<Explanation> fgns;
    std::vector<Explanation> knn;
};

/// One distance family compared across methods, per neighbor and per query (mean of its neighbors).
struct DistanceComparison {
    std::vector<double> fgns;
    std::vector<double> knn;
    Descriptives fgns_stats;
    Descriptives knn_stats;
    TTestResult pooled;
    TTestResult welch;

    std::vector<double> fgns_per_query;
    std::vector<double> knn_per_query;
    TTestResult pooled_per_query;
    TTestResult welch_per_query;
};

struct MetricReport {
    EvalSample sample;
    DistanceComparison query_to_neighbor;
    DistanceComparison neighbor_to_prototype;
    int histogram_bins = 30;
    DistanceSpace space = DistanceSpace::pixel;
    nlohmann::json metadata = nlohmann::json::object();

    /// The three directional findings and the significance of both comparisons.
    bool fgns_farther_from_query() const;
    bool fgns_closer_to_prototype() const;
    bool fgns_lower_prototype_variance() const;

    nlohmann::json to_json() const;
    std::string to_text() const;
    /// family, bin_left, bin_right, fgns, knn_baseline
    std::string histogram_csv() const;
};

/// Chooses up to n_correct / n_incorrect test queries (seeded) from the evaluation classes.
/// Throws InsufficientDataError with fewer than 2 misclassified candidates.
EvalSample select_queries(const MlpClassifier& model, const LabeledDataset& test, const EvalConfig& config,
                          std::uint64_t seed);

MetricReport run_quant_eval(const MlpClassifier& model, const LabeledDataset& test, const LabeledDataset& train,
                            const ClassFeatureCatalog& catalog, const PrototypeSet& protos, const EvalConfig& config,
                            std::uint64_t seed);

}  // namespace fgns
