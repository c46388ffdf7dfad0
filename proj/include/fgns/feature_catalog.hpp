#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <set>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <json.hpp>

#include "fgns/attribution.hpp"
#include "fgns/dataset.hpp"
#include "fgns/model.hpp"
#include "fgns/segmentation.hpp"

namespace fgns {

struct FeatureMask {
    BinaryMask mask;
    std::size_t frequency = 0;     ///< number of sampled images that voted for this region
    double sage_score = 0.0;       ///< mean drop in class probability when the region is neutralized
    std::vector<int> provenance;   ///< contributing superpixel ids, ascending
};

/// Per-class validated masks plus the settings they were built with.
struct ClassFeatureCatalog {
    int version = 1;
    Shape shape;
    std::uint64_t seed = 0;
    nlohmann::json hyperparameters = nlohmann::json::object();
    std::string model_checksum;
    std::string dataset_checksum;
    std::map<int, std::vector<FeatureMask>> classes;
    std::set<int> fallback_classes;  ///< classes left without masks; ranked by the baseline instead
    nlohmann::json metadata = nlohmann::json::object();

    /// Masks for class c (empty when the class has none or is unknown).
    const std::vector<FeatureMask>& masks_for(int c) const;

    nlohmann::json to_json() const;
    static ClassFeatureCatalog from_json(const nlohmann::json& j);
    std::string dump() const;
    void save(const std::filesystem::path& path) const;
    static ClassFeatureCatalog load(const std::filesystem::path& path);
};

/// |a & b| / |a | b|, 0 when both are empty.
double iou(const BinaryMask& a, const BinaryMask& b);

/// Alternating zero/one run lengths, starting with a (possibly empty) zero run.
std::vector<std::size_t> rle_encode(const BinaryMask& mask);
BinaryMask rle_decode(std::span<const std::size_t> runs, Shape shape);

/// Groups the selected superpixels of every attribution by overlap and drops
/// groups supported by fewer than min_freq * |attrs| images.
std::vector<FeatureMask> aggregate(std::span<const LocalAttribution> attrs, const Segmentation& seg, double iou_group,
                                   double min_freq);

struct EarlyStopPolicy {
    bool enabled = true;
    double se_threshold = 0.01;
    std::size_t min_n = 50;
};

struct SageEstimate {
    double score = 0.0;
    double standard_error = 0.0;
    std::size_t n_used = 0;
    bool stopped_early = false;
};

/// Mean drop in P(c) over `samples` when the mask region is set to `baseline`.
SageEstimate sage_score(const ProbabilisticModel& model, const BinaryMask& mask, std::span<const Image> samples, int c,
                        const EarlyStopPolicy& policy, double baseline = 0.0);

/// As above with the un-neutralized P(c) of each sample supplied by the caller.
SageEstimate sage_score(const ProbabilisticModel& model, const BinaryMask& mask, std::span<const Image> samples, int c,
                        const EarlyStopPolicy& policy, double baseline, std::span<const double> base_probs);

struct KMeansResult {
    std::vector<int> assignment;
    std::vector<Eigen::VectorXd> centroids;
    std::vector<double> wcss_history;  ///< within-cluster sum of squares after each assignment step
    int iterations = 0;
    bool converged = false;
};

/// Lloyd's algorithm with seeded greedy farthest-point initialization.
/// Nearest-centroid ties go to the lower centroid index; empty clusters keep their centroid.
KMeansResult kmeans(std::span<const Eigen::VectorXd> points, int k, std::uint64_t seed, int max_iter = 100);

/// Clusters masks, keeps the best-scored per cluster, removes near-duplicates
/// (IoU >= iou_dedup with a better kept mask). Result is sorted by descending score.
std::vector<FeatureMask> diversify(std::span<const FeatureMask> candidates, int k_clusters, double iou_dedup,
                                   std::uint64_t seed, int max_iter = 100);

struct CatalogConfig {
    std::size_t n_samples = 1000;
    int cell = 4;
    LimeConfig lime;
    double iou_group = 0.5;
    double min_freq = 0.05;
    double tau_g = 0.01;
    int k_masks = 7;
    double iou_dedup = 0.8;
    EarlyStopPolicy early_stop;
    int kmeans_max_iter = 100;
    int workers = 1;

    nlohmann::json to_json() const;
};

/// Diagnostics for one class of a catalog build.
struct ClassBuildLog {
    int class_id = 0;
    std::size_t n_sampled = 0;
    std::size_t n_candidates = 0;
    std::size_t n_retained = 0;
    std::vector<SageEstimate> candidate_scores;
};

/// sample -> attribute -> aggregate -> score -> retain -> diversify, for every class present in `train`.
ClassFeatureCatalog build_catalog(const ProbabilisticModel& model, const LabeledDataset& train,
                                  const CatalogConfig& config, std::uint64_t seed,
                                  std::vector<ClassBuildLog>* log = nullptr);

}  // namespace fgns
