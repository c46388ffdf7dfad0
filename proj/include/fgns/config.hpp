#pragma once

#include <cstdint>
#include <filesystem>
#include <set>
#include <string>
#include <vector>

#include <json.hpp>

#include "fgns/classifier.hpp"
#include "fgns/evaluation.hpp"
#include "fgns/feature_catalog.hpp"
#include "fgns/neighbors.hpp"
#include "fgns/prototypes.hpp"

namespace fgns {

struct DataPaths {
    std::filesystem::path train_images;
    std::filesystem::path train_labels;
    std::filesystem::path test_images;
    std::filesystem::path test_labels;
};

struct Seeds {
    std::uint64_t train = 1;
    std::uint64_t catalog = 7;
    std::uint64_t eval = 42;
};

/// Everything a pipeline run depends on. Built from a JSON document layered
/// over the defaults; unknown keys are rejected.
struct RunConfig {
    DataPaths data;
    std::set<int> train_classes;  ///< empty = all classes
    TrainingConfig classifier;
    CatalogConfig catalog;
    NeighborConfig neighbors;
    PrototypeKind prototype_kind = PrototypeKind::median;
    EvalConfig evaluation;
    Seeds seeds;
    int workers = 1;
    std::filesystem::path output_dir = "out";

    /// Default document; every accepted key appears here.
    static nlohmann::json defaults();

    /// Layers `doc` over the defaults, then applies "dotted.key=value" overrides.
    static RunConfig from_json(const nlohmann::json& doc, const std::vector<std::string>& overrides = {});
    static RunConfig load(const std::filesystem::path& path, const std::vector<std::string>& overrides = {});

    /// Effective document (after layering and overrides).
    const nlohmann::json& document() const noexcept { return doc_; }

    /// SHA-256 of the effective document minus keys that cannot change outputs
    /// (worker count, output directory).
    std::string hash() const;

private:
    nlohmann::json doc_;
};

}  // namespace fgns
