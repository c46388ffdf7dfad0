#pragma once

#include <cstdint>
#include <vector>

#include <json.hpp>

#include "fgns/model.hpp"
#include "fgns/segmentation.hpp"

namespace fgns {

struct LimeConfig {
    int n_perturb = 500;
    int k_local = 5;              ///< superpixels kept per image (positive coefficients only)
    double kernel_width = 0.25;   ///< sigma of exp(-h^2 / sigma^2), h = fraction switched off
    double ridge_lambda = 1e-3;   ///< intercept is not penalized
    double keep_probability = 0.5;
    double baseline = 0.0;        ///< value written into switched-off superpixels
};

struct LocalAttribution {
    std::size_t image_id = 0;
    int class_id = 0;
    std::vector<double> coefficients;  ///< one per superpixel
    std::vector<int> selected;         ///< top-k positive coefficients, descending
};

/// Local surrogate attribution: weighted ridge regression of the class-c
/// probability on random superpixel on/off patterns.
LocalAttribution lime_attribute(const ProbabilisticModel& model, const Image& image, const Segmentation& seg, int c,
                                const LimeConfig& config, std::uint64_t seed);

/// Ids of the k largest strictly positive coefficients, descending (ties by id).
std::vector<int> top_k_positive(const std::vector<double>& coefficients, int k);

nlohmann::json to_json(const LocalAttribution& a);

}  // namespace fgns
