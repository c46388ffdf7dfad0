#include "fgns/attribution.hpp"

#include <algorithm>
#include <cmath>
#include <iostream>
#include <numeric>
#include <string>

#include "fgns/errors.hpp"
#include "fgns/random.hpp"

namespace fgns {

std::vector<int> top_k_positive(const std::vector<double>& coefficients, int k) {
    std::vector<int> ids;
    for (int s = 0; s < static_cast<int>(coefficients.size()); ++s) {
        if (coefficients[static_cast<std::size_t>(s)] > 0.0) ids.push_back(s);
    }
    std::stable_sort(ids.begin(), ids.end(), [&](int a, int b) {
        return coefficients[static_cast<std::size_t>(a)] > coefficients[static_cast<std::size_t>(b)];
    });
    if (k >= 0 && ids.size() > static_cast<std::size_t>(k)) ids.resize(static_cast<std::size_t>(k));
    return ids;
}

LocalAttribution lime_attribute(const ProbabilisticModel& model, const Image& image, const Segmentation& seg, int c,
                                const LimeConfig& config, std::uint64_t seed) {
    const int cells = seg.superpixel_count();
    if (cells == 0 || config.n_perturb <= 0) {
        throw DegenerateInputError("lime_attribute: no superpixels or no perturbations");
    }
    if (c < 0 || c >= model.class_count()) throw ArgumentError("lime_attribute: class " + std::to_string(c) + " out of range");
    if (!(config.kernel_width > 0.0)) throw ArgumentError("lime_attribute: kernel width must be positive");
    if (config.n_perturb < cells) {
        std::cerr << "warning: lime_attribute: " << config.n_perturb << " perturbations for " << cells
                  << " superpixels; the surrogate is under-determined\n";
    }

    Rng rng(seed);
    const Eigen::Index n = config.n_perturb;
    Batch patterns(n, cells);
    for (Eigen::Index i = 0; i < n; ++i) {
        for (int s = 0; s < cells; ++s) patterns(i, s) = rng.bernoulli(config.keep_probability) ? 1.0 : 0.0;
    }
    bool all_identical = true;
    for (Eigen::Index i = 1; i < n && all_identical; ++i) all_identical = patterns.row(i) == patterns.row(0);
    if (all_identical) throw DegenerateInputError("lime_attribute: all perturbations are identical");

    const Batch probs = model.predict_proba_patterns(image, seg, patterns, config.baseline);
    const Eigen::VectorXd target = probs.col(c);

    // Design matrix [1 | patterns]; weighted ridge with an unpenalized intercept.
    Eigen::MatrixXd x(n, cells + 1);
    x.col(0).setOnes();
    x.rightCols(cells) = patterns;
    Eigen::VectorXd w(n);
    const double sigma2 = config.kernel_width * config.kernel_width;
    for (Eigen::Index i = 0; i < n; ++i) {
        const double off = 1.0 - patterns.row(i).sum() / static_cast<double>(cells);
        w(i) = std::exp(-(off * off) / sigma2);
    }
    Eigen::MatrixXd gram = x.transpose() * w.asDiagonal() * x;
    gram.diagonal().tail(cells).array() += config.ridge_lambda;
    const Eigen::VectorXd rhs = x.transpose() * w.asDiagonal() * target;
    const Eigen::VectorXd beta = gram.ldlt().solve(rhs);

    LocalAttribution out;
    out.image_id = image.id;
    out.class_id = c;
    out.coefficients.assign(beta.data() + 1, beta.data() + 1 + cells);
    out.selected = top_k_positive(out.coefficients, config.k_local);
    return out;
}

nlohmann::json to_json(const LocalAttribution& a) {
    return {{"image_id", a.image_id}, {"class", a.class_id}, {"coefficients", a.coefficients}, {"selected", a.selected}};
}

}  // namespace fgns
