#pragma once

#include <Eigen/Dense>

#include <span>
#include <vector>

#include "fgns/image.hpp"
#include "fgns/segmentation.hpp"

namespace fgns {

/// Row-major batch: one flattened image per row.
using Batch = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

/// Anything that maps images to a probability vector over classes.
/// The explanation pipeline only sees this interface.
class ProbabilisticModel {
public:
    virtual ~ProbabilisticModel() = default;

    virtual int class_count() const = 0;
    virtual Shape input_shape() const = 0;

    /// Class probabilities, one row per input row.
    virtual Batch predict_proba_batch(const Batch& inputs) const = 0;

    /// Probabilities of `image` under each on/off superpixel pattern (one row of
    /// `patterns` per perturbation, entries 0 or 1). Off superpixels take `baseline`.
    /// The default materializes every perturbed image.
    virtual Batch predict_proba_patterns(const Image& image, const Segmentation& seg, const Batch& patterns,
                                         double baseline) const;

    std::vector<double> predict_proba(const Image& image) const;
    int predict(const Image& image) const;
};

/// Stacks images into a batch (rows follow `images` order).
Batch to_batch(std::span<const Image> images);
Batch to_batch(const Image& image);

/// argmax of each row; ties resolve to the lowest class id.
std::vector<int> argmax_rows(const Batch& probs);

}  // namespace fgns
