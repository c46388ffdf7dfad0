#include "fgns/model.hpp"

#include <string>

#include "fgns/errors.hpp"

namespace fgns {

Batch ProbabilisticModel::predict_proba_patterns(const Image& image, const Segmentation& seg, const Batch& patterns,
                                                 double baseline) const {
    require_same_shape(image.shape, seg.shape, "predict_proba_patterns");
    if (patterns.cols() != seg.superpixel_count()) {
        throw ArgumentError("predict_proba_patterns: pattern width does not match superpixel count");
    }
    Batch inputs(patterns.rows(), static_cast<Eigen::Index>(image.pixels.size()));
    for (Eigen::Index i = 0; i < patterns.rows(); ++i) {
        for (std::size_t p = 0; p < image.pixels.size(); ++p) {
            const bool on = patterns(i, seg.assignment[p]) != 0.0;
            inputs(i, static_cast<Eigen::Index>(p)) = on ? image.pixels[p] : baseline;
        }
    }
    return predict_proba_batch(inputs);
}

std::vector<double> ProbabilisticModel::predict_proba(const Image& image) const {
    require_same_shape(image.shape, input_shape(), "predict_proba");
    Batch probs = predict_proba_batch(to_batch(image));
    return std::vector<double>(probs.data(), probs.data() + probs.cols());
}

int ProbabilisticModel::predict(const Image& image) const {
    return argmax_rows(predict_proba_batch(to_batch(image))).front();
}

Batch to_batch(std::span<const Image> images) {
    if (images.empty()) return Batch(0, 0);
    const auto width = static_cast<Eigen::Index>(images.front().pixels.size());
    Batch out(static_cast<Eigen::Index>(images.size()), width);
    for (std::size_t i = 0; i < images.size(); ++i) {
        if (static_cast<Eigen::Index>(images[i].pixels.size()) != width) {
            throw ArgumentError("to_batch: images have differing sizes");
        }
        out.row(static_cast<Eigen::Index>(i)) = Eigen::Map<const Eigen::RowVectorXd>(images[i].pixels.data(), width);
    }
    return out;
}

Batch to_batch(const Image& image) { return to_batch(std::span<const Image>(&image, 1)); }

std::vector<int> argmax_rows(const Batch& probs) {
    std::vector<int> out(static_cast<std::size_t>(probs.rows()));
    for (Eigen::Index i = 0; i < probs.rows(); ++i) {
        Eigen::Index best = 0;
        for (Eigen::Index j = 1; j < probs.cols(); ++j) {
            if (probs(i, j) > probs(i, best)) best = j;
        }
        out[static_cast<std::size_t>(i)] = static_cast<int>(best);
    }
    return out;
}

}  // namespace fgns
