#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "fgns/dataset.hpp"
#include "fgns/model.hpp"

namespace fgns {

struct TrainingConfig {
    int hidden = 256;
    int batch_size = 64;
    double learning_rate = 0.1;
    int epochs = 10;
};

struct TrainingMetadata {
    int epochs = 0;
    std::uint64_t seed = 0;
    double train_accuracy = 0.0;
    std::optional<double> test_accuracy;
    std::vector<double> epoch_losses;  ///< mean cross-entropy per epoch
    std::string dataset_checksum;
    std::string config_hash;  ///< hash of the run configuration that produced the model, if any
    TrainingConfig config;
};

/// flatten -> dense(hidden) -> ReLU -> dense(classes) -> softmax
struct MlpParameters {
    Eigen::MatrixXd w1;  ///< hidden x inputs
    Eigen::VectorXd b1;  ///< hidden
    Eigen::MatrixXd w2;  ///< classes x hidden; row c is the classification weight of class c
    Eigen::VectorXd b2;  ///< classes
};

/// Penultimate activations weighted by one class's final-layer row.
struct ContributionVector {
    int class_id = 0;
    Eigen::VectorXd values;
};

class MlpClassifier final : public ProbabilisticModel {
public:
    /// Zero-initialized network.
    MlpClassifier(Shape input, int hidden, int classes);

    /// Uniform in [-1/sqrt(fan_in), 1/sqrt(fan_in)] for weights and biases.
    void initialize(std::uint64_t seed);

    int class_count() const override { return static_cast<int>(params_.w2.rows()); }
    Shape input_shape() const override { return input_; }
    int hidden_width() const { return static_cast<int>(params_.w1.rows()); }

    Batch predict_proba_batch(const Batch& inputs) const override;
    Batch predict_proba_patterns(const Image& image, const Segmentation& seg, const Batch& patterns,
                                 double baseline) const override;

    Batch logits_batch(const Batch& inputs) const;
    /// ReLU output of the hidden layer.
    Batch penultimate_batch(const Batch& inputs) const;
    Eigen::VectorXd penultimate(const Image& image) const;
    Eigen::VectorXd logits(const Image& image) const;

    ContributionVector contribution_vector(const Image& image, int c) const;

    /// Mean cross-entropy over the batch.
    double loss(const Batch& inputs, std::span<const int> labels) const;
    /// Analytic gradient of `loss` with respect to every parameter.
    MlpParameters gradients(const Batch& inputs, std::span<const int> labels) const;

    const MlpParameters& params() const noexcept { return params_; }
    MlpParameters& mutable_params() noexcept { return params_; }
    const TrainingMetadata& metadata() const noexcept { return meta_; }
    TrainingMetadata& mutable_metadata() noexcept { return meta_; }

    /// Fraction of instances whose argmax equals the label.
    double accuracy(const LabeledDataset& ds) const;

    /// Self-describing binary container: magic, JSON header, little-endian doubles.
    std::vector<std::uint8_t> serialize() const;
    static MlpClassifier deserialize(std::span<const std::uint8_t> bytes);
    void save(const std::filesystem::path& path) const;
    static MlpClassifier load(const std::filesystem::path& path);

private:
    Shape input_;
    MlpParameters params_;
    TrainingMetadata meta_;
};

/// Mini-batch SGD on cross-entropy. Deterministic in (data, config, seed).
/// Held-out accuracy is recorded when `heldout` is given.
MlpClassifier train(const LabeledDataset& train_set, const TrainingConfig& config, std::uint64_t seed,
                    const LabeledDataset* heldout = nullptr);

/// Row-wise numerically stable softmax.
Batch softmax_rows(const Batch& logits);

}  // namespace fgns
