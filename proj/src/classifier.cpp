#include "fgns/classifier.hpp"

#include <bit>
#include <cmath>
#include <cstring>
#include <numeric>
#include <string>

#include <json.hpp>

#include "fgns/errors.hpp"
#include "fgns/file_util.hpp"
#include "fgns/random.hpp"

namespace fgns {

static_assert(std::endian::native == std::endian::little, "model persistence assumes a little-endian host");

namespace {

constexpr char kModelMagic[8] = {'F', 'G', 'N', 'S', 'M', 'D', 'L', '1'};
constexpr std::uint64_t kInitStream = 0x1f1f;

Eigen::MatrixXd one_hot(std::span<const int> labels, int classes) {
    Eigen::MatrixXd y = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(labels.size()), classes);
    for (std::size_t i = 0; i < labels.size(); ++i) {
        if (labels[i] < 0 || labels[i] >= classes) throw ArgumentError("label outside model class range");
        y(static_cast<Eigen::Index>(i), labels[i]) = 1.0;
    }
    return y;
}

void check_inputs(const Batch& inputs, Shape shape) {
    if (inputs.cols() != static_cast<Eigen::Index>(shape.size())) {
        throw ArgumentError("classifier: input width " + std::to_string(inputs.cols()) + " does not match " +
                            std::to_string(shape.rows) + "x" + std::to_string(shape.cols));
    }
}

void append_doubles(std::vector<std::uint8_t>& out, const double* data, std::size_t n) {
    const auto* p = reinterpret_cast<const std::uint8_t*>(data);
    out.insert(out.end(), p, p + n * sizeof(double));
}

void read_doubles(std::span<const std::uint8_t> bytes, std::size_t& offset, double* dst, std::size_t n) {
    const std::size_t len = n * sizeof(double);
    if (offset + len > bytes.size()) throw FormatError("model file: truncated weight block");
    std::memcpy(dst, bytes.data() + offset, len);
    offset += len;
}

}  // namespace

Batch softmax_rows(const Batch& logits) {
    Batch out(logits.rows(), logits.cols());
    for (Eigen::Index i = 0; i < logits.rows(); ++i) {
        const double m = logits.row(i).maxCoeff();
        out.row(i) = (logits.row(i).array() - m).exp();
        out.row(i) /= out.row(i).sum();
    }
    return out;
}

MlpClassifier::MlpClassifier(Shape input, int hidden, int classes) : input_(input) {
    if (hidden < 1 || classes < 1) throw ArgumentError("classifier: hidden width and class count must be positive");
    const auto d = static_cast<Eigen::Index>(input.size());
    params_.w1 = Eigen::MatrixXd::Zero(hidden, d);
    params_.b1 = Eigen::VectorXd::Zero(hidden);
    params_.w2 = Eigen::MatrixXd::Zero(classes, hidden);
    params_.b2 = Eigen::VectorXd::Zero(classes);
    meta_.config.hidden = hidden;
}

void MlpClassifier::initialize(std::uint64_t seed) {
    Rng rng(derive_seed(seed, kInitStream));
    auto fill = [&rng](auto& m, double fan_in) {
        const double bound = 1.0 / std::sqrt(fan_in);
        for (Eigen::Index j = 0; j < m.cols(); ++j) {
            for (Eigen::Index i = 0; i < m.rows(); ++i) m(i, j) = rng.uniform(-bound, bound);
        }
    };
    fill(params_.w1, static_cast<double>(params_.w1.cols()));
    fill(params_.b1, static_cast<double>(params_.w1.cols()));
    fill(params_.w2, static_cast<double>(params_.w2.cols()));
    fill(params_.b2, static_cast<double>(params_.w2.cols()));
}

Batch MlpClassifier::penultimate_batch(const Batch& inputs) const {
    check_inputs(inputs, input_);
    Batch h = inputs * params_.w1.transpose();
    h.rowwise() += params_.b1.transpose();
    return h.cwiseMax(0.0);
}

Batch MlpClassifier::logits_batch(const Batch& inputs) const {
    Batch z = penultimate_batch(inputs) * params_.w2.transpose();
    z.rowwise() += params_.b2.transpose();
    return z;
}

Batch MlpClassifier::predict_proba_batch(const Batch& inputs) const { return softmax_rows(logits_batch(inputs)); }

Batch MlpClassifier::predict_proba_patterns(const Image& image, const Segmentation& seg, const Batch& patterns,
                                            double baseline) const {
    require_same_shape(image.shape, input_, "predict_proba_patterns");
    require_same_shape(image.shape, seg.shape, "predict_proba_patterns");
    const int cells = seg.superpixel_count();
    if (patterns.cols() != cells) {
        throw ArgumentError("predict_proba_patterns: pattern width does not match superpixel count");
    }
    // The first layer is affine, so each superpixel contributes a fixed vector
    // (W1 restricted to its pixels, applied to x - baseline) when switched on.
    const Eigen::Index hidden = params_.w1.rows();
    Eigen::MatrixXd per_cell = Eigen::MatrixXd::Zero(cells, hidden);
    for (std::size_t p = 0; p < image.pixels.size(); ++p) {
        const double delta = image.pixels[p] - baseline;
        if (delta != 0.0) per_cell.row(seg.assignment[p]) += delta * params_.w1.col(static_cast<Eigen::Index>(p)).transpose();
    }
    Eigen::RowVectorXd base = params_.b1.transpose();
    if (baseline != 0.0) base += baseline * params_.w1.rowwise().sum().transpose();

    Batch h = patterns * per_cell;
    h.rowwise() += base;
    h = h.cwiseMax(0.0);
    Batch z = h * params_.w2.transpose();
    z.rowwise() += params_.b2.transpose();
    return softmax_rows(z);
}

Eigen::VectorXd MlpClassifier::penultimate(const Image& image) const {
    require_same_shape(image.shape, input_, "penultimate");
    return penultimate_batch(to_batch(image)).row(0).transpose();
}

Eigen::VectorXd MlpClassifier::logits(const Image& image) const {
    require_same_shape(image.shape, input_, "logits");
    return logits_batch(to_batch(image)).row(0).transpose();
}

ContributionVector MlpClassifier::contribution_vector(const Image& image, int c) const {
    if (c < 0 || c >= class_count()) throw ArgumentError("contribution_vector: class " + std::to_string(c) + " out of range");
    ContributionVector out;
    out.class_id = c;
    out.values = penultimate(image).cwiseProduct(params_.w2.row(c).transpose());
    return out;
}

double MlpClassifier::loss(const Batch& inputs, std::span<const int> labels) const {
    if (static_cast<std::size_t>(inputs.rows()) != labels.size() || labels.empty()) {
        throw ArgumentError("loss: batch and label counts differ");
    }
    const Batch z = logits_batch(inputs);
    double total = 0.0;
    for (Eigen::Index i = 0; i < z.rows(); ++i) {
        const double m = z.row(i).maxCoeff();
        const double lse = m + std::log((z.row(i).array() - m).exp().sum());
        total += lse - z(i, labels[static_cast<std::size_t>(i)]);
    }
    return total / static_cast<double>(z.rows());
}

MlpParameters MlpClassifier::gradients(const Batch& inputs, std::span<const int> labels) const {
    if (static_cast<std::size_t>(inputs.rows()) != labels.size() || labels.empty()) {
        throw ArgumentError("gradients: batch and label counts differ");
    }
    check_inputs(inputs, input_);
    const double n = static_cast<double>(inputs.rows());
    Batch pre = inputs * params_.w1.transpose();
    pre.rowwise() += params_.b1.transpose();
    const Batch h = pre.cwiseMax(0.0);
    Batch z = h * params_.w2.transpose();
    z.rowwise() += params_.b2.transpose();

    const Eigen::MatrixXd dz = (softmax_rows(z) - one_hot(labels, class_count())) / n;
    MlpParameters g;
    g.w2 = dz.transpose() * h;
    g.b2 = dz.colwise().sum().transpose();
    Eigen::MatrixXd dh = dz * params_.w2;
    dh = dh.cwiseProduct((pre.array() > 0.0).cast<double>().matrix());
    g.w1 = dh.transpose() * inputs;
    g.b1 = dh.colwise().sum().transpose();
    return g;
}

double MlpClassifier::accuracy(const LabeledDataset& ds) const {
    if (ds.empty()) return 0.0;
    std::size_t correct = 0;
    constexpr std::size_t kChunk = 1024;
    for (std::size_t start = 0; start < ds.size(); start += kChunk) {
        const std::size_t end = std::min(ds.size(), start + kChunk);
        const auto preds = argmax_rows(predict_proba_batch(
            to_batch(std::span<const Image>(ds.images().data() + start, end - start))));
        for (std::size_t i = start; i < end; ++i) correct += preds[i - start] == ds.label(i) ? 1 : 0;
    }
    return static_cast<double>(correct) / static_cast<double>(ds.size());
}

std::vector<std::uint8_t> MlpClassifier::serialize() const {
    nlohmann::json header;
    header["format"] = "fgns-mlp";
    header["version"] = 1;
    header["input"] = {{"rows", input_.rows}, {"cols", input_.cols}};
    header["shapes"] = {{"w1", {params_.w1.rows(), params_.w1.cols()}},
                        {"b1", {params_.b1.size()}},
                        {"w2", {params_.w2.rows(), params_.w2.cols()}},
                        {"b2", {params_.b2.size()}}};
    header["layout"] = "column-major float64 little-endian, blocks in order w1 b1 w2 b2";
    header["training"] = {{"epochs", meta_.epochs},
                          {"seed", meta_.seed},
                          {"train_accuracy", meta_.train_accuracy},
                          {"epoch_losses", meta_.epoch_losses},
                          {"hidden", meta_.config.hidden},
                          {"batch_size", meta_.config.batch_size},
                          {"learning_rate", meta_.config.learning_rate}};
    header["training"]["test_accuracy"] = meta_.test_accuracy ? nlohmann::json(*meta_.test_accuracy) : nlohmann::json();
    header["dataset_checksum"] = meta_.dataset_checksum;
    header["config_hash"] = meta_.config_hash;
    const std::string text = header.dump();

    std::vector<std::uint8_t> out(std::begin(kModelMagic), std::end(kModelMagic));
    const std::uint64_t len = text.size();
    const auto* lp = reinterpret_cast<const std::uint8_t*>(&len);
    out.insert(out.end(), lp, lp + sizeof(len));
    out.insert(out.end(), text.begin(), text.end());
    append_doubles(out, params_.w1.data(), static_cast<std::size_t>(params_.w1.size()));
    append_doubles(out, params_.b1.data(), static_cast<std::size_t>(params_.b1.size()));
    append_doubles(out, params_.w2.data(), static_cast<std::size_t>(params_.w2.size()));
    append_doubles(out, params_.b2.data(), static_cast<std::size_t>(params_.b2.size()));
    return out;
}

MlpClassifier MlpClassifier::deserialize(std::span<const std::uint8_t> bytes) {
    if (bytes.size() < 16 || std::memcmp(bytes.data(), kModelMagic, sizeof(kModelMagic)) != 0) {
        throw FormatError("model file: bad magic");
    }
    std::uint64_t len = 0;
    std::memcpy(&len, bytes.data() + 8, sizeof(len));
    if (16 + len > bytes.size()) throw FormatError("model file: truncated header");
    nlohmann::json header;
    try {
        header = nlohmann::json::parse(bytes.begin() + 16, bytes.begin() + 16 + static_cast<std::ptrdiff_t>(len));
    } catch (const nlohmann::json::exception& e) {
        throw FormatError(std::string("model file: bad header: ") + e.what());
    }
    try {
        const Shape input{header.at("input").at("rows").get<int>(), header.at("input").at("cols").get<int>()};
        const auto& shapes = header.at("shapes");
        const int hidden = shapes.at("w1").at(0).get<int>();
        const int classes = shapes.at("w2").at(0).get<int>();
        if (shapes.at("w1").at(1).get<std::size_t>() != input.size() || shapes.at("w2").at(1).get<int>() != hidden ||
            shapes.at("b1").at(0).get<int>() != hidden || shapes.at("b2").at(0).get<int>() != classes) {
            throw FormatError("model file: inconsistent shapes");
        }
        MlpClassifier m(input, hidden, classes);
        std::size_t offset = 16 + len;
        auto& p = m.params_;
        read_doubles(bytes, offset, p.w1.data(), static_cast<std::size_t>(p.w1.size()));
        read_doubles(bytes, offset, p.b1.data(), static_cast<std::size_t>(p.b1.size()));
        read_doubles(bytes, offset, p.w2.data(), static_cast<std::size_t>(p.w2.size()));
        read_doubles(bytes, offset, p.b2.data(), static_cast<std::size_t>(p.b2.size()));
        if (offset != bytes.size()) throw FormatError("model file: trailing bytes");

        const auto& t = header.at("training");
        m.meta_.epochs = t.at("epochs").get<int>();
        m.meta_.seed = t.at("seed").get<std::uint64_t>();
        m.meta_.train_accuracy = t.at("train_accuracy").get<double>();
        if (!t.at("test_accuracy").is_null()) m.meta_.test_accuracy = t.at("test_accuracy").get<double>();
        m.meta_.epoch_losses = t.at("epoch_losses").get<std::vector<double>>();
        m.meta_.config.hidden = t.at("hidden").get<int>();
        m.meta_.config.batch_size = t.at("batch_size").get<int>();
        m.meta_.config.learning_rate = t.at("learning_rate").get<double>();
        m.meta_.config.epochs = m.meta_.epochs;
        m.meta_.dataset_checksum = header.at("dataset_checksum").get<std::string>();
        m.meta_.config_hash = header.value("config_hash", std::string{});
        return m;
    } catch (const nlohmann::json::exception& e) {
        throw FormatError(std::string("model file: missing field: ") + e.what());
    }
}

void MlpClassifier::save(const std::filesystem::path& path) const { write_file_atomic(path, serialize()); }

MlpClassifier MlpClassifier::load(const std::filesystem::path& path) { return deserialize(read_file_bytes(path)); }

MlpClassifier train(const LabeledDataset& train_set, const TrainingConfig& config, std::uint64_t seed,
                    const LabeledDataset* heldout) {
    if (train_set.empty()) throw ArgumentError("train: empty training set");
    if (config.epochs < 1) throw ArgumentError("train: epochs must be at least 1");
    if (config.batch_size < 1) throw ArgumentError("train: batch size must be at least 1");
    if (!(config.learning_rate > 0.0)) throw ArgumentError("train: learning rate must be positive");

    MlpClassifier model(train_set.shape(), config.hidden, train_set.class_count());
    model.initialize(seed);
    auto& p = model.mutable_params();

    std::vector<std::size_t> order(train_set.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    const auto width = static_cast<Eigen::Index>(train_set.shape().size());
    std::vector<double> epoch_losses;

    for (int epoch = 1; epoch <= config.epochs; ++epoch) {
        Rng rng(derive_seed(seed, static_cast<std::uint64_t>(epoch)));
        rng.shuffle(order);
        double loss_sum = 0.0;
        for (std::size_t start = 0; start < order.size(); start += static_cast<std::size_t>(config.batch_size)) {
            const std::size_t end = std::min(order.size(), start + static_cast<std::size_t>(config.batch_size));
            Batch x(static_cast<Eigen::Index>(end - start), width);
            std::vector<int> y(end - start);
            for (std::size_t i = start; i < end; ++i) {
                const auto& px = train_set.image(order[i]).pixels;
                x.row(static_cast<Eigen::Index>(i - start)) = Eigen::Map<const Eigen::RowVectorXd>(px.data(), width);
                y[i - start] = train_set.label(order[i]);
            }
            const double batch_loss = model.loss(x, y);
            if (!std::isfinite(batch_loss)) {
                throw DivergenceError(epoch, "training diverged: non-finite loss in epoch " + std::to_string(epoch));
            }
            loss_sum += batch_loss * static_cast<double>(end - start);
            const MlpParameters g = model.gradients(x, y);
            p.w1 -= config.learning_rate * g.w1;
            p.b1 -= config.learning_rate * g.b1;
            p.w2 -= config.learning_rate * g.w2;
            p.b2 -= config.learning_rate * g.b2;
        }
        epoch_losses.push_back(loss_sum / static_cast<double>(order.size()));
    }

    auto& meta = model.mutable_metadata();
    meta.epochs = config.epochs;
    meta.seed = seed;
    meta.config = config;
    meta.epoch_losses = std::move(epoch_losses);
    meta.dataset_checksum = train_set.checksum();
    meta.train_accuracy = model.accuracy(train_set);
    if (heldout != nullptr && !heldout->empty()) meta.test_accuracy = model.accuracy(*heldout);
    return model;
}

}  // namespace fgns
