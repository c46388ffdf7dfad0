#include "fgns/config.hpp"

#include <string>

#include "fgns/checksum.hpp"
#include "fgns/errors.hpp"
#include "fgns/file_util.hpp"

namespace fgns {

namespace {

void merge_strict(nlohmann::json& base, const nlohmann::json& patch, const std::string& path) {
    if (!patch.is_object()) throw ArgumentError("config: '" + path + "' must be an object");
    for (const auto& [key, value] : patch.items()) {
        const std::string full = path.empty() ? key : path + "." + key;
        if (!base.contains(key)) throw ArgumentError("config: unknown key '" + full + "'");
        if (base[key].is_object()) {
            merge_strict(base[key], value, full);
        } else {
            base[key] = value;
        }
    }
}

void apply_override(nlohmann::json& doc, const std::string& assignment) {
    const auto eq = assignment.find('=');
    if (eq == std::string::npos || eq == 0) throw ArgumentError("config: override '" + assignment + "' is not key=value");
    const std::string key = assignment.substr(0, eq);
    const std::string raw = assignment.substr(eq + 1);
    nlohmann::json* node = &doc;
    std::size_t start = 0;
    for (;;) {
        const auto dot = key.find('.', start);
        const std::string part = key.substr(start, dot == std::string::npos ? std::string::npos : dot - start);
        if (!node->is_object() || !node->contains(part)) throw ArgumentError("config: unknown key '" + key + "'");
        node = &(*node)[part];
        if (dot == std::string::npos) break;
        start = dot + 1;
    }
    if (node->is_object()) throw ArgumentError("config: '" + key + "' is a section, not a value");
    nlohmann::json value = nlohmann::json::parse(raw, nullptr, false);
    *node = value.is_discarded() ? nlohmann::json(raw) : value;
}

template <typename T>
T get(const nlohmann::json& j, const char* section, const char* key) {
    try {
        return j.at(section).at(key).get<T>();
    } catch (const nlohmann::json::exception&) {
        throw ArgumentError(std::string("config: '") + section + "." + key + "' has the wrong type");
    }
}

void require(bool ok, const std::string& what) {
    if (!ok) throw ArgumentError("config: " + what);
}

std::set<int> class_set(const nlohmann::json& j, const char* key) {
    std::set<int> out;
    try {
        for (int c : j.at(key).get<std::vector<int>>()) {
            require(c >= 0 && c < LabeledDataset::kDefaultClassCount, std::string(key) + " contains an unknown class id");
            out.insert(c);
        }
    } catch (const nlohmann::json::exception&) {
        throw ArgumentError(std::string("config: '") + key + "' must be a list of class ids");
    }
    return out;
}

}  // namespace

nlohmann::json RunConfig::defaults() {
    return nlohmann::json::parse(R"({
  "data": {
    "train_images": "data/train-images-idx3-ubyte.gz",
    "train_labels": "data/train-labels-idx1-ubyte.gz",
    "test_images": "data/t10k-images-idx3-ubyte.gz",
    "test_labels": "data/t10k-labels-idx1-ubyte.gz"
  },
  "train_classes": [],
  "eval_classes": [1, 2, 4, 5, 6, 7],
  "classifier": {"hidden": 256, "batch_size": 64, "learning_rate": 0.1, "epochs": 10},
  "pipeline": {
    "n_samples": 1000,
    "n_perturb": 500,
    "cell": 4,
    "k_local": 5,
    "kernel_width": 0.25,
    "ridge_lambda": 0.001,
    "baseline": 0.0,
    "min_freq": 0.05,
    "tau_g": 0.01,
    "k_masks": 7,
    "iou_group": 0.5,
    "iou_dedup": 0.8,
    "sage_early_stop": true,
    "sage_se_threshold": 0.01,
    "sage_min_n": 50,
    "kmeans_max_iter": 100,
    "rho": 1.0,
    "n_neighbors": 3,
    "fgns_prefilter": 0,
    "knn_all_classes": false,
    "prototype_kind": "median"
  },
  "evaluation": {"n_correct": 50, "n_incorrect": 50, "histogram_bins": 30, "distance_space": "pixel"},
  "seeds": {"train": 1, "catalog": 7, "eval": 42},
  "workers": 1,
  "output_dir": "out"
})");
}

RunConfig RunConfig::from_json(const nlohmann::json& doc, const std::vector<std::string>& overrides) {
    nlohmann::json eff = defaults();
    merge_strict(eff, doc, "");
    for (const auto& o : overrides) apply_override(eff, o);

    RunConfig cfg;
    cfg.doc_ = eff;
    try {
        const auto& d = eff.at("data");
        cfg.data = DataPaths{d.at("train_images").get<std::string>(), d.at("train_labels").get<std::string>(),
                             d.at("test_images").get<std::string>(), d.at("test_labels").get<std::string>()};
        cfg.workers = eff.at("workers").get<int>();
        cfg.output_dir = eff.at("output_dir").get<std::string>();
        cfg.seeds.train = eff.at("seeds").at("train").get<std::uint64_t>();
        cfg.seeds.catalog = eff.at("seeds").at("catalog").get<std::uint64_t>();
        cfg.seeds.eval = eff.at("seeds").at("eval").get<std::uint64_t>();
    } catch (const nlohmann::json::exception& e) {
        throw ArgumentError(std::string("config: ") + e.what());
    }
    cfg.train_classes = class_set(eff, "train_classes");
    cfg.evaluation.eval_classes = class_set(eff, "eval_classes");

    cfg.classifier.hidden = get<int>(eff, "classifier", "hidden");
    cfg.classifier.batch_size = get<int>(eff, "classifier", "batch_size");
    cfg.classifier.learning_rate = get<double>(eff, "classifier", "learning_rate");
    cfg.classifier.epochs = get<int>(eff, "classifier", "epochs");

    auto& cat = cfg.catalog;
    cat.n_samples = get<std::size_t>(eff, "pipeline", "n_samples");
    cat.lime.n_perturb = get<int>(eff, "pipeline", "n_perturb");
    cat.cell = get<int>(eff, "pipeline", "cell");
    cat.lime.k_local = get<int>(eff, "pipeline", "k_local");
    cat.lime.kernel_width = get<double>(eff, "pipeline", "kernel_width");
    cat.lime.ridge_lambda = get<double>(eff, "pipeline", "ridge_lambda");
    cat.lime.baseline = get<double>(eff, "pipeline", "baseline");
    cat.min_freq = get<double>(eff, "pipeline", "min_freq");
    cat.tau_g = get<double>(eff, "pipeline", "tau_g");
    cat.k_masks = get<int>(eff, "pipeline", "k_masks");
    cat.iou_group = get<double>(eff, "pipeline", "iou_group");
    cat.iou_dedup = get<double>(eff, "pipeline", "iou_dedup");
    cat.early_stop.enabled = get<bool>(eff, "pipeline", "sage_early_stop");
    cat.early_stop.se_threshold = get<double>(eff, "pipeline", "sage_se_threshold");
    cat.early_stop.min_n = get<std::size_t>(eff, "pipeline", "sage_min_n");
    cat.kmeans_max_iter = get<int>(eff, "pipeline", "kmeans_max_iter");
    cat.workers = cfg.workers;

    cfg.neighbors.rho = get<double>(eff, "pipeline", "rho");
    cfg.neighbors.n_neighbors = get<std::size_t>(eff, "pipeline", "n_neighbors");
    cfg.neighbors.fgns_prefilter = get<std::size_t>(eff, "pipeline", "fgns_prefilter");
    cfg.neighbors.knn_all_classes = get<bool>(eff, "pipeline", "knn_all_classes");
    const auto kind = get<std::string>(eff, "pipeline", "prototype_kind");
    require(kind == "median" || kind == "mean", "pipeline.prototype_kind must be median or mean");
    cfg.prototype_kind = kind == "median" ? PrototypeKind::median : PrototypeKind::mean;

    cfg.evaluation.n_correct = get<std::size_t>(eff, "evaluation", "n_correct");
    cfg.evaluation.n_incorrect = get<std::size_t>(eff, "evaluation", "n_incorrect");
    cfg.evaluation.histogram_bins = get<int>(eff, "evaluation", "histogram_bins");
    const auto space = get<std::string>(eff, "evaluation", "distance_space");
    require(space == "pixel" || space == "contribution", "evaluation.distance_space must be pixel or contribution");
    cfg.evaluation.space = space == "pixel" ? DistanceSpace::pixel : DistanceSpace::contribution;
    cfg.evaluation.neighbors = cfg.neighbors;

    require(cfg.classifier.hidden >= 1, "classifier.hidden must be >= 1");
    require(cfg.classifier.batch_size >= 1, "classifier.batch_size must be >= 1");
    require(cfg.classifier.learning_rate > 0.0, "classifier.learning_rate must be > 0");
    require(cfg.classifier.epochs >= 1, "classifier.epochs must be >= 1");
    require(cat.n_samples >= 1, "pipeline.n_samples must be >= 1");
    require(cat.lime.n_perturb >= 1, "pipeline.n_perturb must be >= 1");
    require(cat.cell >= 1, "pipeline.cell must be >= 1");
    require(cat.lime.k_local >= 1, "pipeline.k_local must be >= 1");
    require(cat.lime.kernel_width > 0.0, "pipeline.kernel_width must be > 0");
    require(cat.lime.ridge_lambda >= 0.0, "pipeline.ridge_lambda must be >= 0");
    require(cat.lime.baseline >= 0.0 && cat.lime.baseline <= 1.0, "pipeline.baseline must be in [0, 1]");
    require(cat.min_freq >= 0.0 && cat.min_freq <= 1.0, "pipeline.min_freq must be in [0, 1]");
    require(cat.k_masks >= 1, "pipeline.k_masks must be >= 1");
    require(cat.iou_group > 0.0 && cat.iou_group <= 1.0, "pipeline.iou_group must be in (0, 1]");
    require(cat.iou_dedup > 0.0 && cat.iou_dedup <= 1.0, "pipeline.iou_dedup must be in (0, 1]");
    require(cat.early_stop.se_threshold > 0.0, "pipeline.sage_se_threshold must be > 0");
    require(cat.kmeans_max_iter >= 1, "pipeline.kmeans_max_iter must be >= 1");
    require(cfg.neighbors.rho > 0.0, "pipeline.rho must be > 0");
    require(cfg.neighbors.n_neighbors >= 1, "pipeline.n_neighbors must be >= 1");
    require(cfg.evaluation.histogram_bins >= 1, "evaluation.histogram_bins must be >= 1");
    require(cfg.workers >= 1, "workers must be >= 1");
    return cfg;
}

RunConfig RunConfig::load(const std::filesystem::path& path, const std::vector<std::string>& overrides) {
    nlohmann::json doc = nlohmann::json::parse(read_file_text(path), nullptr, false);
    if (doc.is_discarded()) throw ArgumentError("config: " + path.string() + " is not valid JSON");
    return from_json(doc, overrides);
}

std::string RunConfig::hash() const {
    nlohmann::json canonical = doc_;
    canonical.erase("workers");
    canonical.erase("output_dir");
    return sha256_hex(canonical.dump());
}

}  // namespace fgns
