#include "fgns/commands.hpp"

#include <iomanip>
#include <ostream>

#include "fgns/checksum.hpp"
#include "fgns/errors.hpp"
#include "fgns/file_util.hpp"
#include "fgns/panel.hpp"

namespace fgns {

namespace {

LabeledDataset load_train(const RunConfig& cfg) {
    auto ds = load_idx(cfg.data.train_images, cfg.data.train_labels, Split::train);
    if (!cfg.train_classes.empty()) ds = filter_classes(ds, cfg.train_classes);
    return ds;
}

LabeledDataset load_test(const RunConfig& cfg) {
    return load_idx(cfg.data.test_images, cfg.data.test_labels, Split::test);
}

MlpClassifier load_model(const ArtifactPaths& paths) {
    if (!std::filesystem::exists(paths.model)) {
        throw IoError("model file " + paths.model.string() + " not found; run `train` first");
    }
    return MlpClassifier::load(paths.model);
}

void require_model_matches(const MlpClassifier& model, const LabeledDataset& train) {
    if (model.metadata().dataset_checksum != train.checksum()) {
        throw ChecksumMismatchError("model was trained on dataset " + model.metadata().dataset_checksum +
                                    " but the configured training data hashes to " + train.checksum());
    }
}

struct Artifacts {
    MlpClassifier model;
    std::string model_checksum;
    LabeledDataset train;
    ClassFeatureCatalog catalog;
    PrototypeSet protos;
};

Artifacts load_artifacts(const RunConfig& cfg) {
    const auto paths = ArtifactPaths::in(cfg.output_dir);
    MlpClassifier model = load_model(paths);
    const std::string model_checksum = sha256_file(paths.model);
    LabeledDataset train = load_train(cfg);
    require_model_matches(model, train);
    for (const auto& p : {paths.catalog, paths.prototypes}) {
        if (!std::filesystem::exists(p)) throw IoError(p.string() + " not found; run `build-features` first");
    }
    ClassFeatureCatalog catalog = ClassFeatureCatalog::load(paths.catalog);
    PrototypeSet protos = PrototypeSet::load(paths.prototypes);
    if (catalog.model_checksum != model_checksum) {
        throw ChecksumMismatchError("catalog was built from a different model file; rerun `build-features`");
    }
    if (catalog.dataset_checksum != train.checksum() || protos.dataset_checksum != train.checksum()) {
        throw ChecksumMismatchError("catalog/prototypes were built from different training data; rerun `build-features`");
    }
    return Artifacts{std::move(model), model_checksum, std::move(train), std::move(catalog), std::move(protos)};
}

std::vector<Image> panel_tiles(const Explanation& ex, const Image& query, const LabeledDataset& train) {
    std::vector<Image> tiles{query};
    for (const auto& nb : ex.neighbors) {
        const auto pos = train.find(nb.train_id);
        if (!pos) throw ArgumentError("neighbor " + std::to_string(nb.train_id) + " is not in the training set");
        tiles.push_back(train.image(*pos));
    }
    return tiles;
}

BinaryMask mask_union(const ClassFeatureCatalog& catalog, int c, Shape shape) {
    BinaryMask u(shape);
    for (const auto& m : catalog.masks_for(c)) {
        for (std::size_t p = 0; p < u.bits.size(); ++p) u.bits[p] |= m.mask.bits[p];
    }
    return u;
}

template <typename Fn>
int guarded(std::ostream& err, Fn&& fn) {
    try {
        return fn();
    } catch (const std::exception& e) {
        err << "error: " << e.what() << "\n";
        return exit_code_for(e);
    }
}

}  // namespace

ArtifactPaths ArtifactPaths::in(const std::filesystem::path& dir) {
    return ArtifactPaths{dir / "model.bin",     dir / "catalog.json",     dir / "prototypes.json", dir / "explanations",
                         dir / "report.json",   dir / "report.txt",       dir / "histogram.csv"};
}

int exit_code_for(const std::exception& e) noexcept {
    if (dynamic_cast<const DivergenceError*>(&e)) return kExitDivergence;
    if (dynamic_cast<const ChecksumMismatchError*>(&e)) return kExitChecksumMismatch;
    if (dynamic_cast<const InsufficientDataError*>(&e)) return kExitInsufficientData;
    if (dynamic_cast<const IoError*>(&e) || dynamic_cast<const FormatError*>(&e) ||
        dynamic_cast<const ConsistencyError*>(&e) || dynamic_cast<const ArgumentError*>(&e)) {
        return kExitInputError;
    }
    return kExitFailure;
}

int cmd_train(const RunConfig& cfg, std::ostream& out, std::ostream& err) {
    return guarded(err, [&] {
        const auto paths = ArtifactPaths::in(cfg.output_dir);
        const LabeledDataset train_set = load_train(cfg);
        LabeledDataset test_set = load_test(cfg);
        if (!cfg.train_classes.empty()) test_set = filter_classes(test_set, cfg.train_classes);
        out << "training on " << train_set.size() << " images (" << train_set.classes_present().size()
            << " classes), seed " << cfg.seeds.train << "\n";
        MlpClassifier model = train(train_set, cfg.classifier, cfg.seeds.train, &test_set);
        model.mutable_metadata().config_hash = cfg.hash();
        model.save(paths.model);
        const auto& meta = model.metadata();
        out << std::fixed << std::setprecision(4) << "train accuracy: " << meta.train_accuracy
            << "  test accuracy: " << meta.test_accuracy.value_or(0.0) << "\n";
        out << "model: " << paths.model.string() << "  sha256 " << sha256_file(paths.model) << "\n";
        return static_cast<int>(kExitOk);
    });
}

int cmd_build_features(const RunConfig& cfg, std::ostream& out, std::ostream& err) {
    return guarded(err, [&] {
        const auto paths = ArtifactPaths::in(cfg.output_dir);
        const MlpClassifier model = load_model(paths);
        const std::string model_checksum = sha256_file(paths.model);
        const LabeledDataset train_set = load_train(cfg);
        require_model_matches(model, train_set);

        std::vector<ClassBuildLog> log;
        ClassFeatureCatalog catalog = build_catalog(model, train_set, cfg.catalog, cfg.seeds.catalog, &log);
        catalog.model_checksum = model_checksum;
        catalog.metadata["config_hash"] = cfg.hash();
        PrototypeSet protos = PrototypeSet::build(train_set, cfg.prototype_kind);
        protos.metadata["config_hash"] = cfg.hash();

        for (const auto& entry : log) {
            const auto& masks = catalog.masks_for(entry.class_id);
            out << "class " << entry.class_id << ": " << entry.n_sampled << " sampled, " << entry.n_candidates
                << " candidates, " << entry.n_retained << " retained, " << masks.size() << " masks; sage scores";
            for (const auto& m : masks) out << ' ' << std::fixed << std::setprecision(4) << m.sage_score;
            out << "\n";
        }
        for (int c : catalog.fallback_classes) {
            err << "warning: class " << c << " has no validated masks; FGNS falls back to the baseline ranking\n";
        }
        catalog.save(paths.catalog);
        protos.save(paths.prototypes);
        out << "catalog: " << paths.catalog.string() << "  sha256 " << sha256_file(paths.catalog) << "\n";
        out << "prototypes: " << paths.prototypes.string() << "\n";
        return static_cast<int>(kExitOk);
    });
}

int cmd_explain(const RunConfig& cfg, const ExplainRequest& req, std::ostream& out, std::ostream& err) {
    return guarded(err, [&] {
        if (req.image_format != "png" && req.image_format != "pgm") {
            throw ArgumentError("image format must be png or pgm");
        }
        const auto paths = ArtifactPaths::in(cfg.output_dir);
        const Artifacts art = load_artifacts(cfg);
        const LabeledDataset test_set = load_test(cfg);
        const auto pos = test_set.find(req.query_id);
        if (!pos) throw ArgumentError("unknown query id " + std::to_string(req.query_id));
        const Image& query = test_set.image(*pos);

        const KnnIndex index(art.model, art.train);
        Explanation ex = explain(query, art.model, art.train, art.catalog, art.protos, req.method, cfg.neighbors, &index);
        ex.true_class = test_set.label(*pos);

        const std::string stem = "query-" + std::to_string(req.query_id) + "-" + to_string(req.method);
        const BinaryMask overlay = mask_union(art.catalog, ex.predicted_class, query.shape);
        const bool tint = req.overlay && !overlay.empty();
        const Raster panel = render_panel(panel_tiles(ex, query, art.train), PanelStyle{}, tint ? &overlay : nullptr);
        const std::string ext = req.image_format == "pgm" ? (tint ? ".ppm" : ".pgm") : ".png";
        const auto image_path = paths.explanations / (stem + ext);

        nlohmann::json record = ex.to_json();
        record["config_hash"] = cfg.hash();
        record["panel"] = image_path.filename().string();
        write_raster(image_path, panel);
        write_file_atomic(paths.explanations / (stem + ".json"), record.dump(2) + "\n");

        out << "query " << ex.query_id << " (label " << *ex.true_class << ") predicted " << ex.predicted_class
            << (ex.predicted_class == *ex.true_class ? "" : "  [misclassified]") << "\n";
        out << "method " << to_string(ex.method) << (ex.fallback ? " (fallback to baseline)" : "") << "\n";
        for (const auto& nb : ex.neighbors) {
            out << "  train " << nb.train_id << "  label " << nb.label << "  score " << std::setprecision(6) << nb.score << "\n";
        }
        out << "panel: " << image_path.string() << "\n";
        return static_cast<int>(kExitOk);
    });
}

int cmd_render(const RunConfig& cfg, const RenderRequest& req, std::ostream& out, std::ostream& err) {
    return guarded(err, [&] {
        nlohmann::json doc = nlohmann::json::parse(read_file_text(req.explanation), nullptr, false);
        if (doc.is_discarded()) throw FormatError(req.explanation.string() + " is not valid JSON");
        const Explanation ex = Explanation::from_json(doc);
        const LabeledDataset train_set = load_train(cfg);
        const LabeledDataset test_set = load_test(cfg);
        const auto pos = test_set.find(ex.query_id);
        if (!pos) throw ArgumentError("unknown query id " + std::to_string(ex.query_id));
        const Image& query = test_set.image(*pos);

        std::optional<BinaryMask> overlay;
        if (req.overlay) {
            const auto catalog = ClassFeatureCatalog::load(ArtifactPaths::in(cfg.output_dir).catalog);
            overlay = mask_union(catalog, ex.predicted_class, query.shape);
            if (overlay->empty()) overlay.reset();
        }
        const Raster panel = render_panel(panel_tiles(ex, query, train_set), PanelStyle{}, overlay ? &*overlay : nullptr);
        write_raster(req.output, panel);
        out << "panel: " << req.output.string() << " (" << panel.width << "x" << panel.height << ")\n";
        return static_cast<int>(kExitOk);
    });
}

int cmd_evaluate(const RunConfig& cfg, std::ostream& out, std::ostream& err) {
    return guarded(err, [&] {
        const auto paths = ArtifactPaths::in(cfg.output_dir);
        const Artifacts art = load_artifacts(cfg);
        const LabeledDataset test_set = load_test(cfg);
        MetricReport report = run_quant_eval(art.model, test_set, art.train, art.catalog, art.protos, cfg.evaluation,
                                             cfg.seeds.eval);
        report.metadata["config_hash"] = cfg.hash();
        report.metadata["model_checksum"] = art.model_checksum;
        report.metadata["dataset_checksum"] = art.train.checksum();
        if (report.sample.n_incorrect < cfg.evaluation.n_incorrect) {
            err << "warning: only " << report.sample.n_incorrect << " misclassified test instances available (wanted "
                << cfg.evaluation.n_incorrect << ")\n";
        }
        write_file_atomic(paths.report_json, report.to_json().dump(2) + "\n");
        const std::string text = report.to_text();
        write_file_atomic(paths.report_text, text);
        write_file_atomic(paths.histogram_csv, "# config_hash " + cfg.hash() + "\n" + report.histogram_csv());
        out << text;
        return static_cast<int>(kExitOk);
    });
}

}  // namespace fgns
