#include "fgns/prototypes.hpp"

#include <algorithm>
#include <string>
#include <vector>

#include "fgns/errors.hpp"
#include "fgns/file_util.hpp"

namespace fgns {

Image pixelwise_median(std::span<const Image> sources) {
    if (sources.empty()) throw ArgumentError("pixelwise_median: no source images");
    const Shape shape = sources.front().shape;
    for (const auto& s : sources) require_same_shape(s.shape, shape, "pixelwise_median");
    Image out(0, shape);
    std::vector<double> column(sources.size());
    const std::size_t n = sources.size();
    const std::size_t mid = n / 2;
    for (std::size_t p = 0; p < shape.size(); ++p) {
        for (std::size_t i = 0; i < n; ++i) column[i] = sources[i].pixels[p];
        std::nth_element(column.begin(), column.begin() + static_cast<std::ptrdiff_t>(mid), column.end());
        const double upper = column[mid];
        if (n % 2 == 1) {
            out.pixels[p] = upper;
        } else {
            const double lower = *std::max_element(column.begin(), column.begin() + static_cast<std::ptrdiff_t>(mid));
            out.pixels[p] = (lower + upper) / 2.0;
        }
    }
    return out;
}

Image pixelwise_mean(std::span<const Image> sources) {
    if (sources.empty()) throw ArgumentError("pixelwise_mean: no source images");
    const Shape shape = sources.front().shape;
    Image out(0, shape);
    for (const auto& s : sources) {
        require_same_shape(s.shape, shape, "pixelwise_mean");
        for (std::size_t p = 0; p < shape.size(); ++p) out.pixels[p] += s.pixels[p];
    }
    for (double& v : out.pixels) v /= static_cast<double>(sources.size());
    return out;
}

Prototype build_prototype(const LabeledDataset& train, int c, PrototypeKind kind) {
    const auto positions = train.positions_of(c);
    if (positions.empty()) throw ArgumentError("build_prototype: class " + std::to_string(c) + " has no training instances");
    std::vector<Image> sources;
    sources.reserve(positions.size());
    for (std::size_t p : positions) sources.push_back(train.image(p));
    Prototype proto;
    proto.class_id = c;
    proto.n_source = sources.size();
    proto.image = kind == PrototypeKind::median ? pixelwise_median(sources) : pixelwise_mean(sources);
    return proto;
}

PrototypeSet PrototypeSet::build(const LabeledDataset& train, PrototypeKind kind) {
    PrototypeSet set;
    for (int c : train.classes_present()) set.insert(build_prototype(train, c, kind));
    set.dataset_checksum = train.checksum();
    set.metadata["kind"] = kind == PrototypeKind::median ? "median" : "mean";
    return set;
}

const Prototype& PrototypeSet::at(int c) const {
    auto it = protos_.find(c);
    if (it == protos_.end()) throw ArgumentError("no prototype for class " + std::to_string(c));
    return it->second;
}

nlohmann::json PrototypeSet::to_json() const {
    nlohmann::json j;
    j["version"] = 1;
    j["dataset_checksum"] = dataset_checksum;
    j["metadata"] = metadata;
    nlohmann::json cls = nlohmann::json::object();
    for (const auto& [c, p] : protos_) {
        cls[std::to_string(c)] = {{"rows", p.image.shape.rows},
                                  {"cols", p.image.shape.cols},
                                  {"n_source", p.n_source},
                                  {"pixels", p.image.pixels}};
    }
    j["prototypes"] = std::move(cls);
    return j;
}

PrototypeSet PrototypeSet::from_json(const nlohmann::json& j) {
    try {
        PrototypeSet set;
        set.dataset_checksum = j.at("dataset_checksum").get<std::string>();
        set.metadata = j.value("metadata", nlohmann::json::object());
        for (const auto& [key, v] : j.at("prototypes").items()) {
            Prototype p;
            p.class_id = std::stoi(key);
            p.n_source = v.at("n_source").get<std::size_t>();
            p.image = Image(0, Shape{v.at("rows").get<int>(), v.at("cols").get<int>()},
                            v.at("pixels").get<std::vector<double>>());
            set.insert(std::move(p));
        }
        return set;
    } catch (const nlohmann::json::exception& e) {
        throw FormatError(std::string("prototypes: ") + e.what());
    }
}

void PrototypeSet::save(const std::filesystem::path& path) const { write_file_atomic(path, to_json().dump(2) + "\n"); }

PrototypeSet PrototypeSet::load(const std::filesystem::path& path) {
    try {
        return from_json(nlohmann::json::parse(read_file_text(path)));
    } catch (const nlohmann::json::parse_error& e) {
        throw FormatError(path.string() + ": " + e.what());
    }
}

}  // namespace fgns
