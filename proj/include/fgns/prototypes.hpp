#pragma once

#include <filesystem>
#include <map>
#include <span>
#include <string>

#include <json.hpp>

#include "fgns/dataset.hpp"

namespace fgns {

struct Prototype {
    int class_id = 0;
    Image image;           ///< pixel-wise median; id is unused
    std::size_t n_source = 0;
};

enum class PrototypeKind { median, mean };

/// Pixel-wise median of `sources`; even counts take the midpoint of the two central values.
Image pixelwise_median(std::span<const Image> sources);
Image pixelwise_mean(std::span<const Image> sources);

/// Prototype over every training instance of class c.
Prototype build_prototype(const LabeledDataset& train, int c, PrototypeKind kind = PrototypeKind::median);

class PrototypeSet {
public:
    PrototypeSet() = default;

    /// One prototype per class present in `train`.
    static PrototypeSet build(const LabeledDataset& train, PrototypeKind kind = PrototypeKind::median);

    void insert(Prototype p) { protos_[p.class_id] = std::move(p); }
    bool contains(int c) const { return protos_.contains(c); }
    /// Throws ArgumentError for an unknown class.
    const Prototype& at(int c) const;
    const std::map<int, Prototype>& all() const noexcept { return protos_; }

    nlohmann::json metadata = nlohmann::json::object();
    std::string dataset_checksum;

    nlohmann::json to_json() const;
    static PrototypeSet from_json(const nlohmann::json& j);
    void save(const std::filesystem::path& path) const;
    static PrototypeSet load(const std::filesystem::path& path);

private:
    std::map<int, Prototype> protos_;
};

}  // namespace fgns
