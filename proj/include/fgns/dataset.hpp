#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <set>
#include <string>
#include <unordered_map>
#include <vector>

#include "fgns/image.hpp"

namespace fgns {

enum class Split { train, test };

const char* to_string(Split s) noexcept;

/// Images and labels in file order. Immutable after construction.
class LabeledDataset {
public:
    static constexpr int kDefaultClassCount = 10;

    LabeledDataset() = default;
    LabeledDataset(std::vector<Image> images, std::vector<int> labels, Split split, std::string checksum,
                   int class_count = kDefaultClassCount);

    std::size_t size() const noexcept { return images_.size(); }
    bool empty() const noexcept { return images_.empty(); }
    Shape shape() const noexcept { return shape_; }
    Split split() const noexcept { return split_; }
    int class_count() const noexcept { return class_count_; }
    const std::string& checksum() const noexcept { return checksum_; }

    const Image& image(std::size_t pos) const { return images_.at(pos); }
    int label(std::size_t pos) const { return labels_.at(pos); }
    const std::vector<Image>& images() const noexcept { return images_; }
    const std::vector<int>& labels() const noexcept { return labels_; }

    /// Position of the instance with source id `id`, if present.
    std::optional<std::size_t> find(std::size_t id) const;

    /// Positions of every instance labelled `c`, in dataset order.
    std::vector<std::size_t> positions_of(int c) const;

    /// Distinct labels present, ascending.
    std::vector<int> classes_present() const;

private:
    std::vector<Image> images_;
    std::vector<int> labels_;
    Split split_ = Split::train;
    std::string checksum_;
    int class_count_ = kDefaultClassCount;
    Shape shape_{};
    std::unordered_map<std::size_t, std::size_t> by_id_;
};

/// Reads an IDX image/label pair (raw or gzip-compressed) and normalizes bytes by 1/255.
LabeledDataset load_idx(const std::filesystem::path& images_path, const std::filesystem::path& labels_path,
                        Split split = Split::train);

/// Instances whose label is in `keep`, original order and ids preserved.
LabeledDataset filter_classes(const LabeledDataset& ds, const std::set<int>& keep);

/// min(n, |class c|) distinct instances of class c chosen by a seeded permutation.
std::vector<Image> sample_class(const LabeledDataset& ds, int c, std::size_t n, std::uint64_t seed);

/// Same selection as sample_class, returned as dataset positions.
std::vector<std::size_t> sample_class_positions(const LabeledDataset& ds, int c, std::size_t n, std::uint64_t seed);

/// Writes an IDX pair (uncompressed, or gzip when `gzip` is set). Pixels are re-quantized by round(p*255).
void write_idx(const LabeledDataset& ds, const std::filesystem::path& images_path,
               const std::filesystem::path& labels_path, bool gzip = false);

}  // namespace fgns
