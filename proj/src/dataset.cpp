#include "fgns/dataset.hpp"

#include <zlib.h>

#include <algorithm>
#include <fstream>
#include <iterator>

#include "fgns/checksum.hpp"
#include "fgns/errors.hpp"
#include "fgns/random.hpp"

namespace fgns {

namespace {

constexpr std::uint32_t kImagesMagic = 0x00000803;
constexpr std::uint32_t kLabelsMagic = 0x00000801;

std::vector<std::uint8_t> read_gzip(const std::filesystem::path& path) {
    gzFile f = gzopen(path.c_str(), "rb");
    if (f == nullptr) throw IoError("cannot open " + path.string());
    std::vector<std::uint8_t> out;
    std::vector<std::uint8_t> buf(1 << 16);
    for (;;) {
        int got = gzread(f, buf.data(), static_cast<unsigned>(buf.size()));
        if (got < 0) {
            int code = 0;
            std::string msg = gzerror(f, &code);
            gzclose(f);
            throw IoError(path.string() + ": gzip stream error: " + msg);
        }
        if (got == 0) break;
        out.insert(out.end(), buf.begin(), buf.begin() + got);
    }
    // A truncated gzip member reads as a short stream with Z_BUF_ERROR.
    int code = Z_OK;
    gzerror(f, &code);
    gzclose(f);
    if (code != Z_OK && code != Z_STREAM_END) throw IoError(path.string() + ": truncated gzip stream");
    return out;
}

/// File contents, transparently decompressed when the 0x1F8B prefix is present.
std::vector<std::uint8_t> read_payload(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open " + path.string());
    std::vector<std::uint8_t> raw((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    if (raw.size() >= 2 && raw[0] == 0x1F && raw[1] == 0x8B) return read_gzip(path);
    return raw;
}

std::uint32_t read_be32(const std::vector<std::uint8_t>& buf, std::size_t offset, const std::filesystem::path& path) {
    if (buf.size() < offset + 4) throw IoError(path.string() + ": truncated header");
    return (std::uint32_t{buf[offset]} << 24) | (std::uint32_t{buf[offset + 1]} << 16) |
           (std::uint32_t{buf[offset + 2]} << 8) | std::uint32_t{buf[offset + 3]};
}

void put_be32(std::vector<std::uint8_t>& out, std::uint32_t v) {
    out.push_back(static_cast<std::uint8_t>(v >> 24));
    out.push_back(static_cast<std::uint8_t>(v >> 16));
    out.push_back(static_cast<std::uint8_t>(v >> 8));
    out.push_back(static_cast<std::uint8_t>(v));
}

void write_bytes(const std::filesystem::path& path, const std::vector<std::uint8_t>& bytes, bool gzip) {
    if (gzip) {
        gzFile f = gzopen(path.c_str(), "wb");
        if (f == nullptr) throw IoError("cannot write " + path.string());
        int wrote = bytes.empty() ? 0 : gzwrite(f, bytes.data(), static_cast<unsigned>(bytes.size()));
        gzclose(f);
        if (wrote != static_cast<int>(bytes.size())) throw IoError("short write to " + path.string());
        return;
    }
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot write " + path.string());
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw IoError("short write to " + path.string());
}

}  // namespace

const char* to_string(Split s) noexcept { return s == Split::train ? "train" : "test"; }

LabeledDataset::LabeledDataset(std::vector<Image> images, std::vector<int> labels, Split split, std::string checksum,
                               int class_count)
    : images_(std::move(images)),
      labels_(std::move(labels)),
      split_(split),
      checksum_(std::move(checksum)),
      class_count_(class_count) {
    if (images_.size() != labels_.size()) {
        throw ConsistencyError("dataset: " + std::to_string(images_.size()) + " images but " +
                               std::to_string(labels_.size()) + " labels");
    }
    if (!images_.empty()) shape_ = images_.front().shape;
    by_id_.reserve(images_.size());
    for (std::size_t i = 0; i < images_.size(); ++i) {
        if (!(images_[i].shape == shape_)) throw ConsistencyError("dataset: images have differing shapes");
        if (labels_[i] < 0 || labels_[i] >= class_count_) {
            throw ConsistencyError("dataset: label " + std::to_string(labels_[i]) + " outside class universe");
        }
        if (!by_id_.emplace(images_[i].id, i).second) {
            throw ConsistencyError("dataset: duplicate image id " + std::to_string(images_[i].id));
        }
    }
}

std::optional<std::size_t> LabeledDataset::find(std::size_t id) const {
    auto it = by_id_.find(id);
    if (it == by_id_.end()) return std::nullopt;
    return it->second;
}

std::vector<std::size_t> LabeledDataset::positions_of(int c) const {
    std::vector<std::size_t> out;
    for (std::size_t i = 0; i < labels_.size(); ++i) {
        if (labels_[i] == c) out.push_back(i);
    }
    return out;
}

std::vector<int> LabeledDataset::classes_present() const {
    std::vector<int> out(labels_);
    std::sort(out.begin(), out.end());
    out.erase(std::unique(out.begin(), out.end()), out.end());
    return out;
}

LabeledDataset load_idx(const std::filesystem::path& images_path, const std::filesystem::path& labels_path,
                        Split split) {
    const auto img_bytes = read_payload(images_path);
    const auto lbl_bytes = read_payload(labels_path);

    if (read_be32(img_bytes, 0, images_path) != kImagesMagic) {
        throw FormatError(images_path.string() + ": bad IDX image magic number");
    }
    if (read_be32(lbl_bytes, 0, labels_path) != kLabelsMagic) {
        throw FormatError(labels_path.string() + ": bad IDX label magic number");
    }
    const std::size_t n_images = read_be32(img_bytes, 4, images_path);
    const auto rows = static_cast<int>(read_be32(img_bytes, 8, images_path));
    const auto cols = static_cast<int>(read_be32(img_bytes, 12, images_path));
    const std::size_t n_labels = read_be32(lbl_bytes, 4, labels_path);
    if (rows <= 0 || cols <= 0) throw FormatError(images_path.string() + ": non-positive image dimensions");
    if (n_images != n_labels) {
        throw ConsistencyError("image count " + std::to_string(n_images) + " does not match label count " +
                               std::to_string(n_labels));
    }
    const Shape shape{rows, cols};
    if (img_bytes.size() < 16 + n_images * shape.size()) throw IoError(images_path.string() + ": truncated pixel data");
    if (lbl_bytes.size() < 8 + n_labels) throw IoError(labels_path.string() + ": truncated label data");

    std::vector<Image> images;
    std::vector<int> labels;
    images.reserve(n_images);
    labels.reserve(n_labels);
    for (std::size_t i = 0; i < n_images; ++i) {
        std::vector<double> px(shape.size());
        const std::uint8_t* src = img_bytes.data() + 16 + i * shape.size();
        for (std::size_t p = 0; p < px.size(); ++p) px[p] = src[p] / 255.0;
        images.emplace_back(i, shape, std::move(px));
        int y = lbl_bytes[8 + i];
        if (y >= LabeledDataset::kDefaultClassCount) {
            throw FormatError(labels_path.string() + ": label " + std::to_string(y) + " at index " +
                              std::to_string(i) + " outside 0-9");
        }
        labels.push_back(y);
    }

    Sha256 h;
    h.update(img_bytes).update(lbl_bytes);
    return LabeledDataset(std::move(images), std::move(labels), split, h.hex());
}

LabeledDataset filter_classes(const LabeledDataset& ds, const std::set<int>& keep) {
    if (keep.empty()) throw ArgumentError("filter_classes: empty class set");
    for (int c : keep) {
        if (c < 0 || c >= ds.class_count()) {
            throw ArgumentError("filter_classes: unknown class id " + std::to_string(c));
        }
    }
    std::vector<Image> images;
    std::vector<int> labels;
    for (std::size_t i = 0; i < ds.size(); ++i) {
        if (keep.contains(ds.label(i))) {
            images.push_back(ds.image(i));
            labels.push_back(ds.label(i));
        }
    }
    return LabeledDataset(std::move(images), std::move(labels), ds.split(), ds.checksum(), ds.class_count());
}

std::vector<std::size_t> sample_class_positions(const LabeledDataset& ds, int c, std::size_t n, std::uint64_t seed) {
    if (n < 1) throw ArgumentError("sample_class: n must be at least 1");
    auto pos = ds.positions_of(c);
    if (pos.empty()) throw ArgumentError("sample_class: class " + std::to_string(c) + " absent from dataset");
    Rng rng(derive_seed(seed, static_cast<std::uint64_t>(c)));
    rng.shuffle(pos);
    pos.resize(std::min(n, pos.size()));
    return pos;
}

std::vector<Image> sample_class(const LabeledDataset& ds, int c, std::size_t n, std::uint64_t seed) {
    std::vector<Image> out;
    for (std::size_t p : sample_class_positions(ds, c, n, seed)) out.push_back(ds.image(p));
    return out;
}

void write_idx(const LabeledDataset& ds, const std::filesystem::path& images_path,
               const std::filesystem::path& labels_path, bool gzip) {
    const Shape shape = ds.shape();
    std::vector<std::uint8_t> img;
    img.reserve(16 + ds.size() * shape.size());
    put_be32(img, kImagesMagic);
    put_be32(img, static_cast<std::uint32_t>(ds.size()));
    put_be32(img, static_cast<std::uint32_t>(shape.rows));
    put_be32(img, static_cast<std::uint32_t>(shape.cols));
    for (const auto& im : ds.images()) {
        for (double p : im.pixels) {
            img.push_back(static_cast<std::uint8_t>(std::clamp(std::lround(p * 255.0), 0L, 255L)));
        }
    }
    std::vector<std::uint8_t> lbl;
    put_be32(lbl, kLabelsMagic);
    put_be32(lbl, static_cast<std::uint32_t>(ds.size()));
    for (int y : ds.labels()) lbl.push_back(static_cast<std::uint8_t>(y));
    write_bytes(images_path, img, gzip);
    write_bytes(labels_path, lbl, gzip);
}

}  // namespace fgns
