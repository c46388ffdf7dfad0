#include "fgns/segmentation.hpp"

#include <string>

#include "fgns/errors.hpp"

namespace fgns {

Segmentation grid_segmentation(int rows, int cols, int cell) {
    if (rows < 1 || cols < 1) throw ArgumentError("grid_segmentation: raster must be non-empty");
    if (cell < 1) throw ArgumentError("grid_segmentation: cell must be at least 1");
    if (cell > rows || cell > cols) {
        throw ArgumentError("grid_segmentation: cell " + std::to_string(cell) + " exceeds raster " +
                            std::to_string(rows) + "x" + std::to_string(cols));
    }
    Segmentation seg;
    seg.shape = Shape{rows, cols};
    seg.cell = cell;
    seg.grid_rows = (rows + cell - 1) / cell;
    seg.grid_cols = (cols + cell - 1) / cell;
    seg.assignment.resize(seg.shape.size());
    for (int r = 0; r < rows; ++r) {
        for (int c = 0; c < cols; ++c) {
            seg.assignment[static_cast<std::size_t>(r) * cols + c] = (r / cell) * seg.grid_cols + (c / cell);
        }
    }
    return seg;
}

std::vector<std::size_t> Segmentation::pixels_of(int s) const {
    std::vector<std::size_t> out;
    for (std::size_t p = 0; p < assignment.size(); ++p) {
        if (assignment[p] == s) out.push_back(p);
    }
    return out;
}

BinaryMask Segmentation::mask_of(int s) const {
    BinaryMask m(shape);
    for (std::size_t p = 0; p < assignment.size(); ++p) m.bits[p] = assignment[p] == s ? 1 : 0;
    return m;
}

Image perturb(const Image& image, const Segmentation& seg, const std::vector<bool>& keep, double baseline) {
    require_same_shape(image.shape, seg.shape, "perturb");
    if (keep.size() != static_cast<std::size_t>(seg.superpixel_count())) {
        throw ArgumentError("perturb: on/off vector length does not match superpixel count");
    }
    Image out = image;
    for (std::size_t p = 0; p < out.pixels.size(); ++p) {
        if (!keep[static_cast<std::size_t>(seg.assignment[p])]) out.pixels[p] = baseline;
    }
    return out;
}

Image neutralize(const Image& image, const BinaryMask& mask, double baseline) {
    require_same_shape(image.shape, mask.shape, "neutralize");
    Image out = image;
    for (std::size_t p = 0; p < out.pixels.size(); ++p) {
        if (mask.bits[p]) out.pixels[p] = baseline;
    }
    return out;
}

}  // namespace fgns
