#pragma once

#include <cstddef>
#include <vector>

#include "fgns/image.hpp"

namespace fgns {

/// Fixed partition of a raster into superpixels. Shared by every image of the same shape.
struct Segmentation {
    Shape shape;
    int cell = 0;                    ///< grid cell edge length in pixels
    int grid_rows = 0;               ///< ceil(rows / cell)
    int grid_cols = 0;               ///< ceil(cols / cell)
    std::vector<int> assignment;     ///< superpixel id per pixel, row-major

    int superpixel_count() const noexcept { return grid_rows * grid_cols; }

    /// Pixel indices belonging to superpixel `s`, ascending.
    std::vector<std::size_t> pixels_of(int s) const;

    /// Binary mask covering superpixel `s`.
    BinaryMask mask_of(int s) const;
};

/// Regular grid of cell x cell squares; edge cells are truncated.
Segmentation grid_segmentation(int rows, int cols, int cell);

/// Copy of `image` with every superpixel whose `keep` entry is false replaced by `baseline`.
Image perturb(const Image& image, const Segmentation& seg, const std::vector<bool>& keep, double baseline);

/// Copy of `image` with the pixels under `mask` set to `baseline`.
Image neutralize(const Image& image, const BinaryMask& mask, double baseline);

}  // namespace fgns
