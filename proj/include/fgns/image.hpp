#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

namespace fgns {

struct Shape {
    int rows = 28;
    int cols = 28;

    constexpr std::size_t size() const noexcept { return static_cast<std::size_t>(rows) * static_cast<std::size_t>(cols); }
    friend constexpr bool operator==(const Shape&, const Shape&) = default;
};

/// Grayscale raster with intensities in [0, 1], row-major.
struct Image {
    std::size_t id = 0;  ///< index into the source split
    Shape shape;
    std::vector<double> pixels;

    Image() = default;
    Image(std::size_t id_, Shape shape_, std::vector<double> pixels_);
    Image(std::size_t id_, Shape shape_) : id(id_), shape(shape_), pixels(shape_.size(), 0.0) {}

    double& at(int r, int c) { return pixels[static_cast<std::size_t>(r) * shape.cols + c]; }
    double at(int r, int c) const { return pixels[static_cast<std::size_t>(r) * shape.cols + c]; }
    std::span<const double> view() const noexcept { return pixels; }
};

/// Binary pixel raster, row-major.
struct BinaryMask {
    Shape shape;
    std::vector<std::uint8_t> bits;

    BinaryMask() = default;
    explicit BinaryMask(Shape s) : shape(s), bits(s.size(), 0) {}

    std::size_t count() const noexcept;
    bool empty() const noexcept { return count() == 0; }
    friend bool operator==(const BinaryMask&, const BinaryMask&) = default;
};

/// Throws ArgumentError unless the two shapes agree.
void require_same_shape(Shape a, Shape b, const char* what);

}  // namespace fgns
