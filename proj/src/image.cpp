#include "fgns/image.hpp"

#include <algorithm>
#include <string>

#include "fgns/errors.hpp"

namespace fgns {

Image::Image(std::size_t id_, Shape shape_, std::vector<double> pixels_)
    : id(id_), shape(shape_), pixels(std::move(pixels_)) {
    if (pixels.size() != shape.size()) {
        throw ArgumentError("image " + std::to_string(id) + ": pixel count does not match shape");
    }
}

std::size_t BinaryMask::count() const noexcept {
    return static_cast<std::size_t>(std::count_if(bits.begin(), bits.end(), [](std::uint8_t b) { return b != 0; }));
}

void require_same_shape(Shape a, Shape b, const char* what) {
    if (!(a == b)) {
        throw ArgumentError(std::string(what) + ": shape mismatch (" + std::to_string(a.rows) + "x" +
                            std::to_string(a.cols) + " vs " + std::to_string(b.rows) + "x" + std::to_string(b.cols) + ")");
    }
}

}  // namespace fgns
