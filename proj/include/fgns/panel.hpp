#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "fgns/image.hpp"

namespace fgns {

/// 8-bit raster, 1 (gray) or 3 (RGB) interleaved channels.
struct Raster {
    int width = 0;
    int height = 0;
    int channels = 1;
    std::vector<std::uint8_t> data;

    std::uint8_t* px(int x, int y) { return data.data() + (static_cast<std::size_t>(y) * width + x) * channels; }
    const std::uint8_t* px(int x, int y) const {
        return data.data() + (static_cast<std::size_t>(y) * width + x) * channels;
    }
};

struct PanelStyle {
    int scale = 4;
    int separator = 2;  ///< white columns between tiles
};

/// Tiles laid out left to right (query first), each upscaled by nearest neighbour.
/// With `overlay`, pixels under the mask are tinted red and the result is RGB.
Raster render_panel(std::span<const Image> tiles, const PanelStyle& style = {}, const BinaryMask* overlay = nullptr);

std::vector<std::uint8_t> encode_png(const Raster& r);
/// Binary PGM (gray) or PPM (RGB).
std::vector<std::uint8_t> encode_pnm(const Raster& r);

/// Chooses PNG or PNM from the extension (.pgm/.ppm/.pnm) and writes atomically.
void write_raster(const std::filesystem::path& path, const Raster& r);

}  // namespace fgns
