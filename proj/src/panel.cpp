#include "fgns/panel.hpp"

#include <png.h>

#include <algorithm>
#include <cmath>
#include <string>

#include "fgns/errors.hpp"
#include "fgns/file_util.hpp"

namespace fgns {

namespace {

std::uint8_t to_byte(double v) { return static_cast<std::uint8_t>(std::lround(std::clamp(v, 0.0, 1.0) * 255.0)); }

void png_append(png_structp png, png_bytep data, png_size_t len) {
    auto* out = static_cast<std::vector<std::uint8_t>*>(png_get_io_ptr(png));
    out->insert(out->end(), data, data + len);
}

void png_noop_flush(png_structp) {}

}  // namespace

Raster render_panel(std::span<const Image> tiles, const PanelStyle& style, const BinaryMask* overlay) {
    if (tiles.empty()) throw ArgumentError("render_panel: nothing to render");
    if (style.scale < 1 || style.separator < 0) throw ArgumentError("render_panel: bad style");
    const Shape shape = tiles.front().shape;
    for (const auto& t : tiles) require_same_shape(t.shape, shape, "render_panel");
    if (overlay != nullptr) require_same_shape(overlay->shape, shape, "render_panel overlay");

    const int n = static_cast<int>(tiles.size());
    const int tile_w = shape.cols * style.scale;
    Raster r;
    r.channels = overlay != nullptr ? 3 : 1;
    r.width = n * tile_w + (n - 1) * style.separator;
    r.height = shape.rows * style.scale;
    r.data.assign(static_cast<std::size_t>(r.width) * r.height * r.channels, 255);

    for (int t = 0; t < n; ++t) {
        const int x0 = t * (tile_w + style.separator);
        for (int y = 0; y < r.height; ++y) {
            for (int x = 0; x < tile_w; ++x) {
                const int row = y / style.scale;
                const int col = x / style.scale;
                const std::uint8_t g = to_byte(tiles[static_cast<std::size_t>(t)].at(row, col));
                std::uint8_t* dst = r.px(x0 + x, y);
                if (r.channels == 1) {
                    dst[0] = g;
                } else if (overlay->bits[static_cast<std::size_t>(row) * shape.cols + col]) {
                    dst[0] = static_cast<std::uint8_t>(std::lround(0.6 * g + 0.4 * 255));
                    dst[1] = static_cast<std::uint8_t>(std::lround(0.6 * g));
                    dst[2] = static_cast<std::uint8_t>(std::lround(0.6 * g));
                } else {
                    dst[0] = dst[1] = dst[2] = g;
                }
            }
        }
    }
    return r;
}

std::vector<std::uint8_t> encode_png(const Raster& r) {
    png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    if (png == nullptr) throw Error("png: cannot create writer");
    png_infop info = png_create_info_struct(png);
    if (info == nullptr) {
        png_destroy_write_struct(&png, nullptr);
        throw Error("png: cannot create info");
    }
    std::vector<std::uint8_t> out;
    if (setjmp(png_jmpbuf(png))) {
        png_destroy_write_struct(&png, &info);
        throw Error("png: encoding failed");
    }
    png_set_write_fn(png, &out, png_append, png_noop_flush);
    png_set_IHDR(png, info, static_cast<png_uint_32>(r.width), static_cast<png_uint_32>(r.height), 8,
                 r.channels == 1 ? PNG_COLOR_TYPE_GRAY : PNG_COLOR_TYPE_RGB, PNG_INTERLACE_NONE,
                 PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
    png_write_info(png, info);
    for (int y = 0; y < r.height; ++y) png_write_row(png, const_cast<png_bytep>(r.px(0, y)));
    png_write_end(png, nullptr);
    png_destroy_write_struct(&png, &info);
    return out;
}

std::vector<std::uint8_t> encode_pnm(const Raster& r) {
    const std::string header =
        std::string(r.channels == 1 ? "P5" : "P6") + "\n" + std::to_string(r.width) + " " + std::to_string(r.height) + "\n255\n";
    std::vector<std::uint8_t> out(header.begin(), header.end());
    out.insert(out.end(), r.data.begin(), r.data.end());
    return out;
}

void write_raster(const std::filesystem::path& path, const Raster& r) {
    const auto ext = path.extension().string();
    if (ext == ".pgm" || ext == ".ppm" || ext == ".pnm") {
        write_file_atomic(path, encode_pnm(r));
    } else {
        write_file_atomic(path, encode_png(r));
    }
}

}  // namespace fgns
