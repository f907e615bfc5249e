// Copyright Contributors to the hallucam Project
// SPDX-License-Identifier: Apache-2.0
//
#include "hallucam/image_io.hpp"

#include "hallucam/errors.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <string>

#include <png.h>

namespace hallucam {

namespace {

void pngError(png_structp, png_const_charp msg) { throw IoError(std::string("png: ") + msg); }
void pngWarning(png_structp, png_const_charp) {}

void appendBytes(png_structp png, png_bytep data, png_size_t length) {
    auto *out = static_cast<std::vector<std::uint8_t> *>(png_get_io_ptr(png));
    out->insert(out->end(), data, data + length);
}
void flushNothing(png_structp) {}

struct ReadCursor {
    std::span<const std::uint8_t> bytes;
    std::size_t offset = 0;
};

void readBytes(png_structp png, png_bytep data, png_size_t length) {
    auto *cur = static_cast<ReadCursor *>(png_get_io_ptr(png));
    if (cur->offset + length > cur->bytes.size()) {
        png_error(png, "unexpected end of data");
    }
    std::memcpy(data, cur->bytes.data() + cur->offset, length);
    cur->offset += length;
}

} // namespace

std::vector<std::uint8_t> encodePng(std::span<const std::uint8_t> pixels, int width, int height, int channels) {
    if (width <= 0 || height <= 0 || (channels != 1 && channels != 3)) {
        throw std::invalid_argument("png: bad image shape");
    }
    const std::size_t stride = static_cast<std::size_t>(width) * channels;
    if (pixels.size() != stride * static_cast<std::size_t>(height)) {
        throw std::invalid_argument("png: pixel buffer size does not match shape");
    }
    std::vector<std::uint8_t> out;
    png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, pngError, pngWarning);
    if (!png) {
        throw IoError("png: cannot create write struct");
    }
    png_infop info = png_create_info_struct(png);
    struct Guard {
        png_structp *png;
        png_infop *info;
        ~Guard() { png_destroy_write_struct(png, info); }
    } guard{&png, &info};
    if (!info) {
        throw IoError("png: cannot create info struct");
    }
    png_set_write_fn(png, &out, appendBytes, flushNothing);
    png_set_compression_level(png, 6);
    png_set_filter(png, PNG_FILTER_TYPE_BASE, PNG_FILTER_NONE);
    png_set_IHDR(png, info, static_cast<png_uint_32>(width), static_cast<png_uint_32>(height), 8,
                 channels == 3 ? PNG_COLOR_TYPE_RGB : PNG_COLOR_TYPE_GRAY, PNG_INTERLACE_NONE,
                 PNG_COMPRESSION_TYPE_BASE, PNG_FILTER_TYPE_BASE);
    png_write_info(png, info);
    for (int y = 0; y < height; ++y) {
        png_write_row(png, const_cast<png_bytep>(pixels.data() + stride * static_cast<std::size_t>(y)));
    }
    png_write_end(png, nullptr);
    return out;
}

void writePng(const std::filesystem::path &path, std::span<const std::uint8_t> pixels, int width, int height,
              int channels) {
    const auto bytes = encodePng(pixels, width, height, channels);
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) {
        throw IoError("cannot open '" + path.string() + "' for writing");
    }
    out.write(reinterpret_cast<const char *>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!out) {
        throw IoError("write failed for '" + path.string() + "'");
    }
}

DecodedPng decodePng(std::span<const std::uint8_t> bytes) {
    if (bytes.size() < 8 || png_sig_cmp(bytes.data(), 0, 8) != 0) {
        throw FormatError("png: bad signature");
    }
    png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, pngError, pngWarning);
    if (!png) {
        throw IoError("png: cannot create read struct");
    }
    png_infop info = png_create_info_struct(png);
    struct Guard {
        png_structp *png;
        png_infop *info;
        ~Guard() { png_destroy_read_struct(png, info, nullptr); }
    } guard{&png, &info};
    ReadCursor cursor{bytes, 0};
    png_set_read_fn(png, &cursor, readBytes);
    png_read_info(png, info);
    const int colorType = png_get_color_type(png, info);
    if (png_get_bit_depth(png, info) != 8 || (colorType != PNG_COLOR_TYPE_RGB && colorType != PNG_COLOR_TYPE_GRAY)) {
        throw FormatError("png: only 8-bit gray or RGB images are supported");
    }
    DecodedPng img;
    img.width = static_cast<int>(png_get_image_width(png, info));
    img.height = static_cast<int>(png_get_image_height(png, info));
    img.channels = colorType == PNG_COLOR_TYPE_RGB ? 3 : 1;
    const std::size_t stride = static_cast<std::size_t>(img.width) * img.channels;
    img.pixels.resize(stride * static_cast<std::size_t>(img.height));
    for (int y = 0; y < img.height; ++y) {
        png_read_row(png, img.pixels.data() + stride * static_cast<std::size_t>(y), nullptr);
    }
    return img;
}

std::vector<std::uint8_t> depthToGray(std::span<const float> depth, double near, double far) {
    if (!(far > near)) {
        throw std::invalid_argument("depth visualisation: far must exceed near");
    }
    std::vector<std::uint8_t> out(depth.size(), 0);
    for (std::size_t i = 0; i < depth.size(); ++i) {
        const double d = depth[i];
        if (!(d > 0.0) || !std::isfinite(d)) {
            continue;
        }
        const double g = 255.0 * (far - std::clamp(d, near, far)) / (far - near);
        out[i] = static_cast<std::uint8_t>(std::lround(g));
    }
    return out;
}

} // namespace hallucam
