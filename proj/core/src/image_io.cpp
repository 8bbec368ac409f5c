// Copyright (C) 2026 The ldla Authors
// SPDX-License-Identifier: Apache-2.0

#include "ldla/image_io.hpp"

#include "ldla/errors.hpp"

#include <png.h>

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iterator>

namespace ldla {

namespace {

struct ReadCursor {
    std::span<const unsigned char> bytes;
    std::size_t pos = 0;
};

void read_cb(png_structp png, png_bytep out, png_size_t n) {
    auto* cur = static_cast<ReadCursor*>(png_get_io_ptr(png));
    if (cur->pos + n > cur->bytes.size()) {
        png_error(png, "truncated PNG");
    }
    std::memcpy(out, cur->bytes.data() + cur->pos, n);
    cur->pos += n;
}

void write_cb(png_structp png, png_bytep data, png_size_t n) {
    auto* out = static_cast<std::vector<unsigned char>*>(png_get_io_ptr(png));
    out->insert(out->end(), data, data + n);
}

void flush_cb(png_structp) {}

[[noreturn]] void error_cb(png_structp, png_const_charp msg) { throw ParseError(std::string("png: ") + msg); }

void warning_cb(png_structp, png_const_charp) {}

}  // namespace

unsigned char quantize_channel(double v) {
    const double c = std::clamp(v, 0.0, 1.0);
    return static_cast<unsigned char>(std::lround(c * 255.0));
}

Tensor decode_png(std::span<const unsigned char> bytes) {
    if (bytes.size() < 8 || png_sig_cmp(bytes.data(), 0, 8) != 0) {
        throw ParseError("not a PNG stream");
    }
    png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, error_cb, warning_cb);
    png_infop info = png ? png_create_info_struct(png) : nullptr;
    if (!png || !info) {
        png_destroy_read_struct(&png, &info, nullptr);
        throw Error("png: allocation failed");
    }
    ReadCursor cursor{bytes, 0};
    Tensor image;
    try {
        png_set_read_fn(png, &cursor, read_cb);
        png_read_info(png, info);
        png_set_strip_16(png);
        png_set_palette_to_rgb(png);
        png_set_expand_gray_1_2_4_to_8(png);
        png_set_gray_to_rgb(png);
        png_set_strip_alpha(png);
        png_read_update_info(png, info);
        const auto w = static_cast<int>(png_get_image_width(png, info));
        const auto h = static_cast<int>(png_get_image_height(png, info));
        const auto rowbytes = png_get_rowbytes(png, info);
        if (rowbytes != static_cast<png_size_t>(w) * 3) {
            throw ParseError("png: unsupported pixel layout");
        }
        std::vector<unsigned char> buf(rowbytes * static_cast<std::size_t>(h));
        std::vector<png_bytep> rows(static_cast<std::size_t>(h));
        for (int y = 0; y < h; ++y) {
            rows[static_cast<std::size_t>(y)] = buf.data() + static_cast<std::size_t>(y) * rowbytes;
        }
        png_read_image(png, rows.data());
        image = Tensor::grid(3, h, w);
        for (int y = 0; y < h; ++y) {
            for (int x = 0; x < w; ++x) {
                for (int c = 0; c < 3; ++c) {
                    image.at(c, y, x) = buf[static_cast<std::size_t>(y) * rowbytes + 3 * x + c] / 255.0;
                }
            }
        }
    } catch (...) {
        png_destroy_read_struct(&png, &info, nullptr);
        throw;
    }
    png_destroy_read_struct(&png, &info, nullptr);
    return image;
}

std::vector<unsigned char> encode_png(const Tensor& image) {
    if (image.rank() != 3 || image.channels() != 3) {
        throw ShapeError("encode_png: expected (3,H,W), got " + image.shape_string());
    }
    png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, error_cb, warning_cb);
    png_infop info = png ? png_create_info_struct(png) : nullptr;
    if (!png || !info) {
        png_destroy_write_struct(&png, &info);
        throw Error("png: allocation failed");
    }
    std::vector<unsigned char> out;
    try {
        const int w = image.width(), h = image.height();
        png_set_write_fn(png, &out, write_cb, flush_cb);
        png_set_IHDR(png, info, static_cast<png_uint_32>(w), static_cast<png_uint_32>(h), 8, PNG_COLOR_TYPE_RGB,
                     PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
        png_write_info(png, info);
        std::vector<unsigned char> row(static_cast<std::size_t>(w) * 3);
        for (int y = 0; y < h; ++y) {
            for (int x = 0; x < w; ++x) {
                for (int c = 0; c < 3; ++c) {
                    row[3 * static_cast<std::size_t>(x) + c] = quantize_channel(image.at(c, y, x));
                }
            }
            png_write_row(png, row.data());
        }
        png_write_end(png, nullptr);
    } catch (...) {
        png_destroy_write_struct(&png, &info);
        throw;
    }
    png_destroy_write_struct(&png, &info);
    return out;
}

Tensor read_png(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw IoError(path, "cannot open image");
    }
    const std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    try {
        return decode_png(bytes);
    } catch (const ParseError& e) {
        throw IoError(path, e.what());
    }
}

void write_png(const std::string& path, const Tensor& image) {
    const auto bytes = encode_png(image);
    std::ofstream out(path, std::ios::binary);
    if (!out) {
        throw IoError(path, "cannot open for writing");
    }
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!out) {
        throw IoError(path, "write failed");
    }
}

}  // namespace ldla
