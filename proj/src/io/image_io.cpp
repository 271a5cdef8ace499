#include "rpf/io/image_io.hpp"

#include <algorithm>
#include <cmath>
#include <csetjmp>
#include <cstdio>
#include <cstring>
#include <memory>
#include <stdexcept>
#include <vector>

#include <jpeglib.h>
#include <png.h>

namespace rpf::io {

namespace {

struct FileCloser {
    void operator()(FILE* f) const {
        if (f) std::fclose(f);
    }
};
using FilePtr = std::unique_ptr<FILE, FileCloser>;

ImageData from_rows(const std::vector<std::vector<uint8_t>>& rows, int h, int w, int channels,
                    int bytes_per_sample) {
    const double scale = bytes_per_sample == 2 ? 65535.0 : 255.0;
    ImageData img;
    if (channels == 1) {
        img.channels = 1;
        img.pixels = Tensor({h, w});
        for (int y = 0; y < h; ++y)
            for (int x = 0; x < w; ++x) {
                double v;
                if (bytes_per_sample == 2) {
                    const uint8_t* p = &rows[static_cast<size_t>(y)][static_cast<size_t>(x) * 2];
                    v = static_cast<double>((p[0] << 8) | p[1]);  // PNG is big-endian
                } else {
                    v = rows[static_cast<size_t>(y)][static_cast<size_t>(x)];
                }
                img.pixels.at(y, x) = v / scale;
            }
    } else {
        img.channels = 3;
        img.pixels = Tensor({3, h, w});
        for (int y = 0; y < h; ++y)
            for (int x = 0; x < w; ++x)
                for (int c = 0; c < 3; ++c) {
                    double v;
                    if (bytes_per_sample == 2) {
                        const uint8_t* p =
                            &rows[static_cast<size_t>(y)][(static_cast<size_t>(x) * 3 + c) * 2];
                        v = static_cast<double>((p[0] << 8) | p[1]);
                    } else {
                        v = rows[static_cast<size_t>(y)][static_cast<size_t>(x) * 3 + c];
                    }
                    img.pixels.at(c, y, x) = v / scale;
                }
    }
    return img;
}

ImageData read_png(const std::string& path) {
    FilePtr f(std::fopen(path.c_str(), "rb"));
    if (!f) throw std::runtime_error("cannot open image: " + path);
    png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    png_infop info = png_create_info_struct(png);
    if (setjmp(png_jmpbuf(png))) {
        png_destroy_read_struct(&png, &info, nullptr);
        throw std::runtime_error("png decode failed: " + path);
    }
    png_init_io(png, f.get());
    png_read_info(png, info);

    png_set_palette_to_rgb(png);
    png_set_expand_gray_1_2_4_to_8(png);
    if (png_get_valid(png, info, PNG_INFO_tRNS)) png_set_tRNS_to_alpha(png);
    png_set_strip_alpha(png);
    png_read_update_info(png, info);

    const int h = static_cast<int>(png_get_image_height(png, info));
    const int w = static_cast<int>(png_get_image_width(png, info));
    const int depth = png_get_bit_depth(png, info);
    const int color = png_get_color_type(png, info);
    const int channels = color == PNG_COLOR_TYPE_GRAY ? 1 : 3;
    const int bps = depth == 16 ? 2 : 1;

    std::vector<std::vector<uint8_t>> rows(static_cast<size_t>(h));
    std::vector<png_bytep> row_ptrs(static_cast<size_t>(h));
    for (int y = 0; y < h; ++y) {
        rows[static_cast<size_t>(y)].resize(static_cast<size_t>(w) * channels * bps);
        row_ptrs[static_cast<size_t>(y)] = rows[static_cast<size_t>(y)].data();
    }
    png_read_image(png, row_ptrs.data());
    png_read_end(png, nullptr);
    png_destroy_read_struct(&png, &info, nullptr);
    return from_rows(rows, h, w, channels, bps);
}

struct JpegErrorMgr {
    jpeg_error_mgr pub;
    std::jmp_buf jump;
};

void jpeg_error_exit(j_common_ptr cinfo) {
    auto* mgr = reinterpret_cast<JpegErrorMgr*>(cinfo->err);
    std::longjmp(mgr->jump, 1);
}

ImageData read_jpeg(const std::string& path) {
    FilePtr f(std::fopen(path.c_str(), "rb"));
    if (!f) throw std::runtime_error("cannot open image: " + path);
    jpeg_decompress_struct cinfo;
    JpegErrorMgr err;
    cinfo.err = jpeg_std_error(&err.pub);
    err.pub.error_exit = jpeg_error_exit;
    if (setjmp(err.jump)) {
        jpeg_destroy_decompress(&cinfo);
        throw std::runtime_error("jpeg decode failed: " + path);
    }
    jpeg_create_decompress(&cinfo);
    jpeg_stdio_src(&cinfo, f.get());
    jpeg_read_header(&cinfo, TRUE);
    cinfo.out_color_space = cinfo.num_components == 1 ? JCS_GRAYSCALE : JCS_RGB;
    jpeg_start_decompress(&cinfo);

    const int h = static_cast<int>(cinfo.output_height);
    const int w = static_cast<int>(cinfo.output_width);
    const int channels = cinfo.output_components == 1 ? 1 : 3;
    std::vector<std::vector<uint8_t>> rows(static_cast<size_t>(h));
    for (int y = 0; y < h; ++y) {
        rows[static_cast<size_t>(y)].resize(static_cast<size_t>(w) * channels);
        uint8_t* ptr = rows[static_cast<size_t>(y)].data();
        jpeg_read_scanlines(&cinfo, &ptr, 1);
    }
    jpeg_finish_decompress(&cinfo);
    jpeg_destroy_decompress(&cinfo);
    return from_rows(rows, h, w, channels, 1);
}

uint8_t quantize8(double v) {
    return static_cast<uint8_t>(std::clamp(std::lround(v * 255.0), 0L, 255L));
}

void write_png_impl(const std::string& path, const Tensor& pixels, int channels, int depth) {
    const int h = pixels.height(), w = pixels.width();
    FilePtr f(std::fopen(path.c_str(), "wb"));
    if (!f) throw std::runtime_error("cannot open for write: " + path);
    png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    png_infop info = png_create_info_struct(png);
    if (setjmp(png_jmpbuf(png))) {
        png_destroy_write_struct(&png, &info);
        throw std::runtime_error("png encode failed: " + path);
    }
    png_init_io(png, f.get());
    png_set_IHDR(png, info, static_cast<png_uint_32>(w), static_cast<png_uint_32>(h), depth,
                 channels == 1 ? PNG_COLOR_TYPE_GRAY : PNG_COLOR_TYPE_RGB,
                 PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
    png_set_compression_level(png, 6);
    png_write_info(png, info);

    const int bps = depth == 16 ? 2 : 1;
    std::vector<uint8_t> row(static_cast<size_t>(w) * channels * bps);
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            for (int c = 0; c < channels; ++c) {
                const double v = channels == 1 ? pixels.at(y, x) : pixels.at(c, y, x);
                if (depth == 16) {
                    const uint16_t q = static_cast<uint16_t>(
                        std::clamp(std::lround(v * 65535.0), 0L, 65535L));
                    row[(static_cast<size_t>(x) * channels + c) * 2] = static_cast<uint8_t>(q >> 8);
                    row[(static_cast<size_t>(x) * channels + c) * 2 + 1] =
                        static_cast<uint8_t>(q & 0xff);
                } else {
                    row[static_cast<size_t>(x) * channels + c] = quantize8(v);
                }
            }
        }
        png_write_row(png, row.data());
    }
    png_write_end(png, nullptr);
    png_destroy_write_struct(&png, &info);
}

}  // namespace

ImageData read_image(const std::string& path) {
    FilePtr f(std::fopen(path.c_str(), "rb"));
    if (!f) throw std::runtime_error("cannot open image: " + path);
    uint8_t magic[4] = {0, 0, 0, 0};
    const size_t got = std::fread(magic, 1, 4, f.get());
    f.reset();
    if (got >= 4 && magic[0] == 0x89 && magic[1] == 'P') return read_png(path);
    if (got >= 2 && magic[0] == 0xFF && magic[1] == 0xD8) return read_jpeg(path);
    throw std::runtime_error("unsupported image format: " + path);
}

void write_png_gray(const std::string& path, const Tensor& plane) {
    write_png_impl(path, plane, 1, 8);
}

void write_png_rgb(const std::string& path, const Tensor& rgb) {
    write_png_impl(path, rgb, 3, 8);
}

void write_png_gray16(const std::string& path, const Tensor& plane) {
    write_png_impl(path, plane, 1, 16);
}

}  // namespace rpf::io
