#include "biaslens/png_io.hpp"

#include <png.h>

#include <cstdio>
#include <memory>

#include "biaslens/errors.hpp"

namespace biaslens::png {

namespace {

struct FileCloser {
    void operator()(std::FILE* f) const {
        if (f) std::fclose(f);
    }
};
using FilePtr = std::unique_ptr<std::FILE, FileCloser>;

}  // namespace

Image8 read(const std::filesystem::path& path) {
    FilePtr fp(std::fopen(path.string().c_str(), "rb"));
    if (!fp) throw DataError("cannot open image: " + path.string());

    png_structp png_ptr = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    if (!png_ptr) throw DataError("libpng read init failed");
    png_infop info_ptr = png_create_info_struct(png_ptr);
    if (!info_ptr) {
        png_destroy_read_struct(&png_ptr, nullptr, nullptr);
        throw DataError("libpng info init failed");
    }
    if (setjmp(png_jmpbuf(png_ptr))) {
        png_destroy_read_struct(&png_ptr, &info_ptr, nullptr);
        throw DataError("failed to decode PNG: " + path.string());
    }

    png_init_io(png_ptr, fp.get());
    png_read_info(png_ptr, info_ptr);

    const png_uint_32 width = png_get_image_width(png_ptr, info_ptr);
    const png_uint_32 height = png_get_image_height(png_ptr, info_ptr);
    const int bit_depth = png_get_bit_depth(png_ptr, info_ptr);
    const int color_type = png_get_color_type(png_ptr, info_ptr);

    // Normalize everything to 8-bit gray or rgb.
    if (bit_depth == 16) png_set_strip_16(png_ptr);
    if (color_type == PNG_COLOR_TYPE_PALETTE) png_set_palette_to_rgb(png_ptr);
    if (color_type == PNG_COLOR_TYPE_GRAY && bit_depth < 8) png_set_expand_gray_1_2_4_to_8(png_ptr);
    if (png_get_valid(png_ptr, info_ptr, PNG_INFO_tRNS)) png_set_tRNS_to_alpha(png_ptr);
    if (color_type & PNG_COLOR_MASK_ALPHA) png_set_strip_alpha(png_ptr);
    png_read_update_info(png_ptr, info_ptr);

    const int channels = png_get_channels(png_ptr, info_ptr);
    if (channels != 1 && channels != 3) {
        png_destroy_read_struct(&png_ptr, &info_ptr, nullptr);
        throw DataError("unsupported channel count in " + path.string());
    }

    Image8 image;
    image.height = static_cast<int>(height);
    image.width = static_cast<int>(width);
    image.channels = channels;
    image.data.resize(static_cast<std::size_t>(height) * width * channels);

    std::vector<png_bytep> rows(height);
    const std::size_t stride = static_cast<std::size_t>(width) * channels;
    for (png_uint_32 y = 0; y < height; ++y) rows[y] = image.data.data() + y * stride;
    png_read_image(png_ptr, rows.data());
    png_read_end(png_ptr, nullptr);
    png_destroy_read_struct(&png_ptr, &info_ptr, nullptr);
    return image;
}

void write(const std::filesystem::path& path, const Image8& image) {
    if (image.channels != 1 && image.channels != 3) {
        throw DataError("PNG write supports 1 or 3 channels");
    }
    if (image.data.size() !=
        static_cast<std::size_t>(image.height) * image.width * image.channels) {
        throw DataError("PNG write: buffer size does not match dimensions");
    }

    FilePtr fp(std::fopen(path.string().c_str(), "wb"));
    if (!fp) throw DataError("cannot open image for writing: " + path.string());

    png_structp png_ptr = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    if (!png_ptr) throw DataError("libpng write init failed");
    png_infop info_ptr = png_create_info_struct(png_ptr);
    if (!info_ptr) {
        png_destroy_write_struct(&png_ptr, nullptr);
        throw DataError("libpng info init failed");
    }
    if (setjmp(png_jmpbuf(png_ptr))) {
        png_destroy_write_struct(&png_ptr, &info_ptr);
        throw DataError("failed to encode PNG: " + path.string());
    }

    png_init_io(png_ptr, fp.get());
    png_set_IHDR(png_ptr, info_ptr, static_cast<png_uint_32>(image.width),
                 static_cast<png_uint_32>(image.height), 8,
                 image.channels == 1 ? PNG_COLOR_TYPE_GRAY : PNG_COLOR_TYPE_RGB,
                 PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
    png_write_info(png_ptr, info_ptr);

    const std::size_t stride = static_cast<std::size_t>(image.width) * image.channels;
    std::vector<png_bytep> rows(image.height);
    for (int y = 0; y < image.height; ++y) {
        rows[y] = const_cast<png_bytep>(image.data.data() + static_cast<std::size_t>(y) * stride);
    }
    png_write_image(png_ptr, rows.data());
    png_write_end(png_ptr, nullptr);
    png_destroy_write_struct(&png_ptr, &info_ptr);
}

}  // namespace biaslens::png
