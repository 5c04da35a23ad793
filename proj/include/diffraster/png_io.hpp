#pragma once

#include <png.h>

#include <cmath>
#include <csetjmp>
#include <cstdint>
#include <cstdio>
#include <memory>
#include <string>
#include <vector>

#include "diffraster/errors.hpp"
#include "diffraster/image.hpp"

namespace diffraster {

namespace detail {

struct FileCloser {
  void operator()(std::FILE* f) const {
    if (f) std::fclose(f);
  }
};
using FilePtr = std::unique_ptr<std::FILE, FileCloser>;

}  // namespace detail

// Decodes an 8- or 16-bit RGB/RGBA PNG into linear floats in [0,1] by
// value / (2^bits - 1). Other color types are rejected.
template <typename T>
Image<T> load_png(const std::string& path) {
  detail::FilePtr file(std::fopen(path.c_str(), "rb"));
  if (!file) throw IoError("load_png: cannot open " + path);

  png_structp png =
      png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  if (!png) throw DecodeError("load_png: failed to allocate decoder");
  png_infop info = png_create_info_struct(png);
  if (!info) {
    png_destroy_read_struct(&png, nullptr, nullptr);
    throw DecodeError("load_png: failed to allocate info struct");
  }
  std::vector<png_bytep> row_ptrs;
  std::vector<png_byte> raw;
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw DecodeError("load_png: " + path + " is not a valid PNG");
  }
  png_init_io(png, file.get());
  png_read_info(png, info);

  const png_byte color_type = png_get_color_type(png, info);
  const png_byte bit_depth = png_get_bit_depth(png, info);
  if (color_type != PNG_COLOR_TYPE_RGB && color_type != PNG_COLOR_TYPE_RGBA) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw UnsupportedColorType("load_png: " + path +
                               ": only RGB/RGBA is supported");
  }
  if (bit_depth != 8 && bit_depth != 16) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw UnsupportedColorType("load_png: " + path +
                               ": only 8/16-bit depth is supported");
  }
  if (bit_depth == 16) png_set_swap(png);  // file is big-endian
  png_set_interlace_handling(png);
  png_read_update_info(png, info);

  const int width = static_cast<int>(png_get_image_width(png, info));
  const int height = static_cast<int>(png_get_image_height(png, info));
  const int channels = color_type == PNG_COLOR_TYPE_RGB ? 3 : 4;
  const std::size_t rowbytes = png_get_rowbytes(png, info);
  raw.resize(rowbytes * height);
  row_ptrs.resize(height);
  for (int y = 0; y < height; ++y) row_ptrs[y] = raw.data() + rowbytes * y;
  png_read_image(png, row_ptrs.data());
  png_read_end(png, nullptr);
  png_destroy_read_struct(&png, &info, nullptr);

  Image<T> img(height, width, channels);
  if (bit_depth == 8) {
    const T scale = T(1) / T(255);
    for (int y = 0; y < height; ++y) {
      const png_byte* row = row_ptrs[y];
      for (int x = 0; x < width; ++x)
        for (int c = 0; c < channels; ++c)
          img.at(y, x, c) = T(row[x * channels + c]) * scale;
    }
  } else {
    const T scale = T(1) / T(65535);
    for (int y = 0; y < height; ++y) {
      const auto* row = reinterpret_cast<const std::uint16_t*>(row_ptrs[y]);
      for (int x = 0; x < width; ++x)
        for (int c = 0; c < channels; ++c)
          img.at(y, x, c) = T(row[x * channels + c]) * scale;
    }
  }
  return img;
}

// Encodes an HxWx3 or HxWx4 float image as PNG, quantizing by
// round(x * (2^bits - 1)) after clamping to [0,1].
template <typename T>
void save_png(const Image<T>& image, const std::string& path, int bit_depth = 8) {
  if (image.channels != 3 && image.channels != 4)
    throw UnsupportedColorType("save_png: image must have 3 or 4 channels");
  if (bit_depth != 8 && bit_depth != 16)
    throw UnsupportedColorType("save_png: bit depth must be 8 or 16");
  if (image.height < 1 || image.width < 1)
    throw ShapeMismatch("save_png: empty image");

  detail::FilePtr file(std::fopen(path.c_str(), "wb"));
  if (!file) throw IoError("save_png: cannot open " + path + " for writing");

  png_structp png =
      png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  if (!png) throw IoError("save_png: failed to allocate encoder");
  png_infop info = png_create_info_struct(png);
  if (!info) {
    png_destroy_write_struct(&png, nullptr);
    throw IoError("save_png: failed to allocate info struct");
  }
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_write_struct(&png, &info);
    throw IoError("save_png: write to " + path + " failed");
  }
  png_init_io(png, file.get());
  const int color_type =
      image.channels == 3 ? PNG_COLOR_TYPE_RGB : PNG_COLOR_TYPE_RGBA;
  png_set_IHDR(png, info, image.width, image.height, bit_depth, color_type,
               PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT,
               PNG_FILTER_TYPE_DEFAULT);
  png_write_info(png, info);
  if (bit_depth == 16) png_set_swap(png);

  auto quantize = [](T v, T maxval) {
    v = std::min(std::max(v, T(0)), T(1));
    return std::lround(double(v * maxval));
  };
  if (bit_depth == 8) {
    std::vector<png_byte> row(static_cast<std::size_t>(image.width) * image.channels);
    for (int y = 0; y < image.height; ++y) {
      for (int x = 0; x < image.width; ++x)
        for (int c = 0; c < image.channels; ++c)
          row[x * image.channels + c] =
              static_cast<png_byte>(quantize(image.at(y, x, c), T(255)));
      png_write_row(png, row.data());
    }
  } else {
    std::vector<std::uint16_t> row(static_cast<std::size_t>(image.width) *
                                   image.channels);
    for (int y = 0; y < image.height; ++y) {
      for (int x = 0; x < image.width; ++x)
        for (int c = 0; c < image.channels; ++c)
          row[x * image.channels + c] =
              static_cast<std::uint16_t>(quantize(image.at(y, x, c), T(65535)));
      png_write_row(png, reinterpret_cast<png_bytep>(row.data()));
    }
  }
  png_write_end(png, nullptr);
  png_destroy_write_struct(&png, &info);
}

}  // namespace diffraster
