#pragma once

// Thin in-memory wrapper around libpng. Decoded samples are widened to
// uint16_t regardless of the stored bit depth.

#include <png.h>

#include <csetjmp>
#include <cstdint>
#include <cstring>
#include <span>
#include <string>
#include <vector>

#include "crfdepth/error.hpp"

namespace crfdepth::png {

struct RawImage {
  int width = 0;
  int height = 0;
  int channels = 0;   // after palette expansion
  int bit_depth = 0;  // as stored in the file (1, 2, 4, 8 or 16)
  bool palette = false;
  std::vector<std::uint16_t> samples;  // row-major, interleaved channels
};

namespace detail {

struct ReadCursor {
  std::span<const std::uint8_t> bytes;
  std::size_t offset = 0;
};

struct ErrorSlot {
  char message[256] = {0};
};

inline void on_error(png_structp ptr, png_const_charp msg) {
  auto* slot = static_cast<ErrorSlot*>(png_get_error_ptr(ptr));
  if (slot != nullptr) {
    std::strncpy(slot->message, msg, sizeof(slot->message) - 1);
  }
  png_longjmp(ptr, 1);
}

inline void on_warning(png_structp, png_const_charp) {}

inline void read_callback(png_structp ptr, png_bytep out, png_size_t length) {
  auto* cursor = static_cast<ReadCursor*>(png_get_io_ptr(ptr));
  if (cursor->offset + length > cursor->bytes.size()) {
    png_error(ptr, "truncated PNG stream");
  }
  std::memcpy(out, cursor->bytes.data() + cursor->offset, length);
  cursor->offset += length;
}

inline void write_callback(png_structp ptr, png_bytep data, png_size_t length) {
  auto* out = static_cast<std::vector<std::uint8_t>*>(png_get_io_ptr(ptr));
  out->insert(out->end(), data, data + length);
}

inline void flush_callback(png_structp) {}

// Only trivially destructible objects live across setjmp in these two
// functions; row storage is owned by the caller.
inline bool decode_into(std::span<const std::uint8_t> bytes, RawImage& image,
                        std::vector<std::uint8_t>& buffer, std::vector<png_bytep>& rows,
                        ErrorSlot& err) {
  ReadCursor cursor{bytes, 0};
  png_structp ptr = png_create_read_struct(PNG_LIBPNG_VER_STRING, &err, on_error, on_warning);
  if (ptr == nullptr) {
    std::strcpy(err.message, "png_create_read_struct failed");
    return false;
  }
  png_infop info = png_create_info_struct(ptr);
  if (info == nullptr) {
    png_destroy_read_struct(&ptr, nullptr, nullptr);
    std::strcpy(err.message, "png_create_info_struct failed");
    return false;
  }
  if (setjmp(png_jmpbuf(ptr))) {
    png_destroy_read_struct(&ptr, &info, nullptr);
    return false;
  }
  png_set_read_fn(ptr, &cursor, read_callback);
  png_read_info(ptr, info);

  const int color_type = png_get_color_type(ptr, info);
  image.bit_depth = png_get_bit_depth(ptr, info);
  image.width = static_cast<int>(png_get_image_width(ptr, info));
  image.height = static_cast<int>(png_get_image_height(ptr, info));
  image.palette = color_type == PNG_COLOR_TYPE_PALETTE;
  if (image.palette) png_set_palette_to_rgb(ptr);
  if (color_type == PNG_COLOR_TYPE_GRAY && image.bit_depth < 8) png_set_expand_gray_1_2_4_to_8(ptr);
  if (png_get_valid(ptr, info, PNG_INFO_tRNS)) png_set_tRNS_to_alpha(ptr);
  png_set_interlace_handling(ptr);
  png_read_update_info(ptr, info);

  image.channels = png_get_channels(ptr, info);
  const int out_depth = png_get_bit_depth(ptr, info);
  const std::size_t row_bytes = png_get_rowbytes(ptr, info);
  buffer.resize(row_bytes * static_cast<std::size_t>(image.height));
  rows.resize(static_cast<std::size_t>(image.height));
  for (int r = 0; r < image.height; ++r) {
    rows[static_cast<std::size_t>(r)] = buffer.data() + row_bytes * static_cast<std::size_t>(r);
  }
  png_read_image(ptr, rows.data());
  png_read_end(ptr, nullptr);
  png_destroy_read_struct(&ptr, &info, nullptr);

  const std::size_t n = static_cast<std::size_t>(image.width) * image.height * image.channels;
  image.samples.resize(n);
  if (out_depth == 16) {
    for (std::size_t i = 0; i < n; ++i) {
      image.samples[i] = static_cast<std::uint16_t>((buffer[2 * i] << 8) | buffer[2 * i + 1]);
    }
  } else {
    for (std::size_t i = 0; i < n; ++i) image.samples[i] = buffer[i];
  }
  return true;
}

inline bool encode_into(int width, int height, int channels, int bit_depth,
                        const std::vector<std::uint8_t>& packed, std::vector<std::uint8_t>& out,
                        ErrorSlot& err) {
  png_structp ptr = png_create_write_struct(PNG_LIBPNG_VER_STRING, &err, on_error, on_warning);
  if (ptr == nullptr) {
    std::strcpy(err.message, "png_create_write_struct failed");
    return false;
  }
  png_infop info = png_create_info_struct(ptr);
  if (info == nullptr) {
    png_destroy_write_struct(&ptr, nullptr);
    std::strcpy(err.message, "png_create_info_struct failed");
    return false;
  }
  if (setjmp(png_jmpbuf(ptr))) {
    png_destroy_write_struct(&ptr, &info);
    return false;
  }
  png_set_write_fn(ptr, &out, write_callback, flush_callback);
  const int color_type = channels == 1   ? PNG_COLOR_TYPE_GRAY
                         : channels == 3 ? PNG_COLOR_TYPE_RGB
                                         : PNG_COLOR_TYPE_RGB_ALPHA;
  png_set_IHDR(ptr, info, static_cast<png_uint_32>(width), static_cast<png_uint_32>(height),
               bit_depth, color_type, PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT,
               PNG_FILTER_TYPE_DEFAULT);
  png_set_compression_level(ptr, 6);
  png_write_info(ptr, info);
  const std::size_t row_bytes =
      static_cast<std::size_t>(width) * channels * (bit_depth == 16 ? 2 : 1);
  for (int r = 0; r < height; ++r) {
    png_write_row(ptr, const_cast<png_bytep>(packed.data() + row_bytes * r));
  }
  png_write_end(ptr, nullptr);
  png_destroy_write_struct(&ptr, &info);
  return true;
}

}  // namespace detail

inline RawImage decode(std::span<const std::uint8_t> bytes) {
  if (bytes.size() < 8 || png_sig_cmp(bytes.data(), 0, 8) != 0) {
    throw FormatError("io", "not a PNG stream");
  }
  RawImage image;
  std::vector<std::uint8_t> buffer;
  std::vector<png_bytep> rows;
  detail::ErrorSlot err;
  if (!detail::decode_into(bytes, image, buffer, rows, err)) {
    throw FormatError("io", std::string("PNG decode failed: ") + err.message);
  }
  return image;
}

// bit_depth must be 8 or 16; channels 1, 3 or 4.
inline std::vector<std::uint8_t> encode(int width, int height, int channels, int bit_depth,
                                        std::span<const std::uint16_t> samples) {
  if (width <= 0 || height <= 0) throw ValidationError("io", "PNG dimensions must be positive");
  if (bit_depth != 8 && bit_depth != 16) throw ValidationError("io", "PNG bit depth must be 8 or 16");
  if (channels != 1 && channels != 3 && channels != 4) {
    throw ValidationError("io", "PNG channel count must be 1, 3 or 4");
  }
  const std::size_t n = static_cast<std::size_t>(width) * height * channels;
  if (samples.size() != n) throw ValidationError("io", "PNG sample buffer has wrong length");

  std::vector<std::uint8_t> packed(n * (bit_depth == 16 ? 2 : 1));
  for (std::size_t i = 0; i < n; ++i) {
    if (bit_depth == 16) {
      packed[2 * i] = static_cast<std::uint8_t>(samples[i] >> 8);
      packed[2 * i + 1] = static_cast<std::uint8_t>(samples[i] & 0xff);
    } else {
      packed[i] = static_cast<std::uint8_t>(samples[i]);
    }
  }
  std::vector<std::uint8_t> out;
  detail::ErrorSlot err;
  if (!detail::encode_into(width, height, channels, bit_depth, packed, out, err)) {
    throw FormatError("io", std::string("PNG encode failed: ") + err.message);
  }
  return out;
}

}  // namespace crfdepth::png
