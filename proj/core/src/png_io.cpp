// Copyright Contributors to the splatseg project
// SPDX-License-Identifier: Apache-2.0
#include <png.h>

#include <csetjmp>
#include <cstdio>
#include <memory>

#include "splatseg/dataset_io.hpp"
#include "splatseg/error.hpp"

namespace splatseg {
namespace {

struct FileCloser {
  void operator()(std::FILE *f) const {
    if (f != nullptr) std::fclose(f);
  }
};
using FilePtr = std::unique_ptr<std::FILE, FileCloser>;

struct Raw {
  int width = 0;
  int height = 0;
  int channels = 0;
  int bit_depth = 0;
  std::vector<std::uint16_t> samples;
};

void append_bytes(png_structp png, png_bytep data, png_size_t length) {
  auto *out = static_cast<std::string *>(png_get_io_ptr(png));
  out->append(reinterpret_cast<const char *>(data), length);
}

void flush_nothing(png_structp) {}

std::string encode_raw(const Raw &raw) {
  std::string bytes;
  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  png_infop info = png != nullptr ? png_create_info_struct(png) : nullptr;
  if (png == nullptr || info == nullptr) {
    png_destroy_write_struct(&png, &info);
    fail(ErrorKind::Io, "libpng initialization failed");
  }
  const int width = raw.bit_depth / 8;
  std::vector<png_byte> row(static_cast<std::size_t>(raw.width) * raw.channels * width);
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_write_struct(&png, &info);
    fail(ErrorKind::Io, "PNG encoding failed");
  }
  png_set_write_fn(png, &bytes, append_bytes, flush_nothing);
  png_set_IHDR(png, info, static_cast<png_uint_32>(raw.width), static_cast<png_uint_32>(raw.height), raw.bit_depth,
               raw.channels == 3 ? PNG_COLOR_TYPE_RGB : PNG_COLOR_TYPE_GRAY, PNG_INTERLACE_NONE,
               PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
  png_write_info(png, info);
  const std::size_t per_row = static_cast<std::size_t>(raw.width) * raw.channels;
  for (int y = 0; y < raw.height; ++y) {
    for (std::size_t k = 0; k < per_row; ++k) {
      const std::uint16_t v = raw.samples[static_cast<std::size_t>(y) * per_row + k];
      if (width == 2) {
        row[2 * k] = static_cast<png_byte>(v >> 8); // PNG is big-endian
        row[2 * k + 1] = static_cast<png_byte>(v & 0xFF);
      } else {
        row[k] = static_cast<png_byte>(v);
      }
    }
    png_write_row(png, row.data());
  }
  png_write_end(png, nullptr);
  png_destroy_write_struct(&png, &info);
  return bytes;
}

Raw rgb8(const ImageF &image) {
  require(image.channels == 3, ErrorKind::Contract, "8-bit RGB PNG expects 3 channels");
  Raw raw{image.width, image.height, 3, 8, std::vector<std::uint16_t>(image.data.size())};
  for (std::size_t k = 0; k < image.data.size(); ++k) {
    raw.samples[k] = static_cast<std::uint16_t>(std::lround(quantize_unit8(image.data[k]) * 255.0));
  }
  return raw;
}

Raw read_raw(const std::filesystem::path &path) {
  require(std::filesystem::exists(path), ErrorKind::MissingFile, "missing file: " + path.string());
  FilePtr f(std::fopen(path.string().c_str(), "rb"));
  require(f != nullptr, ErrorKind::Io, "cannot read " + path.string());
  png_byte sig[8];
  require(std::fread(sig, 1, 8, f.get()) == 8 && png_sig_cmp(sig, 0, 8) == 0, ErrorKind::Parse,
          "not a PNG file: " + path.string());
  png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  png_infop info = png != nullptr ? png_create_info_struct(png) : nullptr;
  if (png == nullptr || info == nullptr) {
    png_destroy_read_struct(&png, &info, nullptr);
    fail(ErrorKind::Io, "libpng initialization failed");
  }
  Raw raw;
  std::vector<png_byte> row;
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_read_struct(&png, &info, nullptr);
    fail(ErrorKind::Parse, "corrupt PNG: " + path.string());
  }
  png_init_io(png, f.get());
  png_set_sig_bytes(png, 8);
  png_read_info(png, info);
  const int color = png_get_color_type(png, info);
  raw.bit_depth = png_get_bit_depth(png, info);
  if (color == PNG_COLOR_TYPE_PALETTE) png_set_palette_to_rgb(png);
  if (color == PNG_COLOR_TYPE_GRAY && raw.bit_depth < 8) png_set_expand_gray_1_2_4_to_8(png);
  if (color & PNG_COLOR_MASK_ALPHA) png_set_strip_alpha(png);
  png_read_update_info(png, info);
  raw.width = static_cast<int>(png_get_image_width(png, info));
  raw.height = static_cast<int>(png_get_image_height(png, info));
  raw.channels = png_get_channels(png, info);
  raw.bit_depth = png_get_bit_depth(png, info);
  const std::size_t per_row = static_cast<std::size_t>(raw.width) * raw.channels;
  row.resize(png_get_rowbytes(png, info));
  raw.samples.resize(per_row * raw.height);
  for (int y = 0; y < raw.height; ++y) {
    png_read_row(png, row.data(), nullptr);
    for (std::size_t k = 0; k < per_row; ++k) {
      raw.samples[static_cast<std::size_t>(y) * per_row + k] =
          raw.bit_depth == 16 ? static_cast<std::uint16_t>((row[2 * k] << 8) | row[2 * k + 1]) : row[k];
    }
  }
  png_destroy_read_struct(&png, &info, nullptr);
  return raw;
}

} // namespace

void write_png_rgb8(const std::filesystem::path &path, const ImageF &image) { write_file(path, encode_raw(rgb8(image))); }

std::string png_bytes(const ImageF &image) {
  if (image.channels == 3) return encode_raw(rgb8(image));
  require(image.channels == 1, ErrorKind::Contract, "PNG encoding expects 1 or 3 channels");
  Raw raw{image.width, image.height, 1, 8, std::vector<std::uint16_t>(image.data.size())};
  for (std::size_t k = 0; k < image.data.size(); ++k) {
    raw.samples[k] = static_cast<std::uint16_t>(std::lround(quantize_unit8(image.data[k]) * 255.0));
  }
  return encode_raw(raw);
}

ImageF read_png_rgb8(const std::filesystem::path &path) {
  const Raw raw = read_raw(path);
  require(raw.channels == 3 && raw.bit_depth == 8, ErrorKind::DimensionMismatch,
          path.string() + ": expected 8-bit RGB");
  ImageF out(raw.width, raw.height, 3);
  for (std::size_t k = 0; k < out.data.size(); ++k) out.data[k] = raw.samples[k] / 255.0;
  return out;
}

void write_png_label16(const std::filesystem::path &path, const LabelImage &labels) {
  require(labels.channels == 1, ErrorKind::Contract, "write_png_label16 expects 1 channel");
  Raw raw{labels.width, labels.height, 1, 16, std::vector<std::uint16_t>(labels.data.size())};
  for (std::size_t k = 0; k < labels.data.size(); ++k) {
    require(labels.data[k] >= 0 && labels.data[k] <= 65535, ErrorKind::InvalidParameter,
            "label " + std::to_string(labels.data[k]) + " does not fit 16 bits");
    raw.samples[k] = static_cast<std::uint16_t>(labels.data[k]);
  }
  write_file(path, encode_raw(raw));
}

LabelImage read_png_label16(const std::filesystem::path &path) {
  const Raw raw = read_raw(path);
  require(raw.channels == 1 && raw.bit_depth == 16, ErrorKind::DimensionMismatch,
          path.string() + ": expected 16-bit single-channel labels");
  LabelImage out(raw.width, raw.height, 1);
  for (std::size_t k = 0; k < out.data.size(); ++k) out.data[k] = raw.samples[k];
  return out;
}

void write_png_mask8(const std::filesystem::path &path, const MaskImage &mask) {
  require(mask.channels == 1, ErrorKind::Contract, "write_png_mask8 expects 1 channel");
  Raw raw{mask.width, mask.height, 1, 8, std::vector<std::uint16_t>(mask.data.size())};
  for (std::size_t k = 0; k < mask.data.size(); ++k) raw.samples[k] = mask.data[k] ? 255 : 0;
  write_file(path, encode_raw(raw));
}

MaskImage read_png_mask8(const std::filesystem::path &path) {
  const Raw raw = read_raw(path);
  require(raw.channels == 1 && raw.bit_depth == 8, ErrorKind::DimensionMismatch,
          path.string() + ": expected 8-bit single-channel mask");
  MaskImage out(raw.width, raw.height, 1);
  for (std::size_t k = 0; k < out.data.size(); ++k) out.data[k] = raw.samples[k] > 127 ? 1 : 0;
  return out;
}

} // namespace splatseg
