// Copyright Contributors to the splatseg project
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "splatseg/error.hpp"

namespace splatseg {

/// Row-major, channel-interleaved raster.
template <typename T> struct Image {
  int width = 0;
  int height = 0;
  int channels = 1;
  std::vector<T> data;

  Image() = default;
  Image(int w, int h, int c = 1, T fill = T{})
      : width(w), height(h), channels(c),
        data(static_cast<std::size_t>(w) * h * c, fill) {}

  std::size_t pixel_count() const { return static_cast<std::size_t>(width) * height; }
  bool empty() const { return data.empty(); }

  std::size_t offset(int x, int y, int c = 0) const {
    return (static_cast<std::size_t>(y) * width + x) * channels + c;
  }
  T &at(int x, int y, int c = 0) { return data[offset(x, y, c)]; }
  const T &at(int x, int y, int c = 0) const { return data[offset(x, y, c)]; }

  std::span<T> pixel(int x, int y) { return {data.data() + offset(x, y), static_cast<std::size_t>(channels)}; }
  std::span<const T> pixel(int x, int y) const {
    return {data.data() + offset(x, y), static_cast<std::size_t>(channels)};
  }

  template <typename U> bool same_shape(const Image<U> &other) const {
    return width == other.width && height == other.height && channels == other.channels;
  }
  template <typename U> bool same_extent(const Image<U> &other) const {
    return width == other.width && height == other.height;
  }

  bool operator==(const Image &) const = default;
};

using ImageF = Image<double>;
using LabelImage = Image<std::int32_t>;
using MaskImage = Image<std::uint8_t>;

template <typename A, typename B>
void require_same_shape(const Image<A> &a, const Image<B> &b, const std::string &what) {
  require(a.same_shape(b), ErrorKind::Contract,
          what + ": shape mismatch (" + std::to_string(a.width) + "x" + std::to_string(a.height) + "x" +
              std::to_string(a.channels) + " vs " + std::to_string(b.width) + "x" + std::to_string(b.height) +
              "x" + std::to_string(b.channels) + ")");
}

template <typename A, typename B>
void require_same_extent(const Image<A> &a, const Image<B> &b, const std::string &what) {
  require(a.same_extent(b), ErrorKind::Contract,
          what + ": extent mismatch (" + std::to_string(a.width) + "x" + std::to_string(a.height) + " vs " +
              std::to_string(b.width) + "x" + std::to_string(b.height) + ")");
}

/// Box-filter downsample by an integer or fractional factor (area weighting).
ImageF area_downsample(const ImageF &src, int width, int height);

/// Bilinear resample with half-pixel centers (edge-clamped).
ImageF bilinear_resize(const ImageF &src, int width, int height);

/// Adjoint of bilinear_resize: maps a gradient on the resized image back to the source grid.
ImageF bilinear_resize_backward(const ImageF &grad_out, int src_width, int src_height);

/// Nearest sample of a label image at the target pixel centers.
LabelImage nearest_resize(const LabelImage &src, int width, int height);

/// 8-bit quantization used by the on-disk image format: round(clamp(v,0,1)*255)/255.
double quantize_unit8(double v);

} // namespace splatseg
