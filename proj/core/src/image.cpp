// Copyright Contributors to the splatseg project
// SPDX-License-Identifier: Apache-2.0
#include "splatseg/image.hpp"

#include <algorithm>
#include <cmath>

namespace splatseg {

ImageF area_downsample(const ImageF &src, int width, int height) {
  require(width > 0 && height > 0 && width <= src.width && height <= src.height, ErrorKind::InvalidParameter,
          "area_downsample: target must be non-empty and not larger than the source");
  ImageF out(width, height, src.channels);
  const double sx = static_cast<double>(src.width) / width;
  const double sy = static_cast<double>(src.height) / height;
  for (int y = 0; y < height; ++y) {
    const double y0 = y * sy;
    const double y1 = (y + 1) * sy;
    for (int x = 0; x < width; ++x) {
      const double x0 = x * sx;
      const double x1 = (x + 1) * sx;
      double total = 0.0;
      for (int v = static_cast<int>(std::floor(y0)); v < std::min<int>(src.height, static_cast<int>(std::ceil(y1))); ++v) {
        const double wy = std::min<double>(v + 1, y1) - std::max<double>(v, y0);
        if (wy <= 0.0) {
          continue;
        }
        for (int u = static_cast<int>(std::floor(x0)); u < std::min<int>(src.width, static_cast<int>(std::ceil(x1))); ++u) {
          const double wx = std::min<double>(u + 1, x1) - std::max<double>(u, x0);
          if (wx <= 0.0) {
            continue;
          }
          const double w = wx * wy;
          total += w;
          for (int c = 0; c < src.channels; ++c) {
            out.at(x, y, c) += w * src.at(u, v, c);
          }
        }
      }
      for (int c = 0; c < src.channels; ++c) {
        out.at(x, y, c) /= total;
      }
    }
  }
  return out;
}

ImageF bilinear_resize(const ImageF &src, int width, int height) {
  require(width > 0 && height > 0 && !src.empty(), ErrorKind::InvalidParameter, "bilinear_resize: empty image");
  ImageF out(width, height, src.channels);
  const double sx = static_cast<double>(src.width) / width;
  const double sy = static_cast<double>(src.height) / height;
  for (int y = 0; y < height; ++y) {
    const double fy = std::clamp((y + 0.5) * sy - 0.5, 0.0, static_cast<double>(src.height - 1));
    const int y0 = static_cast<int>(fy);
    const int y1 = std::min(y0 + 1, src.height - 1);
    const double ty = fy - y0;
    for (int x = 0; x < width; ++x) {
      const double fx = std::clamp((x + 0.5) * sx - 0.5, 0.0, static_cast<double>(src.width - 1));
      const int x0 = static_cast<int>(fx);
      const int x1 = std::min(x0 + 1, src.width - 1);
      const double tx = fx - x0;
      for (int c = 0; c < src.channels; ++c) {
        const double top = (1.0 - tx) * src.at(x0, y0, c) + tx * src.at(x1, y0, c);
        const double bottom = (1.0 - tx) * src.at(x0, y1, c) + tx * src.at(x1, y1, c);
        out.at(x, y, c) = (1.0 - ty) * top + ty * bottom;
      }
    }
  }
  return out;
}

ImageF bilinear_resize_backward(const ImageF &grad_out, int src_width, int src_height) {
  require(src_width > 0 && src_height > 0 && !grad_out.empty(), ErrorKind::InvalidParameter,
          "bilinear_resize_backward: empty image");
  ImageF grad(src_width, src_height, grad_out.channels);
  const double sx = static_cast<double>(src_width) / grad_out.width;
  const double sy = static_cast<double>(src_height) / grad_out.height;
  for (int y = 0; y < grad_out.height; ++y) {
    const double fy = std::clamp((y + 0.5) * sy - 0.5, 0.0, static_cast<double>(src_height - 1));
    const int y0 = static_cast<int>(fy);
    const int y1 = std::min(y0 + 1, src_height - 1);
    const double ty = fy - y0;
    for (int x = 0; x < grad_out.width; ++x) {
      const double fx = std::clamp((x + 0.5) * sx - 0.5, 0.0, static_cast<double>(src_width - 1));
      const int x0 = static_cast<int>(fx);
      const int x1 = std::min(x0 + 1, src_width - 1);
      const double tx = fx - x0;
      for (int c = 0; c < grad_out.channels; ++c) {
        const double g = grad_out.at(x, y, c);
        grad.at(x0, y0, c) += (1.0 - ty) * (1.0 - tx) * g;
        grad.at(x1, y0, c) += (1.0 - ty) * tx * g;
        grad.at(x0, y1, c) += ty * (1.0 - tx) * g;
        grad.at(x1, y1, c) += ty * tx * g;
      }
    }
  }
  return grad;
}

LabelImage nearest_resize(const LabelImage &src, int width, int height) {
  require(width > 0 && height > 0 && !src.empty(), ErrorKind::InvalidParameter, "nearest_resize: empty image");
  LabelImage out(width, height, src.channels);
  for (int y = 0; y < height; ++y) {
    const int v = std::min(src.height - 1, static_cast<int>((y + 0.5) * src.height / height));
    for (int x = 0; x < width; ++x) {
      const int u = std::min(src.width - 1, static_cast<int>((x + 0.5) * src.width / width));
      for (int c = 0; c < src.channels; ++c) {
        out.at(x, y, c) = src.at(u, v, c);
      }
    }
  }
  return out;
}

double quantize_unit8(double v) { return std::round(std::clamp(v, 0.0, 1.0) * 255.0) / 255.0; }

} // namespace splatseg
