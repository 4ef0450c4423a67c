// Copyright Contributors to the splatseg project
// SPDX-License-Identifier: Apache-2.0
#include "splatseg/transient_net.hpp"

#include <cmath>
#include <random>

#include "splatseg/error.hpp"

namespace splatseg {
namespace {

using Mat = Eigen::MatrixXd;
using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

// Column (ci*k*k + ky*k + kx, oy*ow + ox) of the unfolded input; zero padding of k/2.
Mat im2col(const Mat &x, int res, int kernel, int stride, int out_res) {
  const int in = static_cast<int>(x.rows());
  const int pad = kernel / 2;
  Mat cols = Mat::Zero(static_cast<Eigen::Index>(in) * kernel * kernel, static_cast<Eigen::Index>(out_res) * out_res);
  for (int oy = 0; oy < out_res; ++oy) {
    for (int ox = 0; ox < out_res; ++ox) {
      const Eigen::Index col = static_cast<Eigen::Index>(oy) * out_res + ox;
      for (int ky = 0; ky < kernel; ++ky) {
        const int iy = oy * stride + ky - pad;
        if (iy < 0 || iy >= res) continue;
        for (int kx = 0; kx < kernel; ++kx) {
          const int ix = ox * stride + kx - pad;
          if (ix < 0 || ix >= res) continue;
          const Eigen::Index src = static_cast<Eigen::Index>(iy) * res + ix;
          for (int c = 0; c < in; ++c) cols((c * kernel + ky) * kernel + kx, col) = x(c, src);
        }
      }
    }
  }
  return cols;
}

Mat col2im(const Mat &cols, int in, int res, int kernel, int stride, int out_res) {
  const int pad = kernel / 2;
  Mat x = Mat::Zero(in, static_cast<Eigen::Index>(res) * res);
  for (int oy = 0; oy < out_res; ++oy) {
    for (int ox = 0; ox < out_res; ++ox) {
      const Eigen::Index col = static_cast<Eigen::Index>(oy) * out_res + ox;
      for (int ky = 0; ky < kernel; ++ky) {
        const int iy = oy * stride + ky - pad;
        if (iy < 0 || iy >= res) continue;
        for (int kx = 0; kx < kernel; ++kx) {
          const int ix = ox * stride + kx - pad;
          if (ix < 0 || ix >= res) continue;
          const Eigen::Index dst = static_cast<Eigen::Index>(iy) * res + ix;
          for (int c = 0; c < in; ++c) x(c, dst) += cols((c * kernel + ky) * kernel + kx, col);
        }
      }
    }
  }
  return x;
}

Mat upsample2(const Mat &x, int res) {
  const int out = 2 * res;
  Mat y(x.rows(), static_cast<Eigen::Index>(out) * out);
  for (int oy = 0; oy < out; ++oy)
    for (int ox = 0; ox < out; ++ox) y.col(static_cast<Eigen::Index>(oy) * out + ox) = x.col((oy / 2) * res + ox / 2);
  return y;
}

Mat upsample2_backward(const Mat &g, int res) {
  const int out = 2 * res;
  Mat x = Mat::Zero(g.rows(), static_cast<Eigen::Index>(res) * res);
  for (int oy = 0; oy < out; ++oy)
    for (int ox = 0; ox < out; ++ox) x.col((oy / 2) * res + ox / 2) += g.col(static_cast<Eigen::Index>(oy) * out + ox);
  return x;
}

Mat stack(const Mat &a, const Mat &b) {
  Mat s(a.rows() + b.rows(), a.cols());
  s.topRows(a.rows()) = a;
  s.bottomRows(b.rows()) = b;
  return s;
}

} // namespace

void TransientNetConfig::validate() const {
  require(!channels.empty(), ErrorKind::Config, "transient net needs at least one encoder level");
  for (int c : channels) require(c > 0, ErrorKind::Config, "transient net channel widths must be positive");
  const int factor = 1 << channels.size();
  require(working_resolution >= factor && working_resolution % factor == 0, ErrorKind::Config,
          "transient working resolution must be a positive multiple of " + std::to_string(factor));
  require(leaky_slope > 0.0 && leaky_slope < 1.0, ErrorKind::Config, "leaky slope must be in (0, 1)");
}

// Layer order: encoder blocks 0..L-1, decoder blocks L..2L-1 (deepest first), final 1x1.
TransientPredictor::TransientPredictor(const TransientNetConfig &config) : config_(config) {
  config_.validate();
  const auto &ch = config_.channels;
  const int levels = static_cast<int>(ch.size());
  std::size_t offset = 0;
  auto add = [&](int in, int out, int kernel, int stride) {
    Layer l{in, out, kernel, stride, offset, offset + static_cast<std::size_t>(out) * in * kernel * kernel};
    offset = l.bias_offset + out;
    layers_.push_back(l);
  };
  int in = 3;
  for (int l = 0; l < levels; ++l) {
    add(in, ch[l], 3, 2);
    in = ch[l];
  }
  int below = ch[levels - 1];
  for (int l = levels - 1; l >= 0; --l) {
    const int skip = l == 0 ? 3 : ch[l - 1];
    const int out = l == 0 ? ch[0] : ch[l - 1];
    add(below + skip, out, 3, 1);
    below = out;
  }
  add(below, 1, 1, 1);
  params_.assign(offset, 0.0);
  moments_ = AdamMoments(offset);

  std::mt19937_64 rng(config_.seed);
  for (std::size_t k = 0; k < layers_.size(); ++k) {
    const Layer &l = layers_[k];
    const double fan_in = static_cast<double>(l.in) * l.kernel * l.kernel;
    double bound = std::sqrt(6.0 / ((1.0 + config_.leaky_slope * config_.leaky_slope) * fan_in));
    if (k + 1 == layers_.size()) bound *= 0.1;
    std::uniform_real_distribution<double> u(-bound, bound);
    for (std::size_t w = l.weight_offset; w < l.bias_offset; ++w) params_[w] = u(rng);
  }
  params_[layers_.back().bias_offset] = config_.final_bias;
}

TransientForward TransientPredictor::forward(const ImageF &image) const {
  require(image.channels == 3 && !image.empty(), ErrorKind::Contract, "transient predictor expects an RGB image");
  for (double p : params_) require(std::isfinite(p), ErrorKind::NumericFault, "non-finite transient predictor weight");
  const int r = config_.working_resolution;
  const int levels = static_cast<int>(config_.channels.size());
  const double slope = config_.leaky_slope;

  TransientForward fwd;
  fwd.width = image.width;
  fwd.height = image.height;
  const ImageF small = (image.width == r && image.height == r) ? image
                       : (image.width >= r && image.height >= r) ? area_downsample(image, r, r)
                                                                  : bilinear_resize(image, r, r);
  Mat x(3, static_cast<Eigen::Index>(r) * r);
  for (int p = 0; p < r * r; ++p)
    for (int c = 0; c < 3; ++c) x(c, p) = small.data[static_cast<std::size_t>(p) * 3 + c];

  auto conv = [&](const Layer &l, const Mat &input, int res, bool activate) {
    const int out_res = res / l.stride;
    const Eigen::Map<const RowMat> w(params_.data() + l.weight_offset, l.out, static_cast<Eigen::Index>(l.in) * l.kernel * l.kernel);
    const Eigen::Map<const Eigen::VectorXd> b(params_.data() + l.bias_offset, l.out);
    Mat y = l.kernel == 1 ? Mat(w * input) : Mat(w * im2col(input, res, l.kernel, l.stride, out_res));
    y.colwise() += b;
    if (activate) y = y.unaryExpr([slope](double v) { return v > 0.0 ? v : slope * v; });
    return y;
  };

  // activations[0] = input; encoder outputs follow; then decoder outputs.
  fwd.activations.push_back(x);
  fwd.resolutions.push_back(r);
  int res = r;
  for (int l = 0; l < levels; ++l) {
    fwd.activations.push_back(conv(layers_[l], fwd.activations.back(), res, true));
    res /= 2;
    fwd.resolutions.push_back(res);
  }
  Mat below = fwd.activations.back();
  for (int l = levels - 1; l >= 0; --l) {
    const Mat input = stack(upsample2(below, res), fwd.activations[l]);
    res *= 2;
    below = conv(layers_[levels + (levels - 1 - l)], input, res, true);
    fwd.activations.push_back(below);
    fwd.resolutions.push_back(res);
  }
  const Mat logits = conv(layers_.back(), below, res, false);
  fwd.probability_small = logits.unaryExpr([](double v) { return 1.0 / (1.0 + std::exp(-v)); });

  ImageF p_small(r, r, 1);
  for (int p = 0; p < r * r; ++p) p_small.data[p] = fwd.probability_small(0, p);
  fwd.probability = (image.width == r && image.height == r) ? p_small : bilinear_resize(p_small, image.width, image.height);
  return fwd;
}

std::vector<double> TransientPredictor::backward(const TransientForward &fwd, const TransientMap &grad) const {
  require(fwd.retained(), ErrorKind::Contract, "transient backward called without retained activations");
  require(grad.width == fwd.width && grad.height == fwd.height && grad.channels == 1, ErrorKind::Contract,
          "transient backward: gradient map has the wrong shape");
  const int r = config_.working_resolution;
  const int levels = static_cast<int>(config_.channels.size());
  const double slope = config_.leaky_slope;
  std::vector<double> out(params_.size(), 0.0);

  const ImageF g_small = (fwd.width == r && fwd.height == r) ? grad : bilinear_resize_backward(grad, r, r);
  Mat g(1, static_cast<Eigen::Index>(r) * r);
  for (int p = 0; p < r * r; ++p) {
    const double pr = fwd.probability_small(0, p);
    g(0, p) = g_small.data[p] * pr * (1.0 - pr);
  }

  // Returns dL/dinput and accumulates weight/bias gradients. g is dL/d(pre-activation).
  auto conv_back = [&](const Layer &l, const Mat &input, int res, const Mat &g_out) {
    const int out_res = res / l.stride;
    Eigen::Map<RowMat> dw(out.data() + l.weight_offset, l.out, static_cast<Eigen::Index>(l.in) * l.kernel * l.kernel);
    Eigen::Map<Eigen::VectorXd> db(out.data() + l.bias_offset, l.out);
    const Eigen::Map<const RowMat> w(params_.data() + l.weight_offset, l.out, static_cast<Eigen::Index>(l.in) * l.kernel * l.kernel);
    db += g_out.rowwise().sum();
    if (l.kernel == 1) {
      dw += g_out * input.transpose();
      return Mat(w.transpose() * g_out);
    }
    const Mat cols = im2col(input, res, l.kernel, l.stride, out_res);
    dw += g_out * cols.transpose();
    return col2im(w.transpose() * g_out, l.in, res, l.kernel, l.stride, out_res);
  };
  auto through_activation = [slope](const Mat &g_post, const Mat &post) {
    return Mat(g_post.binaryExpr(post, [slope](double gv, double v) { return v > 0.0 ? gv : slope * gv; }));
  };

  const std::size_t dec0 = static_cast<std::size_t>(levels) + 1; // index of first decoder activation
  int res = r;
  Mat g_below = conv_back(layers_.back(), fwd.activations.back(), res, g);
  std::vector<Mat> skip_grad(static_cast<std::size_t>(levels) + 1);
  for (int l = 0; l < levels; ++l) {
    const std::size_t act = dec0 + static_cast<std::size_t>(levels - 1 - l); // decoder output producing level l
    const Mat g_pre = through_activation(g_below, fwd.activations[act]);
    const Mat &below = act == dec0 ? fwd.activations[static_cast<std::size_t>(levels)] : fwd.activations[act - 1];
    const int below_res = res / 2;
    const Mat input = stack(upsample2(below, below_res), fwd.activations[static_cast<std::size_t>(l)]);
    const Mat g_input = conv_back(layers_[static_cast<std::size_t>(levels + (levels - 1 - l))], input, res, g_pre);
    skip_grad[static_cast<std::size_t>(l)] = g_input.bottomRows(fwd.activations[static_cast<std::size_t>(l)].rows());
    g_below = upsample2_backward(g_input.topRows(below.rows()), below_res);
    res = below_res;
  }
  // g_below is now dL/d(deepest encoder output); walk the encoder back up.
  for (int l = levels - 1; l >= 0; --l) {
    const Mat g_pre = through_activation(g_below, fwd.activations[static_cast<std::size_t>(l) + 1]);
    res *= 2;
    g_below = conv_back(layers_[static_cast<std::size_t>(l)], fwd.activations[static_cast<std::size_t>(l)], res, g_pre);
    if (l > 0) g_below += skip_grad[static_cast<std::size_t>(l)];
  }
  return out;
}

void TransientPredictor::step(std::span<const double> grads, double learning_rate) {
  adam_update(params_, grads, moments_, learning_rate, AdamHyper{});
}

} // namespace splatseg
