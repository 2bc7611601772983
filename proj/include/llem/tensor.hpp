#pragma once

#include <Eigen/Core>

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <span>
#include <string>
#include <utility>

#include "llem/errors.hpp"
#include "llem/parallel.hpp"

namespace llem {

using Index = Eigen::Index;

/// Guard added to every pixel-wise denominator.
inline constexpr double kDivisionEpsilon = 1e-6;

struct Shape {
  Index height = 0;
  Index width = 0;
  Index channels = 0;

  friend bool operator==(const Shape&, const Shape&) = default;

  std::string str() const {
    return std::to_string(height) + "x" + std::to_string(width) + "x" + std::to_string(channels);
  }
};

/// H x W x C tensor stored row-major with interleaved channels. The backing
/// Eigen matrix has one row per pixel and one column per channel, so pixel
/// (y, x) is row y * W + x.
template <typename Scalar_>
class BasicImage {
 public:
  using Scalar = Scalar_;
  using Matrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

  BasicImage(Index height, Index width, Index channels, Scalar fill = Scalar(0))
      : shape_{height, width, channels} {
    check_shape(shape_);
    values_.setConstant(height * width, channels, fill);
  }

  BasicImage(Index height, Index width, Index channels, Matrix values)
      : shape_{height, width, channels}, values_(std::move(values)) {
    check_shape(shape_);
    if (values_.rows() != height * width || values_.cols() != channels) {
      throw DimensionError("image data is " + std::to_string(values_.rows()) + "x" +
                           std::to_string(values_.cols()) + ", expected " +
                           std::to_string(height * width) + "x" + std::to_string(channels));
    }
  }

  explicit BasicImage(const Shape& shape, Scalar fill = Scalar(0))
      : BasicImage(shape.height, shape.width, shape.channels, fill) {}

  Index height() const { return shape_.height; }
  Index width() const { return shape_.width; }
  Index channels() const { return shape_.channels; }
  Index pixels() const { return shape_.height * shape_.width; }
  Index size() const { return values_.size(); }
  const Shape& shape() const { return shape_; }

  Scalar& operator()(Index y, Index x, Index c) { return values_(y * shape_.width + x, c); }
  Scalar operator()(Index y, Index x, Index c) const { return values_(y * shape_.width + x, c); }

  Matrix& values() { return values_; }
  const Matrix& values() const { return values_; }
  auto array() { return values_.array(); }
  auto array() const { return values_.array(); }

  Scalar* data() { return values_.data(); }
  const Scalar* data() const { return values_.data(); }

  template <typename Other>
  BasicImage<Other> cast() const {
    return BasicImage<Other>(shape_.height, shape_.width, shape_.channels,
                             values_.template cast<Other>());
  }

 private:
  static void check_shape(const Shape& s) {
    if (s.height < 1 || s.width < 1 || s.channels < 1) {
      throw DimensionError("image dimensions must be positive, got " + s.str());
    }
  }

  Shape shape_;
  Matrix values_;
};

using Image = BasicImage<float>;

/// Token sequence: one row per token, one column per embedding dimension.
template <typename Scalar>
using BasicTokens = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using Tokens = BasicTokens<float>;

inline void require_same_shape(const Shape& a, const Shape& b, const char* what) {
  if (!(a == b)) {
    throw DimensionError(std::string(what) + ": shape mismatch " + a.str() + " vs " + b.str());
  }
}

enum class ElementwiseOp { Mul, Add, Sub, Div };

/// Pixel-wise binary op. Division adds `epsilon` to the denominator.
template <typename Scalar>
BasicImage<Scalar> elementwise(const BasicImage<Scalar>& a, const BasicImage<Scalar>& b,
                               ElementwiseOp op, Scalar epsilon = Scalar(kDivisionEpsilon)) {
  require_same_shape(a.shape(), b.shape(), "elementwise");
  BasicImage<Scalar> out(a.shape());
  switch (op) {
    case ElementwiseOp::Mul: out.array() = a.array() * b.array(); break;
    case ElementwiseOp::Add: out.array() = a.array() + b.array(); break;
    case ElementwiseOp::Sub: out.array() = a.array() - b.array(); break;
    case ElementwiseOp::Div: out.array() = a.array() / (b.array() + epsilon); break;
  }
  return out;
}

/// Convolution weights in (out, in, kh, kw) semantics. Internally the taps are
/// kept as a (kh*kw*in) x out matrix ordered (ky, kx, ic) to match the
/// channel-interleaved pixel layout.
template <typename Scalar>
class ConvKernel {
 public:
  using TapMatrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;
  using Vector = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

  ConvKernel(Index out_channels, Index in_channels, Index kernel_h, Index kernel_w)
      : out_(out_channels), in_(in_channels), kh_(kernel_h), kw_(kernel_w) {
    if (out_ < 1 || in_ < 1 || kh_ < 1 || kw_ < 1) {
      throw DimensionError("conv kernel dimensions must be positive");
    }
    taps_.setZero(kh_ * kw_ * in_, out_);
    bias_.setZero(out_);
  }

  /// Builds a kernel from a flat OIHW buffer and an optional bias of length out.
  static ConvKernel from_oihw(Index out_channels, Index in_channels, Index kernel_h,
                              Index kernel_w, std::span<const float> weights,
                              std::span<const float> bias = {}) {
    ConvKernel k(out_channels, in_channels, kernel_h, kernel_w);
    if (static_cast<Index>(weights.size()) != out_channels * in_channels * kernel_h * kernel_w) {
      throw DimensionError("conv weight buffer has " + std::to_string(weights.size()) +
                           " values, expected OIHW product");
    }
    if (!bias.empty() && static_cast<Index>(bias.size()) != out_channels) {
      throw DimensionError("conv bias length does not match output channels");
    }
    std::size_t n = 0;
    for (Index o = 0; o < out_channels; ++o)
      for (Index i = 0; i < in_channels; ++i)
        for (Index y = 0; y < kernel_h; ++y)
          for (Index x = 0; x < kernel_w; ++x) k(o, i, y, x) = static_cast<Scalar>(weights[n++]);
    for (Index o = 0; o < static_cast<Index>(bias.size()); ++o) k.bias_(o) = static_cast<Scalar>(bias[o]);
    return k;
  }

  Index out_channels() const { return out_; }
  Index in_channels() const { return in_; }
  Index kernel_h() const { return kh_; }
  Index kernel_w() const { return kw_; }

  Scalar& operator()(Index o, Index i, Index ky, Index kx) { return taps_((ky * kw_ + kx) * in_ + i, o); }
  Scalar operator()(Index o, Index i, Index ky, Index kx) const { return taps_((ky * kw_ + kx) * in_ + i, o); }

  const TapMatrix& taps() const { return taps_; }
  TapMatrix& taps() { return taps_; }
  const Vector& bias() const { return bias_; }
  Vector& bias() { return bias_; }

 private:
  Index out_, in_, kh_, kw_;
  TapMatrix taps_;
  Vector bias_;
};

enum class Padding { Valid, SameZero };

inline Index padding_amount(Padding p, Index kernel) {
  return p == Padding::SameZero ? (kernel - 1) / 2 : 0;
}

/// Cross-correlation. Output size is floor((H + 2p - kh) / stride) + 1 per axis.
template <typename Scalar>
BasicImage<Scalar> conv2d(const BasicImage<Scalar>& x, const ConvKernel<Scalar>& kernel,
                          Index stride = 1, Padding padding = Padding::SameZero) {
  if (stride < 1) throw DimensionError("conv2d: stride must be >= 1");
  if (kernel.in_channels() != x.channels()) {
    throw DimensionError("conv2d: kernel expects " + std::to_string(kernel.in_channels()) +
                         " input channels, image " + x.shape().str() + " has " +
                         std::to_string(x.channels()));
  }
  const Index kh = kernel.kernel_h(), kw = kernel.kernel_w();
  const Index ph = padding_amount(padding, kh), pw = padding_amount(padding, kw);
  if (x.height() + 2 * ph < kh || x.width() + 2 * pw < kw) {
    throw DimensionError("conv2d: kernel larger than padded input " + x.shape().str());
  }
  const Index oh = (x.height() + 2 * ph - kh) / stride + 1;
  const Index ow = (x.width() + 2 * pw - kw) / stride + 1;
  const Index ic = x.channels();
  BasicImage<Scalar> out(oh, ow, kernel.out_channels());

  parallel_for(0, static_cast<std::size_t>(oh), [&](std::size_t row) {
    const Index oy = static_cast<Index>(row);
    typename BasicImage<Scalar>::Matrix cols =
        BasicImage<Scalar>::Matrix::Zero(ow, kh * kw * ic);
    for (Index ox = 0; ox < ow; ++ox) {
      for (Index ky = 0; ky < kh; ++ky) {
        const Index iy = oy * stride + ky - ph;
        if (iy < 0 || iy >= x.height()) continue;
        for (Index kx = 0; kx < kw; ++kx) {
          const Index ix = ox * stride + kx - pw;
          if (ix < 0 || ix >= x.width()) continue;
          cols.row(ox).segment((ky * kw + kx) * ic, ic) = x.values().row(iy * x.width() + ix);
        }
      }
    }
    auto dst = out.values().middleRows(oy * ow, ow);
    dst.noalias() = cols * kernel.taps();
    dst.rowwise() += kernel.bias().transpose();
  });
  return out;
}

/// Adjoint of conv2d with the same kernel, stride and padding: maps the
/// kernel's output channels back to its input channels. Output size is
/// (H - 1) * stride + kh - 2p per axis. The kernel's own bias is ignored;
/// `bias`, when non-empty, has one entry per output (kernel input) channel.
template <typename Scalar>
BasicImage<Scalar> transposed_conv2d(
    const BasicImage<Scalar>& y, const ConvKernel<Scalar>& kernel, Index stride = 2,
    Index padding = 0,
    const Eigen::Matrix<Scalar, Eigen::Dynamic, 1>& bias = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>()) {
  if (stride < 1) throw DimensionError("transposed_conv2d: stride must be >= 1");
  if (padding < 0) throw DimensionError("transposed_conv2d: negative padding");
  if (kernel.out_channels() != y.channels()) {
    throw DimensionError("transposed_conv2d: kernel expects " +
                         std::to_string(kernel.out_channels()) + " channels, image " +
                         y.shape().str());
  }
  const Index kh = kernel.kernel_h(), kw = kernel.kernel_w();
  const Index oh = (y.height() - 1) * stride + kh - 2 * padding;
  const Index ow = (y.width() - 1) * stride + kw - 2 * padding;
  if (oh < 1 || ow < 1) throw DimensionError("transposed_conv2d: empty output");
  const Index ic = kernel.in_channels();
  if (bias.size() != 0 && bias.size() != ic) {
    throw DimensionError("transposed_conv2d: bias length does not match output channels");
  }
  const Eigen::Matrix<Scalar, Eigen::Dynamic, 1> base =
      bias.size() == 0 ? Eigen::Matrix<Scalar, Eigen::Dynamic, 1>::Zero(ic) : bias;
  BasicImage<Scalar> out(oh, ow, ic);

  parallel_for(0, static_cast<std::size_t>(oh), [&](std::size_t row) {
    const Index r = static_cast<Index>(row);
    Eigen::Matrix<Scalar, Eigen::Dynamic, 1> acc(ic);
    for (Index c = 0; c < ow; ++c) {
      acc = base;
      for (Index ky = 0; ky < kh; ++ky) {
        const Index ty = r + padding - ky;
        if (ty < 0 || ty % stride != 0) continue;
        const Index iy = ty / stride;
        if (iy >= y.height()) continue;
        for (Index kx = 0; kx < kw; ++kx) {
          const Index tx = c + padding - kx;
          if (tx < 0 || tx % stride != 0) continue;
          const Index ix = tx / stride;
          if (ix >= y.width()) continue;
          acc.noalias() += kernel.taps().middleRows((ky * kw + kx) * ic, ic) *
                           y.values().row(iy * y.width() + ix).transpose();
        }
      }
      out.values().row(r * ow + c) = acc.transpose();
    }
  });
  return out;
}

/// Splits an image into non-overlapping patch x patch tokens in raster order.
/// Token layout is (dy, dx, channel).
template <typename Scalar>
BasicTokens<Scalar> patchify(const BasicImage<Scalar>& x, Index patch) {
  if (patch < 1) throw DimensionError("patchify: patch size must be >= 1");
  if (x.height() % patch != 0 || x.width() % patch != 0) {
    throw DimensionError("patchify: image " + x.shape().str() + " not divisible by patch " +
                         std::to_string(patch));
  }
  const Index gh = x.height() / patch, gw = x.width() / patch, c = x.channels();
  BasicTokens<Scalar> tokens(gh * gw, patch * patch * c);
  for (Index py = 0; py < gh; ++py)
    for (Index px = 0; px < gw; ++px)
      for (Index dy = 0; dy < patch; ++dy)
        for (Index dx = 0; dx < patch; ++dx)
          tokens.row(py * gw + px).segment((dy * patch + dx) * c, c) =
              x.values().row((py * patch + dy) * x.width() + px * patch + dx);
  return tokens;
}

/// Inverse of patchify for an image of the given shape.
template <typename Scalar>
BasicImage<Scalar> unpatchify(const BasicTokens<Scalar>& tokens, const Shape& shape, Index patch) {
  if (patch < 1) throw DimensionError("unpatchify: patch size must be >= 1");
  if (shape.height % patch != 0 || shape.width % patch != 0) {
    throw DimensionError("unpatchify: shape " + shape.str() + " not divisible by patch " +
                         std::to_string(patch));
  }
  const Index gh = shape.height / patch, gw = shape.width / patch, c = shape.channels;
  if (tokens.rows() != gh * gw || tokens.cols() != patch * patch * c) {
    throw DimensionError("unpatchify: token matrix " + std::to_string(tokens.rows()) + "x" +
                         std::to_string(tokens.cols()) + " does not match " + shape.str());
  }
  BasicImage<Scalar> x(shape);
  for (Index py = 0; py < gh; ++py)
    for (Index px = 0; px < gw; ++px)
      for (Index dy = 0; dy < patch; ++dy)
        for (Index dx = 0; dx < patch; ++dx)
          x.values().row((py * patch + dy) * shape.width + px * patch + dx) =
              tokens.row(py * gw + px).segment((dy * patch + dx) * c, c);
  return x;
}

/// Clamps to [0, 1]; NaN maps to 0.
template <typename Scalar>
BasicImage<Scalar> clamp01(const BasicImage<Scalar>& x) {
  BasicImage<Scalar> out(x.shape());
  out.array() = x.array().unaryExpr([](Scalar v) {
    if (std::isnan(v)) return Scalar(0);
    return std::clamp(v, Scalar(0), Scalar(1));
  });
  return out;
}

template <typename Scalar>
std::size_t count_nan(const BasicImage<Scalar>& x) {
  return static_cast<std::size_t>(x.array().isNaN().count());
}

template <typename Scalar>
bool all_finite(const BasicImage<Scalar>& x) {
  return x.values().allFinite();
}

/// Area-average downsampling by an integer factor.
template <typename Scalar>
BasicImage<Scalar> area_downsample(const BasicImage<Scalar>& x, Index factor) {
  if (factor < 1 || x.height() % factor != 0 || x.width() % factor != 0) {
    throw DimensionError("area_downsample: " + x.shape().str() + " not divisible by " +
                         std::to_string(factor));
  }
  if (factor == 1) return x;
  const Index oh = x.height() / factor, ow = x.width() / factor;
  BasicImage<Scalar> out(oh, ow, x.channels());
  const Scalar scale = Scalar(1) / static_cast<Scalar>(factor * factor);
  for (Index y = 0; y < oh; ++y)
    for (Index xx = 0; xx < ow; ++xx) {
      auto dst = out.values().row(y * ow + xx);
      for (Index dy = 0; dy < factor; ++dy)
        for (Index dx = 0; dx < factor; ++dx)
          dst += x.values().row((y * factor + dy) * x.width() + xx * factor + dx);
      dst *= scale;
    }
  return out;
}

template <typename Scalar>
BasicImage<Scalar> flip_horizontal(const BasicImage<Scalar>& x) {
  BasicImage<Scalar> out(x.shape());
  for (Index y = 0; y < x.height(); ++y)
    for (Index xx = 0; xx < x.width(); ++xx)
      out.values().row(y * x.width() + xx) = x.values().row(y * x.width() + x.width() - 1 - xx);
  return out;
}

template <typename Scalar>
BasicImage<Scalar> flip_vertical(const BasicImage<Scalar>& x) {
  BasicImage<Scalar> out(x.shape());
  for (Index y = 0; y < x.height(); ++y)
    out.values().middleRows(y * x.width(), x.width()) =
        x.values().middleRows((x.height() - 1 - y) * x.width(), x.width());
  return out;
}

/// Frobenius norm accumulated in double.
template <typename Scalar>
double frobenius_norm(const BasicImage<Scalar>& x) {
  return x.values().template cast<double>().norm();
}

}  // namespace llem
