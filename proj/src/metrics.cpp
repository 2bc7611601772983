#include "llem/metrics.hpp"

#include <array>
#include <cmath>
#include <cstdio>
#include <limits>

namespace llem {
namespace {

constexpr int kWindow = 11;
constexpr double kSigma = 1.5;
constexpr double kC1 = 0.01 * 0.01;
constexpr double kC2 = 0.03 * 0.03;

std::array<double, kWindow> gaussian_window() {
  std::array<double, kWindow> g{};
  double sum = 0.0;
  for (int i = 0; i < kWindow; ++i) {
    const double d = i - kWindow / 2;
    g[i] = std::exp(-d * d / (2.0 * kSigma * kSigma));
    sum += g[i];
  }
  for (auto& v : g) v /= sum;
  return g;
}

using Plane = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

// 'valid' separable Gaussian filter.
Plane filter_valid(const Plane& p, const std::array<double, kWindow>& g) {
  const Index h = p.rows(), w = p.cols();
  Plane horiz(h, w - kWindow + 1);
  for (Index y = 0; y < h; ++y)
    for (Index x = 0; x + kWindow <= w; ++x) {
      double acc = 0.0;
      for (int k = 0; k < kWindow; ++k) acc += g[k] * p(y, x + k);
      horiz(y, x) = acc;
    }
  Plane out(h - kWindow + 1, w - kWindow + 1);
  for (Index y = 0; y + kWindow <= h; ++y)
    for (Index x = 0; x < out.cols(); ++x) {
      double acc = 0.0;
      for (int k = 0; k < kWindow; ++k) acc += g[k] * horiz(y + k, x);
      out(y, x) = acc;
    }
  return out;
}

Plane channel_plane(const Image& img, Index c) {
  Plane p(img.height(), img.width());
  for (Index y = 0; y < img.height(); ++y)
    for (Index x = 0; x < img.width(); ++x) p(y, x) = static_cast<double>(img(y, x, c));
  return p;
}

double channel_ssim(const Image& a, const Image& b, Index c) {
  static const auto g = gaussian_window();
  const Plane x = channel_plane(a, c);
  const Plane y = channel_plane(b, c);
  const Plane mx = filter_valid(x, g);
  const Plane my = filter_valid(y, g);
  const Plane exx = filter_valid(x.cwiseProduct(x), g);
  const Plane eyy = filter_valid(y.cwiseProduct(y), g);
  const Plane exy = filter_valid(x.cwiseProduct(y), g);
  double total = 0.0;
  for (Index i = 0; i < mx.rows(); ++i)
    for (Index j = 0; j < mx.cols(); ++j) {
      const double ux = mx(i, j), uy = my(i, j);
      const double vx = exx(i, j) - ux * ux;
      const double vy = eyy(i, j) - uy * uy;
      const double cxy = exy(i, j) - ux * uy;
      total += ((2.0 * ux * uy + kC1) * (2.0 * cxy + kC2)) /
               ((ux * ux + uy * uy + kC1) * (vx + vy + kC2));
    }
  return total / static_cast<double>(mx.size());
}

double mse_to_psnr(double mse, double peak) {
  if (mse == 0.0) return std::numeric_limits<double>::infinity();
  return 10.0 * std::log10(peak * peak / mse);
}

}  // namespace

double psnr(const Image& x, const Image& y, double peak) {
  require_same_shape(x.shape(), y.shape(), "psnr");
  const double mse = (x.values().cast<double>() - y.values().cast<double>()).squaredNorm() /
                     static_cast<double>(x.size());
  return mse_to_psnr(mse, peak);
}

double ssim(const Image& x, const Image& y) {
  require_same_shape(x.shape(), y.shape(), "ssim");
  if (x.height() < kWindow || x.width() < kWindow) {
    throw DimensionError("ssim: image " + x.shape().str() + " smaller than the 11x11 window");
  }
  double total = 0.0;
  for (Index c = 0; c < x.channels(); ++c) total += channel_ssim(x, y, c);
  return total / static_cast<double>(x.channels());
}

MetricReport compare(const Image& reference, const Image& test) {
  require_same_shape(reference.shape(), test.shape(), "compare");
  MetricReport r;
  r.psnr = psnr(reference, test);
  r.ssim = ssim(reference, test);
  for (Index c = 0; c < reference.channels(); ++c) {
    const double mse = (reference.values().col(c).cast<double>() - test.values().col(c).cast<double>())
                           .squaredNorm() /
                       static_cast<double>(reference.pixels());
    r.psnr_per_channel.push_back(mse_to_psnr(mse, 1.0));
    r.ssim_per_channel.push_back(channel_ssim(reference, test, c));
  }
  return r;
}

std::string format_psnr(double db) {
  if (std::isinf(db)) return "inf";
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.4f", db);
  return buf;
}

std::string MetricReport::to_json() const {
  char ssim_buf[32];
  std::snprintf(ssim_buf, sizeof(ssim_buf), "%.6f", ssim);
  const std::string p = std::isinf(psnr) ? "\"inf\"" : format_psnr(psnr);
  return std::string("{\"psnr\":") + p + ",\"ssim\":" + ssim_buf + "}";
}

std::string MetricReport::to_text() const {
  char ssim_buf[32];
  std::snprintf(ssim_buf, sizeof(ssim_buf), "%.6f", ssim);
  return "PSNR " + format_psnr(psnr) + " dB, SSIM " + ssim_buf;
}

}  // namespace llem
