#pragma once

#include <string>
#include <vector>

#include "llem/tensor.hpp"

namespace llem {

struct MetricReport {
  double psnr = 0.0;  // dB; +infinity for identical images
  double ssim = 0.0;
  std::vector<double> psnr_per_channel;
  std::vector<double> ssim_per_channel;

  /// One-line JSON object; infinite PSNR is written as the string "inf".
  std::string to_json() const;
  std::string to_text() const;
};

/// 10 log10(peak^2 / MSE) with the MSE accumulated in double.
double psnr(const Image& x, const Image& y, double peak = 1.0);

/// Single-scale SSIM: 11x11 Gaussian window (sigma 1.5), K1 = 0.01, K2 = 0.03,
/// peak 1. Averaged over every fully contained window and over channels.
double ssim(const Image& x, const Image& y);

MetricReport compare(const Image& reference, const Image& test);

/// Formats a PSNR value the way reports print it ("inf" when infinite).
std::string format_psnr(double db);

}  // namespace llem
