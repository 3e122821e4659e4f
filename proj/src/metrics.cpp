// Copyright (c) 2026, OBIFormer contributors
// SPDX-License-Identifier: Apache-2.0

#include "obiformer/metrics.hpp"

#include <cmath>
#include <vector>

#include "obiformer/errors.hpp"

namespace obiformer {
namespace {

constexpr int kWindow = 11;
constexpr double kSigma = 1.5;

void require_same(const Image& a, const Image& b, const char* what) {
  if (a.channels != b.channels || !a.same_size(b)) {
    throw ShapeError(std::string(what) + ": image shapes differ");
  }
}

std::vector<double> luma(const Image& img) {
  const std::size_t n = static_cast<std::size_t>(img.height) * img.width;
  std::vector<double> out(n);
  if (img.channels == 1) {
    for (std::size_t i = 0; i < n; ++i) out[i] = img.data[i];
  } else if (img.channels == 3) {
    for (std::size_t i = 0; i < n; ++i) out[i] = 0.299 * img.data[i] + 0.587 * img.data[n + i] + 0.114 * img.data[2 * n + i];
  } else {
    throw ShapeError("ssim: expected 1 or 3 channels");
  }
  return out;
}

std::vector<double> gaussian_taps() {
  std::vector<double> g(kWindow);
  double sum = 0;
  for (int i = 0; i < kWindow; ++i) sum += g[i] = std::exp(-((i - 5) * (i - 5)) / (2 * kSigma * kSigma));
  for (double& v : g) v /= sum;
  return g;
}

// Separable "valid" filtering: output is (h-10)×(w-10).
std::vector<double> filter_valid(const std::vector<double>& x, int h, int w, const std::vector<double>& g) {
  const int oh = h - kWindow + 1, ow = w - kWindow + 1;
  std::vector<double> rows(static_cast<std::size_t>(h) * ow);
  for (int y = 0; y < h; ++y)
    for (int xo = 0; xo < ow; ++xo) {
      double s = 0;
      for (int k = 0; k < kWindow; ++k) s += g[k] * x[static_cast<std::size_t>(y) * w + xo + k];
      rows[static_cast<std::size_t>(y) * ow + xo] = s;
    }
  std::vector<double> out(static_cast<std::size_t>(oh) * ow);
  for (int yo = 0; yo < oh; ++yo)
    for (int xo = 0; xo < ow; ++xo) {
      double s = 0;
      for (int k = 0; k < kWindow; ++k) s += g[k] * rows[static_cast<std::size_t>(yo + k) * ow + xo];
      out[static_cast<std::size_t>(yo) * ow + xo] = s;
    }
  return out;
}

}  // namespace

double psnr(const Image& a, const Image& b, double dynamic_range) {
  require_same(a, b, "psnr");
  double acc = 0;
  for (std::size_t i = 0; i < a.data.size(); ++i) {
    const double d = static_cast<double>(a.data[i]) - b.data[i];
    acc += d * d;
  }
  const double mse = acc / static_cast<double>(a.data.size());
  if (mse < 1e-8) return kPsnrCap;
  return 10.0 * std::log10(dynamic_range * dynamic_range / mse);
}

double ssim(const Image& a, const Image& b) {
  require_same(a, b, "ssim");
  if (a.height < kWindow || a.width < kWindow) {
    throw ConfigError("ssim: image " + std::to_string(a.height) + "x" + std::to_string(a.width) +
                      " is smaller than the 11x11 window");
  }
  const int h = a.height, w = a.width;
  const auto x = luma(a), y = luma(b);
  std::vector<double> xx(x.size()), yy(x.size()), xy(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) {
    xx[i] = x[i] * x[i];
    yy[i] = y[i] * y[i];
    xy[i] = x[i] * y[i];
  }
  const auto g = gaussian_taps();
  const auto mx = filter_valid(x, h, w, g), my = filter_valid(y, h, w, g);
  const auto sxx = filter_valid(xx, h, w, g), syy = filter_valid(yy, h, w, g), sxy = filter_valid(xy, h, w, g);
  constexpr double c1 = 0.01 * 0.01, c2 = 0.03 * 0.03;
  double total = 0;
  for (std::size_t i = 0; i < mx.size(); ++i) {
    const double vx = sxx[i] - mx[i] * mx[i], vy = syy[i] - my[i] * my[i], cov = sxy[i] - mx[i] * my[i];
    total += ((2 * mx[i] * my[i] + c1) * (2 * cov + c2)) /
             ((mx[i] * mx[i] + my[i] * my[i] + c1) * (vx + vy + c2));
  }
  return total / static_cast<double>(mx.size());
}

}  // namespace obiformer
