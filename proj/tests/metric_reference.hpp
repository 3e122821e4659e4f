// Copyright (c) 2026, OBIFormer contributors
// SPDX-License-Identifier: Apache-2.0
//
// Independent PSNR and SSIM transcriptions plus seeded image pairs.

#pragma once

#include <algorithm>
#include <cmath>
#include <random>

#include "obiformer/image.hpp"

namespace obiformer::reference {

inline Image random_image(int channels, int h, int w, std::mt19937_64& rng) {
  std::uniform_real_distribution<float> u(0.0f, 1.0f);
  Image img(channels, h, w);
  for (float& v : img.data) v = u(rng);
  return img;
}

inline Image perturb(const Image& src, double sigma, std::mt19937_64& rng) {
  std::normal_distribution<float> n(0.0f, static_cast<float>(sigma));
  Image out = src;
  for (float& v : out.data) v = std::clamp(v + n(rng), 0.0f, 1.0f);
  return out;
}

// 20·log10(range) − 10·log10(MSE) in long double.
inline double psnr_oracle(const Image& a, const Image& b) {
  long double sum = 0;
  for (std::size_t i = 0; i < a.data.size(); ++i) {
    const long double d = static_cast<long double>(a.data[i]) - static_cast<long double>(b.data[i]);
    sum += d * d;
  }
  const long double mse = sum / a.data.size();
  return static_cast<double>(-10.0L * std::log10(mse));
}

// Windowed SSIM with the full 2-D Gaussian kernel and two-pass moments at every window.
inline double ssim_oracle(const Image& a, const Image& b) {
  auto gray = [](const Image& img, int y, int x) {
    if (img.channels == 1) return static_cast<double>(img.at(0, y, x));
    return 0.299 * img.at(0, y, x) + 0.587 * img.at(1, y, x) + 0.114 * img.at(2, y, x);
  };
  double kernel[11][11], ksum = 0;
  for (int i = 0; i < 11; ++i)
    for (int j = 0; j < 11; ++j) ksum += kernel[i][j] = std::exp(-((i - 5.0) * (i - 5.0) + (j - 5.0) * (j - 5.0)) / 4.5);
  const double c1 = 1e-4, c2 = 9e-4;
  double total = 0;
  int windows = 0;
  for (int y0 = 0; y0 + 11 <= a.height; ++y0)
    for (int x0 = 0; x0 + 11 <= a.width; ++x0) {
      double mx = 0, my = 0;
      for (int i = 0; i < 11; ++i)
        for (int j = 0; j < 11; ++j) {
          mx += kernel[i][j] / ksum * gray(a, y0 + i, x0 + j);
          my += kernel[i][j] / ksum * gray(b, y0 + i, x0 + j);
        }
      double vx = 0, vy = 0, cov = 0;
      for (int i = 0; i < 11; ++i)
        for (int j = 0; j < 11; ++j) {
          const double dx = gray(a, y0 + i, x0 + j) - mx, dy = gray(b, y0 + i, x0 + j) - my;
          const double k = kernel[i][j] / ksum;
          vx += k * dx * dx;
          vy += k * dy * dy;
          cov += k * dx * dy;
        }
      total += (2 * mx * my + c1) * (2 * cov + c2) / ((mx * mx + my * my + c1) * (vx + vy + c2));
      ++windows;
    }
  return total / windows;
}

}  // namespace obiformer::reference
