// Copyright (c) 2026, OBIFormer contributors
// SPDX-License-Identifier: Apache-2.0
//
// Full-reference image quality metrics.

#pragma once

#include "obiformer/image.hpp"

namespace obiformer {

inline constexpr double kPsnrCap = 80.0;

/// 10·log10(range² / MSE) over all channels; kPsnrCap when MSE < 1e-8.
double psnr(const Image& a, const Image& b, double dynamic_range = 1.0);

/// Mean SSIM over the valid region of an 11×11 Gaussian window (sigma 1.5),
/// K1 = 0.01, K2 = 0.03, range 1, on Rec. 601 luminance.
/// Throws ConfigError when the image is smaller than the window.
double ssim(const Image& a, const Image& b);

}  // namespace obiformer
