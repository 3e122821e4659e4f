// Copyright (c) 2026, OBIFormer contributors
// SPDX-License-Identifier: Apache-2.0
//
// Planar float images in [0,1], binary masks, PNG I/O and resampling.

#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "obiformer/tensor.hpp"

namespace obiformer {

/// Channel-planar (C×H×W) image.
struct Image {
  int channels = 0;
  int height = 0;
  int width = 0;
  std::vector<float> data;

  Image() = default;
  Image(int c, int h, int w, float fill = 0.0f)
      : channels(c), height(h), width(w), data(static_cast<std::size_t>(c) * h * w, fill) {}

  float& at(int c, int y, int x) { return data[(static_cast<std::size_t>(c) * height + y) * width + x]; }
  float at(int c, int y, int x) const { return data[(static_cast<std::size_t>(c) * height + y) * width + x]; }
  bool same_size(const Image& o) const { return height == o.height && width == o.width; }
  bool operator==(const Image&) const = default;
};

/// Binary image, 1 = foreground.
struct Mask {
  int height = 0;
  int width = 0;
  std::vector<std::uint8_t> data;

  Mask() = default;
  Mask(int h, int w) : height(h), width(w), data(static_cast<std::size_t>(h) * w, 0) {}

  std::uint8_t& at(int y, int x) { return data[static_cast<std::size_t>(y) * width + x]; }
  std::uint8_t at(int y, int x) const { return data[static_cast<std::size_t>(y) * width + x]; }
  /// Zero outside the image.
  std::uint8_t get(int y, int x) const { return (y < 0 || y >= height || x < 0 || x >= width) ? 0 : at(y, x); }
  std::size_t count() const;
  bool operator==(const Mask&) const = default;
};

/// Decodes an 8-bit PNG as gray (1 channel) or RGB (3 channels).
/// Throws IngestionError naming the path on failure.
Image read_png(const std::string& path, int channels = 3);
/// Writes 1- or 3-channel images, quantizing to 8 bits.
void write_png(const std::string& path, const Image& image);

Image mask_to_image(const Mask& mask);
/// Foreground where the first channel exceeds 0.5.
Mask image_to_mask(const Image& image);

/// Rec. 601 luma for 3 channels, identity for 1.
Image luminance(const Image& image);
Image to_rgb(const Image& image);
Image resize_bilinear(const Image& image, int height, int width);
Image crop(const Image& image, int y, int x, int height, int width);
/// Pads bottom/right by reflection (without repeating the edge pixel).
Image reflect_pad(const Image& image, int height, int width);

/// Stacks equally sized images into a B×C×H×W tensor.
Tensor<float> to_tensor(const std::vector<const Image*>& images);
Image from_tensor(const Tensor<float>& t, int batch, bool clamp01 = true);

}  // namespace obiformer
