// Copyright (c) 2026, OBIFormer contributors
// SPDX-License-Identifier: Apache-2.0

#include "obiformer/image.hpp"

#include <png.h>

#include <algorithm>
#include <cmath>
#include <cstring>

#include "obiformer/errors.hpp"

namespace obiformer {

std::size_t Mask::count() const { return static_cast<std::size_t>(std::count(data.begin(), data.end(), 1)); }

Image read_png(const std::string& path, int channels) {
  if (channels != 1 && channels != 3) throw ConfigError("read_png: channels must be 1 or 3");
  png_image png;
  std::memset(&png, 0, sizeof(png));
  png.version = PNG_IMAGE_VERSION;
  if (!png_image_begin_read_from_file(&png, path.c_str())) {
    throw IngestionError(path + ": " + png.message);
  }
  png.format = channels == 1 ? PNG_FORMAT_GRAY : PNG_FORMAT_RGB;
  std::vector<png_byte> buffer(PNG_IMAGE_SIZE(png));
  if (!png_image_finish_read(&png, nullptr, buffer.data(), 0, nullptr)) {
    const std::string message = png.message;
    png_image_free(&png);
    throw IngestionError(path + ": " + message);
  }
  Image img(channels, static_cast<int>(png.height), static_cast<int>(png.width));
  for (int y = 0; y < img.height; ++y)
    for (int x = 0; x < img.width; ++x)
      for (int c = 0; c < channels; ++c)
        img.at(c, y, x) = buffer[(static_cast<std::size_t>(y) * img.width + x) * channels + c] / 255.0f;
  return img;
}

void write_png(const std::string& path, const Image& image) {
  if (image.channels != 1 && image.channels != 3) throw ConfigError("write_png: channels must be 1 or 3");
  png_image png;
  std::memset(&png, 0, sizeof(png));
  png.version = PNG_IMAGE_VERSION;
  png.width = static_cast<png_uint_32>(image.width);
  png.height = static_cast<png_uint_32>(image.height);
  png.format = image.channels == 1 ? PNG_FORMAT_GRAY : PNG_FORMAT_RGB;
  std::vector<png_byte> buffer(PNG_IMAGE_SIZE(png));
  for (int y = 0; y < image.height; ++y)
    for (int x = 0; x < image.width; ++x)
      for (int c = 0; c < image.channels; ++c) {
        const float v = std::clamp(image.at(c, y, x), 0.0f, 1.0f);
        buffer[(static_cast<std::size_t>(y) * image.width + x) * image.channels + c] =
            static_cast<png_byte>(std::lround(v * 255.0f));
      }
  if (!png_image_write_to_file(&png, path.c_str(), 0, buffer.data(), 0, nullptr)) {
    throw IngestionError(path + ": " + png.message);
  }
}

Image mask_to_image(const Mask& mask) {
  Image img(1, mask.height, mask.width);
  for (std::size_t i = 0; i < mask.data.size(); ++i) img.data[i] = mask.data[i] ? 1.0f : 0.0f;
  return img;
}

Mask image_to_mask(const Image& image) {
  Mask m(image.height, image.width);
  for (std::size_t i = 0; i < m.data.size(); ++i) m.data[i] = image.data[i] > 0.5f ? 1 : 0;
  return m;
}

Image luminance(const Image& image) {
  if (image.channels == 1) return image;
  if (image.channels != 3) throw ShapeError("luminance: expected 1 or 3 channels");
  Image out(1, image.height, image.width);
  for (int y = 0; y < image.height; ++y)
    for (int x = 0; x < image.width; ++x)
      out.at(0, y, x) = 0.299f * image.at(0, y, x) + 0.587f * image.at(1, y, x) + 0.114f * image.at(2, y, x);
  return out;
}

Image to_rgb(const Image& image) {
  if (image.channels == 3) return image;
  if (image.channels != 1) throw ShapeError("to_rgb: expected 1 or 3 channels");
  Image out(3, image.height, image.width);
  for (int c = 0; c < 3; ++c) std::copy(image.data.begin(), image.data.end(), out.data.begin() + c * image.data.size());
  return out;
}

// Half-pixel-centre sampling, edge clamped.
Image resize_bilinear(const Image& image, int height, int width) {
  if (height <= 0 || width <= 0) throw ShapeError("resize_bilinear: target size must be positive");
  if (height == image.height && width == image.width) return image;
  Image out(image.channels, height, width);
  const float sy = static_cast<float>(image.height) / height, sx = static_cast<float>(image.width) / width;
  for (int y = 0; y < height; ++y) {
    const float fy = std::clamp((y + 0.5f) * sy - 0.5f, 0.0f, static_cast<float>(image.height - 1));
    const int y0 = static_cast<int>(fy), y1 = std::min(y0 + 1, image.height - 1);
    const float wy = fy - y0;
    for (int x = 0; x < width; ++x) {
      const float fx = std::clamp((x + 0.5f) * sx - 0.5f, 0.0f, static_cast<float>(image.width - 1));
      const int x0 = static_cast<int>(fx), x1 = std::min(x0 + 1, image.width - 1);
      const float wx = fx - x0;
      for (int c = 0; c < image.channels; ++c) {
        const float top = image.at(c, y0, x0) * (1 - wx) + image.at(c, y0, x1) * wx;
        const float bottom = image.at(c, y1, x0) * (1 - wx) + image.at(c, y1, x1) * wx;
        out.at(c, y, x) = top * (1 - wy) + bottom * wy;
      }
    }
  }
  return out;
}

Image crop(const Image& image, int y0, int x0, int height, int width) {
  if (y0 < 0 || x0 < 0 || y0 + height > image.height || x0 + width > image.width) {
    throw ShapeError("crop window exceeds the image");
  }
  Image out(image.channels, height, width);
  for (int c = 0; c < image.channels; ++c)
    for (int y = 0; y < height; ++y)
      for (int x = 0; x < width; ++x) out.at(c, y, x) = image.at(c, y0 + y, x0 + x);
  return out;
}

Image reflect_pad(const Image& image, int height, int width) {
  if (height < image.height || width < image.width) throw ShapeError("reflect_pad: target smaller than image");
  auto reflect = [](int i, int n) {
    if (n == 1) return 0;
    const int period = 2 * (n - 1);
    i %= period;
    return i < n ? i : period - i;
  };
  Image out(image.channels, height, width);
  for (int c = 0; c < image.channels; ++c)
    for (int y = 0; y < height; ++y)
      for (int x = 0; x < width; ++x) out.at(c, y, x) = image.at(c, reflect(y, image.height), reflect(x, image.width));
  return out;
}

Tensor<float> to_tensor(const std::vector<const Image*>& images) {
  if (images.empty()) throw ShapeError("to_tensor: no images");
  const Image& first = *images.front();
  Tensor<float> t(Shape{static_cast<int>(images.size()), first.channels, first.height, first.width});
  for (std::size_t b = 0; b < images.size(); ++b) {
    const Image& img = *images[b];
    if (img.channels != first.channels || !img.same_size(first)) throw ShapeError("to_tensor: images differ in size");
    std::copy(img.data.begin(), img.data.end(), t.data() + b * img.data.size());
  }
  return t;
}

Image from_tensor(const Tensor<float>& t, int batch, bool clamp01) {
  require_nchw(t, "from_tensor");
  Image img(t.dim(1), t.dim(2), t.dim(3));
  const float* src = t.data() + static_cast<std::size_t>(batch) * img.data.size();
  for (std::size_t i = 0; i < img.data.size(); ++i) img.data[i] = clamp01 ? std::clamp(src[i], 0.0f, 1.0f) : src[i];
  return img;
}

}  // namespace obiformer
