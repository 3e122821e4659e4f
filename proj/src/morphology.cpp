// Copyright (c) 2026, OBIFormer contributors
// SPDX-License-Identifier: Apache-2.0

#include <cmath>

#include "obiformer/data.hpp"

namespace obiformer {

int otsu_threshold(const std::array<std::uint64_t, 256>& histogram) {
  double total = 0, weighted = 0;
  int populated = 0;
  for (int i = 0; i < 256; ++i) {
    total += static_cast<double>(histogram[i]);
    weighted += i * static_cast<double>(histogram[i]);
    populated += histogram[i] > 0;
  }
  if (populated < 2) return -1;

  int best = -1;
  double best_var = -1, w0 = 0, sum0 = 0;
  for (int t = 0; t < 255; ++t) {
    w0 += static_cast<double>(histogram[t]);
    sum0 += t * static_cast<double>(histogram[t]);
    const double w1 = total - w0;
    if (w0 == 0 || w1 == 0) continue;
    const double mu0 = sum0 / w0, mu1 = (weighted - sum0) / w1;
    const double between = w0 * w1 * (mu0 - mu1) * (mu0 - mu1);
    if (between > best_var) {
      best_var = between;
      best = t;
    }
  }
  return best;
}

Mask binarize(const Image& image) {
  const Image gray = luminance(image);
  std::vector<int> levels(gray.data.size());
  std::array<std::uint64_t, 256> hist{};
  for (std::size_t i = 0; i < levels.size(); ++i) {
    levels[i] = static_cast<int>(std::lround(std::clamp(gray.data[i], 0.0f, 1.0f) * 255.0f));
    ++hist[levels[i]];
  }
  Mask mask(gray.height, gray.width);
  const int t = otsu_threshold(hist);
  if (t < 0) return mask;
  std::size_t light = 0;
  for (int v : levels) light += v > t;
  const bool light_is_ink = 2 * light <= levels.size();
  for (std::size_t i = 0; i < levels.size(); ++i) mask.data[i] = (levels[i] > t) == light_is_ink ? 1 : 0;
  return mask;
}

Mask skeletonize(const Mask& mask) {
  Mask m = mask;
  std::vector<std::size_t> doomed;
  bool changed = true;
  while (changed) {
    changed = false;
    for (int pass = 0; pass < 2; ++pass) {
      doomed.clear();
      for (int y = 0; y < m.height; ++y)
        for (int x = 0; x < m.width; ++x) {
          if (!m.at(y, x)) continue;
          // P2..P9 clockwise from north.
          const int p[8] = {m.get(y - 1, x), m.get(y - 1, x + 1), m.get(y, x + 1), m.get(y + 1, x + 1),
                            m.get(y + 1, x), m.get(y + 1, x - 1), m.get(y, x - 1), m.get(y - 1, x - 1)};
          int b = 0, a = 0;
          for (int k = 0; k < 8; ++k) {
            b += p[k];
            a += (p[k] == 0 && p[(k + 1) % 8] == 1);
          }
          if (b < 2 || b > 6 || a != 1) continue;
          const int p2 = p[0], p4 = p[2], p6 = p[4], p8 = p[6];
          const bool ok = pass == 0 ? (p2 * p4 * p6 == 0 && p4 * p6 * p8 == 0)
                                    : (p2 * p4 * p8 == 0 && p2 * p6 * p8 == 0);
          if (ok) doomed.push_back(static_cast<std::size_t>(y) * m.width + x);
        }
      for (auto i : doomed) m.data[i] = 0;
      changed = changed || !doomed.empty();
    }
  }
  return m;
}

Image skeleton_ground_truth(const Image& clean) { return mask_to_image(skeletonize(binarize(clean))); }

}  // namespace obiformer
