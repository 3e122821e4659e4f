// Copyright (c) 2026, OBIFormer contributors
// SPDX-License-Identifier: Apache-2.0
//
// Procedural white-occlusion generators for the four degradation kinds and
// a stroke-based glyph renderer used for synthetic training pairs.

#include <algorithm>
#include <cmath>
#include <random>

#include "obiformer/data.hpp"
#include "obiformer/errors.hpp"

namespace obiformer {
namespace {

using Rng = std::mt19937_64;

double uniform(Rng& rng, double lo, double hi) { return std::uniform_real_distribution<double>(lo, hi)(rng); }
int uniform_int(Rng& rng, int lo, int hi) { return std::uniform_int_distribution<int>(lo, hi)(rng); }

float smooth_edge(double inside) { return static_cast<float>(std::clamp(inside + 0.5, 0.0, 1.0)); }

/// Bilinear interpolation of random lattices, summed over octaves; in [0,1].
class ValueNoise {
 public:
  ValueNoise(Rng& rng, double base_cell, int octaves) {
    double cell = base_cell, amp = 1.0;
    for (int o = 0; o < octaves; ++o) {
      Octave oct{cell, amp, {}};
      oct.lattice.resize(kSize * kSize);
      for (auto& v : oct.lattice) v = uniform(rng, 0.0, 1.0);
      norm_ += amp;
      octaves_.push_back(std::move(oct));
      cell /= 2;
      amp /= 2;
    }
  }

  double operator()(double y, double x) const {
    double s = 0;
    for (const auto& o : octaves_) {
      const double fy = y / o.cell, fx = x / o.cell;
      const int y0 = static_cast<int>(std::floor(fy)), x0 = static_cast<int>(std::floor(fx));
      double ty = fy - y0, tx = fx - x0;
      ty = ty * ty * (3 - 2 * ty);
      tx = tx * tx * (3 - 2 * tx);
      auto l = [&](int i, int j) { return o.lattice[(wrap(i) * kSize) + wrap(j)]; };
      const double top = l(y0, x0) * (1 - tx) + l(y0, x0 + 1) * tx;
      const double bottom = l(y0 + 1, x0) * (1 - tx) + l(y0 + 1, x0 + 1) * tx;
      s += o.amp * (top * (1 - ty) + bottom * ty);
    }
    return s / norm_;
  }

 private:
  static constexpr int kSize = 64;
  static int wrap(int i) { return ((i % kSize) + kSize) % kSize; }
  struct Octave {
    double cell, amp;
    std::vector<double> lattice;
  };
  std::vector<Octave> octaves_;
  double norm_ = 0;
};

void stamp_disc(Image& m, double cy, double cx, double radius, float opacity) {
  const int y0 = std::max(0, static_cast<int>(cy - radius - 1)), y1 = std::min(m.height - 1, static_cast<int>(cy + radius + 1));
  const int x0 = std::max(0, static_cast<int>(cx - radius - 1)), x1 = std::min(m.width - 1, static_cast<int>(cx + radius + 1));
  for (int y = y0; y <= y1; ++y)
    for (int x = x0; x <= x1; ++x) {
      const float v = opacity * smooth_edge(radius - std::hypot(y - cy, x - cx));
      m.at(0, y, x) = std::max(m.at(0, y, x), v);
    }
}

double scale_of(const Image& img) { return std::min(img.height, img.width) / 64.0; }

Image stroke_broken(const Image& clean, double intensity, Rng& rng) {
  Image m(1, clean.height, clean.width);
  const Mask ink = binarize(clean);
  std::vector<std::pair<int, int>> candidates;
  for (int y = 0; y < ink.height; ++y)
    for (int x = 0; x < ink.width; ++x) {
      bool near = false;
      for (int dy = -2; dy <= 2 && !near; ++dy)
        for (int dx = -2; dx <= 2 && !near; ++dx) near = ink.get(y + dy, x + dx);
      if (near) candidates.emplace_back(y, x);
    }
  if (candidates.empty()) return m;
  const double s = scale_of(clean);
  const int blobs = static_cast<int>(std::lround(intensity * 14 * s));
  for (int i = 0; i < blobs; ++i) {
    const auto [cy, cx] = candidates[static_cast<std::size_t>(uniform_int(rng, 0, static_cast<int>(candidates.size()) - 1))];
    const double radius = uniform(rng, 1.0, 3.0) * s * (0.5 + intensity);
    // A few overlapping discs make each cluster irregular.
    const int lobes = uniform_int(rng, 1, 3);
    for (int k = 0; k < lobes; ++k) {
      stamp_disc(m, cy + uniform(rng, -radius, radius), cx + uniform(rng, -radius, radius),
                 radius * uniform(rng, 0.5, 1.0), 1.0f);
    }
  }
  return m;
}

Image bone_cracked(const Image& clean, double intensity, Rng& rng) {
  Image m(1, clean.height, clean.width);
  const bool horizontal = uniform(rng, 0, 1) < 0.5;
  const double length = horizontal ? clean.width : clean.height;
  const double span = horizontal ? clean.height : clean.width;
  double pos = uniform(rng, 0.3, 0.7) * span;
  double slope = uniform(rng, -0.3, 0.3);
  const double half_width = (0.5 + 2.0 * intensity) * scale_of(clean);
  for (double t = -2; t <= length + 2; t += 0.5) {
    slope = std::clamp(slope + uniform(rng, -0.08, 0.08), -0.6, 0.6);
    pos = std::clamp(pos + 0.5 * slope, 0.15 * span, 0.85 * span);
    const double w = half_width * uniform(rng, 0.7, 1.3);
    if (horizontal)
      stamp_disc(m, pos, t, w, 1.0f);
    else
      stamp_disc(m, t, pos, w, 1.0f);
  }
  return m;
}

Image abnormal_edges(const Image& clean, double intensity, Rng& rng) {
  Image m(1, clean.height, clean.width);
  bool sides[4];
  bool any = false;
  for (bool& s : sides) any |= (s = uniform(rng, 0, 1) < 0.5);
  if (!any) sides[uniform_int(rng, 0, 3)] = true;
  const ValueNoise profile(rng, 12.0 * scale_of(clean), 3);
  const double max_depth = intensity * 0.22 * std::min(clean.height, clean.width);
  for (int y = 0; y < m.height; ++y)
    for (int x = 0; x < m.width; ++x) {
      // distance to each border and the coordinate running along it
      const double dist[4] = {static_cast<double>(y), static_cast<double>(m.height - 1 - y), static_cast<double>(x),
                              static_cast<double>(m.width - 1 - x)};
      const double along[4] = {static_cast<double>(x), x + 1000.0, static_cast<double>(y), y + 1000.0};
      float v = 0;
      for (int s = 0; s < 4; ++s) {
        if (!sides[s]) continue;
        const double depth = max_depth * (0.2 + 0.8 * profile(along[s], 500.0 * s));
        v = std::max(v, smooth_edge(depth - dist[s]));
      }
      m.at(0, y, x) = v;
    }
  return m;
}

Image dense_white(const Image& clean, double intensity, Rng& rng) {
  Image m(1, clean.height, clean.width);
  const ValueNoise fog(rng, 24.0 * scale_of(clean), 4);
  const double threshold = 0.75 - 0.35 * intensity;
  const double peak = 0.55 + 0.4 * intensity;
  for (int y = 0; y < m.height; ++y)
    for (int x = 0; x < m.width; ++x) {
      m.at(0, y, x) = static_cast<float>(peak * std::clamp((fog(y, x) - threshold) / 0.12, 0.0, 1.0));
    }
  return m;
}

Image single_kind(const Image& clean, NoiseKind kind, double intensity, Rng& rng) {
  switch (kind) {
    case NoiseKind::stroke_broken: return stroke_broken(clean, intensity, rng);
    case NoiseKind::bone_cracked: return bone_cracked(clean, intensity, rng);
    case NoiseKind::abnormal_edges: return abnormal_edges(clean, intensity, rng);
    case NoiseKind::dense_white: return dense_white(clean, intensity, rng);
    case NoiseKind::mixed: break;
  }
  throw ConfigError("single_kind: mixed is not a single kind");
}

double distance_to_segment(double py, double px, double ay, double ax, double by, double bx) {
  const double dy = by - ay, dx = bx - ax;
  const double len2 = dy * dy + dx * dx;
  const double t = len2 > 0 ? std::clamp(((py - ay) * dy + (px - ax) * dx) / len2, 0.0, 1.0) : 0.0;
  return std::hypot(py - (ay + t * dy), px - (ax + t * dx));
}

}  // namespace

NoiseKind parse_noise_kind(const std::string& name) {
  if (name == "stroke_broken") return NoiseKind::stroke_broken;
  if (name == "bone_cracked") return NoiseKind::bone_cracked;
  if (name == "abnormal_edges") return NoiseKind::abnormal_edges;
  if (name == "dense_white") return NoiseKind::dense_white;
  if (name == "mixed") return NoiseKind::mixed;
  throw ConfigError("unknown noise kind '" + name +
                    "' (expected stroke_broken, bone_cracked, abnormal_edges, dense_white or mixed)");
}

std::string noise_kind_name(NoiseKind kind) {
  switch (kind) {
    case NoiseKind::stroke_broken: return "stroke_broken";
    case NoiseKind::bone_cracked: return "bone_cracked";
    case NoiseKind::abnormal_edges: return "abnormal_edges";
    case NoiseKind::dense_white: return "dense_white";
    case NoiseKind::mixed: return "mixed";
  }
  return "?";
}

Image noise_mask(const Image& clean, const NoiseSpec& spec) {
  if (!(spec.intensity >= 0.0 && spec.intensity <= 1.0)) throw ConfigError("noise intensity must lie in [0, 1]");
  Image m(1, clean.height, clean.width);
  if (spec.intensity == 0.0) return m;
  Rng rng(spec.seed);
  if (spec.kind != NoiseKind::mixed) return single_kind(clean, spec.kind, spec.intensity, rng);

  const NoiseKind kinds[] = {NoiseKind::stroke_broken, NoiseKind::bone_cracked, NoiseKind::abnormal_edges,
                             NoiseKind::dense_white};
  bool chosen[4];
  bool any = false;
  for (bool& c : chosen) any |= (c = uniform(rng, 0, 1) < 0.5);
  if (!any) chosen[uniform_int(rng, 0, 3)] = true;
  for (int k = 0; k < 4; ++k) {
    if (!chosen[k]) continue;
    Rng sub(spec.seed * 4 + static_cast<std::uint64_t>(k) + 1);
    const Image mk = single_kind(clean, kinds[k], spec.intensity, sub);
    for (std::size_t i = 0; i < m.data.size(); ++i) m.data[i] = 1.0f - (1.0f - m.data[i]) * (1.0f - mk.data[i]);
  }
  return m;
}

Image synthesize_noise(const Image& clean, const NoiseSpec& spec) {
  const Image m = noise_mask(clean, spec);
  Image out = clean;
  const std::size_t plane = static_cast<std::size_t>(clean.height) * clean.width;
  for (int c = 0; c < clean.channels; ++c)
    for (std::size_t i = 0; i < plane; ++i) {
      float& v = out.data[c * plane + i];
      if (m.data[i] > 0.0f) v = std::min(1.0f, v + m.data[i] * (1.0f - v));
    }
  return out;
}

Image render_glyph(int height, int width, std::uint64_t seed) {
  Rng rng(seed);
  const double s = std::min(height, width) / 64.0;
  const double ground = uniform(rng, 0.78, 0.92);
  const double ink = uniform(rng, 0.06, 0.2);
  double tint[3];
  for (double& t : tint) t = uniform(rng, -0.03, 0.03);

  // Strokes are quadratic curves sampled as short segments.
  struct Segment {
    double ay, ax, by, bx, half_width;
  };
  std::vector<Segment> segments;
  const int strokes = uniform_int(rng, 3, 7);
  for (int k = 0; k < strokes; ++k) {
    const double p0y = uniform(rng, 0.12, 0.88) * height, p0x = uniform(rng, 0.12, 0.88) * width;
    const double p2y = uniform(rng, 0.12, 0.88) * height, p2x = uniform(rng, 0.12, 0.88) * width;
    const double bend = uniform(rng, -0.25, 0.25) * std::min(height, width);
    const double p1y = 0.5 * (p0y + p2y) + bend, p1x = 0.5 * (p0x + p2x) - bend;
    // Two-pixel diagonals can vanish entirely under Zhang-Suen, so strokes stay wider.
    const double hw = uniform(rng, 1.5, 2.5) * s;
    double py = p0y, px = p0x;
    for (int i = 1; i <= 12; ++i) {
      const double t = i / 12.0;
      const double qy = (1 - t) * (1 - t) * p0y + 2 * (1 - t) * t * p1y + t * t * p2y;
      const double qx = (1 - t) * (1 - t) * p0x + 2 * (1 - t) * t * p1x + t * t * p2x;
      segments.push_back({py, px, qy, qx, hw});
      py = qy;
      px = qx;
    }
  }
  Image img(3, height, width);
  for (int y = 0; y < height; ++y)
    for (int x = 0; x < width; ++x) {
      double cover = 0;
      for (const auto& seg : segments) {
        const double d = distance_to_segment(y, x, seg.ay, seg.ax, seg.by, seg.bx);
        cover = std::max(cover, std::clamp(seg.half_width + 0.5 - d, 0.0, 1.0));
      }
      for (int c = 0; c < 3; ++c) {
        img.at(c, y, x) = static_cast<float>(std::clamp((ground + tint[c]) * (1 - cover) + ink * cover, 0.0, 1.0));
      }
    }
  return img;
}

}  // namespace obiformer
