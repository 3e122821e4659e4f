// Copyright (c) 2026, OBIFormer contributors
// SPDX-License-Identifier: Apache-2.0

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <random>
#include <set>
#include <sstream>
#include <optional>
#include <tuple>

#include "obiformer/data.hpp"
#include "obiformer/errors.hpp"

namespace fs = std::filesystem;

namespace obiformer {

Image apply_transform(const Image& image, Transform t) {
  if (t == Transform::identity) return image;
  const bool swap = t == Transform::rot90 || t == Transform::rot270;
  const int h = image.height, w = image.width;
  Image out(image.channels, swap ? w : h, swap ? h : w);
  for (int c = 0; c < image.channels; ++c)
    for (int y = 0; y < out.height; ++y)
      for (int x = 0; x < out.width; ++x) {
        int sy = y, sx = x;
        switch (t) {
          case Transform::rot90: sy = x, sx = w - 1 - y; break;  // counter-clockwise
          case Transform::rot180: sy = h - 1 - y, sx = w - 1 - x; break;
          case Transform::rot270: sy = h - 1 - x, sx = y; break;
          case Transform::hflip: sx = w - 1 - x; break;
          case Transform::vflip: sy = h - 1 - y; break;
          case Transform::identity: break;
        }
        out.at(c, y, x) = image.at(c, sy, sx);
      }
  return out;
}

SampleRecord apply_transform(const SampleRecord& sample, Transform t) {
  SampleRecord out = sample;
  out.noisy = apply_transform(sample.noisy, t);
  out.clean = apply_transform(sample.clean, t);
  out.skeleton = apply_transform(sample.skeleton, t);
  return out;
}

SampleRecord augment(const SampleRecord& sample, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  const int draw = std::uniform_int_distribution<int>(0, 5)(rng);
  return apply_transform(sample, static_cast<Transform>(draw));
}

std::pair<Image, Image> split_pair(const Image& paired, bool noisy_left) {
  if (paired.width % 2 != 0) {
    throw FormatError("paired image width " + std::to_string(paired.width) + " is odd");
  }
  const int half = paired.width / 2;
  Image left = crop(paired, 0, 0, paired.height, half);
  Image right = crop(paired, 0, half, paired.height, half);
  return noisy_left ? std::make_pair(std::move(left), std::move(right)) : std::make_pair(std::move(right), std::move(left));
}

std::vector<SampleRecord> synthetic_corpus(int count, int size, std::uint64_t seed, NoiseKind kind,
                                           double min_intensity, double max_intensity) {
  std::mt19937_64 rng(seed);
  std::vector<SampleRecord> out;
  out.reserve(static_cast<std::size_t>(count));
  for (int i = 0; i < count; ++i) {
    const std::uint64_t glyph_seed = rng(), noise_seed = rng();
    const double intensity = std::uniform_real_distribution<double>(min_intensity, max_intensity)(rng);
    SampleRecord r;
    char id[32];
    std::snprintf(id, sizeof(id), "synth_%05d", i);
    r.id = id;
    r.clean = render_glyph(size, size, glyph_seed);
    r.noisy = synthesize_noise(r.clean, NoiseSpec{kind, intensity, noise_seed});
    r.skeleton = skeleton_ground_truth(r.clean);
    r.source = "synthetic";
    out.push_back(std::move(r));
  }
  return out;
}

namespace {

std::string layout_name(Layout l) { return l == Layout::triplet_dirs ? "triplet_dirs" : "paired_sidebyside"; }

Layout parse_layout(const std::string& s) {
  if (s == "triplet_dirs") return Layout::triplet_dirs;
  if (s == "paired_sidebyside") return Layout::paired_sidebyside;
  throw ConfigError("unknown dataset layout '" + s + "' (expected triplet_dirs or paired_sidebyside)");
}

std::vector<std::string> png_stems(const fs::path& dir) {
  if (!fs::is_directory(dir)) throw IngestionError("dataset directory not found: " + dir.string());
  std::vector<std::string> ids;
  for (const auto& e : fs::directory_iterator(dir)) {
    if (e.is_regular_file() && e.path().extension() == ".png") ids.push_back(e.path().stem().string());
  }
  std::sort(ids.begin(), ids.end());
  return ids;
}

Image load_for(const std::string& id, const fs::path& path, int channels) {
  if (!fs::exists(path)) throw IngestionError("record '" + id + "': missing file " + path.string());
  try {
    return read_png(path.string(), channels);
  } catch (const IngestionError& e) {
    throw IngestionError("record '" + id + "': " + e.what());
  }
}

SampleRecord load_record(const DatasetManifest& m, const std::string& id, int height, int width) {
  SampleRecord r;
  r.id = id;
  const fs::path root(m.root);
  Image noisy, clean;
  std::optional<Image> skeleton;
  if (m.layout == Layout::triplet_dirs) {
    noisy = load_for(id, root / "noisy" / (id + ".png"), 3);
    clean = load_for(id, root / "clean" / (id + ".png"), 3);
    const fs::path sk = root / "skeleton" / (id + ".png");
    if (fs::exists(sk)) skeleton = load_for(id, sk, 1);
    r.source = "triplet_dirs";
  } else {
    const Image paired = load_for(id, root / "pairs" / (id + ".png"), 3);
    try {
      std::tie(noisy, clean) = split_pair(paired, m.noisy_left);
    } catch (const FormatError& e) {
      throw IngestionError("record '" + id + "': " + e.what());
    }
    r.source = "paired_sidebyside";
  }
  if (!noisy.same_size(clean)) throw IngestionError("record '" + id + "': noisy and clean sizes differ");
  r.noisy = resize_bilinear(noisy, height, width);
  r.clean = resize_bilinear(clean, height, width);
  if (skeleton) {
    r.skeleton = mask_to_image(image_to_mask(resize_bilinear(*skeleton, height, width)));
  } else {
    r.skeleton = skeleton_ground_truth(r.clean);
  }
  return r;
}

}  // namespace

DatasetManifest DatasetManifest::read(const std::string& path) {
  const KeyValues kv = read_key_values_file(path);
  DatasetManifest m;
  m.root = kv_string(kv, "root", ".");
  if (fs::path(m.root).is_relative()) m.root = (fs::path(path).parent_path() / m.root).lexically_normal().string();
  m.layout = parse_layout(kv_string(kv, "layout", "triplet_dirs"));
  const std::string ids = kv_string(kv, "ids", "");
  std::stringstream ss(ids);
  for (std::string id; std::getline(ss, id, ',');) {
    if (!id.empty()) m.ids.push_back(id);
  }
  m.train_ratio = kv_double(kv, "train_ratio", m.train_ratio);
  m.val_ratio = kv_double(kv, "val_ratio", m.val_ratio);
  m.seed = static_cast<std::uint64_t>(kv_int(kv, "seed", 0));
  const std::string side = kv_string(kv, "noisy_side", "left");
  if (side != "left" && side != "right") throw ConfigError("noisy_side must be left or right");
  m.noisy_left = side == "left";
  return m;
}

KeyValues DatasetManifest::to_key_values() const {
  KeyValues kv;
  kv["root"] = root;
  kv["layout"] = layout_name(layout);
  std::string joined;
  for (const auto& id : ids) joined += (joined.empty() ? "" : ",") + id;
  if (!joined.empty()) kv["ids"] = joined;
  kv["train_ratio"] = std::to_string(train_ratio);
  kv["val_ratio"] = std::to_string(val_ratio);
  kv["seed"] = std::to_string(seed);
  kv["noisy_side"] = noisy_left ? "left" : "right";
  return kv;
}

std::vector<std::string> DatasetManifest::resolve_ids() const {
  std::vector<std::string> out = ids;
  if (out.empty()) out = png_stems(fs::path(root) / (layout == Layout::triplet_dirs ? "noisy" : "pairs"));
  std::sort(out.begin(), out.end());
  if (std::adjacent_find(out.begin(), out.end()) != out.end()) throw ConfigError("manifest ids are not unique");
  return out;
}

SplitIds split_ids(std::vector<std::string> ids, double train_ratio, double val_ratio, std::uint64_t seed) {
  if (train_ratio < 0 || val_ratio < 0 || train_ratio + val_ratio > 1.0 + 1e-9) {
    throw ConfigError("split ratios must be non-negative and sum to at most 1");
  }
  std::sort(ids.begin(), ids.end());
  std::mt19937_64 rng(seed);
  // Explicit Fisher-Yates so the split does not depend on the standard library.
  for (std::size_t i = ids.size(); i > 1; --i) std::swap(ids[i - 1], ids[rng() % i]);
  const auto n = static_cast<double>(ids.size());
  const auto n_train = std::min(ids.size(), static_cast<std::size_t>(std::lround(n * train_ratio)));
  const auto n_val = std::min(ids.size() - n_train, static_cast<std::size_t>(std::lround(n * val_ratio)));
  SplitIds s;
  s.train.assign(ids.begin(), ids.begin() + static_cast<std::ptrdiff_t>(n_train));
  s.val.assign(ids.begin() + static_cast<std::ptrdiff_t>(n_train),
               ids.begin() + static_cast<std::ptrdiff_t>(n_train + n_val));
  s.test.assign(ids.begin() + static_cast<std::ptrdiff_t>(n_train + n_val), ids.end());
  for (auto* part : {&s.train, &s.val, &s.test}) std::sort(part->begin(), part->end());
  return s;
}

Dataset load_dataset(const DatasetManifest& manifest, int height, int width) {
  const SplitIds split = split_ids(manifest.resolve_ids(), manifest.train_ratio, manifest.val_ratio, manifest.seed);
  Dataset d;
  for (const auto& id : split.train) d.train.push_back(load_record(manifest, id, height, width));
  for (const auto& id : split.val) d.val.push_back(load_record(manifest, id, height, width));
  for (const auto& id : split.test) d.test.push_back(load_record(manifest, id, height, width));
  return d;
}

void write_triplets(const std::string& root, const std::vector<SampleRecord>& records) {
  for (const char* sub : {"noisy", "clean", "skeleton"}) fs::create_directories(fs::path(root) / sub);
  for (const auto& r : records) {
    write_png((fs::path(root) / "noisy" / (r.id + ".png")).string(), r.noisy);
    write_png((fs::path(root) / "clean" / (r.id + ".png")).string(), r.clean);
    write_png((fs::path(root) / "skeleton" / (r.id + ".png")).string(), r.skeleton);
  }
}

}  // namespace obiformer
