// Copyright (c) 2026, OBIFormer contributors
// SPDX-License-Identifier: Apache-2.0
//
// Dataset ingestion, skeleton ground truth, procedural degradation and
// augmentation.

#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "obiformer/config.hpp"
#include "obiformer/image.hpp"

namespace obiformer {

// ---- Skeleton ground truth -------------------------------------------------

/// Otsu threshold on a 256-bin histogram: the level t maximizing the
/// between-class variance of {<= t} and {> t}. Returns -1 when fewer than
/// two levels are populated.
int otsu_threshold(const std::array<std::uint64_t, 256>& histogram);

/// Otsu mask with the minority class as foreground (ties go to the light
/// class). Colour input is converted to luminance. Constant images give an
/// empty mask.
Mask binarize(const Image& image);

/// Zhang-Suen thinning until a full pass deletes nothing.
Mask skeletonize(const Mask& mask);

/// skeletonize(binarize(clean)) as a 1-channel image.
Image skeleton_ground_truth(const Image& clean);

// ---- Degradation -----------------------------------------------------------

enum class NoiseKind { stroke_broken, bone_cracked, abnormal_edges, dense_white, mixed };

/// Throws ConfigError on an unknown name.
NoiseKind parse_noise_kind(const std::string& name);
std::string noise_kind_name(NoiseKind kind);

struct NoiseSpec {
  NoiseKind kind = NoiseKind::mixed;
  double intensity = 0.5;  // [0, 1]
  std::uint64_t seed = 0;
};

/// Occlusion opacity in [0, 1] per pixel; zero everywhere at intensity 0.
Image noise_mask(const Image& clean, const NoiseSpec& spec);

/// clean + m * (1 - clean): white occlusion that never darkens a pixel.
Image synthesize_noise(const Image& clean, const NoiseSpec& spec);

/// Procedural glyph: dark strokes on a light ground, RGB.
Image render_glyph(int height, int width, std::uint64_t seed);

// ---- Samples and augmentation ---------------------------------------------

struct SampleRecord {
  std::string id;
  Image noisy;     // 3×H×W
  Image clean;     // 3×H×W
  Image skeleton;  // 1×H×W
  std::string source;
};

enum class Transform { identity, rot90, rot180, rot270, hflip, vflip };

Image apply_transform(const Image& image, Transform t);
SampleRecord apply_transform(const SampleRecord& sample, Transform t);
/// One transform drawn uniformly from the six, applied to all three images.
SampleRecord augment(const SampleRecord& sample, std::uint64_t seed);

/// Splits a 2W-wide image into (noisy, clean); FormatError on odd width.
std::pair<Image, Image> split_pair(const Image& paired, bool noisy_left = true);

/// In-memory synthetic corpus: rendered glyphs degraded with `kind` at
/// intensities drawn from [min_intensity, max_intensity].
std::vector<SampleRecord> synthetic_corpus(int count, int size, std::uint64_t seed, NoiseKind kind = NoiseKind::mixed,
                                           double min_intensity = 0.3, double max_intensity = 0.7);

// ---- On-disk datasets ------------------------------------------------------

enum class Layout { paired_sidebyside, triplet_dirs };

struct DatasetManifest {
  std::string root;
  Layout layout = Layout::triplet_dirs;
  std::vector<std::string> ids;  // empty: discover from the layout's directory
  double train_ratio = 0.8;
  double val_ratio = 0.1;        // test takes the remainder
  std::uint64_t seed = 0;
  bool noisy_left = true;        // paired layout only

  /// Reads a key=value manifest; relative roots resolve against its directory.
  static DatasetManifest read(const std::string& path);
  KeyValues to_key_values() const;
  /// Fills `ids` from disk when empty; sorted.
  std::vector<std::string> resolve_ids() const;
};

struct Dataset {
  std::vector<SampleRecord> train, val, test;
  std::size_t size() const { return train.size() + val.size() + test.size(); }
};

/// Deterministic split of `ids` by ratio under `seed`; each part sorted.
struct SplitIds {
  std::vector<std::string> train, val, test;
};
SplitIds split_ids(std::vector<std::string> ids, double train_ratio, double val_ratio, std::uint64_t seed);

/// Decodes, resizes bilinearly and derives missing skeletons.
/// Missing or corrupt files raise IngestionError naming the id.
Dataset load_dataset(const DatasetManifest& manifest, int height = 256, int width = 256);

/// Writes records as root/{noisy,clean,skeleton}/<id>.png.
void write_triplets(const std::string& root, const std::vector<SampleRecord>& records);

}  // namespace obiformer
