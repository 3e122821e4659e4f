// Copyright (c) 2026, OBIFormer contributors
// SPDX-License-Identifier: Apache-2.0
//
// Training objective: weighted PSNR and perceptual terms on the denoised
// image and on the predicted skeleton.

#pragma once

#include <cstdint>
#include <memory>
#include <string>
#include <vector>

#include "obiformer/autograd.hpp"
#include "obiformer/config.hpp"
#include "obiformer/parameters.hpp"

namespace obiformer {

inline constexpr double kDynamicRange = 1.0;
inline constexpr double kMseFloor = 1e-8;

struct LossWeights {
  double a1 = 100.0;  // PSNR, denoised image
  double a2 = 100.0;  // perceptual, denoised image
  double a3 = 1.0;    // PSNR, skeleton
  double a4 = 1.0;    // perceptual, skeleton

  /// Throws ConfigError unless all weights are finite and non-negative.
  void validate() const;
  bool needs_extractor() const { return a2 != 0.0 || a4 != 0.0; }
  double& operator[](int i);
  void write(KeyValues& kv) const;
  static LossWeights read(const KeyValues& kv, const LossWeights& defaults);
  bool operator==(const LossWeights&) const = default;
};

/// Frozen VGG16-topology feature extractor (convolutional part only).
/// Weights use torchvision names: features.{0,2,5,7,10,12,14,...}.{weight,bias}.
class FeatureExtractor {
 public:
  /// Layers that can be tapped, in network order.
  static const std::vector<std::string>& layer_names();

  /// Loads weights from an OBIF container. Throws ResourceError if absent.
  static FeatureExtractor load(const std::string& path, const std::string& layer = "relu3_3");

  /// `explicit_path` if non-empty, otherwise $OBIFORMER_CACHE/vgg16_features.obif.
  static std::string default_path(const std::string& explicit_path = "");

  /// Randomly initialized extractor of the same topology with the given
  /// per-block widths (VGG16 uses 64, 128, 256, 512). For tests and offline runs.
  static FeatureExtractor random(std::uint64_t seed, std::vector<int> widths, const std::string& layer = "relu3_3");

  const std::string& layer() const { return layer_; }
  const std::vector<int>& widths() const { return widths_; }
  const ParameterStore& weights() const { return *weights_; }

  /// [0,1] input with 1 or 3 channels -> features at layer(). Gradients flow to x only.
  template <class T>
  Var<T> features(const Var<T>& x) const;

 private:
  FeatureExtractor(std::shared_ptr<const ParameterStore> weights, std::vector<int> widths, std::string layer);

  std::shared_ptr<const ParameterStore> weights_;
  std::vector<int> widths_;
  std::string layer_;
  int stop_ = 0;  // number of conv layers to run
};

/// Negated PSNR with fixed dynamic range and MSE floor.
template <class T>
Var<T> psnr_loss(const Var<T>& pred, const Var<T>& gt, double dynamic_range = kDynamicRange,
                 double mse_floor = kMseFloor);

/// Mean absolute difference of extractor features.
template <class T>
Var<T> perceptual_loss(const Var<T>& pred, const Var<T>& gt, const FeatureExtractor& fx);

template <class T>
struct LossTerms {
  Var<T> total;
  double image_psnr = 0, image_perceptual = 0, skeleton_psnr = 0, skeleton_perceptual = 0;
};

/// a1·psnr(denoised) + a2·perc(denoised) + a3·psnr(skeleton) + a4·perc(skeleton).
/// Terms with zero weight are skipped; `fx` may be null when a2 = a4 = 0.
/// The skeleton prediction is clamped to [0, 1] before both skeleton terms.
template <class T>
LossTerms<T> total_loss(const Var<T>& denoised, const Var<T>& gt_image, const Var<T>& skeleton,
                        const Var<T>& gt_skeleton, const LossWeights& w, const FeatureExtractor* fx);

}  // namespace obiformer
