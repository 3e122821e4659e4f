// Copyright (c) 2026, OBIFormer contributors
// SPDX-License-Identifier: Apache-2.0

#include "obiformer/loss.hpp"

#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <random>

#include "obiformer/container.hpp"
#include "obiformer/errors.hpp"
#include "obiformer/ops.hpp"

namespace obiformer {
namespace {

// Conv layers of the VGG16 feature stack: torchvision index and block.
struct ConvSpec {
  int index;
  int block;
};
constexpr ConvSpec kConvs[] = {{0, 0}, {2, 0}, {5, 1}, {7, 1}, {10, 2}, {12, 2}, {14, 2}, {17, 3}, {19, 3}, {21, 3}};
constexpr int kConvsThrough[] = {2, 4, 7, 10};  // relu1_2, relu2_2, relu3_3, relu4_3

constexpr double kImageNetMean[] = {0.485, 0.456, 0.406};
constexpr double kImageNetStd[] = {0.229, 0.224, 0.225};

std::string conv_name(int i) { return "features." + std::to_string(kConvs[i].index); }

int layer_stop(const std::string& layer) {
  const auto& names = FeatureExtractor::layer_names();
  for (std::size_t i = 0; i < names.size(); ++i)
    if (names[i] == layer) return kConvsThrough[i];
  throw ConfigError("unknown perceptual layer '" + layer + "' (expected relu1_2, relu2_2, relu3_3 or relu4_3)");
}

}  // namespace

void LossWeights::validate() const {
  const double w[] = {a1, a2, a3, a4};
  for (int i = 0; i < 4; ++i) {
    if (!std::isfinite(w[i]) || w[i] < 0.0) {
      throw ConfigError("loss weight a" + std::to_string(i + 1) + " must be finite and >= 0");
    }
  }
}

double& LossWeights::operator[](int i) {
  switch (i) {
    case 0: return a1;
    case 1: return a2;
    case 2: return a3;
    case 3: return a4;
  }
  throw ConfigError("loss weight index out of range: " + std::to_string(i));
}

void LossWeights::write(KeyValues& kv) const {
  kv["loss.a1"] = std::to_string(a1);
  kv["loss.a2"] = std::to_string(a2);
  kv["loss.a3"] = std::to_string(a3);
  kv["loss.a4"] = std::to_string(a4);
}

LossWeights LossWeights::read(const KeyValues& kv, const LossWeights& defaults) {
  LossWeights w;
  w.a1 = kv_double(kv, "loss.a1", defaults.a1);
  w.a2 = kv_double(kv, "loss.a2", defaults.a2);
  w.a3 = kv_double(kv, "loss.a3", defaults.a3);
  w.a4 = kv_double(kv, "loss.a4", defaults.a4);
  w.validate();
  return w;
}

const std::vector<std::string>& FeatureExtractor::layer_names() {
  static const std::vector<std::string> names = {"relu1_2", "relu2_2", "relu3_3", "relu4_3"};
  return names;
}

FeatureExtractor::FeatureExtractor(std::shared_ptr<const ParameterStore> weights, std::vector<int> widths,
                                   std::string layer)
    : weights_(std::move(weights)), widths_(std::move(widths)), layer_(std::move(layer)), stop_(layer_stop(layer_)) {
  const int blocks_needed = kConvs[stop_ - 1].block + 1;
  if (static_cast<int>(widths_.size()) < blocks_needed) {
    throw ConfigError("feature extractor needs " + std::to_string(blocks_needed) + " block widths for " + layer_);
  }
  int in = 3;
  for (int i = 0; i < stop_; ++i) {
    const int out = widths_[kConvs[i].block];
    const std::string name = conv_name(i);
    if (!weights_->contains(name + ".weight") || !weights_->contains(name + ".bias")) {
      throw ResourceError("extractor weights lack " + name);
    }
    if (weights_->at(name + ".weight").shape() != Shape{out, in, 3, 3} ||
        weights_->at(name + ".bias").shape() != Shape{out}) {
      throw ResourceError("extractor weights " + name + " have unexpected shape " +
                          shape_string(weights_->at(name + ".weight").shape()));
    }
    in = out;
  }
}

std::string FeatureExtractor::default_path(const std::string& explicit_path) {
  if (!explicit_path.empty()) return explicit_path;
  if (const char* cache = std::getenv("OBIFORMER_CACHE"); cache && *cache) {
    return (std::filesystem::path(cache) / "vgg16_features.obif").string();
  }
  return "";
}

FeatureExtractor FeatureExtractor::load(const std::string& path, const std::string& layer) {
  if (path.empty() || !std::filesystem::exists(path)) {
    throw ResourceError("perceptual-loss weights not found" + (path.empty() ? std::string() : " at " + path) +
                        ". Export them with tools/export_vgg16.py and pass --vgg <file> or set OBIFORMER_CACHE "
                        "to the directory holding vgg16_features.obif; alternatively set --alpha2 0 --alpha4 0");
  }
  Container c = read_container(path);
  std::vector<int> widths;
  for (int i = 0; i < 10; ++i) {
    const std::string name = conv_name(i) + ".weight";
    if (!c.records.contains(name)) break;
    if (static_cast<int>(widths.size()) == kConvs[i].block) widths.push_back(c.records.at(name).dim(0));
  }
  return FeatureExtractor(std::make_shared<const ParameterStore>(std::move(c.records)), widths, layer);
}

FeatureExtractor FeatureExtractor::random(std::uint64_t seed, std::vector<int> widths, const std::string& layer) {
  const int stop = layer_stop(layer);
  if (static_cast<int>(widths.size()) <= kConvs[stop - 1].block) {
    throw ConfigError("feature extractor needs a width for every block up to " + layer);
  }
  auto store = std::make_shared<ParameterStore>();
  std::mt19937_64 rng(seed);
  int in = 3;
  for (int i = 0; i < stop; ++i) {
    const int out = widths[kConvs[i].block];
    const float bound = std::sqrt(6.0f / static_cast<float>(in * 9));
    std::uniform_real_distribution<float> dist(-bound, bound);
    Tensor<float> w(Shape{out, in, 3, 3});
    for (auto& v : w.values()) v = dist(rng);
    store->add(conv_name(i) + ".weight", std::move(w));
    store->add(conv_name(i) + ".bias", Tensor<float>(Shape{out}, 0.0f));
    in = out;
  }
  return FeatureExtractor(std::move(store), std::move(widths), layer);
}

template <class T>
Var<T> FeatureExtractor::features(const Var<T>& x) const {
  require_nchw(x->value, "perceptual features");
  Var<T> h = x;
  if (h->value.dim(1) == 1) h = ops::repeat_channels(h, 3);
  if (h->value.dim(1) != 3) {
    throw ShapeError("perceptual features expect 1 or 3 channels, got " + std::to_string(h->value.dim(1)));
  }
  const std::vector<T> mean(std::begin(kImageNetMean), std::end(kImageNetMean));
  const std::vector<T> stddev(std::begin(kImageNetStd), std::end(kImageNetStd));
  h = ops::normalize_channels(h, mean, stddev);
  for (int i = 0; i < stop_; ++i) {
    if (i > 0 && kConvs[i].block != kConvs[i - 1].block) h = ops::max_pool2x2(h);
    const std::string name = conv_name(i);
    auto w = constant(weights_->at(name + ".weight").cast<T>());
    auto b = constant(weights_->at(name + ".bias").cast<T>());
    h = ops::relu(ops::conv2d(h, w, b, 1, 1));
  }
  return h;
}

template <class T>
Var<T> psnr_loss(const Var<T>& pred, const Var<T>& gt, double dynamic_range, double mse_floor) {
  if (!(dynamic_range > 0.0) || !(mse_floor > 0.0)) throw ConfigError("psnr_loss needs positive range and floor");
  return ops::psnr_loss(pred, gt, static_cast<T>(dynamic_range), static_cast<T>(mse_floor));
}

template <class T>
Var<T> perceptual_loss(const Var<T>& pred, const Var<T>& gt, const FeatureExtractor& fx) {
  if (pred->value.shape() != gt->value.shape()) {
    throw ShapeError("perceptual_loss: " + shape_string(pred->value.shape()) + " vs " +
                     shape_string(gt->value.shape()));
  }
  // Target features never need a graph.
  auto target = fx.features(constant(gt->value));
  return ops::l1_mean(fx.features(pred), constant(target->value));
}

template <class T>
LossTerms<T> total_loss(const Var<T>& denoised, const Var<T>& gt_image, const Var<T>& skeleton,
                        const Var<T>& gt_skeleton, const LossWeights& w, const FeatureExtractor* fx) {
  w.validate();
  if (w.needs_extractor() && !fx) throw ResourceError("perceptual terms are weighted but no feature extractor is loaded");
  LossTerms<T> terms;
  Var<T> total = constant(Tensor<T>(Shape{1}, T(0)));
  auto accumulate = [&](double weight, const Var<T>& term, double& record) {
    record = static_cast<double>(term->value[0]);
    total = ops::add(total, ops::scale(term, static_cast<T>(weight)));
  };
  const Var<T> skel = ops::clamp(skeleton, T(0), T(1));
  if (w.a1 != 0.0) accumulate(w.a1, psnr_loss(denoised, gt_image), terms.image_psnr);
  if (w.a2 != 0.0) accumulate(w.a2, perceptual_loss(denoised, gt_image, *fx), terms.image_perceptual);
  if (w.a3 != 0.0) accumulate(w.a3, psnr_loss(skel, gt_skeleton), terms.skeleton_psnr);
  if (w.a4 != 0.0) accumulate(w.a4, perceptual_loss(skel, gt_skeleton, *fx), terms.skeleton_perceptual);
  terms.total = total;
  return terms;
}

#define OBIFORMER_INSTANTIATE_LOSS(T)                                                                          \
  template Var<T> FeatureExtractor::features<T>(const Var<T>&) const;                                          \
  template Var<T> psnr_loss<T>(const Var<T>&, const Var<T>&, double, double);                                  \
  template Var<T> perceptual_loss<T>(const Var<T>&, const Var<T>&, const FeatureExtractor&);                   \
  template LossTerms<T> total_loss<T>(const Var<T>&, const Var<T>&, const Var<T>&, const Var<T>&,              \
                                      const LossWeights&, const FeatureExtractor*);

OBIFORMER_INSTANTIATE_LOSS(float)
OBIFORMER_INSTANTIATE_LOSS(double)

}  // namespace obiformer
