// Copyright (c) 2026, OBIFormer contributors
// SPDX-License-Identifier: Apache-2.0
//
// The denoising network: a U-shaped encoder-decoder of OFBs (OBIFormer
// blocks). Each OFB runs a reconstruction stream of channel-attention blocks
// (CSAB) and a glyph stream of residual conv blocks (GSNB) side by side and
// merges them with selective kernel feature fusion (SKFF).
//
// Parameter names follow a dotted hierarchy, e.g.
//   encoder.0.ofb.csab.1.attn.qkv.weight
//   decoder.0.ofb.gsnb.0.bn1.running_mean   (buffer)

#pragma once

#include <cstdint>
#include <string>
#include <string_view>
#include <unordered_map>
#include <utility>

#include "obiformer/autograd.hpp"
#include "obiformer/parameters.hpp"

namespace obiformer {

enum class Mode { train, eval };

/// Parameters of one ModelState lifted into autograd variables of scalar type T.
template <class T>
class Bindings {
 public:
  /// When `track_grad` is false the variables are constants and no graph is recorded.
  static Bindings bind(const ModelState& state, bool track_grad);

  const Var<T>& param(const std::string& name) const;
  Tensor<T>& buffer(const std::string& name);

  /// Gradients accumulated by backward(), zero where none flowed.
  ParameterStore gradients() const;
  /// Copies the (possibly updated) running statistics back into `state`.
  void store_buffers(ModelState& state) const;

  const std::vector<std::pair<std::string, Var<T>>>& params() const { return ordered_; }

 private:
  std::vector<std::pair<std::string, Var<T>>> ordered_;
  std::unordered_map<std::string, std::size_t> index_;
  std::unordered_map<std::string, Tensor<T>> buffers_;
};

/// A name prefix into a Bindings, used to address one block's parameters.
template <class T>
struct Scope {
  Bindings<T>* bindings;
  std::string prefix;

  const Var<T>& operator()(std::string_view name) const { return bindings->param(prefix + std::string(name)); }
  Tensor<T>& buffer(std::string_view name) const { return bindings->buffer(prefix + std::string(name)); }
  Scope sub(std::string_view name) const { return Scope{bindings, prefix + std::string(name) + "."}; }
};

template <class T>
struct SkffOutput {
  Var<T> fused_recon;
  Var<T> fused_glyph;
  Var<T> fused;
  Var<T> attn_recon;  // B×C×1×1
  Var<T> attn_glyph;  // B×C×1×1
};

/// Reconstruction and glyph streams of one OFB.
template <class T>
struct DualStream {
  Var<T> recon;
  Var<T> glyph;
};

template <class T>
struct OfbOutput {
  Var<T> fused;
  DualStream<T> streams;
};

template <class T>
struct ForwardOutput {
  Var<T> denoised;  // B×3×H×W
  Var<T> skeleton;  // B×1×H×W
};

/// Allocates and initializes every parameter and buffer for `config`.
/// Conv weights are U(-1/sqrt(fan_in), 1/sqrt(fan_in)); biases zero;
/// normalization affine (1, 0); temperatures attention_temperature_init.
ModelState build_model(const ModelConfig& config, std::uint64_t seed);

/// Total learnable scalar count.
std::size_t count_parameters(const ParameterStore& params);

// Building blocks. `scope` addresses the block's own parameter group.

/// Channel self-attention: q, k, v from a 1×1 conv followed by a 3×3
/// depth-wise conv, then a C×C softmax attention map. No residual.
template <class T>
Var<T> channel_self_attention(const Var<T>& x, const Scope<T>& scope, Tensor<T>* attention_map = nullptr);

/// Transformer layer: x' = x + proj(CSA(LN(x))); out = x' + FFN(LN(x')).
template <class T>
Var<T> csab_forward(const Var<T>& x, const Scope<T>& scope);

/// Gated depth-wise feed-forward sub-layer (no residual).
template <class T>
Var<T> feed_forward(const Var<T>& x, const Scope<T>& scope);

/// x + BN2(Conv2(ReLU(BN1(Conv1(x))))).
template <class T>
Var<T> gsnb_forward(const Var<T>& x, const Scope<T>& scope, Mode mode);

template <class T>
SkffOutput<T> skff_fuse(const Var<T>& recon, const Var<T>& glyph, const Scope<T>& scope);

template <class T>
OfbOutput<T> ofb_forward(const Var<T>& x, const Scope<T>& scope, const ModelConfig& config, Mode mode);

/// 4×4 stride-2 conv doubling channels.
template <class T>
Var<T> downsample(const Var<T>& x, const Scope<T>& scope);

/// 2×2 stride-2 transposed conv halving channels.
template <class T>
Var<T> upsample(const Var<T>& x, const Scope<T>& scope);

/// Full network. `image` is B×3×H×W with H, W multiples of 2^encoder_depth.
template <class T>
ForwardOutput<T> forward(Bindings<T>& bindings, const Var<T>& image, const ModelConfig& config, Mode mode);

/// Float eval-mode inference without recording a graph. Re-entrant.
std::pair<Tensor<float>, Tensor<float>> infer(const ModelState& state, const Tensor<float>& image);

/// Checks the forward() preconditions on an input batch.
void validate_input(const Tensor<float>& image, const ModelConfig& config);

}  // namespace obiformer
