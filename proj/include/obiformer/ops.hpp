// Copyright (c) 2026, OBIFormer contributors
// SPDX-License-Identifier: Apache-2.0
//
// Differentiable tensor operations. All image-like tensors are NCHW.
// Definitions live in ops.cpp and are instantiated for float and double.

#pragma once

#include <vector>

#include "obiformer/autograd.hpp"

namespace obiformer::ops {

// Element-wise arithmetic. Operands must have identical shapes.
template <class T> Var<T> add(const Var<T>& a, const Var<T>& b);
template <class T> Var<T> sub(const Var<T>& a, const Var<T>& b);
template <class T> Var<T> mul(const Var<T>& a, const Var<T>& b);
template <class T> Var<T> scale(const Var<T>& a, T factor);
/// 1 - x
template <class T> Var<T> one_minus(const Var<T>& a);

template <class T> Var<T> relu(const Var<T>& x);
template <class T> Var<T> leaky_relu(const Var<T>& x, T slope);
template <class T> Var<T> sigmoid(const Var<T>& x);
template <class T> Var<T> clamp(const Var<T>& x, T lo, T hi);

/// Splits channels into halves (a, b) and returns gelu(a) * b.
template <class T> Var<T> gated_gelu(const Var<T>& x);

/// x: B×C×H×W, s: B×C×1×1; returns x scaled per (batch, channel).
template <class T> Var<T> scale_channels(const Var<T>& x, const Var<T>& s);

/// B×C×H×W -> B×C×1×1 spatial mean.
template <class T> Var<T> global_avg_pool(const Var<T>& x);

/// Dense convolution. weight: Cout×Cin×K×K; bias: Cout or null.
template <class T>
Var<T> conv2d(const Var<T>& x, const Var<T>& weight, const Var<T>& bias, int stride, int padding);

/// Depth-wise convolution with stride 1. weight: C×1×K×K, no bias.
template <class T> Var<T> depthwise_conv2d(const Var<T>& x, const Var<T>& weight, int padding);

/// 2×2 transposed convolution with stride 2. weight: Cin×Cout×2×2; bias: Cout or null.
template <class T> Var<T> conv_transpose2x2(const Var<T>& x, const Var<T>& weight, const Var<T>& bias);

/// Normalizes over the channel dimension at every (b, h, w) position.
template <class T>
Var<T> layer_norm_channels(const Var<T>& x, const Var<T>& gamma, const Var<T>& beta, T eps = T(1e-5));

/// Running statistics owned by a batch-normalization layer.
template <class T>
struct BatchNormStats {
  Tensor<T>& running_mean;
  Tensor<T>& running_var;
};

/// Batch normalization. Train mode normalizes with batch statistics and
/// updates the running statistics; eval mode uses the running statistics.
template <class T>
Var<T> batch_norm(const Var<T>& x, const Var<T>& gamma, const Var<T>& beta, BatchNormStats<T> stats, bool train,
                  T momentum = T(0.1), T eps = T(1e-5));

/// Transposed (channel) attention on a packed q|k|v tensor of shape B×3C×H×W.
/// logits[i][j] = sum_p k_i(p) q_j(p) / alpha, softmax over j, out_i = sum_j A_ij v_j.
/// When `attention_map` is non-null it receives the B×C×C softmax map.
template <class T>
Var<T> channel_attention(const Var<T>& qkv, const Var<T>& alpha, Tensor<T>* attention_map = nullptr);

/// 2×2 max pooling with stride 2.
template <class T> Var<T> max_pool2x2(const Var<T>& x);

/// Repeats a single-channel tensor to `channels` channels.
template <class T> Var<T> repeat_channels(const Var<T>& x, int channels);

/// (x[:, c] - mean[c]) / stddev[c] with constant statistics.
template <class T>
Var<T> normalize_channels(const Var<T>& x, const std::vector<T>& mean, const std::vector<T>& stddev);

// Scalar reductions (results have shape {1}).
template <class T> Var<T> mse(const Var<T>& a, const Var<T>& b);
template <class T> Var<T> l1_mean(const Var<T>& a, const Var<T>& b);
/// 10·log10(max(mse, floor)) - 20·log10(range), i.e. the negated PSNR.
template <class T> Var<T> psnr_loss(const Var<T>& pred, const Var<T>& gt, T dynamic_range, T mse_floor);

}  // namespace obiformer::ops
