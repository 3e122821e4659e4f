// Copyright (c) 2026, OBIFormer contributors
// SPDX-License-Identifier: Apache-2.0

#include <doctest.h>

#include "obiformer/ops.hpp"
#include "test_support.hpp"

using namespace obiformer;
using obiformer::testing::max_gradient_error;
using obiformer::testing::random_tensor;
using V = Var<double>;
using Vs = std::vector<V>;

namespace {

// Direct 7-loop convolution used as the reference for the im2col path.
Tensor<double> naive_conv(const Tensor<double>& x, const Tensor<double>& w, const Tensor<double>* b, int stride,
                          int pad) {
  const int B = x.dim(0), Ci = x.dim(1), H = x.dim(2), W = x.dim(3);
  const int Co = w.dim(0), K = w.dim(2);
  const int Ho = (H + 2 * pad - K) / stride + 1, Wo = (W + 2 * pad - K) / stride + 1;
  Tensor<double> y(Shape{B, Co, Ho, Wo});
  for (int n = 0; n < B; ++n)
    for (int co = 0; co < Co; ++co)
      for (int oy = 0; oy < Ho; ++oy)
        for (int ox = 0; ox < Wo; ++ox) {
          double acc = b ? (*b)[co] : 0.0;
          for (int ci = 0; ci < Ci; ++ci)
            for (int ki = 0; ki < K; ++ki)
              for (int kj = 0; kj < K; ++kj) {
                const int iy = oy * stride - pad + ki, ix = ox * stride - pad + kj;
                if (iy < 0 || iy >= H || ix < 0 || ix >= W) continue;
                acc += x.at(n, ci, iy, ix) * w.at(co, ci, ki, kj);
              }
          y.at(n, co, oy, ox) = acc;
        }
  return y;
}

}  // namespace

TEST_CASE("conv2d matches the direct convolution for several geometries") {
  struct Case {
    int k, stride, pad;
  };
  for (Case c : {Case{3, 1, 1}, Case{1, 1, 0}, Case{4, 2, 1}}) {
    auto x = random_tensor(Shape{2, 3, 8, 6}, 1);
    auto w = random_tensor(Shape{5, 3, c.k, c.k}, 2);
    auto b = random_tensor(Shape{5}, 3);
    auto y = ops::conv2d(constant(x), constant(w), constant(b), c.stride, c.pad);
    auto ref = naive_conv(x, w, &b, c.stride, c.pad);
    REQUIRE(y->value.shape() == ref.shape());
    for (std::size_t i = 0; i < ref.size(); ++i) CHECK(y->value[i] == doctest::Approx(ref[i]).epsilon(1e-12));
  }
}

TEST_CASE("conv2d single 3x3 4->8 over 16x16 output shape") {
  auto y = ops::conv2d(constant(Tensor<double>(Shape{1, 4, 16, 16}, 1.0)),
                       constant(Tensor<double>(Shape{8, 4, 3, 3}, 1.0)), V{}, 1, 1);
  CHECK(y->value.shape() == Shape{1, 8, 16, 16});
  CHECK(y->value.at(0, 0, 5, 5) == doctest::Approx(36.0));
  CHECK(y->value.at(0, 0, 0, 0) == doctest::Approx(16.0));
}

TEST_CASE("conv2d rejects a mismatched weight") {
  CHECK_THROWS_AS(ops::conv2d(constant(Tensor<double>(Shape{1, 4, 8, 8})),
                              constant(Tensor<double>(Shape{8, 3, 3, 3})), V{}, 1, 1),
                  ShapeError);
}

TEST_CASE("gradients of element-wise ops") {
  const Shape s{2, 3, 4, 5};
  CHECK(max_gradient_error([](const Vs& v) { return ops::add(v[0], v[1]); },
                           {random_tensor(s, 1), random_tensor(s, 2)}) < 1e-6);
  CHECK(max_gradient_error([](const Vs& v) { return ops::sub(v[0], v[1]); },
                           {random_tensor(s, 1), random_tensor(s, 2)}) < 1e-6);
  CHECK(max_gradient_error([](const Vs& v) { return ops::mul(v[0], v[1]); },
                           {random_tensor(s, 1), random_tensor(s, 2)}) < 1e-6);
  CHECK(max_gradient_error([](const Vs& v) { return ops::sigmoid(v[0]); }, {random_tensor(s, 3, -4.0, 4.0)}) <
        1e-6);
  CHECK(max_gradient_error([](const Vs& v) { return ops::leaky_relu(v[0], 0.01); }, {random_tensor(s, 4)}) < 1e-6);
  CHECK(max_gradient_error([](const Vs& v) { return ops::relu(v[0]); }, {random_tensor(s, 5)}) < 1e-6);
  CHECK(max_gradient_error([](const Vs& v) { return ops::one_minus(v[0]); }, {random_tensor(s, 6)}) < 1e-6);
  CHECK(max_gradient_error([](const Vs& v) { return ops::scale(v[0], 2.5); }, {random_tensor(s, 7)}) < 1e-6);
}

TEST_CASE("gradients of structured ops") {
  CHECK(max_gradient_error([](const Vs& v) { return ops::gated_gelu(v[0]); },
                           {random_tensor(Shape{2, 6, 3, 3}, 1, -2.0, 2.0)}) < 1e-6);
  CHECK(max_gradient_error([](const Vs& v) { return ops::scale_channels(v[0], v[1]); },
                           {random_tensor(Shape{2, 3, 4, 4}, 1), random_tensor(Shape{2, 3, 1, 1}, 2)}) < 1e-6);
  CHECK(max_gradient_error([](const Vs& v) { return ops::global_avg_pool(v[0]); },
                           {random_tensor(Shape{2, 3, 4, 4}, 3)}) < 1e-6);
  CHECK(max_gradient_error([](const Vs& v) { return ops::max_pool2x2(v[0]); },
                           {random_tensor(Shape{1, 2, 4, 6}, 4)}) < 1e-6);
  CHECK(max_gradient_error([](const Vs& v) { return ops::repeat_channels(v[0], 3); },
                           {random_tensor(Shape{2, 1, 3, 3}, 5)}) < 1e-6);
  CHECK(max_gradient_error(
            [](const Vs& v) { return ops::normalize_channels(v[0], {0.4, 0.5, 0.6}, {0.2, 0.3, 0.25}); },
            {random_tensor(Shape{1, 3, 3, 3}, 6)}) < 1e-6);
}

TEST_CASE("gradients of convolutions") {
  for (int stride : {1, 2}) {
    CHECK(max_gradient_error([stride](const Vs& v) { return ops::conv2d(v[0], v[1], v[2], stride, 1); },
                             {random_tensor(Shape{2, 3, 6, 6}, 1), random_tensor(Shape{4, 3, 3, 3}, 2),
                              random_tensor(Shape{4}, 3)}) < 1e-5);
  }
  CHECK(max_gradient_error([](const Vs& v) { return ops::conv2d(v[0], v[1], V{}, 1, 0); },
                           {random_tensor(Shape{2, 3, 4, 5}, 4), random_tensor(Shape{6, 3, 1, 1}, 5)}) < 1e-5);
  CHECK(max_gradient_error([](const Vs& v) { return ops::conv2d(v[0], v[1], v[2], 2, 1); },
                           {random_tensor(Shape{1, 2, 8, 8}, 6), random_tensor(Shape{4, 2, 4, 4}, 7),
                            random_tensor(Shape{4}, 8)}) < 1e-5);
  CHECK(max_gradient_error([](const Vs& v) { return ops::depthwise_conv2d(v[0], v[1], 1); },
                           {random_tensor(Shape{2, 3, 5, 4}, 9), random_tensor(Shape{3, 1, 3, 3}, 10)}) < 1e-5);
  CHECK(max_gradient_error([](const Vs& v) { return ops::conv_transpose2x2(v[0], v[1], v[2]); },
                           {random_tensor(Shape{2, 4, 3, 3}, 11), random_tensor(Shape{4, 2, 2, 2}, 12),
                            random_tensor(Shape{2}, 13)}) < 1e-5);
}

TEST_CASE("conv_transpose2x2 places each input pixel into its 2x2 output block") {
  Tensor<double> x(Shape{1, 1, 1, 2}, std::vector<double>{1.0, 2.0});
  Tensor<double> w(Shape{1, 1, 2, 2}, std::vector<double>{1.0, 2.0, 3.0, 4.0});
  auto y = ops::conv_transpose2x2(constant(x), constant(w), V{});
  REQUIRE(y->value.shape() == Shape{1, 1, 2, 4});
  const std::vector<double> expected{1, 2, 2, 4, 3, 4, 6, 8};
  for (std::size_t i = 0; i < expected.size(); ++i) CHECK(y->value[i] == expected[i]);
}

TEST_CASE("gradients of normalization layers") {
  CHECK(max_gradient_error([](const Vs& v) { return ops::layer_norm_channels(v[0], v[1], v[2]); },
                           {random_tensor(Shape{2, 4, 3, 3}, 1), random_tensor(Shape{4}, 2),
                            random_tensor(Shape{4}, 3)}) < 1e-5);
  for (bool train : {true, false}) {
    CHECK(max_gradient_error(
              [train](const Vs& v) {
                Tensor<double> mean(Shape{3}, 0.1), var(Shape{3}, 1.5);
                return ops::batch_norm(v[0], v[1], v[2], ops::BatchNormStats<double>{mean, var}, train);
              },
              {random_tensor(Shape{2, 3, 3, 3}, 4), random_tensor(Shape{3}, 5), random_tensor(Shape{3}, 6)}) <
          1e-5);
  }
}

TEST_CASE("batch_norm updates running statistics only in train mode") {
  Tensor<double> mean(Shape{1}, 0.0), var(Shape{1}, 1.0);
  Tensor<double> x(Shape{1, 1, 1, 4}, std::vector<double>{1, 2, 3, 4});
  ops::batch_norm(constant(x), constant(Tensor<double>(Shape{1}, 1.0)), constant(Tensor<double>(Shape{1}, 0.0)),
                  ops::BatchNormStats<double>{mean, var}, false);
  CHECK(mean[0] == 0.0);
  CHECK(var[0] == 1.0);
  auto y = ops::batch_norm(constant(x), constant(Tensor<double>(Shape{1}, 1.0)),
                           constant(Tensor<double>(Shape{1}, 0.0)), ops::BatchNormStats<double>{mean, var}, true);
  CHECK(mean[0] == doctest::Approx(0.25));                       // 0.1 * 2.5
  CHECK(var[0] == doctest::Approx(0.9 + 0.1 * (5.0 / 3.0)));     // unbiased variance 5/3
  double s = 0;
  for (double v : y->value.values()) s += v;
  CHECK(s == doctest::Approx(0.0).epsilon(1e-12));
}

TEST_CASE("channel_attention gradient including temperature") {
  CHECK(max_gradient_error([](const Vs& v) { return ops::channel_attention(v[0], v[1]); },
                           {random_tensor(Shape{2, 9, 3, 2}, 1), Tensor<double>(Shape{1}, 0.8)}) < 1e-5);
}

TEST_CASE("channel_attention materializes a CxC row-stochastic map") {
  Tensor<double> map;
  auto out = ops::channel_attention(constant(random_tensor(Shape{2, 12, 5, 7}, 3)),
                                    constant(Tensor<double>(Shape{1}, 1.0)), &map);
  CHECK(map.shape() == Shape{2, 4, 4});
  CHECK(out->value.shape() == Shape{2, 4, 5, 7});
  for (int b = 0; b < 2; ++b)
    for (int i = 0; i < 4; ++i) {
      double row = 0;
      for (int j = 0; j < 4; ++j) row += map[(b * 4 + i) * 4 + j];
      CHECK(row == doctest::Approx(1.0).epsilon(1e-12));
    }
}

TEST_CASE("scalar losses and their gradients") {
  const Shape s{2, 3, 4, 4};
  CHECK(max_gradient_error([](const Vs& v) { return ops::l1_mean(v[0], v[1]); },
                           {random_tensor(s, 1), random_tensor(s, 2)}) < 1e-6);
  CHECK(max_gradient_error([](const Vs& v) { return ops::psnr_loss(v[0], v[1], 1.0, 1e-8); },
                           {random_tensor(s, 3), random_tensor(s, 4)}) < 1e-6);
  auto same = constant(random_tensor(s, 5));
  CHECK(ops::psnr_loss(same, same, 1.0, 1e-8)->value[0] == doctest::Approx(-80.0));
  CHECK(ops::mse(same, same)->value[0] == 0.0);
}

TEST_CASE("ops built from constants record no graph") {
  auto a = constant(random_tensor(Shape{1, 2, 2, 2}, 1));
  auto y = ops::relu(ops::add(a, a));
  CHECK_FALSE(y->requires_grad);
  CHECK(y->parents.empty());
}
