// Copyright (c) 2026, OBIFormer contributors
// SPDX-License-Identifier: Apache-2.0

#include <doctest.h>

#include <cmath>
#include <limits>
#include <random>

#include "obiformer/model.hpp"
#include "obiformer/ops.hpp"
#include "reference.hpp"
#include "test_support.hpp"

using namespace obiformer;
using obiformer::testing::random_tensor;
namespace ref = obiformer::reference;

namespace {

ModelConfig tiny(int depth = 1, int channels = 4) {
  ModelConfig c;
  c.encoder_depth = depth;
  c.base_channels = channels;
  return c;
}

// Closed-form parameter count, layer by layer.
std::size_t closed_form_count(const ModelConfig& cfg) {
  auto csab = [&](std::size_t c) {
    const std::size_t h = static_cast<std::size_t>(c * cfg.ffn_expansion);
    return 2 * c + 1 + 3 * c * c + 27 * c + c * c + 2 * c + 2 * h * c + 18 * h + h * c;
  };
  auto gsnb = [](std::size_t c) { return 2 * 9 * c * c + 2 * 2 * c; };
  auto skff = [](std::size_t c) {
    const std::size_t d = std::max<std::size_t>(c / 8, 4);
    return d * c + 2 * c * d;
  };
  auto ofb = [&](std::size_t c) { return cfg.csab_per_ofb * csab(c) + cfg.gsnb_per_ofb * gsnb(c) + skff(c); };
  const std::size_t c0 = cfg.base_channels;
  std::size_t total = 27 * c0 + c0;
  for (int l = 0; l < cfg.encoder_depth; ++l) {
    const std::size_t c = c0 << l;
    total += ofb(c) + 2 * c * c * 16 + 2 * c;  // OFB + 4x4 down conv
    total += ofb(c) + 2 * c * c * 4 + c;       // decoder: 2x2 up conv + OFB
  }
  total += ofb(c0 << cfg.encoder_depth);
  total += 3 * c0 * 9 + 3 + c0 * 9 + 1;
  return total;
}

// Random parameters (positive temperatures and running variances).
void randomize(ModelState& state, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<float> dist(-0.5f, 0.5f);
  for (auto& e : state.params.entries()) {
    for (auto& v : e.value.values()) v = dist(rng);
    if (e.name.ends_with("temperature")) e.value[0] = 0.5f + std::abs(e.value[0]);
  }
  for (auto& e : state.buffers.entries()) {
    for (auto& v : e.value.values()) v = dist(rng);
    if (e.name.ends_with("running_var")) {
      for (auto& v : e.value.values()) v = 0.5f + std::abs(v);
    }
  }
}

double max_abs_diff(const Tensor<double>& t, const ref::Map3& m) {
  double worst = 0;
  for (std::size_t i = 0; i < m.v.size(); ++i) worst = std::max(worst, std::abs(t[i] - m.v[i]));
  return worst;
}

}  // namespace

TEST_CASE("build_model is deterministic under a seed") {
  const auto a = build_model(tiny(), 7);
  const auto b = build_model(tiny(), 7);
  const auto c = build_model(tiny(), 8);
  CHECK(a.params == b.params);
  CHECK_FALSE(a.params == c.params);
  CHECK(a.params.all_finite());
}

TEST_CASE("parameter count grows with base channels") {
  CHECK(count_parameters(build_model(tiny(1, 16), 0).params) > count_parameters(build_model(tiny(1, 8), 0).params));
}

TEST_CASE("parameter count equals the closed-form layer sum") {
  CHECK(count_parameters(build_model(tiny(1, 4), 0).params) == closed_form_count(tiny(1, 4)));
  // Hand-evaluated value for N=1, C=4 (ffn hidden 10 at C=4, 21 at C=8).
  CHECK(closed_form_count(tiny(1, 4)) == 9418);
  ModelConfig odd = tiny(2, 6);
  odd.csab_per_ofb = 1;
  odd.gsnb_per_ofb = 3;
  CHECK(count_parameters(build_model(odd, 0).params) == closed_form_count(odd));
}

TEST_CASE("count_parameters sums element counts") {
  ParameterStore store;
  store.add("a", Tensor<float>(Shape{2, 3}));
  store.add("b", Tensor<float>(Shape{4}));
  CHECK(count_parameters(store) == 10);
  CHECK_THROWS_AS(store.add("a", Tensor<float>(Shape{1})), ConfigError);
}

TEST_CASE("build_model rejects invalid configurations") {
  ModelConfig c = tiny();
  c.encoder_depth = 0;
  CHECK_THROWS_WITH_AS(build_model(c, 0), doctest::Contains("encoder_depth"), ConfigError);
  c = tiny();
  c.base_channels = 0;
  CHECK_THROWS_WITH_AS(build_model(c, 0), doctest::Contains("base_channels"), ConfigError);
  c = tiny();
  c.csab_per_ofb = 0;
  CHECK_THROWS_AS(build_model(c, 0), ConfigError);
  c = tiny();
  c.gsnb_per_ofb = 0;
  CHECK_THROWS_AS(build_model(c, 0), ConfigError);
}

TEST_CASE("initial temperatures follow the config") {
  ModelConfig c = tiny();
  c.attention_temperature_init = 2.5;
  const auto state = build_model(c, 1);
  int seen = 0;
  for (const auto& e : state.params.entries()) {
    if (e.name.ends_with("attn.temperature")) {
      CHECK(e.value[0] == 2.5f);
      ++seen;
    }
  }
  CHECK(seen == 3 * 2);
}

TEST_CASE("channel self-attention with one channel returns V") {
  // C = 1: attention map is [[1]] and the output equals V.
  ModelConfig c = tiny(1, 1);
  c.ffn_expansion = 2.66;
  auto state = build_model(c, 3);
  auto b = Bindings<double>::bind(state, false);
  const Scope<double> scope{&b, "encoder.0.ofb.csab.0.attn."};
  Tensor<double> map;
  auto x = constant(random_tensor(Shape{1, 1, 4, 4}, 5));
  auto out = channel_self_attention(x, scope, &map);
  CHECK(map.shape() == Shape{1, 1, 1});
  CHECK(map[0] == doctest::Approx(1.0));
  auto qkv = ops::depthwise_conv2d(ops::conv2d(x, scope("qkv.weight"), Var<double>{}, 1, 0), scope("qkv_dw.weight"), 1);
  for (std::size_t i = 0; i < out->value.size(); ++i) CHECK(out->value[i] == doctest::Approx(qkv->value[2 * 16 + i]));
}

TEST_CASE("channel self-attention matches the dense double-loop oracle") {
  auto state = build_model(tiny(1, 3), 11);
  randomize(state, 12);
  auto b = Bindings<double>::bind(state, false);
  const Scope<double> scope{&b, "encoder.0.ofb.csab.0.attn."};
  const auto x = random_tensor(Shape{1, 3, 2, 2}, 13);
  Tensor<double> map;
  auto out = channel_self_attention(constant(x), scope, &map);
  std::vector<double> ref_map;
  const auto expected =
      ref::channel_self_attention(ref::from_tensor(x, 0), ref::Params{state.params, scope.prefix}, &ref_map);
  CHECK(out->value.shape() == Shape{1, 3, 2, 2});
  CHECK(map.size() == 9);
  CHECK(max_abs_diff(out->value, expected) < 1e-10);
  for (std::size_t i = 0; i < ref_map.size(); ++i) CHECK(map[i] == doctest::Approx(ref_map[i]));
}

TEST_CASE("csab preserves shape and matches the composition oracle") {
  auto state = build_model(tiny(1, 4), 21);
  randomize(state, 22);
  auto b = Bindings<double>::bind(state, false);
  const Scope<double> scope{&b, "encoder.0.ofb.csab.1."};
  const auto x = random_tensor(Shape{1, 4, 4, 4}, 23);
  auto out = csab_forward(constant(x), scope);
  CHECK(out->value.shape() == x.shape());
  const auto expected = ref::csab(ref::from_tensor(x, 0), ref::Params{state.params, scope.prefix});
  CHECK(max_abs_diff(out->value, expected) < 1e-10);
}

TEST_CASE("csab with zero conv weights reduces to the residual path") {
  auto state = build_model(tiny(1, 4), 31);
  for (auto& e : state.params.entries()) {
    if (e.value.rank() == 4) e.value.fill(0.0f);
  }
  auto b = Bindings<double>::bind(state, false);
  const auto x = random_tensor(Shape{2, 4, 4, 4}, 32);
  auto out = csab_forward(constant(x), Scope<double>{&b, "encoder.0.ofb.csab.0."});
  for (std::size_t i = 0; i < x.size(); ++i) CHECK(out->value[i] == doctest::Approx(x[i]));
}

TEST_CASE("gsnb residual identity and eval-mode oracle") {
  auto state = build_model(tiny(1, 4), 41);
  randomize(state, 42);
  auto b = Bindings<double>::bind(state, false);
  const Scope<double> scope{&b, "encoder.0.ofb.gsnb.0."};
  const auto x = random_tensor(Shape{1, 4, 8, 8}, 43);
  auto out = gsnb_forward(constant(x), scope, Mode::eval);
  CHECK(out->value.shape() == x.shape());
  const auto expected = ref::gsnb_eval(ref::from_tensor(x, 0), ref::Params{state.params, scope.prefix},
                                       ref::Params{state.buffers, scope.prefix});
  CHECK(max_abs_diff(out->value, expected) < 1e-10);

  // Zero conv weights with zero BN shift: the block is the identity.
  auto zeroed = build_model(tiny(1, 4), 44);
  for (auto& e : zeroed.params.entries()) {
    if (e.value.rank() == 4) e.value.fill(0.0f);
  }
  auto zb = Bindings<double>::bind(zeroed, false);
  for (Mode mode : {Mode::eval, Mode::train}) {
    auto y = gsnb_forward(constant(random_tensor(Shape{2, 4, 3, 5}, 45)), Scope<double>{&zb, scope.prefix}, mode);
    const auto x2 = random_tensor(Shape{2, 4, 3, 5}, 45);
    for (std::size_t i = 0; i < x2.size(); ++i) CHECK(y->value[i] == doctest::Approx(x2[i]));
  }
}

TEST_CASE("gsnb train mode updates running statistics") {
  auto state = build_model(tiny(1, 4), 46);
  const auto before = state.buffers;
  auto b = Bindings<double>::bind(state, false);
  gsnb_forward(constant(random_tensor(Shape{2, 4, 4, 4}, 47)), Scope<double>{&b, "encoder.0.ofb.gsnb.0."},
               Mode::train);
  b.store_buffers(state);
  CHECK_FALSE(state.buffers == before);
}

TEST_CASE("skff partition of unity, symmetric logits and oracle") {
  auto state = build_model(tiny(1, 8), 51);
  randomize(state, 52);
  auto b = Bindings<double>::bind(state, false);
  const Scope<double> scope{&b, "encoder.0.ofb.skff."};
  const auto r = random_tensor(Shape{2, 8, 4, 4}, 53);
  const auto g = random_tensor(Shape{2, 8, 4, 4}, 54);
  auto out = skff_fuse(constant(r), constant(g), scope);
  for (std::size_t i = 0; i < out.attn_recon->value.size(); ++i) {
    CHECK(std::abs(out.attn_recon->value[i] + out.attn_glyph->value[i] - 1.0) < 1e-12);
  }
  for (int n = 0; n < 2; ++n) {
    const auto f = ref::skff(ref::from_tensor(r, n), ref::from_tensor(g, n), ref::Params{state.params, scope.prefix});
    const std::size_t off = static_cast<std::size_t>(n) * 8 * 16;
    for (std::size_t i = 0; i < f.fused.v.size(); ++i) {
      CHECK(std::abs(out.fused->value[off + i] - f.fused.v[i]) < 1e-10);
      CHECK(std::abs(out.fused_recon->value[off + i] - f.fused_recon.v[i]) < 1e-10);
      CHECK(std::abs(out.fused_glyph->value[off + i] - f.fused_glyph.v[i]) < 1e-10);
    }
  }

  // Equal branch convs give equal logits: both attentions are 0.5.
  state.params.at("encoder.0.ofb.skff.fc_glyph.weight") = state.params.at("encoder.0.ofb.skff.fc_recon.weight");
  auto sb = Bindings<double>::bind(state, false);
  auto sym = skff_fuse(constant(r), constant(g), Scope<double>{&sb, scope.prefix});
  for (std::size_t i = 0; i < sym.attn_recon->value.size(); ++i) CHECK(sym.attn_recon->value[i] == 0.5);
  for (std::size_t i = 0; i < r.size(); ++i) CHECK(sym.fused->value[i] == doctest::Approx(0.5 * r[i] + 0.5 * g[i]));

  CHECK_THROWS_AS(skff_fuse(constant(r), constant(random_tensor(Shape{2, 8, 4, 2}, 1)), scope), ShapeError);
}

TEST_CASE("ofb equals csab∘csab and gsnb∘gsnb fused by skff") {
  auto state = build_model(tiny(1, 4), 61);
  randomize(state, 62);
  CHECK(state.config.csab_per_ofb == 2);
  CHECK(state.config.gsnb_per_ofb == 2);
  auto b = Bindings<double>::bind(state, false);
  const Scope<double> scope{&b, "decoder.0.ofb."};
  const auto x = random_tensor(Shape{1, 4, 8, 8}, 63);
  auto out = ofb_forward(constant(x), scope, state.config, Mode::eval);
  CHECK(out.fused->value.shape() == x.shape());

  const ref::Params p{state.params, scope.prefix};
  const ref::Params buf{state.buffers, scope.prefix};
  const auto x0 = ref::from_tensor(x, 0);
  const auto recon = ref::csab(ref::csab(x0, p.sub("csab.0")), p.sub("csab.1"));
  const auto glyph = ref::gsnb_eval(ref::gsnb_eval(x0, p.sub("gsnb.0"), buf.sub("gsnb.0")), p.sub("gsnb.1"),
                                    buf.sub("gsnb.1"));
  const auto f = ref::skff(recon, glyph, p.sub("skff"));
  CHECK(max_abs_diff(out.fused->value, f.fused) < 1e-10);
  CHECK(max_abs_diff(out.streams.recon->value, f.fused_recon) < 1e-10);
  CHECK(max_abs_diff(out.streams.glyph->value, f.fused_glyph) < 1e-10);
}

TEST_CASE("resampling shapes") {
  ModelConfig c = tiny(1, 8);
  auto state = build_model(c, 71);
  auto b = Bindings<double>::bind(state, false);
  auto x = constant(random_tensor(Shape{1, 8, 16, 16}, 72));
  auto down = downsample(x, Scope<double>{&b, "encoder.0.down."});
  CHECK(down->value.shape() == Shape{1, 16, 8, 8});
  auto up = upsample(down, Scope<double>{&b, "decoder.0.up."});
  CHECK(up->value.shape() == Shape{1, 8, 16, 16});
  CHECK_THROWS_AS(downsample(constant(random_tensor(Shape{1, 8, 15, 16}, 1)), Scope<double>{&b, "encoder.0.down."}),
                  ShapeError);
  CHECK_THROWS_AS(upsample(constant(random_tensor(Shape{1, 15, 4, 4}, 1)), Scope<double>{&b, "decoder.0.up."}),
                  ShapeError);
}

TEST_CASE("forward output shapes and input validation") {
  const auto state = build_model(tiny(2, 4), 81);
  const auto image = random_tensor<float>(Shape{2, 3, 16, 12}, 82, 0.0f, 1.0f);
  const auto [denoised, skeleton] = infer(state, image);
  CHECK(denoised.shape() == Shape{2, 3, 16, 12});
  CHECK(skeleton.shape() == Shape{2, 1, 16, 12});
  CHECK_THROWS_AS(infer(state, random_tensor<float>(Shape{1, 3, 18, 16}, 1, 0.0f, 1.0f)), ShapeError);
  CHECK_THROWS_AS(infer(state, random_tensor<float>(Shape{1, 1, 16, 16}, 1, 0.0f, 1.0f)), ShapeError);
  auto bad = image;
  bad[5] = std::numeric_limits<float>::quiet_NaN();
  CHECK_THROWS_AS(infer(state, bad), InputError);
}

TEST_CASE("eval-mode forward is deterministic") {
  const auto state = build_model(tiny(1, 4), 91);
  const auto image = random_tensor<float>(Shape{1, 3, 8, 8}, 92, 0.0f, 1.0f);
  const auto a = infer(state, image);
  const auto b = infer(state, image);
  CHECK(a.first.storage() == b.first.storage());
  CHECK(a.second.storage() == b.second.storage());
}

TEST_CASE("end-to-end gradient matches central finite differences") {
  // Scalar loss over both heads on the tiny config at 32x32.
  auto state = build_model(tiny(1, 4), 101);
  randomize(state, 102);
  for (auto& e : state.params.entries()) {
    for (auto& v : e.value.values()) v *= 0.5f;
    if (e.name.ends_with("temperature")) e.value[0] = 4.0f;
  }
  const auto image = random_tensor(Shape{1, 3, 32, 32}, 103, 0.0, 1.0);
  const auto target_img = random_tensor(Shape{1, 3, 32, 32}, 104, 0.0, 1.0);
  const auto target_skel = random_tensor(Shape{1, 1, 32, 32}, 105, 0.0, 1.0);

  auto loss_for = [&](Bindings<double>& b) {
    auto out = forward(b, constant(image), state.config, Mode::train);
    return ops::add(ops::mse(out.denoised, constant(target_img)), ops::mse(out.skeleton, constant(target_skel)));
  };
  auto tracked = Bindings<double>::bind(state, true);
  backward(loss_for(tracked));

  std::mt19937_64 rng(106);
  double worst = 0;
  int checked = 0;
  for (const auto& [name, var] : tracked.params()) {
    std::uniform_int_distribution<std::size_t> pick(0, var->value.size() - 1);
    const std::size_t i = pick(rng);
    const double analytic = var->grad[i];
    auto probe = [&](double delta) {
      auto b = Bindings<double>::bind(state, false);
      b.param(name)->value[i] += delta;
      return loss_for(b)->value[0];
    };
    // Small step: BN followed by ReLU puts many activations near the kink.
    const double h = 1e-6;
    const double numeric = (probe(h) - probe(-h)) / (2 * h);
    const double rel = std::abs(analytic - numeric) / std::max({std::abs(analytic), std::abs(numeric), 1e-5});
    if (rel > 1e-3) MESSAGE(name << " analytic " << analytic << " numeric " << numeric);
    worst = std::max(worst, rel);
    ++checked;
  }
  CHECK(checked == static_cast<int>(state.params.size()));
  CHECK(worst < 1e-3);
}
