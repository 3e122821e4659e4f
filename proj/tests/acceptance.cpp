// Copyright (c) 2026, OBIFormer contributors
// SPDX-License-Identifier: Apache-2.0
//
// Acceptance suite. Prints one PASS/FAIL line per criterion and exits
// non-zero if any selected criterion fails.
//
//   acceptance            run criteria 1-10
//   acceptance 4 9        run only criteria 4 and 9

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <functional>
#include <iomanip>
#include <iostream>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "metric_reference.hpp"
#include "obiformer/data.hpp"
#include "obiformer/eval.hpp"
#include "obiformer/loss.hpp"
#include "obiformer/metrics.hpp"
#include "obiformer/model.hpp"
#include "obiformer/train.hpp"
#include "reference.hpp"
#include "test_support.hpp"

namespace fs = std::filesystem;
using namespace obiformer;
namespace ref = obiformer::reference;
using obiformer::testing::random_tensor;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

template <class... Args>
std::string format(const char* fmt, Args... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, fmt, args...);
  return buf;
}

ModelConfig tiny(int depth = 1, int channels = 4) {
  ModelConfig c;
  c.encoder_depth = depth;
  c.base_channels = channels;
  return c;
}

// Moves parameters off their initial values, keeping temperatures positive.
void randomize(ModelState& state, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<float> dist(-0.5f, 0.5f);
  for (auto& e : state.params.entries()) {
    for (auto& v : e.value.values()) v = dist(rng);
    if (e.name.ends_with("temperature")) e.value[0] = 0.5f + std::abs(e.value[0]);
  }
}

Dataset split_records(std::vector<SampleRecord> records, double train_ratio, double val_ratio, std::uint64_t seed) {
  std::vector<std::string> ids;
  for (const auto& r : records) ids.push_back(r.id);
  const SplitIds split = split_ids(ids, train_ratio, val_ratio, seed);
  Dataset d;
  for (auto& r : records) {
    auto in = [&](const std::vector<std::string>& v) { return std::binary_search(v.begin(), v.end(), r.id); };
    (in(split.train) ? d.train : in(split.val) ? d.val : d.test).push_back(std::move(r));
  }
  return d;
}

// ---- 1 ---------------------------------------------------------------------

Outcome gradient_correctness() {
  const auto t0 = Clock::now();
  const ModelState m = build_model(tiny(), 0);
  const auto sample = synthetic_corpus(1, 32, 10).front();
  const FeatureExtractor fx = FeatureExtractor::random(5, {4, 6, 8, 8});
  const LossWeights weights{};

  GradientCheckOptions gate;
  gate.step = 1e-3;
  gate.abs_floor = 1e-8;
  gate.rel_tol = 1e-3;
  const auto report = gradient_check(m, sample, weights, &fx, gate);
  int failed = 0;
  double worst = 0;
  std::string worst_name;
  for (const auto& g : report.groups) {
    failed += !g.pass;
    if (g.max_rel_error > worst) {
      worst = g.max_rel_error;
      worst_name = g.name;
    }
  }

  // Same sample at a step that stays clear of ReLU and batch-norm kinks.
  GradientCheckOptions fine = gate;
  fine.step = 1e-6;
  fine.abs_floor = 1e-3;
  const auto diag = gradient_check(m, sample, weights, &fx, fine);
  int diag_failed = 0;
  for (const auto& g : diag.groups) diag_failed += !g.pass;

  const double secs = seconds_since(t0);
  return {report.pass() && secs <= 300,
          format("%d/%zu groups above 1e-3 at step 1e-3 (worst %.3g, %s); %zu elements; "
                 "at step 1e-6 with floor 1e-3 %d groups fail; %.1f s",
                 failed, report.groups.size(), worst, worst_name.c_str(), report.total_checked, diag_failed, secs)};
}

// ---- 2 ---------------------------------------------------------------------

Outcome attention_oracle() {
  std::mt19937_64 rng(2);
  std::uniform_int_distribution<int> channels(1, 6), side(1, 7);
  double worst = 0;
  bool compact = true;
  for (int t = 0; t < 50; ++t) {
    const int c = channels(rng), h = side(rng), w = side(rng);
    auto state = build_model(tiny(1, c), 100 + t);
    randomize(state, 200 + t);
    auto b = Bindings<double>::bind(state, false);
    const Scope<double> scope{&b, "encoder.0.ofb.csab.0.attn."};
    const auto x = random_tensor(Shape{2, c, h, w}, 300 + t);
    Tensor<double> map;
    auto out = channel_self_attention(constant(x), scope, &map);
    compact = compact && map.shape() == Shape{2, c, c};
    for (int n = 0; n < 2; ++n) {
      std::vector<double> ref_map;
      const auto expected =
          ref::channel_self_attention(ref::from_tensor(x, n), ref::Params{state.params, scope.prefix}, &ref_map);
      const std::size_t off = static_cast<std::size_t>(n) * c * h * w;
      for (std::size_t i = 0; i < expected.v.size(); ++i) {
        worst = std::max(worst, std::abs(out->value[off + i] - expected.v[i]));
      }
      for (std::size_t i = 0; i < ref_map.size(); ++i) {
        worst = std::max(worst, std::abs(map[static_cast<std::size_t>(n) * c * c + i] - ref_map[i]));
      }
    }
  }
  return {worst <= 1e-5 && compact,
          format("max |diff| %.3g over 50 inputs; map is B x C x C: %s", worst, compact ? "yes" : "no")};
}

// ---- 3 ---------------------------------------------------------------------

Outcome skff_properties() {
  std::mt19937_64 rng(3);
  std::uniform_int_distribution<int> channel_pick(1, 4), side(1, 6);
  double worst_sum = 0, worst_oracle = 0;
  for (int t = 0; t < 100; ++t) {
    const int c = 4 * channel_pick(rng), h = side(rng), w = side(rng);
    auto state = build_model(tiny(1, c), 400 + t);
    randomize(state, 500 + t);
    auto b = Bindings<double>::bind(state, false);
    const Scope<double> scope{&b, "encoder.0.ofb.skff."};
    const auto r = random_tensor(Shape{2, c, h, w}, 600 + t);
    const auto g = random_tensor(Shape{2, c, h, w}, 700 + t);
    auto out = skff_fuse(constant(r), constant(g), scope);
    for (std::size_t i = 0; i < out.attn_recon->value.size(); ++i) {
      worst_sum = std::max(worst_sum, std::abs(out.attn_recon->value[i] + out.attn_glyph->value[i] - 1.0));
    }
    for (int n = 0; n < 2; ++n) {
      const auto f = ref::skff(ref::from_tensor(r, n), ref::from_tensor(g, n), ref::Params{state.params, scope.prefix});
      const std::size_t off = static_cast<std::size_t>(n) * c * h * w;
      for (std::size_t i = 0; i < f.fused.v.size(); ++i) {
        worst_oracle = std::max(worst_oracle, std::abs(out.fused->value[off + i] - f.fused.v[i]));
      }
    }
  }
  return {worst_sum <= 1e-6 && worst_oracle <= 1e-5,
          format("max |attn_r + attn_g - 1| %.3g; max |fused - oracle| %.3g over 100 inputs", worst_sum, worst_oracle)};
}

// ---- 4 ---------------------------------------------------------------------

Outcome overfit_smoke() {
  const auto t0 = Clock::now();
  Dataset data;
  data.train = synthetic_corpus(8, 64, 5);
  TrainConfig cfg;
  cfg.batch_size = 8;
  cfg.epochs = 100000;
  cfg.learning_rate = 2e-3;
  cfg.loss_weights = {100, 0, 1, 0};
  cfg.augment = false;
  cfg.validation_every = 0;
  const ModelState init = build_model(tiny(), 0);
  TrainState state{init, AdamState::zeros_like(init.params)};
  double psnr_now = 0;
  long steps = 0;
  while (steps < 2000) {
    cfg.max_steps = steps + 50;
    state = train(std::move(state), data, cfg, nullptr).last;
    steps = state.optimizer.step;
    psnr_now = evaluate(state.model, data.train).mean_psnr;
    if (psnr_now >= 30.0 || seconds_since(t0) > 600) break;
  }
  const double secs = seconds_since(t0);
  return {psnr_now >= 30.0 && steps <= 2000 && secs <= 600,
          format("train PSNR %.2f dB after %ld steps (raw %.2f dB); %.0f s", psnr_now, steps,
                 evaluate(init, data.train, true).mean_psnr, secs)};
}

// ---- 5 ---------------------------------------------------------------------

Outcome denoising_gain() {
  const auto t0 = Clock::now();
  const Dataset data = split_records(synthetic_corpus(200, 64, 17), 0.8, 0.1, 17);
  TrainConfig cfg;
  cfg.batch_size = 2;
  cfg.epochs = 20;
  cfg.learning_rate = 2e-3;
  cfg.loss_weights = {100, 0, 1, 0};
  cfg.validation_every = 0;
  cfg.seed = 3;
  const ModelState init = build_model(tiny(1, 8), 0);
  const auto result = train(init, data, cfg, nullptr);
  const auto raw = evaluate(init, data.test, true);
  const auto restored = evaluate(result.last.model, data.test);
  const double dpsnr = restored.mean_psnr - raw.mean_psnr, dssim = restored.mean_ssim - raw.mean_ssim;
  return {dpsnr >= 5.0 && dssim >= 0.05,
          format("test PSNR %.2f vs raw %.2f (%+.2f dB), SSIM %.4f vs %.4f (%+.4f); %zu train / %zu test; %.0f s",
                 restored.mean_psnr, raw.mean_psnr, dpsnr, restored.mean_ssim, raw.mean_ssim, dssim,
                 data.train.size(), data.test.size(), seconds_since(t0))};
}

// ---- 6 ---------------------------------------------------------------------

Outcome efficiency_calibration() {
  const ModelConfig full{};
  const double params = static_cast<double>(count_parameters(build_model(full, 0).params));
  const double flops = count_flops(full, 256, 256, FlopConvention::flops).total;
  const double macs = count_flops(full, 256, 256, FlopConvention::macs).total;
  const double ep = params / 8.35e6 - 1, ef = flops / 20.45e9 - 1, em = macs / 20.45e9 - 1;
  return {std::abs(ep) <= 0.15 && std::abs(ef) <= 0.20,
          format("N=%d C=%d: %.3fM params (%+.1f%%), %.2fG flops at 256x256 (%+.1f%%; macs %.2fG, %+.1f%%)",
                 full.encoder_depth, full.base_channels, params / 1e6, 100 * ep, flops / 1e9, 100 * ef, macs / 1e9,
                 100 * em)};
}

// ---- 7 ---------------------------------------------------------------------

Outcome metric_fidelity() {
  std::mt19937_64 rng(7);
  std::uniform_int_distribution<int> size(11, 40);
  double worst_psnr = 0, worst_ssim = 0;
  for (int t = 0; t < 100; ++t) {
    const Image a = ref::random_image(t % 2 ? 3 : 1, size(rng), size(rng), rng);
    const Image b = ref::perturb(a, 0.01 + 0.3 * (t % 10) / 10.0, rng);
    worst_psnr = std::max(worst_psnr, std::abs(psnr(a, b) - ref::psnr_oracle(a, b)));
    worst_ssim = std::max(worst_ssim, std::abs(ssim(a, b) - ref::ssim_oracle(a, b)));
  }
  const Image same = ref::random_image(3, 24, 24, rng);
  const double cap = psnr(same, same), unit = ssim(same, same);
  return {worst_psnr <= 1e-6 && worst_ssim <= 1e-4 && cap == 80.0 && std::abs(unit - 1.0) <= 1e-12,
          format("max |psnr diff| %.3g, max |ssim diff| %.3g over 100 pairs; identical: %.1f dB, ssim %.6f", worst_psnr,
                 worst_ssim, cap, unit)};
}

// ---- 8 ---------------------------------------------------------------------

Outcome attention_scaling() {
  const ModelConfig full{};
  std::vector<double> hw, csa, dense;
  for (int s : {64, 128, 256}) {
    hw.push_back(static_cast<double>(s) * s);
    csa.push_back(count_flops(full, s, s).attention);
    dense.push_back(dense_attention_flops(full.base_channels, s, s));
  }
  const double slope = loglog_slope(hw, csa), dense_slope = loglog_slope(hw, dense);
  return {std::abs(slope - 1.0) <= 0.05 && std::abs(dense_slope - 2.0) <= 0.05,
          format("channel attention slope %.4f, dense attention slope %.4f (64, 128, 256)", slope, dense_slope)};
}

// ---- 9 ---------------------------------------------------------------------

Outcome skeleton_pipeline() {
  int idempotent = 0, subset = 0;
  for (int i = 0; i < 50; ++i) {
    const Mask m = binarize(render_glyph(64, 64, 9000 + i));
    const Mask s = skeletonize(m);
    idempotent += skeletonize(s) == s;
    bool inside = true;
    for (std::size_t k = 0; k < s.data.size(); ++k) inside = inside && (!s.data[k] || m.data[k]);
    subset += inside;
  }
  Mask square(5, 5), center(5, 5);
  for (int y = 1; y <= 3; ++y)
    for (int x = 1; x <= 3; ++x) square.at(y, x) = 1;
  center.at(2, 2) = 1;
  const bool square_ok = skeletonize(square) == center;
  return {idempotent == 50 && subset == 50 && square_ok,
          format("idempotent %d/50, subset %d/50, 3x3 square -> centre pixel: %s", idempotent, subset,
                 square_ok ? "yes" : "no")};
}

// ---- 10 --------------------------------------------------------------------

Outcome determinism() {
  Dataset data;
  data.train = synthetic_corpus(4, 32, 21);
  TrainConfig cfg;
  cfg.batch_size = 2;
  cfg.epochs = 3;
  cfg.learning_rate = 1e-3;
  cfg.loss_weights = {100, 0, 1, 0};
  cfg.validation_every = 0;
  cfg.seed = 7;
  const ModelState init = build_model(tiny(), 5);
  const auto a = train(init, data, cfg, nullptr);
  const auto b = train(init, data, cfg, nullptr);
  bool same_trace = a.log.steps.size() == b.log.steps.size();
  for (std::size_t i = 0; same_trace && i < a.log.steps.size(); ++i) same_trace = a.log.steps[i].loss == b.log.steps[i].loss;

  const fs::path dir = fs::temp_directory_path() / "obiformer_acceptance";
  fs::create_directories(dir);
  const std::string path = (dir / "mid.obif").string();
  TrainConfig partial = cfg;
  partial.max_steps = 3;
  save_checkpoint(path, train(init, data, partial, nullptr).last, partial);
  Checkpoint ck = load_checkpoint(path);
  const auto resumed = train(std::move(ck.state), data, cfg, nullptr);
  const bool resume_exact = resumed.last.model.params == a.last.model.params &&
                            resumed.last.model.buffers == a.last.model.buffers &&
                            resumed.last.optimizer == a.last.optimizer;

  save_checkpoint(path, a.last, cfg);
  const bool roundtrip = load_checkpoint(path).state.model.params == a.last.model.params;
  fs::remove_all(dir);
  return {same_trace && resume_exact && roundtrip,
          format("identical loss traces (%zu steps): %s; save/load bit-exact: %s; resume at step 3 bit-exact: %s",
                 a.log.steps.size(), same_trace ? "yes" : "no", roundtrip ? "yes" : "no",
                 resume_exact ? "yes" : "no")};
}

struct Criterion {
  const char* name;
  std::function<Outcome()> run;
};

}  // namespace

int main(int argc, char** argv) {
  const std::vector<Criterion> criteria = {
      {"gradient correctness", gradient_correctness},   {"attention oracle", attention_oracle},
      {"skff properties", skff_properties},             {"overfit smoke", overfit_smoke},
      {"relative denoising gain", denoising_gain},      {"efficiency calibration", efficiency_calibration},
      {"metric fidelity", metric_fidelity},             {"attention scaling law", attention_scaling},
      {"skeleton pipeline", skeleton_pipeline},         {"determinism", determinism},
  };
  std::vector<int> selected;
  for (int i = 1; i < argc; ++i) {
    const int k = std::atoi(argv[i]);
    if (k < 1 || k > static_cast<int>(criteria.size())) {
      std::cerr << "usage: acceptance [criterion 1-" << criteria.size() << "]...\n";
      return 2;
    }
    selected.push_back(k);
  }
  if (selected.empty()) {
    for (int k = 1; k <= static_cast<int>(criteria.size()); ++k) selected.push_back(k);
  }
  int failures = 0;
  for (int k : selected) {
    Outcome o;
    try {
      o = criteria[k - 1].run();
    } catch (const std::exception& e) {
      o = {false, std::string("threw: ") + e.what()};
    }
    failures += !o.pass;
    std::cout << (o.pass ? "PASS" : "FAIL") << "  " << std::setw(2) << k << "  " << criteria[k - 1].name << ": "
              << o.detail << std::endl;
  }
  std::cout << (selected.size() - failures) << "/" << selected.size() << " criteria pass" << std::endl;
  return failures ? 1 : 0;
}
