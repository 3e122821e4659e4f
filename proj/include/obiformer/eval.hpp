// Copyright (c) 2026, OBIFormer contributors
// SPDX-License-Identifier: Apache-2.0
//
// Evaluation, efficiency profiling, hyperparameter sweeps and plots.

#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "obiformer/data.hpp"
#include "obiformer/model.hpp"
#include "obiformer/train.hpp"

namespace obiformer {

// ---- Quality ---------------------------------------------------------------

struct MetricsReport {
  struct Row {
    std::string id;
    double psnr_db;
    double ssim;
  };
  std::string model_tag;
  std::vector<Row> rows;
  double mean_psnr = 0.0;
  double mean_ssim = 0.0;
  std::size_t count = 0;

  /// Recomputes the aggregates from the rows.
  void finalize();
  /// id,psnr_db,ssim rows followed by a "mean" row.
  void write_csv(const std::string& path) const;
};

/// Eval-mode forward per record; `bypass` scores the noisy input itself.
/// Throws ConfigError on an empty split.
MetricsReport evaluate(const ModelState& state, const std::vector<SampleRecord>& split, bool bypass = false,
                       const std::string& model_tag = "obiformer");

// ---- Efficiency ------------------------------------------------------------

enum class FlopConvention { flops, macs };

std::string convention_name(FlopConvention c);
FlopConvention parse_convention(const std::string& name);

struct FlopReport {
  struct Entry {
    std::string module;
    double flops;
  };
  FlopConvention convention = FlopConvention::flops;
  std::vector<Entry> breakdown;  // one entry per top-level module
  double attention = 0.0;        // map construction and application, summed over CSAs
  double total = 0.0;
};

/// Analytic operation count for one forward pass on a 1×3×H×W input.
/// Under `flops` a multiply-add counts 2 and element-wise work is included;
/// under `macs` multiply-adds count 1 and element-wise work is omitted.
/// One convolution: Cin/groups·Cout·K²·Hout·Wout multiply-adds, plus one add per output when biased.
double conv_flops(int cin, int cout, int kernel, int out_h, int out_w, bool bias, int groups = 1,
                  FlopConvention convention = FlopConvention::flops);

FlopReport count_flops(const ModelConfig& config, int height, int width,
                       FlopConvention convention = FlopConvention::flops);

/// Dense HW×HW self-attention cost at the same positions, for comparison:
/// 2·(HW)²·C for the map plus 2·(HW)²·C for its application.
double dense_attention_flops(int channels, int height, int width);

/// Least-squares slope of log(y) against log(x).
double loglog_slope(const std::vector<double>& x, const std::vector<double>& y);

struct EfficiencyReport {
  std::size_t param_count = 0;
  FlopReport flops;
  std::vector<double> samples_ms;
  double mean_ms = 0, p50_ms = 0, p95_ms = 0;
  Shape input_shape;
  int warmup = 0;
  int iterations = 0;
  std::string device;

  void write_csv(const std::string& path) const;
};

inline constexpr int kDefaultWarmup = 50;

/// Serial eval-mode timing on a fixed random input.
EfficiencyReport benchmark_inference(const ModelState& state, const Shape& input_shape, int warmup = kDefaultWarmup,
                                     int iterations = 20, std::uint64_t seed = 0);

/// Nearest-rank percentile of an unsorted sample.
double percentile(std::vector<double> values, double p);

// ---- Sweeps ----------------------------------------------------------------

struct SweepRow {
  double value;
  double psnr;
  double ssim;
};

struct SweepTable {
  std::string axis;
  std::vector<SweepRow> rows;
  void write_csv(const std::string& path) const;
};

/// Trains one short run per value of `axis` ("a1".."a4" or "blocks", which
/// sets both csab_per_ofb and gsnb_per_ofb) and evaluates on `data.val`
/// (falling back to `data.test`). Rows keep the given order.
SweepTable alpha_sweep(const ModelConfig& model, const TrainConfig& base, const Dataset& data,
                       const std::string& axis, const std::vector<double>& values, const FeatureExtractor* fx,
                       std::uint64_t model_seed = 0);

// ---- Plots -----------------------------------------------------------------

/// CSV plus loss-curve PNG. Throws ConfigError before writing when the log is empty.
std::vector<std::string> emit_plots(const TrainLog& log, const std::string& out_dir);
/// CSV plus PSNR/SSIM-versus-value PNG.
std::vector<std::string> emit_plots(const SweepTable& table, const std::string& out_dir);

/// Minimal line chart rasterizer: one or more series on shared axes.
struct LineSeries {
  std::vector<double> x, y;
  float rgb[3];
};
void write_line_chart(const std::string& path, const std::vector<LineSeries>& series, int width = 480,
                      int height = 320);

}  // namespace obiformer
