// Copyright (c) 2026, OBIFormer contributors
// SPDX-License-Identifier: Apache-2.0

#include "obiformer/eval.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <random>
#include <sstream>
#include <thread>

#include "obiformer/errors.hpp"
#include "obiformer/metrics.hpp"

namespace fs = std::filesystem;

namespace obiformer {
namespace {

std::string fmt(double v) {
  std::ostringstream s;
  s.precision(10);
  s << v;
  return s.str();
}

std::ofstream open_out(const std::string& path) {
  std::ofstream f(path);
  if (!f) throw IngestionError("cannot write " + path);
  return f;
}

}  // namespace

// ---- Quality ---------------------------------------------------------------

void MetricsReport::finalize() {
  count = rows.size();
  double p = 0, s = 0;
  for (const auto& r : rows) {
    p += r.psnr_db;
    s += r.ssim;
  }
  mean_psnr = count ? p / static_cast<double>(count) : 0.0;
  mean_ssim = count ? s / static_cast<double>(count) : 0.0;
}

void MetricsReport::write_csv(const std::string& path) const {
  auto f = open_out(path);
  f << "id,psnr_db,ssim\n";
  for (const auto& r : rows) f << r.id << ',' << fmt(r.psnr_db) << ',' << fmt(r.ssim) << '\n';
  f << "mean," << fmt(mean_psnr) << ',' << fmt(mean_ssim) << '\n';
}

MetricsReport evaluate(const ModelState& state, const std::vector<SampleRecord>& split, bool bypass,
                       const std::string& model_tag) {
  if (split.empty()) throw ConfigError("evaluate: the split is empty");
  MetricsReport report;
  report.model_tag = bypass ? "identity" : model_tag;
  report.rows.resize(split.size());
  auto score = [&](std::size_t i) {
    const SampleRecord& r = split[i];
    Image restored = r.noisy;
    if (!bypass) {
      const Tensor<float> input = to_tensor({&r.noisy});
      restored = from_tensor(infer(state, input).first, 0);
    }
    report.rows[i] = {r.id, psnr(restored, r.clean), ssim(restored, r.clean)};
  };
  // Forward is re-entrant in eval mode; rows land in fixed slots.
  const std::size_t workers = std::min<std::size_t>(split.size(), std::max(1u, std::thread::hardware_concurrency()));
  std::vector<std::thread> pool;
  std::vector<std::exception_ptr> errors(workers);
  for (std::size_t w = 0; w < workers; ++w) {
    pool.emplace_back([&, w] {
      try {
        for (std::size_t i = w; i < split.size(); i += workers) score(i);
      } catch (...) {
        errors[w] = std::current_exception();
      }
    });
  }
  for (auto& t : pool) t.join();
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
  report.finalize();
  return report;
}

// ---- FLOPs -----------------------------------------------------------------

std::string convention_name(FlopConvention c) { return c == FlopConvention::flops ? "flops" : "macs"; }

FlopConvention parse_convention(const std::string& name) {
  if (name == "flops") return FlopConvention::flops;
  if (name == "macs") return FlopConvention::macs;
  throw ConfigError("unknown FLOP convention '" + name + "' (expected flops or macs)");
}

double conv_flops(int cin, int cout, int kernel, int out_h, int out_w, bool bias, int groups,
                  FlopConvention convention) {
  const double pixels = static_cast<double>(out_h) * out_w;
  const double macs = static_cast<double>(cin) / groups * cout * kernel * kernel * pixels;
  if (convention == FlopConvention::macs) return macs;
  return 2.0 * macs + (bias ? cout * pixels : 0.0);
}

namespace {

class FlopCounter {
 public:
  explicit FlopCounter(FlopConvention c) : c_(c) {}

  // multiply-adds
  double mac(double n) const { return c_ == FlopConvention::flops ? 2.0 * n : n; }
  // element-wise work, omitted when counting MACs
  double ew(double n) const { return c_ == FlopConvention::flops ? n : 0.0; }

  double conv(double cin, double cout, int k, double out_pixels, bool bias, int groups = 1) const {
    return conv_flops(static_cast<int>(cin), static_cast<int>(cout), k, 1, 1, bias, groups, c_) * out_pixels;
  }

  double csab(double c, double p, double hidden, double& attention) const {
    double f = 0;
    f += ew(8 * c * p);                                // norm1
    f += conv(c, 3 * c, 1, p, false);                  // qkv
    f += conv(3 * c, 3 * c, 3, p, false, 3 * (int)c);  // depth-wise
    const double map = mac(c * c * p), apply = mac(c * c * p);
    attention += map + apply;
    f += map + apply + ew(4 * c * c);                  // logits scale and softmax
    f += conv(c, c, 1, p, false) + ew(c * p);          // project_out, residual
    f += ew(8 * c * p);                                // norm2
    f += conv(c, 2 * hidden, 1, p, false);
    f += conv(2 * hidden, 2 * hidden, 3, p, false, 2 * (int)hidden);
    f += ew(9 * hidden * p);                           // gelu gate
    f += conv(hidden, c, 1, p, false) + ew(c * p);
    return f;
  }

  double gsnb(double c, double p) const {
    return 2 * conv(c, c, 3, p, false) + ew(2 * 2 * c * p) + ew(c * p) + ew(c * p);
  }

  double skff(double c, double p) const {
    const double d = ModelConfig::skff_reduced(static_cast<int>(c));
    return ew(2 * c * p) + mac(d * c) + 2 * mac(c * d) + ew(4 * c) + ew(3 * c * p);
  }

  double ofb(const ModelConfig& cfg, double c, double p, double& attention) const {
    double f = 0;
    for (int i = 0; i < cfg.csab_per_ofb; ++i) f += csab(c, p, cfg.ffn_hidden(static_cast<int>(c)), attention);
    for (int i = 0; i < cfg.gsnb_per_ofb; ++i) f += gsnb(c, p);
    return f + skff(c, p);
  }

 private:
  FlopConvention c_;
};

}  // namespace

FlopReport count_flops(const ModelConfig& config, int height, int width, FlopConvention convention) {
  config.validate();
  const int m = config.size_multiple();
  if (height <= 0 || width <= 0 || height % m != 0 || width % m != 0) {
    throw ShapeError("count_flops: " + std::to_string(height) + "x" + std::to_string(width) +
                     " is not divisible by " + std::to_string(m));
  }
  const FlopCounter fc(convention);
  FlopReport r;
  r.convention = convention;
  auto add = [&](std::string name, double f) {
    r.breakdown.push_back({std::move(name), f});
    r.total += f;
  };
  const double c0 = config.base_channels, io = config.io_channels;
  const double p0 = static_cast<double>(height) * width;
  add("input_proj", fc.conv(io, c0, 3, p0, true) + fc.ew(c0 * p0));
  for (int l = 0; l < config.encoder_depth; ++l) {
    const double c = c0 * (1 << l), p = p0 / std::pow(4.0, l);
    add("encoder." + std::to_string(l) + ".ofb", fc.ofb(config, c, p, r.attention));
    add("encoder." + std::to_string(l) + ".down", fc.conv(c, 2 * c, 4, p / 4, true));
  }
  const int n = config.encoder_depth;
  add("bottleneck.ofb", fc.ofb(config, c0 * (1 << n), p0 / std::pow(4.0, n), r.attention));
  for (int l = n - 1; l >= 0; --l) {
    const double c = c0 * (1 << l), p = p0 / std::pow(4.0, l);
    // 2×2 stride-2 transposed conv: each input pixel feeds four outputs.
    add("decoder." + std::to_string(l) + ".up", fc.mac(2 * c * c * 4 * p / 4) + fc.ew(c * p) + fc.ew(c * p));
    add("decoder." + std::to_string(l) + ".ofb", fc.ofb(config, c, p, r.attention));
  }
  add("output_proj", fc.ew(c0 * p0) + fc.conv(c0, io, 3, p0, true));
  add("feature_corrector", fc.conv(c0, config.skeleton_channels, 3, p0, true));
  return r;
}

double dense_attention_flops(int channels, int height, int width) {
  const double hw = static_cast<double>(height) * width;
  return 2.0 * hw * hw * channels * 2.0;
}

double loglog_slope(const std::vector<double>& x, const std::vector<double>& y) {
  if (x.size() != y.size() || x.size() < 2) throw ConfigError("loglog_slope needs two or more paired points");
  double mx = 0, my = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    mx += std::log(x[i]);
    my += std::log(y[i]);
  }
  mx /= static_cast<double>(x.size());
  my /= static_cast<double>(x.size());
  double num = 0, den = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    num += (std::log(x[i]) - mx) * (std::log(y[i]) - my);
    den += (std::log(x[i]) - mx) * (std::log(x[i]) - mx);
  }
  return num / den;
}

// ---- Latency ---------------------------------------------------------------

double percentile(std::vector<double> values, double p) {
  if (values.empty()) throw ConfigError("percentile of an empty sample");
  std::sort(values.begin(), values.end());
  const auto rank = static_cast<std::size_t>(std::ceil(p / 100.0 * static_cast<double>(values.size())));
  return values[std::clamp<std::size_t>(rank, 1, values.size()) - 1];
}

namespace {

std::string describe_device() {
  std::string model = "unknown cpu";
  std::ifstream cpuinfo("/proc/cpuinfo");
  for (std::string line; std::getline(cpuinfo, line);) {
    if (line.rfind("model name", 0) == 0) {
      model = line.substr(line.find(':') + 2);
      break;
    }
  }
  return "cpu: " + model + " (" + std::to_string(std::thread::hardware_concurrency()) + " hw threads)";
}

}  // namespace

EfficiencyReport benchmark_inference(const ModelState& state, const Shape& input_shape, int warmup, int iterations,
                                     std::uint64_t seed) {
  if (warmup < 0) throw ConfigError("warmup must be >= 0");
  if (iterations < 1) throw ConfigError("iterations must be >= 1");
  if (input_shape.size() != 4) throw ShapeError("benchmark input must be B x C x H x W");
  EfficiencyReport r;
  r.param_count = count_parameters(state.params);
  r.flops = count_flops(state.config, input_shape[2], input_shape[3]);
  r.input_shape = input_shape;
  r.warmup = warmup;
  r.iterations = iterations;
  r.device = describe_device();

  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<float> dist(0.0f, 1.0f);
  Tensor<float> input(input_shape);
  for (float& v : input.values()) v = dist(rng);
  for (int i = 0; i < warmup; ++i) infer(state, input);
  for (int i = 0; i < iterations; ++i) {
    const auto t0 = std::chrono::steady_clock::now();
    infer(state, input);
    r.samples_ms.push_back(std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count());
  }
  r.mean_ms = std::accumulate(r.samples_ms.begin(), r.samples_ms.end(), 0.0) / iterations;
  r.p50_ms = percentile(r.samples_ms, 50);
  r.p95_ms = percentile(r.samples_ms, 95);
  return r;
}

void EfficiencyReport::write_csv(const std::string& path) const {
  auto f = open_out(path);
  f << "param_count,flops,flop_convention,mean_ms,p50_ms,p95_ms,input_shape,warmup,iterations,device\n";
  f << param_count << ',' << fmt(flops.total) << ',' << convention_name(flops.convention) << ',' << fmt(mean_ms)
    << ',' << fmt(p50_ms) << ',' << fmt(p95_ms) << ',' << shape_string(input_shape) << ',' << warmup << ','
    << iterations << ",\"" << device << "\"\n";
}

// ---- Sweeps ----------------------------------------------------------------

void SweepTable::write_csv(const std::string& path) const {
  auto f = open_out(path);
  f << axis << ",psnr,ssim\n";
  for (const auto& r : rows) f << fmt(r.value) << ',' << fmt(r.psnr) << ',' << fmt(r.ssim) << '\n';
}

SweepTable alpha_sweep(const ModelConfig& model, const TrainConfig& base, const Dataset& data,
                       const std::string& axis, const std::vector<double>& values, const FeatureExtractor* fx,
                       std::uint64_t model_seed) {
  if (values.empty()) throw ConfigError("alpha_sweep: no values given");
  const bool blocks = axis == "blocks";
  int weight_index = -1;
  if (!blocks) {
    if (axis.size() != 2 || axis[0] != 'a' || axis[1] < '1' || axis[1] > '4') {
      throw ConfigError("sweep axis must be a1, a2, a3, a4 or blocks, got '" + axis + "'");
    }
    weight_index = axis[1] - '1';
  }
  const auto& eval_split = !data.val.empty() ? data.val : (!data.test.empty() ? data.test : data.train);
  SweepTable table;
  table.axis = axis;
  for (double v : values) {
    ModelConfig mc = model;
    TrainConfig tc = base;
    if (blocks) {
      if (v < 1 || v != std::floor(v)) throw ConfigError("blocks sweep values must be positive integers");
      mc.csab_per_ofb = mc.gsnb_per_ofb = static_cast<int>(v);
    } else {
      tc.loss_weights[weight_index] = v;
    }
    const auto result = train(build_model(mc, model_seed), data, tc, fx);
    const auto report = evaluate(result.last.model, eval_split);
    table.rows.push_back({v, report.mean_psnr, report.mean_ssim});
  }
  return table;
}

// ---- Plots -----------------------------------------------------------------

void write_line_chart(const std::string& path, const std::vector<LineSeries>& series, int width, int height) {
  double x0 = 1e300, x1 = -1e300, y0 = 1e300, y1 = -1e300;
  for (const auto& s : series)
    for (std::size_t i = 0; i < s.x.size(); ++i) {
      if (!std::isfinite(s.x[i]) || !std::isfinite(s.y[i])) continue;
      x0 = std::min(x0, s.x[i]);
      x1 = std::max(x1, s.x[i]);
      y0 = std::min(y0, s.y[i]);
      y1 = std::max(y1, s.y[i]);
    }
  if (x0 > x1) throw ConfigError("chart has no finite points");
  if (x1 == x0) x1 = x0 + 1;
  if (y1 == y0) {
    y0 -= 0.5;
    y1 += 0.5;
  }
  const int margin = 24;
  Image canvas(3, height, width, 1.0f);
  auto plot = [&](int x, int y, const float* rgb) {
    if (x < 0 || y < 0 || x >= width || y >= height) return;
    for (int c = 0; c < 3; ++c) canvas.at(c, y, x) = rgb[c];
  };
  const float axis_rgb[3] = {0.2f, 0.2f, 0.2f}, grid_rgb[3] = {0.88f, 0.88f, 0.88f};
  for (int k = 0; k <= 4; ++k) {
    const int gy = margin + k * (height - 2 * margin) / 4, gx = margin + k * (width - 2 * margin) / 4;
    for (int x = margin; x <= width - margin; ++x) plot(x, gy, grid_rgb);
    for (int y = margin; y <= height - margin; ++y) plot(gx, y, grid_rgb);
  }
  for (int x = margin; x <= width - margin; ++x) plot(x, height - margin, axis_rgb);
  for (int y = margin; y <= height - margin; ++y) plot(margin, y, axis_rgb);

  auto px = [&](double x) { return margin + (x - x0) / (x1 - x0) * (width - 2 * margin); };
  auto py = [&](double y) { return height - margin - (y - y0) / (y1 - y0) * (height - 2 * margin); };
  for (const auto& s : series) {
    for (std::size_t i = 0; i < s.x.size(); ++i) {
      const double ax = px(s.x[i]), ay = py(s.y[i]);
      for (int dy = -1; dy <= 1; ++dy)
        for (int dx = -1; dx <= 1; ++dx) plot(static_cast<int>(std::lround(ax)) + dx, static_cast<int>(std::lround(ay)) + dy, s.rgb);
      if (i == 0) continue;
      const double bx = px(s.x[i - 1]), by = py(s.y[i - 1]);
      const int steps = static_cast<int>(std::ceil(std::max(std::abs(ax - bx), std::abs(ay - by)))) + 1;
      for (int t = 0; t <= steps; ++t) {
        const double f = static_cast<double>(t) / steps;
        plot(static_cast<int>(std::lround(bx + f * (ax - bx))), static_cast<int>(std::lround(by + f * (ay - by))), s.rgb);
      }
    }
  }
  write_png(path, canvas);
}

std::vector<std::string> emit_plots(const TrainLog& log, const std::string& out_dir) {
  if (log.steps.empty()) throw ConfigError("emit_plots: the training log is empty");
  fs::create_directories(out_dir);
  std::vector<std::string> paths;
  const std::string csv = (fs::path(out_dir) / "loss.csv").string();
  log.write_csv(csv);
  paths.push_back(csv);
  LineSeries loss{{}, {}, {0.1f, 0.3f, 0.8f}};
  for (const auto& s : log.steps) {
    loss.x.push_back(static_cast<double>(s.step));
    loss.y.push_back(s.loss);
  }
  const std::string png = (fs::path(out_dir) / "loss.png").string();
  write_line_chart(png, {loss});
  paths.push_back(png);
  if (!log.validations.empty()) {
    const std::string vcsv = (fs::path(out_dir) / "validation.csv").string();
    log.write_validation_csv(vcsv);
    paths.push_back(vcsv);
    LineSeries val{{}, {}, {0.8f, 0.2f, 0.1f}};
    for (const auto& v : log.validations) {
      val.x.push_back(static_cast<double>(v.step));
      val.y.push_back(v.psnr);
    }
    const std::string vpng = (fs::path(out_dir) / "validation_psnr.png").string();
    write_line_chart(vpng, {val});
    paths.push_back(vpng);
  }
  return paths;
}

std::vector<std::string> emit_plots(const SweepTable& table, const std::string& out_dir) {
  if (table.rows.empty()) throw ConfigError("emit_plots: the sweep table is empty");
  fs::create_directories(out_dir);
  const std::string stem = (fs::path(out_dir) / ("sweep_" + table.axis)).string();
  table.write_csv(stem + ".csv");
  LineSeries p{{}, {}, {0.1f, 0.3f, 0.8f}}, s{{}, {}, {0.8f, 0.2f, 0.1f}};
  for (const auto& r : table.rows) {
    p.x.push_back(r.value);
    p.y.push_back(r.psnr);
    s.x.push_back(r.value);
    s.y.push_back(r.ssim);
  }
  write_line_chart(stem + "_psnr.png", {p});
  write_line_chart(stem + "_ssim.png", {s});
  return {stem + ".csv", stem + "_psnr.png", stem + "_ssim.png"};
}

}  // namespace obiformer
