// Copyright (c) 2026, OBIFormer contributors
// SPDX-License-Identifier: Apache-2.0
//
// obiformer: command-line entry point.
//
// Settings resolve as flags > --config file > built-in defaults. Exit codes:
// 0 success, 1 usage or configuration error, 2 runtime error.

#include <CLI11.hpp>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "obiformer/config.hpp"
#include "obiformer/data.hpp"
#include "obiformer/errors.hpp"
#include "obiformer/eval.hpp"
#include "obiformer/loss.hpp"
#include "obiformer/train.hpp"

namespace fs = std::filesystem;
using namespace obiformer;

namespace {

constexpr int kExitUsage = 1;
constexpr int kExitRuntime = 2;

struct Common {
  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::string device = "cpu";
  std::optional<int> epochs;
  std::optional<double> lr;
  std::optional<int> batch;
  std::optional<double> alpha[4];
  std::optional<std::string> noise_kind;
  std::optional<double> intensity;
  std::optional<int> size;
  bool quiet = false;
};

struct Paths {
  std::string ckpt, in, out, data, vgg;
  int synthetic = 0;
};

// Config file plus flag overrides, as one key=value map.
KeyValues resolve_settings(const Common& c) {
  KeyValues kv;
  if (!c.config_path.empty()) kv = read_key_values_file(c.config_path);
  auto set = [&](const std::string& key, const auto& v) {
    if (!v) return;
    std::ostringstream s;
    s << std::setprecision(17) << *v;
    kv[key] = s.str();
  };
  set("train.seed", c.seed);
  set("train.epochs", c.epochs);
  set("train.learning_rate", c.lr);
  set("train.batch_size", c.batch);
  for (int i = 0; i < 4; ++i) set("loss.a" + std::to_string(i + 1), c.alpha[i]);
  set("noise.kind", c.noise_kind);
  set("noise.intensity", c.intensity);
  set("data.size", c.size);
  if (c.device != "cpu") {
    throw ConfigError("device '" + c.device + "' is not available; this build runs on cpu only");
  }
  return kv;
}

std::uint64_t seed_of(const KeyValues& kv) {
  const auto it = kv.find("train.seed");
  if (it == kv.end()) return 0;
  try {
    return std::stoull(it->second);
  } catch (const std::exception&) {
    throw ConfigError("train.seed expects an unsigned integer, got '" + it->second + "'");
  }
}

void log(const Common& c, const std::string& msg) {
  if (!c.quiet) std::cerr << "[obiformer] " << msg << '\n';
}

std::vector<fs::path> list_pngs(const std::string& in) {
  if (fs::is_regular_file(in)) return {fs::path(in)};
  if (!fs::is_directory(in)) throw IngestionError("input path does not exist: " + in);
  std::vector<fs::path> out;
  for (const auto& e : fs::directory_iterator(in)) {
    if (e.is_regular_file() && e.path().extension() == ".png") out.push_back(e.path());
  }
  std::sort(out.begin(), out.end());
  if (out.empty()) throw IngestionError("no .png files in " + in);
  return out;
}

std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t index) {
  std::uint64_t x = seed ^ (index + 0x9E3779B97F4A7C15ull + (seed << 6) + (seed >> 2));
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ull;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBull;
  return x ^ (x >> 31);
}

// --data manifest, --in triplet directory, or --synthetic N.
Dataset acquire_data(const Paths& p, const KeyValues& kv, bool whole_dir_as_test = false) {
  const int size = kv_int(kv, "data.size", 256);
  const std::uint64_t seed = seed_of(kv);
  if (!p.data.empty()) return load_dataset(DatasetManifest::read(p.data), size, size);
  if (!p.in.empty()) {
    DatasetManifest m;
    m.root = p.in;
    m.layout = Layout::triplet_dirs;
    m.seed = seed;
    m.train_ratio = whole_dir_as_test ? 0.0 : kv_double(kv, "data.train_ratio", 0.8);
    m.val_ratio = whole_dir_as_test ? 0.0 : kv_double(kv, "data.val_ratio", 0.1);
    return load_dataset(m, size, size);
  }
  if (p.synthetic > 0) {
    const auto kind = parse_noise_kind(kv_string(kv, "noise.kind", "mixed"));
    auto records = synthetic_corpus(p.synthetic, size, seed, kind);
    std::vector<std::string> ids;
    for (const auto& r : records) ids.push_back(r.id);
    const SplitIds split = split_ids(ids, kv_double(kv, "data.train_ratio", 0.8), kv_double(kv, "data.val_ratio", 0.1), seed);
    Dataset d;
    for (auto& r : records) {
      auto in = [&](const std::vector<std::string>& v) { return std::binary_search(v.begin(), v.end(), r.id); };
      (in(split.train) ? d.train : in(split.val) ? d.val : d.test).push_back(std::move(r));
    }
    return d;
  }
  throw ConfigError("no data source: pass --data MANIFEST, --in DIR or --synthetic N");
}

std::optional<FeatureExtractor> maybe_extractor(const LossWeights& w, const std::string& vgg, const KeyValues& kv) {
  if (!w.needs_extractor()) return std::nullopt;
  return FeatureExtractor::load(FeatureExtractor::default_path(vgg), kv_string(kv, "loss.layer", "relu3_3"));
}

void print_report(const MetricsReport& r) {
  std::cout << std::fixed << std::setprecision(4) << "images " << r.count << "  mean PSNR " << r.mean_psnr
            << " dB  mean SSIM " << r.mean_ssim << '\n';
}

// ---- Subcommands -----------------------------------------------------------

int cmd_synth(const Common& c, const Paths& p, int count) {
  const KeyValues kv = resolve_settings(c);
  const std::uint64_t seed = seed_of(kv);
  const auto kind = parse_noise_kind(kv_string(kv, "noise.kind", "mixed"));
  const int size = kv_int(kv, "data.size", 64);
  std::vector<SampleRecord> records;
  if (!p.in.empty()) {
    const double intensity = kv_double(kv, "noise.intensity", 0.5);
    const auto files = list_pngs(p.in);
    for (std::size_t i = 0; i < files.size(); ++i) {
      SampleRecord r;
      r.id = files[i].stem().string();
      r.clean = read_png(files[i].string(), 3);
      r.skeleton = skeleton_ground_truth(r.clean);
      r.noisy = synthesize_noise(r.clean, NoiseSpec{kind, intensity, mix_seed(seed, i)});
      r.source = files[i].string();
      records.push_back(std::move(r));
    }
  } else {
    if (count < 1) throw ConfigError("--count must be >= 1");
    const bool fixed = kv.contains("noise.intensity");
    const double lo = fixed ? kv_double(kv, "noise.intensity", 0.5) : 0.3;
    const double hi = fixed ? lo : 0.7;
    records = synthetic_corpus(count, size, seed, kind, lo, hi);
  }
  write_triplets(p.out, records);
  DatasetManifest m;
  m.root = ".";
  m.seed = seed;
  std::ofstream((fs::path(p.out) / "dataset.txt").string()) << format_key_values(m.to_key_values());
  log(c, "wrote " + std::to_string(records.size()) + " triplets to " + p.out);
  return 0;
}

int cmd_skeletonize(const Common& c, const Paths& p) {
  resolve_settings(c);
  fs::create_directories(p.out);
  const auto files = list_pngs(p.in);
  for (const auto& f : files) {
    const Image skel = skeleton_ground_truth(read_png(f.string(), 3));
    write_png((fs::path(p.out) / f.filename()).string(), skel);
  }
  log(c, "skeletonized " + std::to_string(files.size()) + " images into " + p.out);
  return 0;
}

int cmd_train(const Common& c, const Paths& p, long max_steps) {
  const KeyValues kv = resolve_settings(c);
  TrainConfig cfg = TrainConfig::read(kv);
  cfg.checkpoint_dir = p.out;
  if (max_steps > 0) cfg.max_steps = max_steps;
  cfg.validate();
  TrainState start;
  if (!p.ckpt.empty()) {
    start = load_checkpoint(p.ckpt).state;
    log(c, "resuming from " + p.ckpt + " at step " + std::to_string(start.optimizer.step));
  } else {
    const ModelConfig mc = ModelConfig::read(kv);
    mc.validate();
    const ModelState m = build_model(mc, cfg.seed);
    start = TrainState{m, AdamState::zeros_like(m.params)};
  }
  const Dataset data = acquire_data(p, kv);
  const auto fx = maybe_extractor(cfg.loss_weights, p.vgg, kv);
  log(c, "training on " + std::to_string(data.train.size()) + " pairs (" + std::to_string(data.val.size()) +
             " validation), " + std::to_string(count_parameters(start.model.params)) + " parameters");
  fs::create_directories(p.out);
  const auto result = train(std::move(start), data, cfg, fx ? &*fx : nullptr, [&](const TrainLog::Step& s) {
    if (s.step % 10 == 0) {
      std::ostringstream m;
      m << "step " << s.step << " epoch " << s.epoch << " loss " << std::setprecision(6) << s.loss;
      log(c, m.str());
    }
  });
  save_checkpoint((fs::path(p.out) / "last.obif").string(), result.last, cfg);
  if (result.log.validations.empty()) save_checkpoint((fs::path(p.out) / "best.obif").string(), result.last, cfg);
  result.log.write_csv((fs::path(p.out) / "loss.csv").string());
  result.log.write_validation_csv((fs::path(p.out) / "validation.csv").string());
  std::ostringstream m;
  m << "finished " << result.log.steps.size() << " steps";
  if (!result.log.validations.empty()) m << ", best validation PSNR " << result.best_psnr << " dB at step " << result.best_step;
  log(c, m.str());
  return 0;
}

int cmd_denoise(const Common& c, const Paths& p) {
  resolve_settings(c);
  const ModelState model = load_model(p.ckpt);
  const int multiple = model.config.size_multiple();
  fs::create_directories(p.out);
  const auto files = list_pngs(p.in);
  for (const auto& f : files) {
    const Image img = read_png(f.string(), 3);
    const int ph = (img.height + multiple - 1) / multiple * multiple;
    const int pw = (img.width + multiple - 1) / multiple * multiple;
    const Image padded = reflect_pad(img, ph, pw);
    const auto [denoised, skeleton] = infer(model, to_tensor({&padded}));
    const std::string stem = f.stem().string();
    write_png((fs::path(p.out) / (stem + "_denoised.png")).string(),
              crop(from_tensor(denoised, 0), 0, 0, img.height, img.width));
    write_png((fs::path(p.out) / (stem + "_skeleton.png")).string(),
              crop(from_tensor(skeleton, 0), 0, 0, img.height, img.width));
  }
  log(c, "denoised " + std::to_string(files.size()) + " images into " + p.out);
  return 0;
}

int cmd_eval(const Common& c, const Paths& p, bool bypass, const std::string& split_name) {
  const KeyValues kv = resolve_settings(c);
  if (!bypass && p.ckpt.empty()) throw ConfigError("eval needs --ckpt or --bypass");
  const ModelState model = bypass ? build_model(ModelConfig::read(kv), 0) : load_model(p.ckpt);
  const Dataset data = acquire_data(p, kv, !p.in.empty());
  const std::vector<SampleRecord>* split = nullptr;
  std::vector<SampleRecord> all;
  if (!p.in.empty() || split_name == "all") {
    for (const auto* part : {&data.train, &data.val, &data.test}) all.insert(all.end(), part->begin(), part->end());
    split = &all;
  } else if (split_name == "train") {
    split = &data.train;
  } else if (split_name == "val") {
    split = &data.val;
  } else {
    split = &data.test;
  }
  const auto report = evaluate(model, *split, bypass, bypass ? "identity" : fs::path(p.ckpt).stem().string());
  if (!p.out.empty()) {
    if (fs::path(p.out).has_parent_path()) fs::create_directories(fs::path(p.out).parent_path());
    report.write_csv(p.out);
  }
  print_report(report);
  return 0;
}

int cmd_bench(const Common& c, const Paths& p, int warmup, int iters, const std::string& convention) {
  const KeyValues kv = resolve_settings(c);
  const ModelState model = p.ckpt.empty() ? build_model(ModelConfig::read(kv), seed_of(kv)) : load_model(p.ckpt);
  const int size = kv_int(kv, "data.size", 256);
  const int batch = kv_int(kv, "train.batch_size", 1);
  auto report = benchmark_inference(model, Shape{batch, model.config.io_channels, size, size}, warmup, iters, seed_of(kv));
  report.flops = count_flops(model.config, size, size, parse_convention(convention));
  std::cout << "parameters " << report.param_count << " (" << std::setprecision(4) << report.param_count / 1e6
            << "M)\n"
            << "flops " << report.flops.total / 1e9 << "G at " << size << "x" << size << " ("
            << convention_name(report.flops.convention) << ")\n"
            << std::fixed << std::setprecision(3) << "latency mean " << report.mean_ms << " ms  p50 " << report.p50_ms
            << " ms  p95 " << report.p95_ms << " ms over " << iters << " runs after " << warmup << " warm-up\n"
            << "device " << report.device << '\n';
  if (!p.out.empty()) {
    if (fs::path(p.out).has_parent_path()) fs::create_directories(fs::path(p.out).parent_path());
    report.write_csv(p.out);
  }
  return 0;
}

std::vector<double> parse_values(const std::string& text) {
  std::vector<double> out;
  std::stringstream ss(text);
  for (std::string item; std::getline(ss, item, ',');) {
    try {
      std::size_t used = 0;
      out.push_back(std::stod(item, &used));
      if (used != item.size()) throw std::invalid_argument(item);
    } catch (const std::exception&) {
      throw ConfigError("--values expects comma-separated numbers, got '" + item + "'");
    }
  }
  if (out.empty()) throw ConfigError("--values is empty");
  return out;
}

int cmd_sweep(const Common& c, const Paths& p, const std::string& axis, const std::string& values) {
  const KeyValues kv = resolve_settings(c);
  const TrainConfig base = TrainConfig::read(kv);
  const ModelConfig mc = ModelConfig::read(kv);
  const Dataset data = acquire_data(p, kv);
  const auto vals = parse_values(values);
  LossWeights widest = base.loss_weights;
  if (axis == "a2") widest.a2 = std::max(widest.a2, *std::max_element(vals.begin(), vals.end()));
  if (axis == "a4") widest.a4 = std::max(widest.a4, *std::max_element(vals.begin(), vals.end()));
  const auto fx = maybe_extractor(widest, p.vgg, kv);
  const auto table = alpha_sweep(mc, base, data, axis, vals, fx ? &*fx : nullptr, seed_of(kv));
  for (const auto& path : emit_plots(table, p.out)) log(c, "wrote " + path);
  for (const auto& r : table.rows) std::cout << axis << "=" << r.value << "  PSNR " << r.psnr << "  SSIM " << r.ssim << '\n';
  return 0;
}

SweepTable read_sweep_csv(const std::string& path) {
  std::ifstream f(path);
  std::string line;
  std::getline(f, line);
  SweepTable t;
  t.axis = line.substr(0, line.find(','));
  while (std::getline(f, line)) {
    if (line.empty()) continue;
    SweepRow r{};
    char c1, c2;
    std::istringstream in(line);
    if (!(in >> r.value >> c1 >> r.psnr >> c2 >> r.ssim)) throw FormatError(path + ": malformed row '" + line + "'");
    t.rows.push_back(r);
  }
  return t;
}

int cmd_plot(const Common& c, const Paths& p) {
  resolve_settings(c);
  std::ifstream f(p.in);
  if (!f) throw IngestionError("cannot open " + p.in);
  std::string header;
  std::getline(f, header);
  std::vector<std::string> written;
  if (header.rfind("step,epoch,loss", 0) == 0) {
    TrainLog log = TrainLog::read_csv(p.in);
    const fs::path val = fs::path(p.in).parent_path() / "validation.csv";
    if (fs::exists(val)) {
      std::ifstream vf(val);
      std::string line;
      std::getline(vf, line);
      while (std::getline(vf, line)) {
        TrainLog::Validation v{};
        char a, b, d;
        std::istringstream in(line);
        if (in >> v.step >> a >> v.epoch >> b >> v.psnr >> d >> v.ssim) log.validations.push_back(v);
      }
    }
    written = emit_plots(log, p.out);
  } else if (header.ends_with(",psnr,ssim")) {
    written = emit_plots(read_sweep_csv(p.in), p.out);
  } else {
    throw FormatError(p.in + ": neither a training log nor a sweep table");
  }
  for (const auto& w : written) log(c, "wrote " + w);
  return 0;
}

int cmd_gradcheck(const Common& c, const Paths& p, GradientCheckOptions opt) {
  const KeyValues kv = resolve_settings(c);
  ModelConfig tiny;
  tiny.encoder_depth = 1;
  tiny.base_channels = 4;
  const std::uint64_t seed = seed_of(kv);
  const ModelState model = p.ckpt.empty() ? build_model(ModelConfig::read(kv, tiny), seed) : load_model(p.ckpt);
  const int size = kv_int(kv, "data.size", 32);
  const auto sample = synthetic_corpus(1, size, seed).front();
  const LossWeights w = LossWeights::read(kv, LossWeights{});
  const auto fx = maybe_extractor(w, p.vgg, kv);
  opt.seed = seed;
  const auto report = gradient_check(model, sample, w, fx ? &*fx : nullptr, opt);
  int failed = 0;
  for (const auto& g : report.groups) {
    failed += !g.pass;
    std::cout << (g.pass ? "ok   " : "FAIL ") << std::scientific << std::setprecision(3) << g.max_rel_error << "  "
              << g.checked << "  " << g.name << '\n';
  }
  std::cout << report.total_checked << " elements in " << report.groups.size() << " groups, " << failed
            << " groups above " << report.rel_tol << '\n';
  if (!report.pass()) {
    std::cerr << "gradient check failed for " << failed << " group(s)\n";
    return kExitRuntime;
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"obiformer: oracle bone inscription denoising"};
  app.require_subcommand(1);
  Common common;
  Paths paths;

  auto add_common = [&](CLI::App* sub) {
    sub->add_option("--config", common.config_path, "key=value settings file")->check(CLI::ExistingFile);
    sub->add_option("--seed", common.seed, "random seed");
    sub->add_option("--device", common.device, "compute device (cpu)");
    sub->add_flag("-q,--quiet", common.quiet, "suppress progress messages");
  };
  auto add_training = [&](CLI::App* sub) {
    sub->add_option("--epochs", common.epochs, "training epochs");
    sub->add_option("--lr", common.lr, "learning rate");
    sub->add_option("--batch", common.batch, "batch size");
    for (int i = 0; i < 4; ++i) {
      sub->add_option("--alpha" + std::to_string(i + 1), common.alpha[i], "loss weight a" + std::to_string(i + 1));
    }
    sub->add_option("--vgg", paths.vgg, "perceptual extractor weights (OBIF)");
  };
  auto add_data = [&](CLI::App* sub) {
    sub->add_option("--data", paths.data, "dataset manifest");
    sub->add_option("--in", paths.in, "triplet dataset directory");
    sub->add_option("--synthetic", paths.synthetic, "use N generated pairs");
    sub->add_option("--size", common.size, "image side length");
    sub->add_option("--noise-kind", common.noise_kind, "degradation for generated pairs");
  };

  int count = 16;
  auto* synth = app.add_subcommand("synth", "write noisy/clean/skeleton triplets");
  add_common(synth);
  synth->add_option("--out", paths.out, "output directory")->required();
  synth->add_option("--in", paths.in, "directory of clean PNGs (default: render glyphs)");
  synth->add_option("--count", count, "number of rendered glyphs");
  synth->add_option("--size", common.size, "rendered glyph size");
  synth->add_option("--noise-kind", common.noise_kind, "stroke_broken|bone_cracked|abnormal_edges|dense_white|mixed");
  synth->add_option("--intensity", common.intensity, "noise intensity in [0, 1]");

  auto* skel = app.add_subcommand("skeletonize", "binarize and thin every PNG in a directory");
  add_common(skel);
  skel->add_option("--in", paths.in, "input directory or file")->required();
  skel->add_option("--out", paths.out, "output directory")->required();

  long max_steps = 0;
  auto* tr = app.add_subcommand("train", "train a model");
  add_common(tr);
  add_training(tr);
  add_data(tr);
  tr->add_option("--out", paths.out, "checkpoint and log directory")->required();
  tr->add_option("--ckpt", paths.ckpt, "resume from this checkpoint");
  tr->add_option("--max-steps", max_steps, "stop after this many optimizer steps");

  auto* dn = app.add_subcommand("denoise", "restore every PNG in a directory");
  add_common(dn);
  dn->add_option("--ckpt", paths.ckpt, "model checkpoint")->required();
  dn->add_option("--in", paths.in, "input directory or file")->required();
  dn->add_option("--out", paths.out, "output directory")->required();

  bool bypass = false;
  std::string split = "test";
  auto* ev = app.add_subcommand("eval", "PSNR/SSIM over a dataset split");
  add_common(ev);
  add_data(ev);
  ev->add_option("--ckpt", paths.ckpt, "model checkpoint");
  ev->add_flag("--bypass", bypass, "score the noisy inputs directly");
  ev->add_option("--split", split, "train|val|test|all (manifest data)")
      ->check(CLI::IsMember({"train", "val", "test", "all"}));
  ev->add_option("--out", paths.out, "CSV report path");

  int warmup = kDefaultWarmup, iters = 20;
  std::string convention = "flops";
  auto* be = app.add_subcommand("bench", "parameter count, FLOPs and latency");
  add_common(be);
  be->add_option("--ckpt", paths.ckpt, "model checkpoint (default: model.* settings)");
  be->add_option("--size", common.size, "input side length");
  be->add_option("--batch", common.batch, "batch size");
  be->add_option("--warmup", warmup, "unmeasured warm-up passes");
  be->add_option("--iters", iters, "measured passes");
  be->add_option("--convention", convention, "flops|macs")->check(CLI::IsMember({"flops", "macs"}));
  be->add_option("--out", paths.out, "CSV report path");

  std::string axis, values;
  auto* sw = app.add_subcommand("sweep", "short training runs over one loss weight or block count");
  add_common(sw);
  add_training(sw);
  add_data(sw);
  sw->add_option("--axis", axis, "a1|a2|a3|a4|blocks")->required();
  sw->add_option("--values", values, "comma-separated values")->required();
  sw->add_option("--out", paths.out, "output directory")->required();

  auto* pl = app.add_subcommand("plot", "charts from a training log or sweep CSV");
  add_common(pl);
  pl->add_option("--in", paths.in, "loss.csv or sweep CSV")->required();
  pl->add_option("--out", paths.out, "output directory")->required();

  GradientCheckOptions gc;
  auto* gr = app.add_subcommand("gradcheck", "compare analytic and finite-difference gradients");
  add_common(gr);
  add_training(gr);
  gr->add_option("--ckpt", paths.ckpt, "model checkpoint (default: tiny model)");
  gr->add_option("--size", common.size, "sample side length");
  gr->add_option("--step", gc.step, "finite-difference step");
  gr->add_option("--tol", gc.rel_tol, "relative tolerance");
  gr->add_option("--floor", gc.abs_floor, "denominator floor");
  gr->add_option("--min-elements", gc.min_elements, "minimum scalars checked");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::cerr << e.what() << "\n\n" << app.help();
    return kExitUsage;
  }

  try {
    if (synth->parsed()) return cmd_synth(common, paths, count);
    if (skel->parsed()) return cmd_skeletonize(common, paths);
    if (tr->parsed()) return cmd_train(common, paths, max_steps);
    if (dn->parsed()) return cmd_denoise(common, paths);
    if (ev->parsed()) return cmd_eval(common, paths, bypass, split);
    if (be->parsed()) return cmd_bench(common, paths, warmup, iters, convention);
    if (sw->parsed()) return cmd_sweep(common, paths, axis, values);
    if (pl->parsed()) return cmd_plot(common, paths);
    if (gr->parsed()) return cmd_gradcheck(common, paths, gc);
  } catch (const ConfigError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitRuntime;
  }
  return kExitUsage;
}
