// Copyright (c) 2026, OBIFormer contributors
// SPDX-License-Identifier: Apache-2.0

#include "obiformer/train.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <numbers>
#include <random>
#include <set>
#include <sstream>

#include "obiformer/container.hpp"
#include "obiformer/errors.hpp"
#include "obiformer/eval.hpp"
#include "obiformer/ops.hpp"

namespace fs = std::filesystem;

namespace obiformer {
namespace {

std::uint64_t splitmix(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ull;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ull;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBull;
  return x ^ (x >> 31);
}

std::uint64_t mix(std::uint64_t a, std::uint64_t b, std::uint64_t c = 0) {
  return splitmix(splitmix(splitmix(a) ^ b) ^ c);
}

std::vector<std::size_t> epoch_order(std::size_t n, std::uint64_t seed, int epoch) {
  std::vector<std::size_t> order(n);
  for (std::size_t i = 0; i < n; ++i) order[i] = i;
  std::mt19937_64 rng(mix(seed, 0x5eed, static_cast<std::uint64_t>(epoch)));
  for (std::size_t i = n; i > 1; --i) std::swap(order[i - 1], order[rng() % i]);
  return order;
}

std::uint64_t read_u64(const KeyValues& kv, const std::string& key, std::uint64_t fallback) {
  const auto it = kv.find(key);
  if (it == kv.end()) return fallback;
  try {
    std::size_t used = 0;
    const auto v = std::stoull(it->second, &used);
    if (used != it->second.size()) throw std::invalid_argument("trailing");
    return v;
  } catch (const std::exception&) {
    throw ConfigError("config key '" + key + "' expects an unsigned integer, got '" + it->second + "'");
  }
}

std::string fmt(double v) {
  std::ostringstream s;
  s.precision(17);
  s << v;
  return s.str();
}

}  // namespace

// ---- Config ----------------------------------------------------------------

void TrainConfig::validate() const {
  if (!(learning_rate > 0.0)) throw ConfigError("learning_rate must be > 0");
  if (!(weight_decay >= 0.0)) throw ConfigError("weight_decay must be >= 0");
  if (batch_size < 1) throw ConfigError("batch_size must be >= 1");
  if (epochs < 1) throw ConfigError("epochs must be >= 1");
  if (checkpoint_every < 0 || validation_every < 0) throw ConfigError("checkpoint/validation cadence must be >= 0");
  if (clip_norm < 0.0) throw ConfigError("clip_norm must be >= 0");
  if (max_steps < 0) throw ConfigError("max_steps must be >= 0");
  if (!(beta1 >= 0 && beta1 < 1 && beta2 >= 0 && beta2 < 1)) throw ConfigError("AdamW betas must lie in [0, 1)");
  if (!(epsilon > 0)) throw ConfigError("AdamW epsilon must be > 0");
  loss_weights.validate();
}

void TrainConfig::write(KeyValues& kv) const {
  kv["train.learning_rate"] = fmt(learning_rate);
  kv["train.weight_decay"] = fmt(weight_decay);
  kv["train.batch_size"] = std::to_string(batch_size);
  kv["train.epochs"] = std::to_string(epochs);
  kv["train.seed"] = std::to_string(seed);
  kv["train.checkpoint_every"] = std::to_string(checkpoint_every);
  kv["train.validation_every"] = std::to_string(validation_every);
  kv["train.checkpoint_dir"] = checkpoint_dir;
  kv["train.augment"] = augment ? "true" : "false";
  kv["train.cosine_schedule"] = cosine_schedule ? "true" : "false";
  kv["train.clip_norm"] = fmt(clip_norm);
  kv["train.max_steps"] = std::to_string(max_steps);
  kv["train.beta1"] = fmt(beta1);
  kv["train.beta2"] = fmt(beta2);
  kv["train.epsilon"] = fmt(epsilon);
  kv["loss.a1"] = fmt(loss_weights.a1);
  kv["loss.a2"] = fmt(loss_weights.a2);
  kv["loss.a3"] = fmt(loss_weights.a3);
  kv["loss.a4"] = fmt(loss_weights.a4);
}

TrainConfig TrainConfig::read(const KeyValues& kv, const TrainConfig& d) {
  TrainConfig c;
  c.learning_rate = kv_double(kv, "train.learning_rate", d.learning_rate);
  c.weight_decay = kv_double(kv, "train.weight_decay", d.weight_decay);
  c.batch_size = kv_int(kv, "train.batch_size", d.batch_size);
  c.epochs = kv_int(kv, "train.epochs", d.epochs);
  c.seed = read_u64(kv, "train.seed", d.seed);
  c.checkpoint_every = kv_int(kv, "train.checkpoint_every", d.checkpoint_every);
  c.validation_every = kv_int(kv, "train.validation_every", d.validation_every);
  c.checkpoint_dir = kv_string(kv, "train.checkpoint_dir", d.checkpoint_dir);
  c.augment = kv_bool(kv, "train.augment", d.augment);
  c.cosine_schedule = kv_bool(kv, "train.cosine_schedule", d.cosine_schedule);
  c.clip_norm = kv_double(kv, "train.clip_norm", d.clip_norm);
  c.max_steps = static_cast<long>(read_u64(kv, "train.max_steps", static_cast<std::uint64_t>(d.max_steps)));
  c.beta1 = kv_double(kv, "train.beta1", d.beta1);
  c.beta2 = kv_double(kv, "train.beta2", d.beta2);
  c.epsilon = kv_double(kv, "train.epsilon", d.epsilon);
  c.loss_weights = LossWeights::read(kv, d.loss_weights);
  c.validate();
  return c;
}

// ---- Optimizer -------------------------------------------------------------

bool receives_weight_decay(const std::string& name, const Tensor<float>& value) {
  return value.rank() == 4 && name.ends_with(".weight");
}

AdamState AdamState::zeros_like(const ParameterStore& params) {
  return AdamState{params.zeros_like(), params.zeros_like(), 0};
}

void adamw_step(ParameterStore& params, const ParameterStore& grads, AdamState& state, double lr,
                const TrainConfig& cfg) {
  ++state.step;
  const double bias1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(state.step));
  const double bias2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(state.step));
  for (auto& e : params.entries()) {
    const auto& g = grads.at(e.name);
    auto& m = state.m.at(e.name);
    auto& v = state.v.at(e.name);
    const bool decay = cfg.weight_decay != 0.0 && receives_weight_decay(e.name, e.value);
    const double shrink = 1.0 - lr * cfg.weight_decay;
    for (std::size_t i = 0; i < e.value.size(); ++i) {
      double p = e.value[i];
      if (decay) p *= shrink;
      const double gi = g[i];
      const double mi = cfg.beta1 * m[i] + (1.0 - cfg.beta1) * gi;
      const double vi = cfg.beta2 * v[i] + (1.0 - cfg.beta2) * gi * gi;
      m[i] = static_cast<float>(mi);
      v[i] = static_cast<float>(vi);
      p -= lr * (mi / bias1) / (std::sqrt(vi / bias2) + cfg.epsilon);
      e.value[i] = static_cast<float>(p);
    }
  }
}

double clip_global_norm(ParameterStore& grads, double max_norm) {
  double sq = 0;
  for (const auto& e : grads.entries())
    for (float g : e.value.values()) sq += static_cast<double>(g) * g;
  const double norm = std::sqrt(sq);
  if (max_norm > 0 && norm > max_norm) {
    const auto f = static_cast<float>(max_norm / (norm + 1e-12));
    for (auto& e : grads.entries())
      for (float& g : e.value.values()) g *= f;
  }
  return norm;
}

double learning_rate_at(const TrainConfig& cfg, long step, long total_steps) {
  if (!cfg.cosine_schedule || total_steps <= 1) return cfg.learning_rate;
  const double t = static_cast<double>(step) / static_cast<double>(total_steps - 1);
  return cfg.learning_rate * 0.5 * (1.0 + std::cos(std::numbers::pi * t));
}

// ---- Log -------------------------------------------------------------------

void TrainLog::write_csv(const std::string& path) const {
  std::ofstream f(path);
  if (!f) throw IngestionError("cannot write " + path);
  f << "step,epoch,loss,lr,wall_ms\n";
  for (const auto& s : steps) f << s.step << ',' << s.epoch << ',' << fmt(s.loss) << ',' << fmt(s.lr) << ',' << s.wall_ms << '\n';
}

void TrainLog::write_validation_csv(const std::string& path) const {
  std::ofstream f(path);
  if (!f) throw IngestionError("cannot write " + path);
  f << "step,epoch,psnr,ssim\n";
  for (const auto& v : validations) f << v.step << ',' << v.epoch << ',' << fmt(v.psnr) << ',' << fmt(v.ssim) << '\n';
}

TrainLog TrainLog::read_csv(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw IngestionError("cannot open " + path);
  TrainLog log;
  std::string line;
  if (!std::getline(f, line) || line.rfind("step,epoch,loss", 0) != 0) throw FormatError(path + ": not a training log");
  while (std::getline(f, line)) {
    if (line.empty()) continue;
    Step s{};
    char c1, c2, c3, c4;
    std::istringstream in(line);
    if (!(in >> s.step >> c1 >> s.epoch >> c2 >> s.loss >> c3 >> s.lr >> c4 >> s.wall_ms)) {
      throw FormatError(path + ": malformed row '" + line + "'");
    }
    log.steps.push_back(s);
  }
  return log;
}

// ---- Training --------------------------------------------------------------

Batch make_batch(const std::vector<const SampleRecord*>& records) {
  std::vector<const Image*> noisy, clean, skeleton;
  for (const auto* r : records) {
    noisy.push_back(&r->noisy);
    clean.push_back(&r->clean);
    skeleton.push_back(&r->skeleton);
  }
  return Batch{to_tensor(noisy), to_tensor(clean), to_tensor(skeleton)};
}

TrainResult train(const ModelState& init, const Dataset& data, const TrainConfig& cfg, const FeatureExtractor* fx) {
  return train(TrainState{init, AdamState::zeros_like(init.params)}, data, cfg, fx, {});
}

TrainResult train(TrainState start, const Dataset& data, const TrainConfig& cfg, const FeatureExtractor* fx,
                  const std::function<void(const TrainLog::Step&)>& on_step) {
  cfg.validate();
  if (data.train.empty()) throw ConfigError("training split is empty");
  if (cfg.loss_weights.needs_extractor() && !fx) {
    throw ResourceError("loss weights a2/a4 are non-zero but no perceptual feature extractor is available");
  }
  const std::size_t n = data.train.size();
  const long per_epoch = static_cast<long>((n + cfg.batch_size - 1) / cfg.batch_size);
  long total = per_epoch * cfg.epochs;
  if (cfg.max_steps > 0) total = std::min(total, cfg.max_steps);

  TrainResult result;
  result.last = std::move(start);
  result.best = result.last.model;
  cfg.write(result.log.config);
  result.last.model.config.write(result.log.config);
  ModelState& model = result.last.model;
  AdamState& adam = result.last.optimizer;
  const auto t0 = std::chrono::steady_clock::now();

  for (long step = adam.step; step < total; ++step) {
    const int epoch = static_cast<int>(step / per_epoch);
    const long slot = step % per_epoch;
    const auto order = epoch_order(n, cfg.seed, epoch);
    const std::size_t lo = static_cast<std::size_t>(slot) * cfg.batch_size;
    const std::size_t hi = std::min(n, lo + static_cast<std::size_t>(cfg.batch_size));

    std::vector<SampleRecord> augmented;
    std::vector<const SampleRecord*> members;
    augmented.reserve(hi - lo);
    for (std::size_t i = lo; i < hi; ++i) {
      const SampleRecord& r = data.train[order[i]];
      if (cfg.augment) {
        augmented.push_back(augment(r, mix(cfg.seed, static_cast<std::uint64_t>(step), i)));
        members.push_back(&augmented.back());
      } else {
        members.push_back(&r);
      }
    }
    const Batch batch = make_batch(members);

    auto bindings = Bindings<float>::bind(model, true);
    const auto out = forward(bindings, constant(batch.noisy), model.config, Mode::train);
    const auto terms = total_loss(out.denoised, constant(batch.clean), out.skeleton, constant(batch.skeleton),
                                  cfg.loss_weights, fx);
    const double loss = terms.total->value[0];
    if (!std::isfinite(loss)) {
      throw TrainingError("non-finite loss at step " + std::to_string(step) + " (epoch " + std::to_string(epoch) +
                          "): image_psnr=" + fmt(terms.image_psnr) + " skeleton_psnr=" + fmt(terms.skeleton_psnr));
    }
    backward(terms.total);
    ParameterStore grads = bindings.gradients();
    bindings.store_buffers(model);
    if (cfg.clip_norm > 0) clip_global_norm(grads, cfg.clip_norm);
    const double lr = learning_rate_at(cfg, step, total);
    adamw_step(model.params, grads, adam, lr, cfg);

    const double wall =
        std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
    result.log.steps.push_back({step, epoch, loss, lr, wall});
    if (on_step) on_step(result.log.steps.back());

    const bool epoch_done = slot == per_epoch - 1;
    if (!epoch_done && step + 1 != total) continue;
    const int finished = epoch + 1;
    const auto& val = data.val;
    if (cfg.validation_every > 0 && !val.empty() && (finished % cfg.validation_every == 0 || step + 1 == total)) {
      const MetricsReport report = evaluate(model, val);
      result.log.validations.push_back({step, epoch, report.mean_psnr, report.mean_ssim});
      if (result.best_step < 0 || report.mean_psnr > result.best_psnr) {
        result.best_psnr = report.mean_psnr;
        result.best_step = step;
        result.best = model;
        if (!cfg.checkpoint_dir.empty()) {
          fs::create_directories(cfg.checkpoint_dir);
          save_checkpoint((fs::path(cfg.checkpoint_dir) / "best.obif").string(), result.last, cfg);
        }
      }
    }
    if (!cfg.checkpoint_dir.empty() && cfg.checkpoint_every > 0 &&
        (finished % cfg.checkpoint_every == 0 || step + 1 == total)) {
      fs::create_directories(cfg.checkpoint_dir);
      save_checkpoint((fs::path(cfg.checkpoint_dir) / "last.obif").string(), result.last, cfg);
    }
  }
  if (result.best_step < 0) {
    result.best = model;
    result.best_step = adam.step - 1;
  }
  return result;
}

// ---- Checkpoints -----------------------------------------------------------

void save_checkpoint(const std::string& path, const TrainState& state, const TrainConfig& cfg) {
  Container c;
  state.model.config.write(c.config);
  cfg.write(c.config);
  c.config["optimizer_step"] = std::to_string(state.optimizer.step);
  for (const auto& e : state.model.params.entries()) c.records.add(e.name, e.value);
  for (const auto& e : state.model.buffers.entries()) c.records.add("buffer/" + e.name, e.value);
  for (const auto& e : state.optimizer.m.entries()) c.records.add("adam.m/" + e.name, e.value);
  for (const auto& e : state.optimizer.v.entries()) c.records.add("adam.v/" + e.name, e.value);
  write_container(path, c);
  std::ofstream snapshot(path + ".config.txt");
  snapshot << format_key_values(c.config);
}

Checkpoint load_checkpoint(const std::string& path) {
  Container c = read_container(path);
  Checkpoint ck;
  ModelConfig model_config;
  try {
    model_config = ModelConfig::read(c.config);
    model_config.validate();
    ck.config = TrainConfig::read(c.config);
  } catch (const ConfigError& e) {
    throw FormatError(path + ": bad embedded configuration: " + e.what());
  }
  // The freshly built model fixes the expected names, order and shapes.
  ModelState model = build_model(model_config, 0);
  AdamState adam = AdamState::zeros_like(model.params);
  std::set<std::string> used;
  auto fill = [&](ParameterStore& store, const std::string& prefix, bool required) {
    for (auto& e : store.entries()) {
      const std::string key = prefix + e.name;
      if (!c.records.contains(key)) {
        if (required) throw FormatError(path + ": missing record " + key);
        continue;
      }
      const auto& rec = c.records.at(key);
      if (rec.shape() != e.value.shape()) {
        throw FormatError(path + ": record " + key + " has shape " + shape_string(rec.shape()) + ", expected " +
                          shape_string(e.value.shape()));
      }
      e.value = rec;
      used.insert(key);
    }
  };
  fill(model.params, "", true);
  fill(model.buffers, "buffer/", true);
  fill(adam.m, "adam.m/", false);
  fill(adam.v, "adam.v/", false);
  for (const auto& e : c.records.entries()) {
    if (!used.contains(e.name)) throw FormatError(path + ": unexpected record " + e.name);
  }
  try {
    adam.step = static_cast<long>(read_u64(c.config, "optimizer_step", 0));
  } catch (const ConfigError& e) {
    throw FormatError(path + ": " + e.what());
  }
  ck.state = TrainState{std::move(model), std::move(adam)};
  return ck;
}

ModelState load_model(const std::string& path) { return load_checkpoint(path).state.model; }

// ---- Gradient check --------------------------------------------------------

bool GradientCheckReport::pass() const {
  return std::all_of(groups.begin(), groups.end(), [](const Group& g) { return g.pass; });
}

GradientCheckReport gradient_check(const ModelState& state, const SampleRecord& sample, const LossWeights& weights,
                                   const FeatureExtractor* fx, const GradientCheckOptions& options) {
  const Batch batch = make_batch({&sample});
  const auto noisy = batch.noisy.cast<double>();
  const auto clean = batch.clean.cast<double>();
  const auto skeleton = batch.skeleton.cast<double>();
  auto loss_for = [&](Bindings<double>& b) {
    const auto out = forward(b, constant(noisy), state.config, options.mode);
    return total_loss(out.denoised, constant(clean), out.skeleton, constant(skeleton), weights, fx).total;
  };

  auto tracked = Bindings<double>::bind(state, true);
  backward(loss_for(tracked));

  // One element per array, then uniform extra picks up to min_elements.
  std::mt19937_64 rng(options.seed);
  const auto& params = tracked.params();
  std::vector<std::set<std::size_t>> picks(params.size());
  std::size_t total_scalars = 0, chosen = 0;
  for (std::size_t k = 0; k < params.size(); ++k) {
    const std::size_t n = params[k].second->value.size();
    total_scalars += n;
    picks[k].insert(std::uniform_int_distribution<std::size_t>(0, n - 1)(rng));
    ++chosen;
  }
  const std::size_t target = std::min(total_scalars, std::max<std::size_t>(chosen, static_cast<std::size_t>(options.min_elements)));
  std::uniform_int_distribution<std::size_t> any(0, total_scalars - 1);
  while (chosen < target) {
    std::size_t flat = any(rng), k = 0;
    while (flat >= params[k].second->value.size()) flat -= params[k++].second->value.size();
    chosen += picks[k].insert(flat).second;
  }

  GradientCheckReport report;
  report.rel_tol = options.rel_tol;
  for (std::size_t k = 0; k < params.size(); ++k) {
    const auto& [name, var] = params[k];
    GradientCheckReport::Group group{name, 0, 0.0, true};
    for (std::size_t i : picks[k]) {
      const double analytic = var->grad.size() ? var->grad[i] : 0.0;
      auto probe = [&](double delta) {
        auto b = Bindings<double>::bind(state, false);
        b.param(name)->value[i] += delta;
        return loss_for(b)->value[0];
      };
      const double numeric = (probe(options.step) - probe(-options.step)) / (2 * options.step);
      const double rel = std::abs(analytic - numeric) /
                         std::max({std::abs(analytic), std::abs(numeric), options.abs_floor});
      group.max_rel_error = std::max(group.max_rel_error, rel);
      ++group.checked;
    }
    group.pass = group.max_rel_error <= options.rel_tol;
    report.total_checked += group.checked;
    report.groups.push_back(std::move(group));
  }
  return report;
}

}  // namespace obiformer
