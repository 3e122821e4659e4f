// Copyright (c) 2026, OBIFormer contributors
// SPDX-License-Identifier: Apache-2.0

#include "obiformer/model.hpp"

#include <cmath>
#include <random>

#include "obiformer/ops.hpp"

namespace obiformer {
namespace {

constexpr float kInputSlope = 0.01f;

class Initializer {
 public:
  Initializer(ModelState& state, std::uint64_t seed) : state_(state), rng_(seed) {}

  void conv(const std::string& name, const Shape& shape, int fan_in, bool with_bias) {
    weight(name, shape, fan_in);
    if (with_bias) state_.params.add(name + ".bias", Tensor<float>(Shape{shape[0]}, 0.0f));
  }

  // Transposed-conv weights are Cin×Cout×K×K; the bias follows Cout.
  void transposed_conv(const std::string& name, const Shape& shape, int fan_in) {
    weight(name, shape, fan_in);
    state_.params.add(name + ".bias", Tensor<float>(Shape{shape[1]}, 0.0f));
  }

  void norm(const std::string& name, int channels) {
    state_.params.add(name + ".weight", Tensor<float>(Shape{channels}, 1.0f));
    state_.params.add(name + ".bias", Tensor<float>(Shape{channels}, 0.0f));
  }

  void batch_norm(const std::string& name, int channels) {
    norm(name, channels);
    state_.buffers.add(name + ".running_mean", Tensor<float>(Shape{channels}, 0.0f));
    state_.buffers.add(name + ".running_var", Tensor<float>(Shape{channels}, 1.0f));
  }

  void scalar(const std::string& name, float value) { state_.params.add(name, Tensor<float>(Shape{1}, value)); }

 private:
  void weight(const std::string& name, const Shape& shape, int fan_in) {
    const float bound = 1.0f / std::sqrt(static_cast<float>(fan_in));
    std::uniform_real_distribution<float> dist(-bound, bound);
    Tensor<float> w(shape);
    for (auto& v : w.values()) v = dist(rng_);
    state_.params.add(name + ".weight", std::move(w));
  }

  ModelState& state_;
  std::mt19937_64 rng_;
};

void init_csab(Initializer& init, const std::string& p, int c, const ModelConfig& cfg) {
  const int hidden = cfg.ffn_hidden(c);
  init.norm(p + "norm1", c);
  init.scalar(p + "attn.temperature", static_cast<float>(cfg.attention_temperature_init));
  init.conv(p + "attn.qkv", {3 * c, c, 1, 1}, c, false);
  init.conv(p + "attn.qkv_dw", {3 * c, 1, 3, 3}, 9, false);
  init.conv(p + "attn.project_out", {c, c, 1, 1}, c, false);
  init.norm(p + "norm2", c);
  init.conv(p + "ffn.project_in", {2 * hidden, c, 1, 1}, c, false);
  init.conv(p + "ffn.dwconv", {2 * hidden, 1, 3, 3}, 9, false);
  init.conv(p + "ffn.project_out", {c, hidden, 1, 1}, hidden, false);
}

void init_gsnb(Initializer& init, const std::string& p, int c) {
  init.conv(p + "conv1", {c, c, 3, 3}, 9 * c, false);
  init.batch_norm(p + "bn1", c);
  init.conv(p + "conv2", {c, c, 3, 3}, 9 * c, false);
  init.batch_norm(p + "bn2", c);
}

void init_skff(Initializer& init, const std::string& p, int c) {
  const int d = ModelConfig::skff_reduced(c);
  init.conv(p + "conv_du", {d, c, 1, 1}, c, false);
  init.conv(p + "fc_recon", {c, d, 1, 1}, d, false);
  init.conv(p + "fc_glyph", {c, d, 1, 1}, d, false);
}

void init_ofb(Initializer& init, const std::string& p, int c, const ModelConfig& cfg) {
  for (int i = 0; i < cfg.csab_per_ofb; ++i) init_csab(init, p + "csab." + std::to_string(i) + ".", c, cfg);
  for (int i = 0; i < cfg.gsnb_per_ofb; ++i) init_gsnb(init, p + "gsnb." + std::to_string(i) + ".", c);
  init_skff(init, p + "skff.", c);
}

template <class T>
Var<T> none() {
  return nullptr;
}

}  // namespace

ModelState build_model(const ModelConfig& config, std::uint64_t seed) {
  config.validate();
  ModelState state;
  state.config = config;
  Initializer init(state, seed);
  const int c = config.base_channels;
  init.conv("input_proj", {c, config.io_channels, 3, 3}, 9 * config.io_channels, true);
  for (int level = 0; level < config.encoder_depth; ++level) {
    const int ch = c << level;
    const std::string p = "encoder." + std::to_string(level) + ".";
    init_ofb(init, p + "ofb.", ch, config);
    init.conv(p + "down", {2 * ch, ch, 4, 4}, 16 * ch, true);
  }
  init_ofb(init, "bottleneck.ofb.", c << config.encoder_depth, config);
  for (int level = config.encoder_depth - 1; level >= 0; --level) {
    const int ch = c << level;
    const std::string p = "decoder." + std::to_string(level) + ".";
    init.transposed_conv(p + "up", {2 * ch, ch, 2, 2}, 2 * ch);
    init_ofb(init, p + "ofb.", ch, config);
  }
  init.conv("output_proj", {config.io_channels, c, 3, 3}, 9 * c, true);
  init.conv("feature_corrector", {config.skeleton_channels, c, 3, 3}, 9 * c, true);
  return state;
}

std::size_t count_parameters(const ParameterStore& params) { return params.scalar_count(); }

template <class T>
Bindings<T> Bindings<T>::bind(const ModelState& state, bool track_grad) {
  Bindings<T> b;
  for (const auto& e : state.params.entries()) {
    Tensor<T> v = e.value.template cast<T>();
    b.index_.emplace(e.name, b.ordered_.size());
    b.ordered_.emplace_back(e.name, track_grad ? leaf(std::move(v)) : constant(std::move(v)));
  }
  for (const auto& e : state.buffers.entries()) b.buffers_.emplace(e.name, e.value.template cast<T>());
  return b;
}

template <class T>
const Var<T>& Bindings<T>::param(const std::string& name) const {
  const auto it = index_.find(name);
  if (it == index_.end()) throw ShapeError("parameter group has no entry '" + name + "'");
  return ordered_[it->second].second;
}

template <class T>
Tensor<T>& Bindings<T>::buffer(const std::string& name) {
  const auto it = buffers_.find(name);
  if (it == buffers_.end()) throw ShapeError("no buffer named '" + name + "'");
  return it->second;
}

template <class T>
ParameterStore Bindings<T>::gradients() const {
  ParameterStore out;
  for (const auto& [name, var] : ordered_) {
    Tensor<float> g(var->value.shape(), 0.0f);
    if (var->grad.size() == var->value.size()) {
      for (std::size_t i = 0; i < g.size(); ++i) g[i] = static_cast<float>(var->grad[i]);
    }
    out.add(name, std::move(g));
  }
  return out;
}

template <class T>
void Bindings<T>::store_buffers(ModelState& state) const {
  for (auto& e : state.buffers.entries()) {
    const auto& src = buffers_.at(e.name);
    for (std::size_t i = 0; i < src.size(); ++i) e.value[i] = static_cast<float>(src[i]);
  }
}

template <class T>
Var<T> channel_self_attention(const Var<T>& x, const Scope<T>& scope, Tensor<T>* attention_map) {
  auto qkv = ops::conv2d(x, scope("qkv.weight"), none<T>(), 1, 0);
  qkv = ops::depthwise_conv2d(qkv, scope("qkv_dw.weight"), 1);
  return ops::channel_attention(qkv, scope("temperature"), attention_map);
}

template <class T>
Var<T> feed_forward(const Var<T>& x, const Scope<T>& scope) {
  auto h = ops::conv2d(x, scope("project_in.weight"), none<T>(), 1, 0);
  h = ops::depthwise_conv2d(h, scope("dwconv.weight"), 1);
  h = ops::gated_gelu(h);
  return ops::conv2d(h, scope("project_out.weight"), none<T>(), 1, 0);
}

template <class T>
Var<T> csab_forward(const Var<T>& x, const Scope<T>& scope) {
  const auto attn = scope.sub("attn");
  auto normed = ops::layer_norm_channels(x, scope("norm1.weight"), scope("norm1.bias"));
  auto attended = channel_self_attention(normed, attn);
  auto mid = ops::add(x, ops::conv2d(attended, attn("project_out.weight"), none<T>(), 1, 0));
  auto normed2 = ops::layer_norm_channels(mid, scope("norm2.weight"), scope("norm2.bias"));
  return ops::add(mid, feed_forward(normed2, scope.sub("ffn")));
}

template <class T>
Var<T> gsnb_forward(const Var<T>& x, const Scope<T>& scope, Mode mode) {
  const bool train = mode == Mode::train;
  auto bn = [&](const Var<T>& v, const std::string& name) {
    ops::BatchNormStats<T> stats{scope.buffer(name + ".running_mean"), scope.buffer(name + ".running_var")};
    return ops::batch_norm(v, scope(name + ".weight"), scope(name + ".bias"), stats, train);
  };
  auto h = ops::conv2d(x, scope("conv1.weight"), none<T>(), 1, 1);
  h = ops::relu(bn(h, "bn1"));
  h = ops::conv2d(h, scope("conv2.weight"), none<T>(), 1, 1);
  return ops::add(x, bn(h, "bn2"));
}

template <class T>
SkffOutput<T> skff_fuse(const Var<T>& recon, const Var<T>& glyph, const Scope<T>& scope) {
  if (recon->value.shape() != glyph->value.shape()) {
    throw ShapeError("skff_fuse: stream shapes differ " + shape_string(recon->value.shape()) + " vs " +
                     shape_string(glyph->value.shape()));
  }
  auto compact = ops::conv2d(ops::global_avg_pool(ops::add(recon, glyph)), scope("conv_du.weight"), none<T>(), 1, 0);
  auto logit_r = ops::conv2d(compact, scope("fc_recon.weight"), none<T>(), 1, 0);
  auto logit_g = ops::conv2d(compact, scope("fc_glyph.weight"), none<T>(), 1, 0);
  // Two-way softmax across branches: sigmoid(r - g) and its complement.
  auto attn_r = ops::sigmoid(ops::sub(logit_r, logit_g));
  auto attn_g = ops::one_minus(attn_r);
  SkffOutput<T> out;
  out.attn_recon = attn_r;
  out.attn_glyph = attn_g;
  out.fused_recon = ops::scale_channels(recon, attn_r);
  out.fused_glyph = ops::scale_channels(glyph, attn_g);
  out.fused = ops::add(out.fused_recon, out.fused_glyph);
  return out;
}

template <class T>
OfbOutput<T> ofb_forward(const Var<T>& x, const Scope<T>& scope, const ModelConfig& config, Mode mode) {
  Var<T> recon = x;
  for (int i = 0; i < config.csab_per_ofb; ++i) recon = csab_forward(recon, scope.sub("csab." + std::to_string(i)));
  Var<T> glyph = x;
  for (int i = 0; i < config.gsnb_per_ofb; ++i) {
    glyph = gsnb_forward(glyph, scope.sub("gsnb." + std::to_string(i)), mode);
  }
  auto fused = skff_fuse(recon, glyph, scope.sub("skff"));
  return {fused.fused, {fused.fused_recon, fused.fused_glyph}};
}

template <class T>
Var<T> downsample(const Var<T>& x, const Scope<T>& scope) {
  require_nchw(x->value, "downsample");
  if (x->value.dim(2) % 2 != 0 || x->value.dim(3) % 2 != 0) {
    throw ShapeError("downsample: spatial size " + shape_string(x->value.shape()) + " is not even");
  }
  return ops::conv2d(x, scope("weight"), scope("bias"), 2, 1);
}

template <class T>
Var<T> upsample(const Var<T>& x, const Scope<T>& scope) {
  require_nchw(x->value, "upsample");
  if (x->value.dim(1) % 2 != 0) throw ShapeError("upsample: channel count is not even");
  return ops::conv_transpose2x2(x, scope("weight"), scope("bias"));
}

namespace {

template <class T>
void check_input(const Tensor<T>& image, const ModelConfig& config) {
  require_nchw(image, "forward input");
  if (image.dim(1) != config.io_channels) {
    throw ShapeError("forward: expected " + std::to_string(config.io_channels) + " input channels, got " +
                     shape_string(image.shape()));
  }
  const int m = config.size_multiple();
  if (image.dim(2) % m != 0 || image.dim(3) % m != 0) {
    throw ShapeError("forward: height and width must be multiples of " + std::to_string(m) + ", got " +
                     shape_string(image.shape()));
  }
  for (const T v : image.values()) {
    if (!std::isfinite(v)) throw InputError("forward: input contains non-finite values");
  }
}

}  // namespace

void validate_input(const Tensor<float>& image, const ModelConfig& config) { check_input(image, config); }

template <class T>
ForwardOutput<T> forward(Bindings<T>& bindings, const Var<T>& image, const ModelConfig& config, Mode mode) {
  check_input(image->value, config);
  const Scope<T> root{&bindings, ""};
  auto shallow = ops::leaky_relu(ops::conv2d(image, root("input_proj.weight"), root("input_proj.bias"), 1, 1),
                                 static_cast<T>(kInputSlope));

  std::vector<Var<T>> skips;
  Var<T> x = shallow;
  for (int level = 0; level < config.encoder_depth; ++level) {
    const auto stage = root.sub("encoder." + std::to_string(level));
    x = ofb_forward(x, stage.sub("ofb"), config, mode).fused;
    skips.push_back(x);
    x = downsample(x, stage.sub("down"));
  }
  x = ofb_forward(x, root.sub("bottleneck.ofb"), config, mode).fused;

  DualStream<T> last;
  for (int level = config.encoder_depth - 1; level >= 0; --level) {
    const auto stage = root.sub("decoder." + std::to_string(level));
    x = upsample(x, stage.sub("up"));
    auto out = ofb_forward(ops::add(x, skips[level]), stage.sub("ofb"), config, mode);
    x = out.fused;
    last = out.streams;
  }

  ForwardOutput<T> result;
  result.denoised =
      ops::conv2d(ops::add(shallow, last.recon), root("output_proj.weight"), root("output_proj.bias"), 1, 1);
  result.skeleton = ops::conv2d(last.glyph, root("feature_corrector.weight"), root("feature_corrector.bias"), 1, 1);
  return result;
}

std::pair<Tensor<float>, Tensor<float>> infer(const ModelState& state, const Tensor<float>& image) {
  auto bindings = Bindings<float>::bind(state, false);
  auto out = forward(bindings, constant(image), state.config, Mode::eval);
  return {std::move(out.denoised->value), std::move(out.skeleton->value)};
}

#define OBIFORMER_INSTANTIATE_MODEL(T)                                                                      \
  template class Bindings<T>;                                                                               \
  template Var<T> channel_self_attention<T>(const Var<T>&, const Scope<T>&, Tensor<T>*);                    \
  template Var<T> feed_forward<T>(const Var<T>&, const Scope<T>&);                                          \
  template Var<T> csab_forward<T>(const Var<T>&, const Scope<T>&);                                          \
  template Var<T> gsnb_forward<T>(const Var<T>&, const Scope<T>&, Mode);                                    \
  template SkffOutput<T> skff_fuse<T>(const Var<T>&, const Var<T>&, const Scope<T>&);                       \
  template OfbOutput<T> ofb_forward<T>(const Var<T>&, const Scope<T>&, const ModelConfig&, Mode);           \
  template Var<T> downsample<T>(const Var<T>&, const Scope<T>&);                                            \
  template Var<T> upsample<T>(const Var<T>&, const Scope<T>&);                                              \
  template ForwardOutput<T> forward<T>(Bindings<T>&, const Var<T>&, const ModelConfig&, Mode);

OBIFORMER_INSTANTIATE_MODEL(float)
OBIFORMER_INSTANTIATE_MODEL(double)

#undef OBIFORMER_INSTANTIATE_MODEL

}  // namespace obiformer
