// Copyright (c) 2026, OBIFormer contributors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <map>
#include <optional>
#include <string>

namespace obiformer {

/// Flat key=value text, the format shared by config files and checkpoints.
/// Blank lines and lines starting with '#' are ignored.
using KeyValues = std::map<std::string, std::string>;

KeyValues parse_key_values(const std::string& text);
KeyValues read_key_values_file(const std::string& path);
std::string format_key_values(const KeyValues& values);

/// Typed lookups that throw ConfigError naming the key on malformed values.
int kv_int(const KeyValues& kv, const std::string& key, int fallback);
double kv_double(const KeyValues& kv, const std::string& key, double fallback);
std::string kv_string(const KeyValues& kv, const std::string& key, const std::string& fallback);
bool kv_bool(const KeyValues& kv, const std::string& key, bool fallback);

/// Architecture hyperparameters. Defaults are the full-size configuration
/// (about 7.6M parameters, 22.4G FLOPs at 256x256 counting a multiply-add as 2).
struct ModelConfig {
  int encoder_depth = 4;   // number of down/upsampling levels
  int base_channels = 16;  // channels after the input projector
  int csab_per_ofb = 2;
  int gsnb_per_ofb = 2;
  double attention_temperature_init = 1.0;
  int io_channels = 3;
  int skeleton_channels = 1;
  int attention_heads = 1;
  double ffn_expansion = 2.66;

  /// Throws ConfigError naming the first violated invariant.
  void validate() const;

  /// Height and width must be multiples of this.
  int size_multiple() const { return 1 << encoder_depth; }

  int ffn_hidden(int channels) const { return static_cast<int>(channels * ffn_expansion); }
  static int skff_reduced(int channels) { return channels / 8 > 4 ? channels / 8 : 4; }

  void write(KeyValues& kv) const;
  static ModelConfig read(const KeyValues& kv, const ModelConfig& defaults);
  static ModelConfig read(const KeyValues& kv) { return read(kv, ModelConfig{}); }

  bool operator==(const ModelConfig&) const = default;
};

}  // namespace obiformer
