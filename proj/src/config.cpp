// Copyright (c) 2026, OBIFormer contributors
// SPDX-License-Identifier: Apache-2.0

#include "obiformer/config.hpp"

#include <charconv>
#include <fstream>
#include <sstream>

#include "obiformer/errors.hpp"

namespace obiformer {
namespace {

std::string trim(const std::string& s) {
  const auto first = s.find_first_not_of(" \t\r\n");
  if (first == std::string::npos) return {};
  const auto last = s.find_last_not_of(" \t\r\n");
  return s.substr(first, last - first + 1);
}

std::string format_double(double v) {
  std::ostringstream out;
  out.precision(17);
  out << v;
  return out.str();
}

}  // namespace

KeyValues parse_key_values(const std::string& text) {
  KeyValues kv;
  std::istringstream in(text);
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const std::string t = trim(line);
    if (t.empty() || t[0] == '#') continue;
    const auto eq = t.find('=');
    if (eq == std::string::npos) {
      throw FormatError("config line " + std::to_string(line_no) + " is not key=value: '" + t + "'");
    }
    const std::string key = trim(t.substr(0, eq));
    if (key.empty()) throw FormatError("config line " + std::to_string(line_no) + " has an empty key");
    kv[key] = trim(t.substr(eq + 1));
  }
  return kv;
}

KeyValues read_key_values_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file '" + path + "'");
  std::ostringstream text;
  text << in.rdbuf();
  return parse_key_values(text.str());
}

std::string format_key_values(const KeyValues& values) {
  std::string out;
  for (const auto& [k, v] : values) out += k + "=" + v + "\n";
  return out;
}

int kv_int(const KeyValues& kv, const std::string& key, int fallback) {
  const auto it = kv.find(key);
  if (it == kv.end()) return fallback;
  int value = 0;
  const auto& s = it->second;
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), value);
  if (ec != std::errc{} || ptr != s.data() + s.size()) {
    throw ConfigError("config key '" + key + "' expects an integer, got '" + s + "'");
  }
  return value;
}

double kv_double(const KeyValues& kv, const std::string& key, double fallback) {
  const auto it = kv.find(key);
  if (it == kv.end()) return fallback;
  try {
    std::size_t used = 0;
    const double value = std::stod(it->second, &used);
    if (used != it->second.size()) throw std::invalid_argument("trailing");
    return value;
  } catch (const std::exception&) {
    throw ConfigError("config key '" + key + "' expects a number, got '" + it->second + "'");
  }
}

std::string kv_string(const KeyValues& kv, const std::string& key, const std::string& fallback) {
  const auto it = kv.find(key);
  return it == kv.end() ? fallback : it->second;
}

bool kv_bool(const KeyValues& kv, const std::string& key, bool fallback) {
  const auto it = kv.find(key);
  if (it == kv.end()) return fallback;
  if (it->second == "1" || it->second == "true") return true;
  if (it->second == "0" || it->second == "false") return false;
  throw ConfigError("config key '" + key + "' expects true/false, got '" + it->second + "'");
}

void ModelConfig::validate() const {
  if (encoder_depth < 1) throw ConfigError("model config: encoder_depth must be >= 1");
  if (encoder_depth > 12) throw ConfigError("model config: encoder_depth must be <= 12");
  if (base_channels < 1) throw ConfigError("model config: base_channels must be >= 1");
  if (csab_per_ofb < 1) throw ConfigError("model config: csab_per_ofb must be >= 1");
  if (gsnb_per_ofb < 1) throw ConfigError("model config: gsnb_per_ofb must be >= 1");
  if (!(attention_temperature_init > 0.0)) {
    throw ConfigError("model config: attention_temperature_init must be > 0");
  }
  if (io_channels != 3) throw ConfigError("model config: io_channels must be 3");
  if (skeleton_channels != 1) throw ConfigError("model config: skeleton_channels must be 1");
  if (attention_heads != 1) throw ConfigError("model config: only single-head attention is supported");
  if (!(ffn_expansion > 0.0) || static_cast<int>(base_channels * ffn_expansion) < 1) {
    throw ConfigError("model config: ffn_expansion yields an empty feed-forward layer");
  }
}

void ModelConfig::write(KeyValues& kv) const {
  kv["model.encoder_depth"] = std::to_string(encoder_depth);
  kv["model.base_channels"] = std::to_string(base_channels);
  kv["model.csab_per_ofb"] = std::to_string(csab_per_ofb);
  kv["model.gsnb_per_ofb"] = std::to_string(gsnb_per_ofb);
  kv["model.attention_temperature_init"] = format_double(attention_temperature_init);
  kv["model.io_channels"] = std::to_string(io_channels);
  kv["model.skeleton_channels"] = std::to_string(skeleton_channels);
  kv["model.attention_heads"] = std::to_string(attention_heads);
  kv["model.ffn_expansion"] = format_double(ffn_expansion);
}

ModelConfig ModelConfig::read(const KeyValues& kv, const ModelConfig& defaults) {
  ModelConfig c;
  c.encoder_depth = kv_int(kv, "model.encoder_depth", defaults.encoder_depth);
  c.base_channels = kv_int(kv, "model.base_channels", defaults.base_channels);
  c.csab_per_ofb = kv_int(kv, "model.csab_per_ofb", defaults.csab_per_ofb);
  c.gsnb_per_ofb = kv_int(kv, "model.gsnb_per_ofb", defaults.gsnb_per_ofb);
  c.attention_temperature_init =
      kv_double(kv, "model.attention_temperature_init", defaults.attention_temperature_init);
  c.io_channels = kv_int(kv, "model.io_channels", defaults.io_channels);
  c.skeleton_channels = kv_int(kv, "model.skeleton_channels", defaults.skeleton_channels);
  c.attention_heads = kv_int(kv, "model.attention_heads", defaults.attention_heads);
  c.ffn_expansion = kv_double(kv, "model.ffn_expansion", defaults.ffn_expansion);
  return c;
}

}  // namespace obiformer
