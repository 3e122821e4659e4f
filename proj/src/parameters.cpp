// Copyright (c) 2026, OBIFormer contributors
// SPDX-License-Identifier: Apache-2.0

#include "obiformer/parameters.hpp"

#include <cmath>
#include <cstring>

namespace obiformer {

void ParameterStore::add(std::string name, Tensor<float> value) {
  if (index_.contains(name)) throw ConfigError("duplicate parameter name '" + name + "'");
  index_.emplace(name, entries_.size());
  entries_.push_back({std::move(name), std::move(value)});
}

Tensor<float>& ParameterStore::at(const std::string& name) {
  const auto it = index_.find(name);
  if (it == index_.end()) throw ShapeError("no parameter named '" + name + "'");
  return entries_[it->second].value;
}

const Tensor<float>& ParameterStore::at(const std::string& name) const {
  const auto it = index_.find(name);
  if (it == index_.end()) throw ShapeError("no parameter named '" + name + "'");
  return entries_[it->second].value;
}

std::size_t ParameterStore::scalar_count() const {
  std::size_t total = 0;
  for (const auto& e : entries_) total += e.value.size();
  return total;
}

bool ParameterStore::all_finite() const {
  for (const auto& e : entries_) {
    for (float v : e.value.values()) {
      if (!std::isfinite(v)) return false;
    }
  }
  return true;
}

ParameterStore ParameterStore::zeros_like() const {
  ParameterStore out;
  for (const auto& e : entries_) out.add(e.name, Tensor<float>(e.value.shape(), 0.0f));
  return out;
}

bool ParameterStore::operator==(const ParameterStore& other) const {
  if (entries_.size() != other.entries_.size()) return false;
  for (std::size_t i = 0; i < entries_.size(); ++i) {
    const auto& a = entries_[i];
    const auto& b = other.entries_[i];
    if (a.name != b.name || a.value.shape() != b.value.shape()) return false;
    // Bitwise comparison so that checkpoint round-trips are checked exactly.
    if (std::memcmp(a.value.data(), b.value.data(), a.value.size() * sizeof(float)) != 0) return false;
  }
  return true;
}

}  // namespace obiformer
