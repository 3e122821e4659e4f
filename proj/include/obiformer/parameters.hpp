// Copyright (c) 2026, OBIFormer contributors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <string>
#include <unordered_map>
#include <vector>

#include "obiformer/config.hpp"
#include "obiformer/tensor.hpp"

namespace obiformer {

/// Named float arrays in insertion order. Used for learnable parameters,
/// normalization buffers and optimizer moments alike.
class ParameterStore {
 public:
  struct Entry {
    std::string name;
    Tensor<float> value;
  };

  /// Throws ConfigError on a duplicate name.
  void add(std::string name, Tensor<float> value);

  bool contains(const std::string& name) const { return index_.contains(name); }
  Tensor<float>& at(const std::string& name);
  const Tensor<float>& at(const std::string& name) const;

  std::vector<Entry>& entries() { return entries_; }
  const std::vector<Entry>& entries() const { return entries_; }
  std::size_t size() const { return entries_.size(); }

  /// Sum of element counts over all arrays.
  std::size_t scalar_count() const;

  /// True when every value is finite.
  bool all_finite() const;

  /// Zero-filled store with identical names and shapes.
  ParameterStore zeros_like() const;

  bool operator==(const ParameterStore& other) const;

 private:
  std::vector<Entry> entries_;
  std::unordered_map<std::string, std::size_t> index_;
};

/// One model instance: its architecture, learnable parameters and the
/// non-learnable batch-normalization running statistics.
struct ModelState {
  ModelConfig config;
  ParameterStore params;
  ParameterStore buffers;
};

}  // namespace obiformer
