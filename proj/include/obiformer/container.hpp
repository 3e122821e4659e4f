// Copyright (c) 2026, OBIFormer contributors
// SPDX-License-Identifier: Apache-2.0
//
// Binary container shared by checkpoints and extractor weight files:
//
//   "OBIF" | u32 version | u32 n | n bytes of key=value text |
//   records until EOF: u32 name_len | name | u32 rank | u32 dims[rank] | f32 data
//
// All integers and floats are little-endian.

#pragma once

#include <cstdint>
#include <string>

#include "obiformer/config.hpp"
#include "obiformer/parameters.hpp"

namespace obiformer {

inline constexpr std::uint32_t kContainerVersion = 1;

struct Container {
  KeyValues config;
  ParameterStore records;
};

/// Writes to a temporary file next to `path` and renames it into place.
void write_container(const std::string& path, const Container& container);

/// Throws FormatError on wrong magic, unsupported version or truncation,
/// IngestionError when the file cannot be opened.
Container read_container(const std::string& path);

}  // namespace obiformer
