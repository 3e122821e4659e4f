// Copyright (c) 2026, OBIFormer contributors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <stdexcept>
#include <string>

namespace obiformer {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Tensor shapes do not line up with what an operation or parameter group expects.
class ShapeError : public Error {
 public:
  using Error::Error;
};

/// A configuration value violates an invariant (model, training, noise, CLI config).
class ConfigError : public Error {
 public:
  using Error::Error;
};

/// A serialized file (checkpoint, manifest, CSV) is malformed.
class FormatError : public Error {
 public:
  using Error::Error;
};

/// A dataset record could not be read or decoded.
class IngestionError : public Error {
 public:
  using Error::Error;
};

/// An external resource (e.g. extractor weights) is missing.
class ResourceError : public Error {
 public:
  using Error::Error;
};

/// Input values are unusable (non-finite pixels and similar).
class InputError : public Error {
 public:
  using Error::Error;
};

/// Training diverged.
class TrainingError : public Error {
 public:
  using Error::Error;
};

}  // namespace obiformer
