#pragma once

#include <stdexcept>
#include <string>

namespace mlagan {

/// Shapes that do not line up (inner dims, extents, axes).
class DimensionError : public std::invalid_argument {
 public:
  explicit DimensionError(const std::string& what) : std::invalid_argument(what) {}
};

/// API misuse, e.g. a non-scalar loss passed to backward.
class UsageError : public std::logic_error {
 public:
  explicit UsageError(const std::string& what) : std::logic_error(what) {}
};

class ConfigError : public std::invalid_argument {
 public:
  explicit ConfigError(const std::string& what) : std::invalid_argument(what) {}
};

/// A NaN or Inf showed up where finite values were required.
class NumericError : public std::runtime_error {
 public:
  explicit NumericError(const std::string& what) : std::runtime_error(what) {}
};

class IoError : public std::runtime_error {
 public:
  explicit IoError(const std::string& what) : std::runtime_error(what) {}
};

/// Checkpoint could not be restored (version, manifest, blob or shape problem).
class LoadError : public IoError {
 public:
  explicit LoadError(const std::string& what) : IoError(what) {}
};

}  // namespace mlagan
