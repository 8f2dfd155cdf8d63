#pragma once

#include <stdexcept>
#include <string>

namespace hcvae {

/// Shape or dimension disagreement between tensors.
class ShapeError : public std::runtime_error {
 public:
  explicit ShapeError(const std::string& msg) : std::runtime_error(msg) {}
};

/// A caller violated an operation's precondition.
class ContractError : public std::logic_error {
 public:
  explicit ContractError(const std::string& msg) : std::logic_error(msg) {}
};

/// A committed value turned out non-finite, or a computation diverged.
class NumericError : public std::runtime_error {
 public:
  explicit NumericError(const std::string& msg) : std::runtime_error(msg) {}
};

/// Corpus, checkpoint or fixture content is malformed or inconsistent.
class DataError : public std::runtime_error {
 public:
  explicit DataError(const std::string& msg) : std::runtime_error(msg) {}
};

/// The run configuration is unusable (bad paths, impossible settings).
class ConfigError : public std::runtime_error {
 public:
  explicit ConfigError(const std::string& msg) : std::runtime_error(msg) {}
};

}  // namespace hcvae
