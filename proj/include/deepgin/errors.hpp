#pragma once

#include <stdexcept>
#include <string>

namespace deepgin {

// Root of every error thrown by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// A caller supplied an argument outside an operation's contract
// (bad sizes, out-of-range phases, degenerate parameters).
class ArgumentError : public Error {
 public:
  using Error::Error;
};

class IoError : public Error {
 public:
  using Error::Error;
};

// Undecodable or corrupt file content.
class FormatError : public Error {
 public:
  using Error::Error;
};

// Invalid model or training configuration.
class ConfigError : public Error {
 public:
  using Error::Error;
};

// Mask generation could not satisfy its hole-fraction bounds.
class GenerationError : public Error {
 public:
  using Error::Error;
};

// A requested capability (e.g. pretrained extractor weights) is unavailable.
class CapabilityError : public Error {
 public:
  using Error::Error;
};

// Checkpoint written under a different configuration fingerprint.
class IncompatibleCheckpointError : public Error {
 public:
  using Error::Error;
};

// A loss term went NaN or infinite.
class NonFiniteError : public Error {
 public:
  NonFiniteError(std::string term, double value)
      : Error("non-finite loss term '" + term + "' (" + std::to_string(value) + ")"),
        term_(std::move(term)) {}
  const std::string& term() const noexcept { return term_; }

 private:
  std::string term_;
};

}  // namespace deepgin
