#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace wsol {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class InvalidArgument : public Error {
 public:
  using Error::Error;
};

/// Batch normalization in train mode saw a single value per channel.
class DegenerateBatch : public Error {
 public:
  using Error::Error;
};

/// Backward pass requested without a matching cached forward pass.
class MissingCache : public Error {
 public:
  using Error::Error;
};

class TrainingDiverged : public Error {
 public:
  TrainingDiverged(int epoch, const std::string& what)
      : Error(what), epoch_(epoch) {}
  int epoch() const noexcept { return epoch_; }

 private:
  int epoch_;
};

/// Malformed or unsupported image file.
class CodecError : public Error {
 public:
  using Error::Error;
};

/// Dataset manifest could not be loaded. line() is 1-based, 0 when the
/// failure is not tied to a line.
class LoadError : public Error {
 public:
  LoadError(std::size_t line, const std::string& what)
      : Error(what), line_(line) {}
  std::size_t line() const noexcept { return line_; }

 private:
  std::size_t line_;
};

}  // namespace wsol
