#pragma once

#include <stdexcept>
#include <string>

namespace ncspec {

/// Root of every error raised by the library. The CLI maps InputError to exit
/// code 2 and NumericalError to exit code 3.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Malformed input: polynomial text, config files, matrix CSV, CLI arguments.
class InputError : public Error {
 public:
  using Error::Error;
};

/// A well-formed request that cannot be carried out numerically.
class NumericalError : public Error {
 public:
  using Error::Error;
};

class SyntaxError : public InputError {
 public:
  SyntaxError(std::size_t position, std::string expected)
      : InputError("syntax error at position " + std::to_string(position) + ": expected " + expected),
        position_(position),
        expected_(std::move(expected)) {}

  std::size_t position() const noexcept { return position_; }
  const std::string& expected() const noexcept { return expected_; }

 private:
  std::size_t position_;
  std::string expected_;
};

class IndexError : public InputError {
 public:
  using InputError::InputError;
};

class EmptyPolynomial : public InputError {
 public:
  EmptyPolynomial() : InputError("cannot linearize the zero polynomial") {}
};

class UnsupportedStarredCircular : public InputError {
 public:
  UnsupportedStarredCircular() : InputError("adjoint of a polynomial with circular symbols is not supported") {}
};

class DimensionMismatch : public InputError {
 public:
  using InputError::InputError;
};

class MissingBinding : public InputError {
 public:
  using InputError::InputError;
};

class FileFormatError : public InputError {
 public:
  using InputError::InputError;
};

class SizeError : public InputError {
 public:
  using InputError::InputError;
};

class ConfigError : public InputError {
 public:
  ConfigError(std::string path, const std::string& what)
      : InputError("config error at '" + path + "': " + what), path_(std::move(path)) {}

  const std::string& path() const noexcept { return path_; }

 private:
  std::string path_;
};

class UnknownExample : public InputError {
 public:
  explicit UnknownExample(int id) : InputError("unknown example id " + std::to_string(id) + " (expected 1..4)") {}
};

class NonFinite : public NumericalError {
 public:
  NonFinite() : NumericalError("matrix has non-finite entries") {}
};

class SingularPoint : public NumericalError {
 public:
  using NumericalError::NumericalError;
};

class SingularBase : public NumericalError {
 public:
  using NumericalError::NumericalError;
};

class SingularResolvent : public NumericalError {
 public:
  using NumericalError::NumericalError;
};

class SingularDenominator : public NumericalError {
 public:
  using NumericalError::NumericalError;
};

class InsideSpectrum : public NumericalError {
 public:
  using NumericalError::NumericalError;
};

class NoConvergence : public NumericalError {
 public:
  NoConvergence(const std::string& what, double last_step)
      : NumericalError(what + " (last step norm " + std::to_string(last_step) + ")"), last_step_(last_step) {}

  double last_step() const noexcept { return last_step_; }

 private:
  double last_step_;
};

class GridTooCoarse : public NumericalError {
 public:
  using NumericalError::NumericalError;
};

class GammaInsideSpectrum : public NumericalError {
 public:
  using NumericalError::NumericalError;
};

}  // namespace ncspec
