#pragma once

#include <stdexcept>
#include <string>

namespace vti {

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Tensor/matrix dimensions do not line up.
class ShapeError : public Error {
 public:
  using Error::Error;
};

/// Rejected value (NaN/Inf construction, out-of-range parameter).
class ValueError : public Error {
 public:
  using Error::Error;
};

/// Input carries no usable signal (e.g. all-zero delta matrix).
class DegenerateInputError : public Error {
 public:
  using Error::Error;
};

class ConvergenceError : public Error {
 public:
  ConvergenceError(const std::string& what, int iterations)
      : Error(what), iterations_(iterations) {}
  int iterations() const { return iterations_; }

 private:
  int iterations_;
};

class InsufficientSamplesError : public Error {
 public:
  using Error::Error;
};

/// Malformed perturbation spec (unknown kind, bad parameter).
class SpecError : public Error {
 public:
  using Error::Error;
};

/// Hook targets a site outside the model.
class HookError : public Error {
 public:
  using Error::Error;
};

/// Sequence would exceed the model's maximum length.
class SequenceLengthError : public Error {
 public:
  using Error::Error;
};

class DivergenceError : public Error {
 public:
  DivergenceError(const std::string& what, int epoch) : Error(what), epoch_(epoch) {}
  int epoch() const { return epoch_; }

 private:
  int epoch_;
};

/// Bad magic/version/truncation in a binary container.
class FormatError : public Error {
 public:
  using Error::Error;
};

/// Invalid run configuration (unknown key, range violation).
class ConfigError : public Error {
 public:
  using Error::Error;
};

/// Synthetic generation cannot proceed (e.g. no absent object available).
class GenerationError : public Error {
 public:
  using Error::Error;
};

}  // namespace vti
