#pragma once

#include <stdexcept>
#include <string>

namespace stratalloc {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Malformed argument shapes (length mismatch, non-symmetric input, ...).
class DimensionError : public Error {
 public:
  using Error::Error;
};

/// An allocation violates 2 <= n_h <= N_h or the budget constraint.
class InfeasibleError : public Error {
 public:
  using Error::Error;
};

/// Moment inputs are missing or inconsistent for the requested model.
class MomentInputError : public Error {
 public:
  using Error::Error;
};

/// The requested (value function, model) pair has no closed form.
class UnsupportedModelError : public Error {
 public:
  using Error::Error;
};

/// Input file does not follow the documented grammar or fails validation.
class ValidationError : public Error {
 public:
  using Error::Error;
};

}  // namespace stratalloc
