#pragma once

#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace qwalk {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Invalid parameters, truncations or sweep specifications.
class ConfigurationError : public Error {
 public:
  using Error::Error;
};

/// A propagation step produced non-finite entries or unphysical growth.
class NumericalInstabilityError : public Error {
 public:
  using Error::Error;
};

/// Population reached the top Fock level of a mode.
class TruncationError : public Error {
 public:
  TruncationError(const std::string& what, int mode) : Error(what), mode_(mode) {}
  int mode() const noexcept { return mode_; }

 private:
  int mode_;
};

/// Time integration or Richardson extrapolation did not converge.
class ConvergenceError : public Error {
 public:
  explicit ConvergenceError(const std::string& what, std::vector<std::vector<double>> table = {})
      : Error(what), table_(std::move(table)) {}
  /// Rows are refinement levels; for Richardson failures the columns hold the
  /// extrapolation tableau of the first mode.
  const std::vector<std::vector<double>>& table() const noexcept { return table_; }

 private:
  std::vector<std::vector<double>> table_;
};

/// Parameters sit on the transition manifold where the winding is undefined.
class CriticalPointError : public Error {
 public:
  using Error::Error;
};

/// Monte Carlo jump probability per step exceeded its ceiling.
class JumpStepError : public Error {
 public:
  using Error::Error;
};

}  // namespace qwalk
