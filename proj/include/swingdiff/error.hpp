#pragma once

#include <algorithm>
#include <cstddef>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace swingdiff {

enum class ErrorKind {
  invalid_argument,
  dimension_mismatch,
  tape_mismatch,
  divergence,
  blow_up,
  no_equilibrium,
  not_stabilizing,
  iteration_stall,
  training_aborted,
  unknown_experiment,
  io,
};

std::string_view to_string(ErrorKind kind);

/// Base error for everything thrown by the library. `kind()` is stable and is
/// what the CLI reports in its error JSON.
class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what) : std::runtime_error(what), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

/// Non-finite or out-of-range state during integration.
class BlowUpError : public Error {
 public:
  BlowUpError(double time, const std::string& what)
      : Error(ErrorKind::blow_up, what), time_(time) {}

  double time() const noexcept { return time_; }

 private:
  double time_;
};

/// Training stopped on a non-finite loss or state. Carries the epoch and the
/// last few recorded losses for diagnostics.
class TrainingAborted : public Error {
 public:
  static constexpr std::size_t kTail = 10;

  /// Keeps the last kTail entries of `history`.
  TrainingAborted(std::size_t epoch, const std::vector<double>& history, const std::string& what)
      : Error(ErrorKind::training_aborted, what),
        epoch_(epoch),
        loss_tail_(history.end() - static_cast<std::ptrdiff_t>(std::min(history.size(), kTail)),
                   history.end()) {}

  std::size_t epoch() const noexcept { return epoch_; }
  const std::vector<double>& loss_tail() const noexcept { return loss_tail_; }

 private:
  std::size_t epoch_;
  std::vector<double> loss_tail_;
};

}  // namespace swingdiff
