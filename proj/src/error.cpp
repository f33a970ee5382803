#include "swingdiff/error.hpp"

namespace swingdiff {

std::string_view to_string(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::invalid_argument: return "invalid_argument";
    case ErrorKind::dimension_mismatch: return "dimension_mismatch";
    case ErrorKind::tape_mismatch: return "tape_mismatch";
    case ErrorKind::divergence: return "divergence";
    case ErrorKind::blow_up: return "blow_up";
    case ErrorKind::no_equilibrium: return "no_equilibrium";
    case ErrorKind::not_stabilizing: return "not_stabilizing";
    case ErrorKind::iteration_stall: return "iteration_stall";
    case ErrorKind::training_aborted: return "training_aborted";
    case ErrorKind::unknown_experiment: return "unknown_experiment";
    case ErrorKind::io: return "io";
  }
  return "unknown";
}

}  // namespace swingdiff
