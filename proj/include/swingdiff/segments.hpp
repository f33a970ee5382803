#pragma once

// Multi-step trajectory-matching data shared by NODE and DP training: a segment
// is an observed start state followed by the next m observed states.

#include <random>
#include <span>
#include <vector>

#include "swingdiff/trajectory.hpp"

namespace swingdiff {

struct Segment {
  smib::State x0;
  std::vector<smib::State> targets;  // m states after x0
  double u = 0.0;                    // control held over the segment
};

/// Observed trajectories with the constant control each was recorded under.
struct SegmentSource {
  std::vector<Trajectory> trajectories;
  std::vector<double> controls;

  /// Number of valid (trajectory, start) pairs for segments of length m whose
  /// samples all have t <= t_end.
  std::size_t valid_starts(std::size_t m, double t_end) const;
};

/// Draws n uniformly with replacement from every valid (trajectory, start)
/// pair, pooled across trajectories. Throws if no segment fits.
std::vector<Segment> sample_segments(const SegmentSource& src, std::size_t n, std::size_t m,
                                     double t_end, std::mt19937_64& rng);

/// (1 / (n m)) sum_i sum_j |x_hat_j^(i) - x_j^(i)|^2 over predicted states.
template <class T>
T segment_mse(std::span<const Segment> batch, std::span<const std::vector<smib::BasicState<T>>> pred) {
  T total(0.0);
  std::size_t count = 0;
  for (std::size_t i = 0; i < batch.size(); ++i) {
    for (std::size_t j = 0; j < batch[i].targets.size(); ++j) {
      const T dd = pred[i][j].delta - batch[i].targets[j].delta;
      const T dw = pred[i][j].omega - batch[i].targets[j].omega;
      total = total + dd * dd + dw * dw;
      ++count;
    }
  }
  return count ? total / static_cast<double>(count) : total;
}

}  // namespace swingdiff
