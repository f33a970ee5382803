#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "swingdiff/integrate.hpp"
#include "swingdiff/smib.hpp"

namespace swingdiff {

struct TrajectoryMeta {
  std::string scenario;
  double sigma = 0.0;
  std::uint64_t seed = 0;
};

/// Uniformly sampled (delta, omega) series. The common dataset/result format.
struct Trajectory {
  std::vector<double> times;
  std::vector<smib::State> states;
  TrajectoryMeta meta;

  std::size_t size() const { return times.size(); }
  double dt() const { return times.size() > 1 ? times[1] - times[0] : 0.0; }
  std::vector<double> deltas() const;
  std::vector<double> omegas() const;

  /// Samples with t0 <= t <= t1 (inclusive, 1e-9 slack).
  Trajectory window(double t0, double t1) const;

  /// Throws unless times are strictly increasing and uniformly spaced within
  /// 1e-9, and there is one state per time.
  void validate() const;

  static Trajectory from_solution(const ode::Solution<double>& sol);
};

namespace smib {

/// Open-loop simulation of the plant at constant control u = p.Pm.
Trajectory simulate(const SmibParams& p, const State& x0, const ode::TimeGrid& grid,
                    const ode::IntegratorConfig& cfg = {});

}  // namespace smib

}  // namespace swingdiff
