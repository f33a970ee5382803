#include "swingdiff/trajectory.hpp"

#include <cmath>

namespace swingdiff {

std::vector<double> Trajectory::deltas() const {
  std::vector<double> out;
  out.reserve(states.size());
  for (const auto& s : states) out.push_back(s.delta);
  return out;
}

std::vector<double> Trajectory::omegas() const {
  std::vector<double> out;
  out.reserve(states.size());
  for (const auto& s : states) out.push_back(s.omega);
  return out;
}

Trajectory Trajectory::window(double t0, double t1) const {
  Trajectory out;
  out.meta = meta;
  for (std::size_t i = 0; i < times.size(); ++i) {
    if (times[i] >= t0 - 1e-9 && times[i] <= t1 + 1e-9) {
      out.times.push_back(times[i]);
      out.states.push_back(states[i]);
    }
  }
  return out;
}

void Trajectory::validate() const {
  if (times.size() != states.size()) {
    throw Error(ErrorKind::dimension_mismatch, "trajectory has " + std::to_string(times.size()) +
                                                   " times but " + std::to_string(states.size()) +
                                                   " states");
  }
  if (times.size() < 2) return;
  const double h = times[1] - times[0];
  if (!(h > 0.0)) throw Error(ErrorKind::invalid_argument, "trajectory times must increase");
  for (std::size_t i = 1; i < times.size(); ++i) {
    const double d = times[i] - times[i - 1];
    if (!(d > 0.0) || std::abs(d - h) > 1e-9) {
      throw Error(ErrorKind::invalid_argument,
                  "trajectory times are not uniformly spaced at index " + std::to_string(i));
    }
  }
}

Trajectory Trajectory::from_solution(const ode::Solution<double>& sol) {
  Trajectory out;
  out.times = sol.t;
  out.states.reserve(sol.x.size());
  for (const auto& x : sol.x) {
    if (x.size() != 2) {
      throw Error(ErrorKind::dimension_mismatch, "SMIB trajectories need 2-dimensional states");
    }
    out.states.push_back({x[0], x[1]});
  }
  return out;
}

namespace smib {

Trajectory simulate(const SmibParams& p, const State& x0, const ode::TimeGrid& grid,
                    const ode::IntegratorConfig& cfg) {
  validate(p);
  auto f = as_vector_field<double, double>(p, p.Pm);
  return Trajectory::from_solution(ode::integrate(f, {x0.delta, x0.omega}, grid, cfg));
}

}  // namespace smib

}  // namespace swingdiff
