#pragma once

// Explicit Runge-Kutta integration generic over the scalar type. The same
// steppers run on `double` for simulation and on `ad::TracedScalar` for
// backpropagation through the discrete solver map.

#include <cmath>
#include <cstddef>
#include <functional>
#include <string>
#include <vector>

#include "swingdiff/autodiff.hpp"
#include "swingdiff/error.hpp"

namespace swingdiff::ode {

template <class T>
using Vec = std::vector<T>;

/// dx/dt = f(t, x). Any control input is bound into the closure by the caller.
template <class T>
using VectorField = std::function<Vec<T>(double t, const Vec<T>& x)>;

enum class Method { rk4, dopri5 };

struct IntegratorConfig {
  Method method = Method::dopri5;
  double rtol = 1e-7;
  double atol = 1e-9;
  /// Initial step for dopri5; upper bound on the fixed step for rk4.
  double dt_init = 1e-3;
  std::size_t max_steps = 10'000'000;
  double safety = 0.9;

  void validate() const;
};

/// Output grid t0, t0 + dt_out, ..., t_end.
struct TimeGrid {
  double t0 = 0.0;
  double t_end = 20.0;
  double dt_out = 0.02;

  void validate() const;
  std::size_t intervals() const;
  std::size_t size() const { return intervals() + 1; }
  double time(std::size_t k) const { return t0 + static_cast<double>(k) * dt_out; }
};

struct SolverStats {
  std::size_t accepted = 0;
  std::size_t rejected = 0;
  std::size_t evaluations = 0;
};

/// Sampled solution on a TimeGrid. For dopri5 runs `steps` holds the accepted
/// step sizes in order, which `replay_dopri5` can re-run on another scalar type.
template <class T>
struct Solution {
  std::vector<double> t;
  std::vector<Vec<T>> x;
  SolverStats stats;
  std::vector<double> steps;
};

/// States with any component above this magnitude count as blown up.
inline constexpr double kBlowUpBound = 1e6;

template <class T>
void check_finite(const Vec<T>& x, double t) {
  for (const auto& xi : x) {
    const double v = ad::value_of(xi);
    if (!std::isfinite(v) || std::abs(v) > kBlowUpBound) {
      throw BlowUpError(t, "state blew up at t=" + std::to_string(t));
    }
  }
}

namespace detail {

template <class T>
Vec<T> axpy(const Vec<T>& x, double h, std::initializer_list<std::pair<double, const Vec<T>*>> terms) {
  Vec<T> out(x);
  for (std::size_t i = 0; i < out.size(); ++i) {
    T acc = (*terms.begin()->second)[i] * terms.begin()->first;
    for (auto it = terms.begin() + 1; it != terms.end(); ++it) {
      if (it->first != 0.0) acc = acc + (*it->second)[i] * it->first;
    }
    out[i] = out[i] + acc * h;
  }
  return out;
}

template <class T>
void check_dim(const Vec<T>& k, std::size_t n) {
  if (k.size() != n) {
    throw Error(ErrorKind::dimension_mismatch, "vector field returned " + std::to_string(k.size()) +
                                                   " components for a " + std::to_string(n) +
                                                   "-dimensional state");
  }
}

}  // namespace detail

/// One classical RK4 step.
template <class T>
Vec<T> rk4_step(const VectorField<T>& f, double t, const Vec<T>& x, double h) {
  if (!(h > 0.0)) throw Error(ErrorKind::invalid_argument, "rk4_step: h must be positive");
  const std::size_t n = x.size();
  const Vec<T> k1 = f(t, x);
  detail::check_dim(k1, n);
  const Vec<T> k2 = f(t + 0.5 * h, detail::axpy<T>(x, 0.5 * h, {{1.0, &k1}}));
  detail::check_dim(k2, n);
  const Vec<T> k3 = f(t + 0.5 * h, detail::axpy<T>(x, 0.5 * h, {{1.0, &k2}}));
  detail::check_dim(k3, n);
  const Vec<T> k4 = f(t + h, detail::axpy<T>(x, h, {{1.0, &k3}}));
  detail::check_dim(k4, n);
  Vec<T> next(n);
  for (std::size_t i = 0; i < n; ++i) {
    next[i] = x[i] + (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]) * (h / 6.0);
  }
  check_finite(next, t + h);
  return next;
}

/// Dormand-Prince 5(4) coefficients (Hairer, Norsett & Wanner, Table 5.2).
namespace dopri {
inline constexpr double c2 = 1.0 / 5, c3 = 3.0 / 10, c4 = 4.0 / 5, c5 = 8.0 / 9;
inline constexpr double a21 = 1.0 / 5;
inline constexpr double a31 = 3.0 / 40, a32 = 9.0 / 40;
inline constexpr double a41 = 44.0 / 45, a42 = -56.0 / 15, a43 = 32.0 / 9;
inline constexpr double a51 = 19372.0 / 6561, a52 = -25360.0 / 2187, a53 = 64448.0 / 6561,
                        a54 = -212.0 / 729;
inline constexpr double a61 = 9017.0 / 3168, a62 = -355.0 / 33, a63 = 46732.0 / 5247,
                        a64 = 49.0 / 176, a65 = -5103.0 / 18656;
inline constexpr double b1 = 35.0 / 384, b3 = 500.0 / 1113, b4 = 125.0 / 192, b5 = -2187.0 / 6784,
                        b6 = 11.0 / 84;
// b - b_hat, the embedded error weights (b7 of the 5th-order row is zero).
inline constexpr double e1 = 71.0 / 57600, e3 = -71.0 / 16695, e4 = 71.0 / 1920,
                        e5 = -17253.0 / 339200, e6 = 22.0 / 525, e7 = -1.0 / 40;
}  // namespace dopri

template <class T>
struct Dopri5Stages {
  Vec<T> x_next;
  Vec<T> k[7];
};

/// Evaluates all seven stages of one Dormand-Prince step of size h.
template <class T>
Dopri5Stages<T> dopri5_stages(const VectorField<T>& f, double t, const Vec<T>& x, double h) {
  using namespace dopri;
  const std::size_t n = x.size();
  Dopri5Stages<T> s;
  auto& k = s.k;
  k[0] = f(t, x);
  detail::check_dim(k[0], n);
  k[1] = f(t + c2 * h, detail::axpy<T>(x, h, {{a21, &k[0]}}));
  k[2] = f(t + c3 * h, detail::axpy<T>(x, h, {{a31, &k[0]}, {a32, &k[1]}}));
  k[3] = f(t + c4 * h, detail::axpy<T>(x, h, {{a41, &k[0]}, {a42, &k[1]}, {a43, &k[2]}}));
  k[4] = f(t + c5 * h,
           detail::axpy<T>(x, h, {{a51, &k[0]}, {a52, &k[1]}, {a53, &k[2]}, {a54, &k[3]}}));
  k[5] = f(t + h, detail::axpy<T>(
                      x, h, {{a61, &k[0]}, {a62, &k[1]}, {a63, &k[2]}, {a64, &k[3]}, {a65, &k[4]}}));
  s.x_next = detail::axpy<T>(x, h,
                             {{b1, &k[0]}, {0.0, &k[1]}, {b3, &k[2]}, {b4, &k[3]}, {b5, &k[4]},
                              {b6, &k[5]}});
  k[6] = f(t + h, s.x_next);
  for (const auto& ki : k) detail::check_dim(ki, n);
  return s;
}

struct Dopri5Step {
  Vec<double> x_next;
  double error_norm = 0.0;
  bool accepted = false;
  double h_next = 0.0;
};

/// One adaptive Dormand-Prince attempt: accepts iff the RMS weighted error is
/// at most 1, and proposes h_next = h * clamp(safety * err^(-1/5), 0.2, 5).
Dopri5Step dopri5_step(const VectorField<double>& f, double t, const Vec<double>& x, double h,
                       const IntegratorConfig& cfg);

/// A Dormand-Prince step of fixed size h (no error control) on any scalar.
template <class T>
Vec<T> dopri5_fixed_step(const VectorField<T>& f, double t, const Vec<T>& x, double h) {
  auto s = dopri5_stages(f, t, x, h);
  check_finite(s.x_next, t + h);
  return std::move(s.x_next);
}

/// Integrates over `grid`. dopri5 clips steps to land exactly on each output
/// time; rk4 uses the largest step <= cfg.dt_init that divides dt_out.
Solution<double> integrate(const VectorField<double>& f, const Vec<double>& x0,
                           const TimeGrid& grid, const IntegratorConfig& cfg);

/// Fixed-step RK4 with `substeps` steps per output interval, on any scalar.
template <class T>
Solution<T> integrate_rk4(const VectorField<T>& f, const Vec<T>& x0, const TimeGrid& grid,
                          std::size_t substeps = 1) {
  grid.validate();
  if (substeps == 0) throw Error(ErrorKind::invalid_argument, "substeps must be >= 1");
  check_finite(x0, grid.t0);
  const std::size_t n_out = grid.intervals();
  const double h = grid.dt_out / static_cast<double>(substeps);
  Solution<T> sol;
  sol.t.reserve(n_out + 1);
  sol.x.reserve(n_out + 1);
  sol.t.push_back(grid.t0);
  sol.x.push_back(x0);
  Vec<T> x = x0;
  for (std::size_t k = 0; k < n_out; ++k) {
    const double tk = grid.time(k);
    for (std::size_t s = 0; s < substeps; ++s) {
      x = rk4_step(f, tk + static_cast<double>(s) * h, x, h);
      sol.stats.accepted += 1;
      sol.stats.evaluations += 4;
    }
    sol.t.push_back(grid.time(k + 1));
    sol.x.push_back(x);
  }
  return sol;
}

/// Re-runs a recorded dopri5 step sequence without error control. With the
/// same steps the primal values match the adaptive run bit-for-bit.
template <class T>
Solution<T> replay_dopri5(const VectorField<T>& f, const Vec<T>& x0, const TimeGrid& grid,
                          const std::vector<double>& steps) {
  grid.validate();
  Solution<T> sol;
  sol.t.push_back(grid.t0);
  sol.x.push_back(x0);
  sol.steps = steps;
  Vec<T> x = x0;
  double t = grid.t0;
  std::size_t next_out = 1;
  const std::size_t n_out = grid.intervals();
  for (double h : steps) {
    if (next_out > n_out) {
      throw Error(ErrorKind::invalid_argument, "replay_dopri5: step log overruns the grid");
    }
    x = dopri5_fixed_step(f, t, x, h);
    sol.stats.accepted += 1;
    sol.stats.evaluations += 7;
    const double target = grid.time(next_out);
    if (t + h >= target - 1e-12 * std::max(1.0, std::abs(target))) {
      t = target;
      sol.t.push_back(target);
      sol.x.push_back(x);
      ++next_out;
    } else {
      t += h;
    }
  }
  if (next_out != n_out + 1) {
    throw Error(ErrorKind::invalid_argument, "replay_dopri5: step log ends before t_end");
  }
  return sol;
}

}  // namespace swingdiff::ode
