#pragma once

// Single-machine-infinite-bus plant: swing-equation vector field, synchronous
// equilibrium and small-signal linearization. All quantities are per-unit.

#include <Eigen/Core>
#include <cmath>
#include <utility>

#include "swingdiff/autodiff.hpp"
#include "swingdiff/integrate.hpp"

namespace swingdiff::smib {

/// Rotor angle (rad) and speed deviation (rad/s). Angles are never wrapped.
template <class T>
struct BasicState {
  T delta{};
  T omega{};
};
using State = BasicState<double>;

/// Plant constants. `T` lets M and D be traced learnables while the network
/// constants stay plain.
template <class T>
struct BasicParams {
  T M{};  // inertia
  T D{};  // damping
  double E = 1.0;
  double Vinf = 1.0;
  double X = 1.0;
  double Pm = 0.0;

  /// Synchronizing coefficient E * Vinf / X.
  double b() const { return E * Vinf / X; }
};
using SmibParams = BasicParams<double>;

/// Throws `invalid_argument` unless M > 0, D >= 0, E, Vinf, X > 0.
void validate(const SmibParams& p);

/// (omega, (u - b sin(delta) - D omega) / M).
template <class P, class S, class U>
auto vector_field(const BasicParams<P>& p, const BasicState<S>& x, const U& u) {
  using std::sin;
  using R = decltype(std::declval<P>() * std::declval<S>());
  R ddelta = R(x.omega);
  R domega = (u - p.b() * sin(x.delta) - p.D * x.omega) / p.M;
  return BasicState<R>{std::move(ddelta), std::move(domega)};
}

/// The vector field as an ODE right-hand side over {delta, omega}, with the
/// control held at `u`.
template <class P, class S>
ode::VectorField<S> as_vector_field(BasicParams<P> p, double u) {
  return [p = std::move(p), u](double, const ode::Vec<S>& x) {
    auto d = vector_field(p, BasicState<S>{x[0], x[1]}, S(u));
    return ode::Vec<S>{S(d.delta), S(d.omega)};
  };
}

enum class Branch { stable, unstable };

/// Synchronous equilibrium (asin(Pm/b), 0), or pi - asin(Pm/b) for the
/// unstable branch. Throws `no_equilibrium` when |Pm/b| > 1.
State equilibrium(const SmibParams& p, Branch branch = Branch::stable);

struct LinearModel {
  Eigen::Matrix2d A = Eigen::Matrix2d::Zero();
  Eigen::Vector2d B = Eigen::Vector2d::Zero();
  State x_star;
  double u_star = 0.0;
};

/// A = [[0, 1], [-(b/M) cos(delta*), -D/M]], B = [0, 1/M]^T.
LinearModel linearize(const SmibParams& p, const State& x_star);

}  // namespace swingdiff::smib
