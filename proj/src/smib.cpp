#include "swingdiff/smib.hpp"

#include <numbers>
#include <string>

namespace swingdiff::smib {

void validate(const SmibParams& p) {
  if (!(p.M > 0.0)) throw Error(ErrorKind::invalid_argument, "SMIB inertia M must be > 0");
  if (!(p.D >= 0.0)) throw Error(ErrorKind::invalid_argument, "SMIB damping D must be >= 0");
  if (!(p.E > 0.0) || !(p.Vinf > 0.0) || !(p.X > 0.0)) {
    throw Error(ErrorKind::invalid_argument, "SMIB E, Vinf and X must be > 0");
  }
}

State equilibrium(const SmibParams& p, Branch branch) {
  validate(p);
  const double ratio = p.Pm / p.b();
  if (std::abs(ratio) > 1.0) {
    throw Error(ErrorKind::no_equilibrium,
                "no synchronous equilibrium: |Pm / b| = " + std::to_string(std::abs(ratio)) + " > 1");
  }
  const double delta = std::asin(ratio);
  if (branch == Branch::unstable) return State{std::numbers::pi - delta, 0.0};
  return State{delta, 0.0};
}

LinearModel linearize(const SmibParams& p, const State& x_star) {
  validate(p);
  LinearModel lm;
  lm.A << 0.0, 1.0,
      -(p.b() / p.M) * std::cos(x_star.delta), -p.D / p.M;
  lm.B << 0.0, 1.0 / p.M;
  lm.x_star = x_star;
  lm.u_star = p.Pm;
  return lm;
}

}  // namespace swingdiff::smib
