#include "swingdiff/lqr.hpp"

#include <array>
#include <cmath>
#include <string>
#include <utility>

namespace swingdiff::lqr {

void LqrConfig::validate() const {
  if (!(R > 0.0)) throw Error(ErrorKind::invalid_argument, "LQR weight R must be > 0");
  if ((Q - Q.transpose()).norm() > 1e-12) {
    throw Error(ErrorKind::invalid_argument, "LQR weight Q must be symmetric");
  }
  // 2x2 symmetric PSD: diagonal >= 0 and determinant >= 0.
  if (Q(0, 0) < 0.0 || Q(1, 1) < 0.0 || Q.determinant() < -1e-12) {
    throw Error(ErrorKind::invalid_argument, "LQR weight Q must be positive semidefinite");
  }
}

double riccati_residual(const Eigen::Matrix2d& A, const Eigen::Vector2d& B,
                        const Eigen::Matrix2d& Q, double R, const Eigen::Matrix2d& P) {
  const Eigen::Matrix2d res = A.transpose() * P + P * A - (P * B) * (B.transpose() * P) / R + Q;
  return res.norm();
}

Eigen::Matrix2d solve_lyapunov(const Eigen::Matrix2d& A, const Eigen::Matrix2d& C) {
  // Column-major vec: vec(A^T X + X A) = (I (x) A^T + A^T (x) I) vec(X).
  std::array<std::array<double, 5>, 4> m{};
  const Eigen::Matrix2d At = A.transpose();
  for (int r = 0; r < 4; ++r) {
    for (int c = 0; c < 4; ++c) {
      const int ri = r % 2, rj = r / 2, ci = c % 2, cj = c / 2;
      double v = 0.0;
      if (rj == cj) v += At(ri, ci);   // I (x) A^T
      if (ri == ci) v += At(rj, cj);   // A^T (x) I
      m[r][c] = v;
    }
    m[r][4] = -C(r % 2, r / 2);
  }
  for (int col = 0; col < 4; ++col) {
    int pivot = col;
    for (int r = col + 1; r < 4; ++r) {
      if (std::abs(m[r][col]) > std::abs(m[pivot][col])) pivot = r;
    }
    if (std::abs(m[pivot][col]) < 1e-300) {
      throw Error(ErrorKind::not_stabilizing,
                  "Lyapunov operator is singular (A has eigenvalues summing to zero)");
    }
    std::swap(m[col], m[pivot]);
    for (int r = col + 1; r < 4; ++r) {
      const double f = m[r][col] / m[col][col];
      for (int c = col; c < 5; ++c) m[r][c] -= f * m[col][c];
    }
  }
  std::array<double, 4> x{};
  for (int r = 3; r >= 0; --r) {
    double s = m[r][4];
    for (int c = r + 1; c < 4; ++c) s -= m[r][c] * x[c];
    x[r] = s / m[r][r];
  }
  Eigen::Matrix2d X;
  X << x[0], x[2], x[1], x[3];
  return X;
}

Eigen::Vector2d eigenvalue_real_parts(const Eigen::Matrix2d& A) {
  const double tr = A.trace();
  const double det = A.determinant();
  const double disc = tr * tr / 4.0 - det;
  if (disc < 0.0) return Eigen::Vector2d(tr / 2.0, tr / 2.0);
  const double s = std::sqrt(disc);
  return Eigen::Vector2d(tr / 2.0 + s, tr / 2.0 - s);
}

bool is_hurwitz(const Eigen::Matrix2d& A) { return eigenvalue_real_parts(A)(0) < 0.0; }

LqrSolution solve_care(const smib::LinearModel& model, const LqrConfig& cfg,
                       std::optional<Eigen::RowVector2d> initial_gain) {
  cfg.validate();
  const auto& A = model.A;
  const auto& B = model.B;
  Eigen::RowVector2d K = initial_gain.value_or(Eigen::RowVector2d::Zero());
  if (!is_hurwitz(A - B * K)) {
    throw Error(ErrorKind::not_stabilizing,
                initial_gain ? "initial gain does not stabilize A - B K"
                             : "A is not Hurwitz; a stabilizing initial gain is required");
  }
  LqrSolution sol;
  sol.model = model;
  for (std::size_t it = 1; it <= cfg.max_iterations; ++it) {
    const Eigen::Matrix2d Ak = A - B * K;
    const Eigen::Matrix2d Ck = cfg.Q + K.transpose() * cfg.R * K;
    Eigen::Matrix2d P = solve_lyapunov(Ak, Ck);
    P = 0.5 * (P + P.transpose());
    K = (B.transpose() * P) / cfg.R;
    const double res = riccati_residual(A, B, cfg.Q, cfg.R, P);
    sol.residual_history.push_back(res);
    sol.P = P;
    sol.K = K;
    sol.iterations = it;
    if (res <= cfg.tolerance) return sol;
  }
  throw Error(ErrorKind::iteration_stall,
              "Newton-Kleinman did not converge in " + std::to_string(cfg.max_iterations) +
                  " iterations; residual " + std::to_string(sol.residual_history.back()));
}

void DisturbanceSchedule::validate() const {
  if (!(t_on >= 0.0) || !(t_off > t_on)) {
    throw Error(ErrorKind::invalid_argument, "disturbance window needs t_off > t_on >= 0");
  }
}

bool DisturbanceSchedule::disturbance_active(double t) const {
  constexpr double eps = 1e-9;
  return t >= t_on - eps && t < t_off - eps;
}

bool DisturbanceSchedule::controller_active(double t) const { return t >= t_activate - 1e-9; }

ClosedLoopResult closed_loop_simulate(const smib::SmibParams& plant, const smib::State& x0,
                                      const smib::State& x_star, const LqrSolution& sol,
                                      const DisturbanceSchedule& sched, const ode::TimeGrid& grid,
                                      const ode::IntegratorConfig& cfg) {
  smib::validate(plant);
  sched.validate();
  grid.validate();
  ClosedLoopResult out;
  auto& traj = out.trajectory;
  const std::size_t n = grid.intervals();
  smib::State x = x0;
  for (std::size_t k = 0; k <= n; ++k) {
    const double t = grid.time(k);
    const bool dist = sched.disturbance_active(t);
    const bool ctrl = sched.controller_active(t);
    double u = plant.Pm + (dist ? sched.delta_Pm : 0.0);
    if (ctrl) {
      u -= sol.K(0) * (x.delta - x_star.delta) + sol.K(1) * (x.omega - x_star.omega);
    }
    traj.times.push_back(t);
    traj.states.push_back(x);
    out.u.push_back(u);
    out.controller_active.push_back(ctrl ? 1 : 0);
    out.disturbance_active.push_back(dist ? 1 : 0);
    if (k == n) break;
    const ode::TimeGrid interval{t, grid.time(k + 1), grid.time(k + 1) - t};
    auto f = smib::as_vector_field<double, double>(plant, u);
    auto seg = ode::integrate(f, {x.delta, x.omega}, interval, cfg);
    x = {seg.x.back()[0], seg.x.back()[1]};
  }
  return out;
}

double quadratic_cost(const Trajectory& traj, const std::vector<double>& u,
                      const smib::State& x_star, double u_star, const LqrConfig& cfg) {
  if (traj.size() != u.size() || traj.states.size() != traj.times.size()) {
    throw Error(ErrorKind::dimension_mismatch, "quadratic_cost: trajectory and control differ in length");
  }
  auto integrand = [&](std::size_t i) {
    const Eigen::Vector2d dx(traj.states[i].delta - x_star.delta, traj.states[i].omega - x_star.omega);
    const double du = u[i] - u_star;
    return dx.dot(cfg.Q * dx) + cfg.R * du * du;
  };
  double cost = 0.0;
  for (std::size_t i = 1; i < traj.size(); ++i) {
    cost += 0.5 * (traj.times[i] - traj.times[i - 1]) * (integrand(i) + integrand(i - 1));
  }
  return cost;
}

}  // namespace swingdiff::lqr
