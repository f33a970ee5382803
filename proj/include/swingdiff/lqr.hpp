#pragma once

// Continuous-time LQR for the linearized swing dynamics, and closed-loop
// simulation of the nonlinear plant under the resulting state feedback.

#include <Eigen/Core>
#include <Eigen/LU>
#include <optional>
#include <vector>

#include "swingdiff/integrate.hpp"
#include "swingdiff/smib.hpp"
#include "swingdiff/trajectory.hpp"

namespace swingdiff::lqr {

struct LqrConfig {
  Eigen::Matrix2d Q = Eigen::Vector2d(10.0, 1.0).asDiagonal();
  double R = 0.1;
  double tolerance = 1e-10;
  std::size_t max_iterations = 50;

  void validate() const;
};

struct LqrSolution {
  Eigen::Matrix2d P = Eigen::Matrix2d::Zero();
  Eigen::RowVector2d K = Eigen::RowVector2d::Zero();
  smib::LinearModel model;
  std::size_t iterations = 0;
  /// Frobenius norm of the Riccati residual after each Newton step.
  std::vector<double> residual_history;
};

/// Frobenius norm of A^T P + P A - P B R^-1 B^T P + Q.
double riccati_residual(const Eigen::Matrix2d& A, const Eigen::Vector2d& B,
                        const Eigen::Matrix2d& Q, double R, const Eigen::Matrix2d& P);

/// Solves A^T X + X A + C = 0 through the 4x4 Kronecker system
/// (I (x) A^T + A^T (x) I) vec(X) = -vec(C), Gaussian elimination with partial
/// pivoting. Throws `not_stabilizing` if the system is singular.
Eigen::Matrix2d solve_lyapunov(const Eigen::Matrix2d& A, const Eigen::Matrix2d& C);

/// Real parts of the eigenvalues of a 2x2 matrix, largest first.
Eigen::Vector2d eigenvalue_real_parts(const Eigen::Matrix2d& A);
bool is_hurwitz(const Eigen::Matrix2d& A);

/// Newton-Kleinman iteration. Starts from `initial_gain` when given, else
/// from K = 0, which requires A to be Hurwitz (`not_stabilizing` otherwise).
/// Stops once the residual is <= cfg.tolerance; `iteration_stall` after
/// cfg.max_iterations.
LqrSolution solve_care(const smib::LinearModel& model, const LqrConfig& cfg,
                       std::optional<Eigen::RowVector2d> initial_gain = std::nullopt);

struct DisturbanceSchedule {
  double delta_Pm = 0.1;
  double t_on = 1.0;
  double t_off = 2.0;
  double t_activate = 5.0;

  void validate() const;
  bool disturbance_active(double t) const;
  bool controller_active(double t) const;
};

struct ClosedLoopResult {
  Trajectory trajectory;
  std::vector<double> u;
  std::vector<int> controller_active;
  std::vector<int> disturbance_active;
};

/// Integrates the true nonlinear plant with
///   u(t_k) = Pm + dPm 1[t_k in window] - 1[t_k >= t_activate] K (x(t_k) - x*)
/// held constant over each output interval. `plant.Pm` is the nominal input.
ClosedLoopResult closed_loop_simulate(const smib::SmibParams& plant, const smib::State& x0,
                                      const smib::State& x_star, const LqrSolution& sol,
                                      const DisturbanceSchedule& sched, const ode::TimeGrid& grid,
                                      const ode::IntegratorConfig& cfg = {});

/// Trapezoid-rule approximation of the integral of dx^T Q dx + R du^2.
double quadratic_cost(const Trajectory& traj, const std::vector<double>& u,
                      const smib::State& x_star, double u_star, const LqrConfig& cfg);

}  // namespace swingdiff::lqr
