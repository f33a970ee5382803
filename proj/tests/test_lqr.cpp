#include <cmath>

#include "doctest.h"
#include "support/gen.hpp"
#include "swingdiff/lqr.hpp"

using namespace swingdiff;

namespace {

smib::SmibParams osc() {
  smib::SmibParams p;
  p.M = 0.1, p.D = 0.01, p.E = 5, p.Vinf = 1, p.X = 5, p.Pm = 0.5;
  return p;
}

void check_solution(const lqr::LqrSolution& s, const lqr::LqrConfig& cfg) {
  const auto& A = s.model.A;
  const auto& B = s.model.B;
  REQUIRE(lqr::riccati_residual(A, B, cfg.Q, cfg.R, s.P) <= 1e-8);
  REQUIRE((s.P - s.P.transpose()).norm() <= 1e-12 * std::max(1.0, s.P.norm()));
  REQUIRE(s.P(0, 0) > 0);
  REQUIRE(s.P.determinant() > 0);
  REQUIRE(lqr::is_hurwitz(A - B * s.K));
  const Eigen::RowVector2d K = B.transpose() * s.P / cfg.R;
  REQUIRE((K - s.K).norm() <= 1e-12 * std::max(1.0, K.norm()));
  for (std::size_t i = 2; i < s.residual_history.size(); ++i) {
    REQUIRE(s.residual_history[i] <= s.residual_history[i - 1] * (1 + 1e-9) + 1e-14);
  }
}

}  // namespace

TEST_CASE("double integrator reproduces the analytic solution") {
  smib::LinearModel m;
  m.A << 0, 1, 0, 0;
  m.B << 0, 1;
  lqr::LqrConfig cfg;
  cfg.Q = Eigen::Matrix2d::Identity();
  cfg.R = 1.0;
  const auto s = lqr::solve_care(m, cfg, Eigen::RowVector2d(1.0, 1.0));
  const double r3 = std::sqrt(3.0);
  CHECK(std::abs(s.K(0) - 1.0) <= 1e-10);
  CHECK(std::abs(s.K(1) - r3) <= 1e-10);
  CHECK(std::abs(s.P(0, 0) - r3) <= 1e-10);
  CHECK(std::abs(s.P(0, 1) - 1.0) <= 1e-10);
  CHECK(std::abs(s.P(1, 1) - r3) <= 1e-10);
  // substitute the closed form into the residual
  Eigen::Matrix2d P;
  P << r3, 1, 1, r3;
  CHECK(lqr::riccati_residual(m.A, m.B, cfg.Q, cfg.R, P) <= 1e-12);
  check_solution(s, cfg);
}

TEST_CASE("unstable A without a seed gain is rejected") {
  smib::LinearModel m;
  m.A << 0, 1, 0, 0;
  m.B << 0, 1;
  try {
    (void)lqr::solve_care(m, {});
    FAIL("expected not_stabilizing");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::not_stabilizing);
  }
  CHECK_THROWS_AS(lqr::solve_care(m, {}, Eigen::RowVector2d(-1.0, 0.0)), Error);
}

TEST_CASE("zero state weight gives zero gain") {
  const auto p = osc();
  const auto m = smib::linearize(p, smib::equilibrium(p));
  lqr::LqrConfig cfg;
  cfg.Q.setZero();
  cfg.R = 1.0;
  const auto s = lqr::solve_care(m, cfg);
  CHECK(s.P.norm() <= 1e-14);
  CHECK(s.K.norm() <= 1e-14);
}

TEST_CASE("oscillatory SMIB design") {
  const auto p = osc();
  const auto m = smib::linearize(p, smib::equilibrium(p));
  const lqr::LqrConfig cfg;
  const auto s = lqr::solve_care(m, cfg);
  check_solution(s, cfg);
  CHECK(lqr::eigenvalue_real_parts(m.A - m.B * s.K)(0) < 0);
}

TEST_CASE("iteration stall reports the residual") {
  const auto p = osc();
  const auto m = smib::linearize(p, smib::equilibrium(p));
  lqr::LqrConfig cfg;
  cfg.max_iterations = 1;
  cfg.tolerance = 1e-300;
  try {
    (void)lqr::solve_care(m, cfg);
    FAIL("expected stall");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::iteration_stall);
    CHECK(std::string(e.what()).find("residual") != std::string::npos);
  }
}

TEST_CASE("random designs satisfy every solution invariant") {
  testgen::Gen gen(41);
  for (int i = 0; i < 200; ++i) {
    smib::SmibParams p;
    p.M = gen.uniform(0.05, 2), p.D = gen.uniform(0.005, 1), p.E = gen.uniform(0.5, 5);
    p.Vinf = gen.uniform(0.5, 2), p.X = gen.uniform(0.5, 5);
    p.Pm = gen.uniform(0, 0.9) * p.b();
    const auto m = smib::linearize(p, smib::equilibrium(p));
    lqr::LqrConfig cfg;
    Eigen::Matrix2d L;
    L << gen.uniform(0.1, 4), 0, gen.uniform(-2, 2), gen.uniform(0.1, 4);
    cfg.Q = L * L.transpose();
    cfg.R = gen.uniform(0.01, 5);
    check_solution(lqr::solve_care(m, cfg), cfg);
  }
}

TEST_CASE("Lyapunov solve satisfies its equation") {
  testgen::Gen gen(42);
  for (int i = 0; i < 100; ++i) {
    Eigen::Matrix2d A;
    A << gen.uniform(-3, 1), gen.uniform(-2, 2), gen.uniform(-2, 2), gen.uniform(-3, 1);
    if (!lqr::is_hurwitz(A)) continue;
    Eigen::Matrix2d C;
    C << gen.uniform(0, 2), 0.3, 0.3, gen.uniform(0.5, 2);
    const auto X = lqr::solve_lyapunov(A, C);
    REQUIRE((A.transpose() * X + X * A + C).norm() <= 1e-10 * std::max(1.0, X.norm()));
  }
}

TEST_CASE("weight validation") {
  lqr::LqrConfig cfg;
  cfg.R = 0;
  CHECK_THROWS_AS(cfg.validate(), Error);
  cfg.R = 0.1;
  cfg.Q << 1, 2, 2, 1;  // indefinite
  CHECK_THROWS_AS(cfg.validate(), Error);
  cfg.Q << 1, 0.5, 0.4, 1;  // asymmetric
  CHECK_THROWS_AS(cfg.validate(), Error);
}

TEST_CASE("equilibrium is a closed-loop fixed point") {
  const auto p = osc();
  const auto xs = smib::equilibrium(p);
  const auto sol = lqr::solve_care(smib::linearize(p, xs), {});
  lqr::DisturbanceSchedule sched;
  sched.delta_Pm = 0.0;
  sched.t_activate = 0.0;
  const auto r = lqr::closed_loop_simulate(p, xs, xs, sol, sched, {0.0, 20.0, 0.02});
  for (const auto& x : r.trajectory.states) {
    REQUIRE(std::hypot(x.delta - xs.delta, x.omega - xs.omega) <= 1e-9);
  }
}

TEST_CASE("schedule flags follow the disturbance window and activation time") {
  const auto p = osc();
  const auto xs = smib::equilibrium(p);
  const auto sol = lqr::solve_care(smib::linearize(p, xs), {});
  const lqr::DisturbanceSchedule sched;  // 0.1 on [1,2), controller from t=5
  const auto r = lqr::closed_loop_simulate(p, xs, xs, sol, sched, {0.0, 20.0, 0.02});
  for (std::size_t k = 0; k < r.trajectory.size(); ++k) {
    const double t = r.trajectory.times[k];
    REQUIRE(r.disturbance_active[k] == ((t >= 1.0 - 1e-9 && t < 2.0 - 1e-9) ? 1 : 0));
    REQUIRE(r.controller_active[k] == (t >= 5.0 - 1e-9 ? 1 : 0));
    if (t < 1.0 - 1e-9) REQUIRE(r.u[k] == p.Pm);
  }
  CHECK_THROWS_AS(lqr::DisturbanceSchedule({0.1, 2.0, 1.0, 5.0}).validate(), Error);
}

TEST_CASE("linear closed loop matches the nonlinear one to first order") {
  const auto p = osc();
  const auto xs = smib::equilibrium(p);
  const auto m = smib::linearize(p, xs);
  const auto sol = lqr::solve_care(m, {});
  lqr::DisturbanceSchedule sched;
  sched.delta_Pm = 0.0;
  sched.t_activate = 0.0;
  const ode::TimeGrid grid{0.0, 1.0, 0.02};
  const smib::State x0{xs.delta + 0.6e-3, 0.8e-3};
  const auto nl = lqr::closed_loop_simulate(p, x0, xs, sol, sched, grid);

  Eigen::Vector2d dx(x0.delta - xs.delta, x0.omega - xs.omega);
  double worst = 0.0;
  for (std::size_t k = 0; k + 1 < grid.size(); ++k) {
    const double du = -(sol.K * dx)(0);
    ode::VectorField<double> f = [&](double, const ode::Vec<double>& x) {
      Eigen::Vector2d v = m.A * Eigen::Vector2d(x[0], x[1]) + m.B * du;
      return ode::Vec<double>{v(0), v(1)};
    };
    auto seg = ode::integrate(f, {dx(0), dx(1)}, {grid.time(k), grid.time(k + 1), grid.dt_out}, {});
    dx = Eigen::Vector2d(seg.x.back()[0], seg.x.back()[1]);
    const auto& s = nl.trajectory.states[k + 1];
    worst = std::max(worst, std::hypot(s.delta - xs.delta - dx(0), s.omega - xs.omega - dx(1)));
  }
  CHECK(worst <= 1e-4);
}

TEST_CASE("quadratic cost") {
  const auto p = osc();
  const auto xs = smib::equilibrium(p);
  const lqr::LqrConfig cfg;
  Trajectory tr;
  std::vector<double> u;
  for (int k = 0; k <= 10; ++k) {
    tr.times.push_back(0.1 * k);
    tr.states.push_back(xs);
    u.push_back(p.Pm);
  }
  CHECK(lqr::quadratic_cost(tr, u, xs, p.Pm, cfg) == 0.0);

  Trajectory t1 = tr, t2 = tr;
  for (int k = 0; k <= 10; ++k) {
    t1.states[k] = {xs.delta + 0.01 * k, 0.02};
    t2.states[k] = {xs.delta + 0.02 * k, 0.04};
  }
  const double c1 = lqr::quadratic_cost(t1, u, xs, p.Pm, cfg);
  CHECK(lqr::quadratic_cost(t2, u, xs, p.Pm, cfg) == doctest::Approx(4 * c1).epsilon(1e-12));

  u.pop_back();
  CHECK_THROWS_AS(lqr::quadratic_cost(tr, u, xs, p.Pm, cfg), Error);
}

TEST_CASE("LQR lowers the cost of the disturbance scenario") {
  const auto p = osc();
  const auto xs = smib::equilibrium(p);
  const lqr::LqrConfig cfg;
  const auto sol = lqr::solve_care(smib::linearize(p, xs), cfg);
  const ode::TimeGrid grid{0.0, 20.0, 0.02};
  lqr::DisturbanceSchedule on;
  lqr::DisturbanceSchedule off;
  off.t_activate = 1e9;
  const auto a = lqr::closed_loop_simulate(p, xs, xs, sol, on, grid);
  const auto b = lqr::closed_loop_simulate(p, xs, xs, sol, off, grid);
  CHECK(lqr::quadratic_cost(a.trajectory, a.u, xs, p.Pm, cfg) <
        lqr::quadratic_cost(b.trajectory, b.u, xs, p.Pm, cfg));
}
