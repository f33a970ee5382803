#include <cmath>
#include <numbers>

#include "doctest.h"
#include "support/gen.hpp"
#include "swingdiff/integrate.hpp"
#include "swingdiff/smib.hpp"

using namespace swingdiff;
using ode::Vec;

namespace {

const ode::VectorField<double> decay = [](double, const Vec<double>& x) { return Vec<double>{-x[0]}; };

smib::SmibParams oscillatory() {
  smib::SmibParams p;
  p.M = 0.1, p.D = 0.01, p.E = 5, p.Vinf = 1, p.X = 5, p.Pm = 0.5;
  return p;
}

smib::SmibParams stable() {
  smib::SmibParams p;
  p.M = 0.4, p.D = 0.2, p.E = 1, p.Vinf = 1, p.X = 5, p.Pm = 0.1;
  return p;
}

double rel_l2(const std::vector<Vec<double>>& a, const std::vector<Vec<double>>& b) {
  double num = 0, den = 0;
  for (std::size_t i = 0; i < a.size(); ++i)
    for (std::size_t j = 0; j < a[i].size(); ++j) {
      num += (a[i][j] - b[i][j]) * (a[i][j] - b[i][j]);
      den += b[i][j] * b[i][j];
    }
  return std::sqrt(num / den);
}

}  // namespace

TEST_CASE("dopri5 on exponential decay reaches e^-1") {
  auto sol = ode::integrate(decay, {1.0}, {0.0, 1.0, 0.02}, {});
  CHECK(sol.x.back()[0] == doctest::Approx(std::exp(-1.0)).epsilon(1e-7));
  CHECK(std::abs(sol.x.back()[0] - 0.367879) < 1e-6);
  CHECK(sol.t.size() == 51);
  CHECK(sol.t.back() == 1.0);
}

TEST_CASE("harmonic oscillator returns after one period") {
  ode::VectorField<double> f = [](double, const Vec<double>& x) { return Vec<double>{x[1], -x[0]}; };
  const double T = 2 * std::numbers::pi;
  auto sol = ode::integrate(f, {1.0, 0.0}, {0.0, T, T / 200}, {});
  CHECK(std::abs(sol.x.back()[0] - 1.0) < 1e-6);
  CHECK(std::abs(sol.x.back()[1]) < 1e-6);
}

TEST_CASE("zero field gives a constant trajectory") {
  ode::VectorField<double> f = [](double, const Vec<double>& x) { return Vec<double>(x.size(), 0.0); };
  for (auto m : {ode::Method::rk4, ode::Method::dopri5}) {
    ode::IntegratorConfig cfg;
    cfg.method = m;
    auto sol = ode::integrate(f, {0.3, -2.0}, {0.0, 1.0, 0.1}, cfg);
    for (const auto& x : sol.x) {
      CHECK(x[0] == 0.3);
      CHECK(x[1] == -2.0);
    }
  }
}

TEST_CASE("rk4 step on decay equals the fourth-order Taylor polynomial") {
  const double h = 0.1;
  const double x1 = ode::rk4_step(decay, 0.0, {1.0}, h)[0];
  const double taylor = 1 - h + h * h / 2 - h * h * h / 6 + h * h * h * h / 24;
  CHECK(x1 == doctest::Approx(taylor).epsilon(1e-15));
  CHECK(std::abs(x1 - 0.9048375) < 1e-7);
  CHECK(std::abs(x1 - std::exp(-h)) < h * h * h * h * h);
}

TEST_CASE("rk4 step of a constant field is exact") {
  ode::VectorField<double> f = [](double, const Vec<double>&) { return Vec<double>{2.5, -1.0}; };
  auto x = ode::rk4_step(f, 0.0, {1.0, 1.0}, 0.25);
  CHECK(x[0] == 1.0 + 2.5 * 0.25);
  CHECK(x[1] == 1.0 - 0.25);
}

TEST_CASE("rk4 global error is fourth order") {
  std::vector<double> hs{0.1, 0.05, 0.025, 0.0125}, errs;
  for (double h : hs) {
    auto sol = ode::integrate_rk4<double>(decay, {1.0}, {0.0, 1.0, h});
    errs.push_back(std::abs(sol.x.back()[0] - std::exp(-1.0)));
  }
  // least-squares slope of log(err) against log(h)
  double mx = 0, my = 0;
  for (std::size_t i = 0; i < hs.size(); ++i) mx += std::log(hs[i]) / 4, my += std::log(errs[i]) / 4;
  double sxy = 0, sxx = 0;
  for (std::size_t i = 0; i < hs.size(); ++i) {
    sxy += (std::log(hs[i]) - mx) * (std::log(errs[i]) - my);
    sxx += (std::log(hs[i]) - mx) * (std::log(hs[i]) - mx);
  }
  const double slope = sxy / sxx;
  CHECK(slope == doctest::Approx(4.0).epsilon(0.05));
  CHECK(errs[0] / errs[1] == doctest::Approx(16.0).epsilon(0.05));
}

TEST_CASE("dopri5 controller rejects a loose step and shrinks") {
  auto r = ode::dopri5_step(decay, 0.0, {1.0}, 2.0, {});
  CHECK_FALSE(r.accepted);
  CHECK(r.h_next < 2.0);
  CHECK(r.h_next >= 0.2 * 2.0);
}

TEST_CASE("dopri5 controller growth is capped at 5x") {
  ode::VectorField<double> lin = [](double, const Vec<double>&) { return Vec<double>{1.0}; };
  auto r = ode::dopri5_step(lin, 0.0, {0.0}, 1e-3, {});
  CHECK(r.accepted);
  CHECK(r.h_next == doctest::Approx(5e-3));
}

TEST_CASE("oscillatory SMIB run accepts at least 99% of steps") {
  const auto p = oscillatory();
  auto sol = ode::integrate(smib::as_vector_field<double, double>(p, p.Pm), {0.1, 0.1},
                            {0.0, 20.0, 0.02}, {});
  const double total = static_cast<double>(sol.stats.accepted + sol.stats.rejected);
  CHECK(static_cast<double>(sol.stats.accepted) / total >= 0.99);
  CHECK(sol.steps.size() == sol.stats.accepted);
}

TEST_CASE("dopri5 agrees with fine rk4 on both SMIB scenarios") {
  for (const auto& p : {stable(), oscillatory()}) {
    auto f = smib::as_vector_field<double, double>(p, p.Pm);
    const ode::TimeGrid grid{0.0, 20.0, 0.02};
    auto a = ode::integrate(f, {0.1, 0.1}, grid, {});
    auto b = ode::integrate_rk4<double>(f, {0.1, 0.1}, grid, 200);  // h = 1e-4
    CHECK(rel_l2(a.x, b.x) <= 1e-6);
  }
}

TEST_CASE("traced and plain steppers give bit-identical primal values") {
  const auto p = oscillatory();
  const ode::TimeGrid grid{0.0, 2.0, 0.02};
  auto fd = smib::as_vector_field<double, double>(p, p.Pm);
  auto ft = smib::as_vector_field<double, ad::TracedScalar>(p, p.Pm);
  ad::Tape tape;
  Vec<ad::TracedScalar> x0{tape.variable(0.1), tape.variable(0.1)};

  auto a = ode::integrate_rk4<double>(fd, {0.1, 0.1}, grid);
  auto b = ode::integrate_rk4<ad::TracedScalar>(ft, x0, grid);
  for (std::size_t k = 0; k < a.x.size(); ++k) {
    REQUIRE(a.x[k][0] == b.x[k][0].value());
    REQUIRE(a.x[k][1] == b.x[k][1].value());
  }

  auto c = ode::integrate(fd, {0.1, 0.1}, grid, {});
  auto d = ode::replay_dopri5<ad::TracedScalar>(ft, x0, grid, c.steps);
  REQUIRE(c.x.size() == d.x.size());
  for (std::size_t k = 0; k < c.x.size(); ++k) {
    REQUIRE(c.x[k][0] == d.x[k][0].value());
    REQUIRE(c.x[k][1] == d.x[k][1].value());
  }
}

TEST_CASE("gradient through fixed-step integration matches finite differences") {
  testgen::Gen gen(21);
  const auto base = oscillatory();
  auto loss = [&](auto rm, auto rd) {
    using T = decltype(rm);
    smib::BasicParams<T> q;
    q.M = ad::softplus(rm);
    q.D = ad::softplus(rd);
    q.E = base.E, q.Vinf = base.Vinf, q.X = base.X, q.Pm = base.Pm;
    ode::VectorField<T> f = [&](double, const Vec<T>& x) {
      auto d = smib::vector_field(q, smib::BasicState<T>{x[0], x[1]}, T(q.Pm));
      return Vec<T>{d.delta, d.omega};
    };
    auto sol = ode::integrate_rk4<T>(f, {T(0.1), T(0.1)}, {0.0, 0.4, 0.02});
    T s(0.0);
    for (const auto& x : sol.x) s = s + x[0] * x[0] + x[1] * x[1];
    return s;
  };
  for (int trial = 0; trial < 10; ++trial) {
    const double m0 = gen.uniform(-2.5, 0.5), d0 = gen.uniform(-5, 0);
    ad::Tape tape;
    auto rm = tape.variable(m0), rd = tape.variable(d0);
    auto g = ad::backward(tape, loss(rm, rd));
    const double h = 1e-6;
    const double fm = (loss(m0 + h, d0) - loss(m0 - h, d0)) / (2 * h);
    const double fdd = (loss(m0, d0 + h) - loss(m0, d0 - h)) / (2 * h);
    REQUIRE(testgen::close(g.wrt(rm), fm, 1e-5, 1e-6));
    REQUIRE(testgen::close(g.wrt(rd), fdd, 1e-5, 1e-6));
  }
}

TEST_CASE("integrator errors") {
  SUBCASE("step budget exhausted is a divergence") {
    ode::IntegratorConfig cfg;
    cfg.max_steps = 3;
    try {
      (void)ode::integrate(decay, {1.0}, {0.0, 1.0, 0.02}, cfg);
      FAIL("expected divergence");
    } catch (const Error& e) {
      CHECK(e.kind() == ErrorKind::divergence);
    }
  }
  SUBCASE("finite-time blow-up reports its time") {
    ode::VectorField<double> f = [](double, const Vec<double>& x) { return Vec<double>{x[0] * x[0]}; };
    for (auto m : {ode::Method::dopri5, ode::Method::rk4}) {
      ode::IntegratorConfig cfg;
      cfg.method = m;
      try {
        (void)ode::integrate(f, {1.0}, {0.0, 2.0, 0.02}, cfg);
        FAIL("expected blow-up");
      } catch (const BlowUpError& e) {
        CHECK(e.kind() == ErrorKind::blow_up);
        CHECK(e.time() <= 1.05);
        CHECK(e.time() > 0.9);
      } catch (const Error& e) {
        // Step underflow right at the singularity is also a valid failure.
        CHECK(e.kind() == ErrorKind::divergence);
      }
    }
  }
  SUBCASE("invalid configuration") {
    ode::IntegratorConfig cfg;
    cfg.rtol = 0;
    CHECK_THROWS_AS(ode::integrate(decay, {1.0}, {0.0, 1.0, 0.02}, cfg), Error);
    CHECK_THROWS_AS(ode::integrate(decay, {1.0}, {0.0, 1.0, 0.03}, {}), Error);
    CHECK_THROWS_AS(ode::integrate(decay, {1.0}, {1.0, 1.0, 0.1}, {}), Error);
    CHECK_THROWS_AS(ode::rk4_step(decay, 0.0, {1.0}, -0.1), Error);
    CHECK_THROWS_AS(ode::integrate(decay, {std::nan("")}, {0.0, 1.0, 0.02}, {}), BlowUpError);
  }
}
