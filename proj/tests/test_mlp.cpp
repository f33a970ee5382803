#include <cmath>
#include <filesystem>
#include <fstream>

#include "doctest.h"
#include "support/gen.hpp"
#include "swingdiff/mlp.hpp"

using namespace swingdiff;
using ad::TracedScalar;

namespace {

mlp::MlpConfig small(std::size_t in, std::vector<std::size_t> hidden, std::size_t out) {
  mlp::MlpConfig c;
  c.input_dim = in;
  c.hidden = std::move(hidden);
  c.output_dim = out;
  return c;
}

// Random parameters with nonzero biases so every path is exercised.
mlp::MlpParams randomized(const mlp::MlpConfig& cfg, testgen::Gen& gen) {
  auto p = mlp::init(cfg, gen.engine()());
  for (std::size_t l = 0; l < p.layers().size(); ++l)
    for (auto& b : p.bias(l)) b = gen.uniform(-0.5, 0.5);
  return p;
}

// Scalar loss with distinct output weights: sum_k c_k y_k^2 / 2 + y_k.
double loss_of(const std::vector<double>& y) {
  double s = 0;
  for (std::size_t k = 0; k < y.size(); ++k) s += 0.5 * (k + 1) * y[k] * y[k] + y[k];
  return s;
}

}  // namespace

TEST_CASE("parameter count and layout") {
  const auto c = small(3, {4, 5}, 2);
  CHECK(c.parameter_count() == (3 + 1) * 4 + (4 + 1) * 5 + (5 + 1) * 2);
  const auto L = c.layers();
  REQUIRE(L.size() == 3);
  CHECK(L[0].weight_offset == 0);
  CHECK(L[0].bias_offset == 12);
  CHECK(L[1].weight_offset == 16);
  CHECK(mlp::MlpConfig{}.parameter_count() == 2 * 200 + 201 * 150 + 151 * 100 + 101 * 50 + 51 * 2);
  CHECK_THROWS_AS(mlp::MlpParams::from_flat(c, std::vector<double>(5)), Error);
  CHECK_THROWS_AS(small(0, {4}, 2).validate(), Error);
  CHECK_THROWS_AS(small(1, {0}, 2).validate(), Error);
}

TEST_CASE("flatten round-trips exactly") {
  testgen::Gen gen(1);
  const auto c = small(2, {7, 3}, 2);
  const auto p = randomized(c, gen);
  const std::vector<double> flat(p.flat().begin(), p.flat().end());
  const auto q = mlp::MlpParams::from_flat(c, flat);
  CHECK(std::equal(flat.begin(), flat.end(), q.flat().begin()));
  CHECK(q.weight(1)(2, 6) == flat[c.layers()[1].weight_offset + 2 * 7 + 6]);
}

TEST_CASE("init is deterministic, unbiased and within the Glorot bound") {
  const mlp::MlpConfig c;
  const auto a = mlp::init(c, 7), b = mlp::init(c, 7), d = mlp::init(c, 8);
  CHECK(std::equal(a.flat().begin(), a.flat().end(), b.flat().begin()));
  CHECK_FALSE(std::equal(a.flat().begin(), a.flat().end(), d.flat().begin()));
  for (std::size_t l = 0; l < a.layers().size(); ++l) {
    const auto& L = a.layers()[l];
    const double bound = std::sqrt(6.0 / static_cast<double>(L.n_in + L.n_out));
    CHECK(a.bias(l).cwiseAbs().maxCoeff() == 0.0);
    CHECK(a.weight(l).cwiseAbs().maxCoeff() <= bound);
    // a uniform sample this large fills most of the interval
    CHECK(a.weight(l).cwiseAbs().maxCoeff() >= 0.9 * bound);
  }
}

TEST_CASE("zero network outputs its final bias") {
  const auto c = small(1, {8, 8}, 2);
  mlp::MlpParams p(c);
  p.bias(2) << 0.25, -1.5;
  for (double t : {-3.0, 0.0, 7.5}) {
    const double x[] = {t};
    const auto y = mlp::forward(p, x);
    CHECK(y[0] == 0.25);
    CHECK(y[1] == -1.5);
    CHECK(mlp::input_jacobian(p, x).norm() == 0.0);
  }
}

TEST_CASE("pinn and node-control shapes") {
  testgen::Gen gen(2);
  const auto pinn_net = mlp::init(small(1, {16, 16}, 2), 3);
  const double t[] = {0.5};
  CHECK(mlp::forward(pinn_net, t).size() == 2);
  const auto node_net = mlp::init(small(3, {16, 16}, 2), 3);
  const double xu[] = {0.1, 0.1, 0.3};
  CHECK(mlp::forward(node_net, xu).size() == 2);
  CHECK_THROWS_AS(mlp::forward(node_net, t), Error);
}

TEST_CASE("single affine layer has Jacobian W") {
  testgen::Gen gen(3);
  const auto c = small(3, {}, 2);
  auto p = randomized(c, gen);
  const double x[] = {0.3, -1.2, 2.0};
  const auto J = mlp::input_jacobian(p, x);
  CHECK((J - Eigen::MatrixXd(p.weight(0))).norm() == 0.0);
  const auto y = mlp::forward(p, x);
  const Eigen::Vector3d xv(x[0], x[1], x[2]);
  CHECK(y[0] == doctest::Approx((p.weight(0) * xv + p.bias(0))(0)).epsilon(1e-15));
}

TEST_CASE("input Jacobian matches finite differences on random nets") {
  testgen::Gen gen(4);
  const double h = 1e-6;
  for (int trial = 0; trial < 20; ++trial) {
    const auto c = small(3, {static_cast<std::size_t>(gen.integer(2, 12)), 6}, 2);
    const auto p = randomized(c, gen);
    auto x = gen.vector(3, -1.5, 1.5);
    const auto J = mlp::input_jacobian(p, x);
    for (std::size_t j = 0; j < 3; ++j) {
      auto xp = x, xm = x;
      xp[j] += h, xm[j] -= h;
      const auto yp = mlp::forward(p, xp), ym = mlp::forward(p, xm);
      for (std::size_t i = 0; i < 2; ++i) REQUIRE(std::abs(J(i, j) - (yp[i] - ym[i]) / (2 * h)) <= 1e-6);
    }
  }
}

TEST_CASE("reverse-mode parameter gradient matches finite differences") {
  testgen::Gen gen(5);
  const double h = 1e-6;
  for (int trial = 0; trial < 10; ++trial) {
    const auto c = small(gen.coin() ? 1 : 3, {8, 8}, 2);
    auto p = randomized(c, gen);
    const auto x = gen.vector(c.input_dim, -1, 1);

    ad::Tape tape;
    std::vector<TracedScalar> tp;
    for (double v : p.flat()) tp.push_back(tape.variable(v));
    const auto y = mlp::forward<TracedScalar, double>(c, tp, x);
    TracedScalar L = 0.0;
    for (std::size_t k = 0; k < y.size(); ++k) L = L + 0.5 * double(k + 1) * y[k] * y[k] + y[k];
    const auto g = ad::backward(tape, L).wrt(tp);

    for (std::size_t i = 0; i < p.size(); ++i) {
      const double v = p.flat()[i];
      p.flat()[i] = v + h;
      const double lp = loss_of(mlp::forward(p, x));
      p.flat()[i] = v - h;
      const double lm = loss_of(mlp::forward(p, x));
      p.flat()[i] = v;
      REQUIRE(testgen::close(g[i], (lp - lm) / (2 * h), 1e-4, 1e-6));
    }
  }
}

TEST_CASE("batched forward agrees with per-sample evaluation") {
  testgen::Gen gen(6);
  const auto c = small(3, {12, 9}, 2);
  const auto p = randomized(c, gen);
  Eigen::MatrixXd X(3, 17);
  for (Eigen::Index j = 0; j < X.size(); ++j) X.data()[j] = gen.uniform(-2, 2);
  const auto r = mlp::batch_forward(p, X, 1);
  for (Eigen::Index j = 0; j < X.cols(); ++j) {
    const std::vector<double> x{X(0, j), X(1, j), X(2, j)};
    const auto y = mlp::forward(p, x);
    const auto J = mlp::input_jacobian(p, x);
    for (int i = 0; i < 2; ++i) {
      REQUIRE(std::abs(r.y(i, j) - y[i]) <= 1e-13);
      REQUIRE(std::abs(r.ydot(i, j) - J(i, 1)) <= 1e-13);
    }
  }
  CHECK_THROWS_AS(mlp::batch_forward(p, Eigen::MatrixXd(2, 4)), Error);
  CHECK_THROWS_AS(mlp::batch_forward(p, X, 3), Error);
}

TEST_CASE("batched backward agrees with the scalar tape") {
  testgen::Gen gen(7);
  const auto c = small(2, {6, 5}, 2);
  const auto p = randomized(c, gen);
  const std::size_t n = 4;
  Eigen::MatrixXd X(2, n), A(2, n);
  for (Eigen::Index j = 0; j < X.size(); ++j) X.data()[j] = gen.uniform(-1, 1), A.data()[j] = gen.normal();

  const auto r = mlp::batch_forward(p, X);
  std::vector<double> g(p.size(), 0.0);
  Eigen::MatrixXd xadj;
  mlp::batch_backward(p, r.cache, A, nullptr, g, &xadj);

  ad::Tape tape;
  std::vector<TracedScalar> tp;
  for (double v : p.flat()) tp.push_back(tape.variable(v));
  std::vector<TracedScalar> tx;
  TracedScalar L = 0.0;
  for (std::size_t j = 0; j < n; ++j) {
    const std::vector<TracedScalar> x{tape.variable(X(0, j)), tape.variable(X(1, j))};
    tx.insert(tx.end(), x.begin(), x.end());
    const auto y = mlp::forward<TracedScalar, TracedScalar>(c, tp, x);
    for (int i = 0; i < 2; ++i) L = L + A(i, j) * y[i];
  }
  const auto G = ad::backward(tape, L);
  const auto gp = G.wrt(tp);
  for (std::size_t i = 0; i < p.size(); ++i) REQUIRE(testgen::close(g[i], gp[i], 1e-12, 1e-12));
  for (std::size_t j = 0; j < n; ++j)
    for (int i = 0; i < 2; ++i) REQUIRE(testgen::close(xadj(i, j), G.wrt(tx[2 * j + i]), 1e-12, 1e-12));
}

TEST_CASE("fused node gradients, including through the input tangent") {
  testgen::Gen gen(8);
  const auto c = small(1, {7, 6}, 2);
  auto p = randomized(c, gen);
  const std::vector<double> ts{0.0, 0.7, 1.9};
  // L = sum_j (y0 - 0.3)^2 + (dy1/dt)^2 + y1 * dy0/dt
  auto plain = [&](const mlp::MlpParams& q) {
    Eigen::MatrixXd T(1, ts.size());
    for (std::size_t j = 0; j < ts.size(); ++j) T(0, j) = ts[j];
    const auto r = mlp::batch_forward(q, T, 0);
    double s = 0;
    for (std::size_t j = 0; j < ts.size(); ++j)
      s += (r.y(0, j) - 0.3) * (r.y(0, j) - 0.3) + r.ydot(1, j) * r.ydot(1, j) + r.y(1, j) * r.ydot(0, j);
    return s;
  };
  ad::Tape tape;
  const auto net = mlp::trace(tape, p);
  std::vector<TracedScalar> in(ts.begin(), ts.end());
  const auto out = mlp::forward_fused(tape, net, in, ts.size(), 0);
  TracedScalar L = 0.0;
  for (std::size_t j = 0; j < ts.size(); ++j) {
    const auto& y0 = out.y[2 * j];
    const auto& y1 = out.y[2 * j + 1];
    L = L + (y0 - 0.3) * (y0 - 0.3) + out.ydot[2 * j + 1] * out.ydot[2 * j + 1] + y1 * out.ydot[2 * j];
  }
  CHECK(L.value() == doctest::Approx(plain(p)).epsilon(1e-14));
  const auto g = ad::backward(tape, L).wrt(net.params);
  const double h = 1e-6;
  for (std::size_t i = 0; i < p.size(); ++i) {
    const double v = p.flat()[i];
    p.flat()[i] = v + h;
    const double lp = plain(p);
    p.flat()[i] = v - h;
    const double lm = plain(p);
    p.flat()[i] = v;
    REQUIRE(testgen::close(g[i], (lp - lm) / (2 * h), 1e-4, 1e-6));
  }
}

TEST_CASE("fused node propagates input adjoints") {
  testgen::Gen gen(9);
  const auto c = small(3, {5}, 2);
  const auto p = randomized(c, gen);
  ad::Tape tape;
  const auto net = mlp::trace(tape, p);
  std::vector<TracedScalar> in{tape.variable(0.2), tape.variable(-0.4), TracedScalar(0.3)};
  const auto out = mlp::forward_fused(tape, net, in, 1);
  const auto g = ad::backward(tape, out.y[0] + 2.0 * out.y[1]);
  const std::vector<double> x{0.2, -0.4, 0.3};
  const auto J = mlp::input_jacobian(p, x);
  CHECK(g.wrt(in[0]) == doctest::Approx(J(0, 0) + 2 * J(1, 0)).epsilon(1e-13));
  CHECK(g.wrt(in[1]) == doctest::Approx(J(0, 1) + 2 * J(1, 1)).epsilon(1e-13));
  CHECK(g.wrt(in[2]) == 0.0);
}

TEST_CASE("forward is Lipschitz in each weight on bounded inputs") {
  testgen::Gen gen(10);
  const auto c = small(1, {16, 16}, 2);
  auto p = randomized(c, gen);
  const double x[] = {0.8};
  const auto y0 = mlp::forward(p, x);
  double worst = 0;
  for (int k = 0; k < 50; ++k) {
    const std::size_t i = gen.index(p.size());
    const double v = p.flat()[i], eps = 1e-4;
    p.flat()[i] = v + eps;
    const auto y1 = mlp::forward(p, x);
    p.flat()[i] = v;
    const double d = std::hypot(y1[0] - y0[0], y1[1] - y0[1]);
    REQUIRE(std::isfinite(d));
    worst = std::max(worst, d / eps);
  }
  CHECK(worst < 100.0);
}

TEST_CASE("Adam matches a hand-computed trajectory") {
  mlp::Adam opt(2, {0.1, 0.9, 0.999, 1e-8});
  std::vector<double> x{1.0, -2.0};
  // first step moves each coordinate by lr * sign(g) up to eps
  opt.step(x, std::vector<double>{4.0, -0.5});
  CHECK(x[0] == doctest::Approx(0.9).epsilon(1e-7));
  CHECK(x[1] == doctest::Approx(-1.9).epsilon(1e-7));
  const double x1 = x[0];
  opt.step(x, std::vector<double>{2.0, 0.0});
  const double m = 0.9 * 0.1 * 4.0 + 0.1 * 2.0, v = 0.999 * 0.001 * 16.0 + 0.001 * 4.0;
  const double mh = m / (1 - 0.81), vh = v / (1 - 0.999 * 0.999);
  CHECK(x[0] == doctest::Approx(x1 - 0.1 * mh / (std::sqrt(vh) + 1e-8)).epsilon(1e-12));
  CHECK(opt.steps() == 2);
  CHECK_THROWS_AS(opt.step(x, std::vector<double>{1.0}), Error);
  CHECK_THROWS_AS(mlp::Adam(1, {0.0}), Error);
}

TEST_CASE("Adam minimizes a quadratic") {
  mlp::Adam opt(3, {0.05});
  std::vector<double> x{3.0, -1.0, 0.5};
  for (int k = 0; k < 2000; ++k) {
    std::vector<double> g{2 * (x[0] - 1), 4 * (x[1] + 2), 2 * x[2]};
    opt.step(x, g);
  }
  CHECK(std::abs(x[0] - 1) < 1e-3);
  CHECK(std::abs(x[1] + 2) < 1e-3);
  CHECK(std::abs(x[2]) < 1e-3);
}

TEST_CASE("checkpoint round-trips exactly") {
  testgen::Gen gen(11);
  const auto c = small(3, {9, 4}, 2);
  mlp::Checkpoint ck{randomized(c, gen), 1234567890123ULL, 42};
  ck.params.flat()[0] = 0.1 + 0.2;  // not shortest-representable in few digits
  const auto dir = std::filesystem::temp_directory_path() / "swingdiff_test_mlp";
  std::filesystem::create_directories(dir);
  const auto path = dir / "ck.json";
  mlp::save_checkpoint(path, ck);
  const auto back = mlp::load_checkpoint(path);
  CHECK(back.seed == ck.seed);
  CHECK(back.epoch == 42);
  CHECK(back.params.config() == c);
  CHECK(std::equal(back.params.flat().begin(), back.params.flat().end(), ck.params.flat().begin()));

  std::ofstream(dir / "bad.json") << "{\"format\": \"something-else\"}";
  CHECK_THROWS_AS(mlp::load_checkpoint(dir / "bad.json"), Error);
  CHECK_THROWS_AS(mlp::load_checkpoint(dir / "missing.json"), Error);
  std::filesystem::remove_all(dir);
}
