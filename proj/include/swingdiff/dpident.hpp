#pragma once

// Identification of inertia and damping by backpropagating a segment
// trajectory-matching loss through RK4 integration of the swing equation.
// M = softplus(theta_M_raw), D = softplus(theta_D_raw); E, Vinf, X, Pm fixed.

#include <array>
#include <cstdint>
#include <functional>
#include <span>
#include <vector>

#include "swingdiff/segments.hpp"
#include "swingdiff/smib.hpp"
#include "swingdiff/trajectory.hpp"

namespace swingdiff::dp {

struct DpModel {
  double theta_M_raw = 0.0;
  double theta_D_raw = 0.0;
  smib::SmibParams fixed;  // M and D here are ignored

  double M() const { return ad::softplus(theta_M_raw); }
  double D() const { return ad::softplus(theta_D_raw); }
  /// `fixed` with M and D replaced by the learned values.
  smib::SmibParams physical() const;

  static DpModel from_physical(const smib::SmibParams& fixed, double M, double D);
};

struct DpTrainConfig {
  std::size_t n_b = 100;
  std::size_t m = 10;
  double dt = 0.02;
  std::size_t epochs = 4000;
  double lr = 1e-2;
  double init_M = 1.0;
  double init_D = 1.0;
  double t_train_end = 10.0;

  void validate() const;
};

/// `steps` RK4 steps of the swing equation; returns steps + 1 states.
template <class T>
std::vector<smib::BasicState<T>> rk4_states(const smib::BasicParams<T>& p, smib::BasicState<T> x0,
                                            double u, std::size_t steps, double dt) {
  const ode::VectorField<T> f = [&p, u](double, const ode::Vec<T>& x) {
    auto d = smib::vector_field(p, smib::BasicState<T>{x[0], x[1]}, T(u));
    return ode::Vec<T>{T(d.delta), T(d.omega)};
  };
  std::vector<smib::BasicState<T>> out;
  out.reserve(steps + 1);
  out.push_back(x0);
  ode::Vec<T> x{x0.delta, x0.omega};
  for (std::size_t k = 0; k < steps; ++k) {
    x = ode::rk4_step(f, static_cast<double>(k) * dt, x, dt);
    out.push_back({x[0], x[1]});
  }
  return out;
}

/// Plain rollout at the model's current values, control u = fixed.Pm.
Trajectory dp_rollout(const DpModel& model, const smib::State& x0, std::size_t steps, double dt,
                      double t0 = 0.0);

struct DpLoss {
  double loss = 0.0;
  std::array<double, 2> grad{};  // d loss / d (theta_M_raw, theta_D_raw)
};

double segment_loss(const DpModel& model, std::span<const Segment> batch, double dt);
DpLoss segment_loss_and_grad(const DpModel& model, std::span<const Segment> batch, double dt);

/// Row e >= 1 holds the loss of the batch used for update e and the values
/// after it; row 0 holds the initial values and the loss of the first batch.
struct DpHistoryRow {
  std::size_t epoch = 0;
  double M = 0.0;
  double D = 0.0;
  double loss = 0.0;
};

struct DpResult {
  DpModel model;
  std::vector<DpHistoryRow> history;
};

using EpochCallback = std::function<bool(const DpHistoryRow&)>;

/// Adam over the two raw parameters. `fixed` supplies E, Vinf, X, Pm.
/// Throws `TrainingAborted` on a non-finite loss.
DpResult identify(const SegmentSource& data, const smib::SmibParams& fixed,
                  const DpTrainConfig& cfg, std::uint64_t seed, const EpochCallback& on_epoch = {});

}  // namespace swingdiff::dp
