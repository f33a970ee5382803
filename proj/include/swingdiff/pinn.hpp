#pragma once

// Physics-informed network x_hat(t; theta): the residual of the swing equation
// at random collocation times, plus optional data and initial-condition terms.
// In identification mode M and D are softplus-mapped learnables trained
// alongside the network.

#include <array>
#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <vector>

#include "swingdiff/mlp.hpp"
#include "swingdiff/smib.hpp"
#include "swingdiff/trajectory.hpp"

namespace swingdiff::pinn {

struct PinnConfig {
  std::size_t n_c = 1000;
  double lambda_d = 0.0;
  double lambda_i = 2.0;
  std::size_t epochs = 20000;
  double lr = 1e-3;
  double t0 = 0.0;
  double t1 = 10.0;
  std::vector<std::size_t> hidden{200, 150, 100, 50};
  bool identify = false;
  double theta_M_raw_init = 0.0;
  double theta_D_raw_init = 0.0;

  void validate() const;
  mlp::MlpConfig net_config() const { return {1, hidden, 2}; }
};

struct PinnModel {
  mlp::MlpParams net;
  /// (theta_M_raw, theta_D_raw) when identifying.
  std::optional<std::array<double, 2>> raw;

  /// `p` with M and D replaced by the learned values when identifying.
  smib::SmibParams physics(const smib::SmibParams& p) const;
};

PinnModel make_model(const PinnConfig& cfg, std::uint64_t seed);

/// Mean over collocation times of |dx_hat/dt - f(x_hat)|^2.
double physics_loss(const PinnModel& model, const smib::SmibParams& p,
                    std::span<const double> collocation);

/// physics_loss + lambda_d (1/n_d) sum |x_hat_i - x_i|^2 + lambda_i |x_hat(t0) - x0|^2.
/// The data term is skipped when lambda_d == 0.
double total_loss(const PinnModel& model, const smib::SmibParams& p,
                  std::span<const double> collocation, const Trajectory& data,
                  const smib::State& x0, const PinnConfig& cfg);

struct PinnGrad {
  double loss = 0.0;
  std::vector<double> net;     // flat parameter layout
  std::array<double, 2> raw{};  // zero unless identifying
};

PinnGrad total_loss_and_grad(const PinnModel& model, const smib::SmibParams& p,
                             std::span<const double> collocation, const Trajectory& data,
                             const smib::State& x0, const PinnConfig& cfg);

/// Row e >= 1: loss at update e and the physical M, D after it. Row 0 holds
/// the initial values.
struct PinnHistoryRow {
  std::size_t epoch = 0;
  double loss = 0.0;
  double M = 0.0;
  double D = 0.0;
};

struct PinnResult {
  PinnModel model;
  std::vector<PinnHistoryRow> history;
};

using EpochCallback = std::function<bool(const PinnHistoryRow&)>;

/// Adam with collocation times redrawn uniformly on [t0, t1] every epoch.
/// `data` is restricted to the training window. In identification mode `p`
/// supplies only E, Vinf, X, Pm. Throws `TrainingAborted` on a non-finite loss.
PinnResult train_pinn(const smib::SmibParams& p, const smib::State& x0, const Trajectory& data,
                      const PinnConfig& cfg, std::uint64_t seed, const EpochCallback& on_epoch = {});

/// Evaluates x_hat at the given times.
Trajectory predict(const PinnModel& model, std::span<const double> times);

}  // namespace swingdiff::pinn
