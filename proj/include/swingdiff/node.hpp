#pragma once

// Neural ODE: an MLP tendency field f(x) or f(x, u), trained by rolling it out
// with RK4 over short segments and matching the observed states.

#include <cstdint>
#include <functional>
#include <span>
#include <vector>

#include "swingdiff/mlp.hpp"
#include "swingdiff/segments.hpp"
#include "swingdiff/smib.hpp"
#include "swingdiff/trajectory.hpp"

namespace swingdiff::node {

struct NodeTrainConfig {
  std::size_t n_b = 100;
  std::size_t m = 10;
  double dt = 0.02;
  std::size_t epochs = 1000;
  double lr = 1e-3;
  bool control_conditioned = false;
  std::vector<std::size_t> hidden{200, 150, 100, 50};
  double t_train_end = 10.0;

  void validate() const;
  mlp::MlpConfig net_config() const;
};

struct NodeModel {
  mlp::MlpParams net;

  bool control_conditioned() const { return net.config().input_dim == 3; }
};

/// Fresh Glorot-initialised model (2 -> 2, or 3 -> 2 when control-conditioned).
NodeModel make_model(const NodeTrainConfig& cfg, std::uint64_t seed);

/// The learned field as an ODE right-hand side with control held at u.
ode::VectorField<double> as_vector_field(const NodeModel& model, double u);

/// `steps` RK4 steps of size dt from x0 at t0; steps + 1 samples.
Trajectory rollout(const NodeModel& model, const smib::State& x0, double u, std::size_t steps,
                   double dt, double t0 = 0.0);

/// Traced batched rollout: all segments advance together, one fused network
/// node per RK4 stage. Returns m predicted states per segment.
std::vector<std::vector<smib::BasicState<ad::TracedScalar>>> rollout_traced(
    ad::Tape& tape, const mlp::TracedNet& net, std::span<const Segment> batch, double dt);

struct LossAndGrad {
  double loss = 0.0;
  std::vector<double> grad;  // flat parameter layout
};

/// (1 / (n m)) sum of squared state errors over all predicted samples.
double segment_loss(const NodeModel& model, std::span<const Segment> batch, double dt);
LossAndGrad segment_loss_and_grad(const NodeModel& model, std::span<const Segment> batch, double dt);

struct NodeTrainResult {
  NodeModel model;
  std::vector<double> loss_history;
};

/// Called after every epoch with (epoch, loss); return false to stop early.
using EpochCallback = std::function<bool(std::size_t epoch, double loss)>;

/// Adam over `cfg.epochs` epochs; each epoch draws n_b segments uniformly with
/// replacement from `data`. Throws `TrainingAborted` on a non-finite loss.
NodeTrainResult train_node(const SegmentSource& data, const NodeTrainConfig& cfg,
                           std::uint64_t seed, const EpochCallback& on_epoch = {});

/// A = d f / d x and B = d f / d u of a control-conditioned model at
/// (x_star, u_star). Throws `invalid_argument` for an autonomous model.
smib::LinearModel node_linearize(const NodeModel& model, const smib::State& x_star, double u_star);

}  // namespace swingdiff::node
