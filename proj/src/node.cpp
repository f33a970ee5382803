#include "swingdiff/node.hpp"

#include <cmath>
#include <string>

#include "swingdiff/random.hpp"

namespace swingdiff::node {

using ad::TracedScalar;

void NodeTrainConfig::validate() const {
  if (n_b < 1) throw Error(ErrorKind::invalid_argument, "n_b must be >= 1");
  if (m < 1) throw Error(ErrorKind::invalid_argument, "segment length m must be >= 1");
  if (!(dt > 0.0)) throw Error(ErrorKind::invalid_argument, "dt must be > 0");
  if (!(lr > 0.0)) throw Error(ErrorKind::invalid_argument, "learning rate must be > 0");
  if (!(t_train_end > 0.0)) throw Error(ErrorKind::invalid_argument, "training window must be non-empty");
  net_config().validate();
}

mlp::MlpConfig NodeTrainConfig::net_config() const {
  return {control_conditioned ? std::size_t{3} : std::size_t{2}, hidden, 2};
}

NodeModel make_model(const NodeTrainConfig& cfg, std::uint64_t seed) {
  cfg.validate();
  return {mlp::init(cfg.net_config(), seed)};
}

ode::VectorField<double> as_vector_field(const NodeModel& model, double u) {
  auto params = std::make_shared<const mlp::MlpParams>(model.net);
  const bool ctrl = model.control_conditioned();
  return [params, ctrl, u](double, const ode::Vec<double>& x) {
    Eigen::MatrixXd in(ctrl ? 3 : 2, 1);
    in(0, 0) = x[0];
    in(1, 0) = x[1];
    if (ctrl) in(2, 0) = u;
    auto r = mlp::batch_forward(*params, in);
    return ode::Vec<double>{r.y(0, 0), r.y(1, 0)};
  };
}

Trajectory rollout(const NodeModel& model, const smib::State& x0, double u, std::size_t steps,
                   double dt, double t0) {
  if (!(dt > 0.0)) throw Error(ErrorKind::invalid_argument, "rollout: dt must be > 0");
  const auto f = as_vector_field(model, u);
  Trajectory out;
  out.times.reserve(steps + 1);
  out.states.reserve(steps + 1);
  ode::Vec<double> x{x0.delta, x0.omega};
  ode::check_finite(x, t0);
  out.times.push_back(t0);
  out.states.push_back(x0);
  for (std::size_t k = 0; k < steps; ++k) {
    const double t = t0 + static_cast<double>(k) * dt;
    x = ode::rk4_step(f, t, x, dt);
    out.times.push_back(t0 + static_cast<double>(k + 1) * dt);
    out.states.push_back({x[0], x[1]});
  }
  return out;
}

std::vector<std::vector<smib::BasicState<TracedScalar>>> rollout_traced(
    ad::Tape& tape, const mlp::TracedNet& net, std::span<const Segment> batch, double dt) {
  const std::size_t n = batch.size();
  if (n == 0) return {};
  const std::size_t m = batch.front().targets.size();
  for (const auto& s : batch) {
    if (s.targets.size() != m) {
      throw Error(ErrorKind::dimension_mismatch, "rollout_traced: segments differ in length");
    }
  }
  const std::size_t in_dim = net.values->config().input_dim;
  const bool ctrl = in_dim == 3;

  // The whole batch is one 2n-dimensional state [d0, w0, d1, w1, ...].
  ode::VectorField<TracedScalar> f = [&](double, const ode::Vec<TracedScalar>& x) {
    std::vector<TracedScalar> in;
    in.reserve(in_dim * n);
    for (std::size_t i = 0; i < n; ++i) {
      in.push_back(x[2 * i]);
      in.push_back(x[2 * i + 1]);
      if (ctrl) in.emplace_back(batch[i].u);
    }
    return mlp::forward_fused(tape, net, in, n).y;
  };

  ode::Vec<TracedScalar> x(2 * n);
  for (std::size_t i = 0; i < n; ++i) {
    x[2 * i] = batch[i].x0.delta;
    x[2 * i + 1] = batch[i].x0.omega;
  }
  std::vector<std::vector<smib::BasicState<TracedScalar>>> pred(n);
  for (auto& p : pred) p.reserve(m);
  for (std::size_t j = 0; j < m; ++j) {
    x = ode::rk4_step(f, static_cast<double>(j) * dt, x, dt);
    for (std::size_t i = 0; i < n; ++i) pred[i].push_back({x[2 * i], x[2 * i + 1]});
  }
  return pred;
}

namespace {

LossAndGrad evaluate(const NodeModel& model, std::span<const Segment> batch, double dt,
                     bool want_grad) {
  ad::Tape tape;
  const auto net = mlp::trace(tape, model.net);
  const auto pred = rollout_traced(tape, net, batch, dt);
  const std::span<const std::vector<smib::BasicState<TracedScalar>>> view(pred);
  const TracedScalar loss = segment_mse<TracedScalar>(batch, view);
  LossAndGrad out;
  out.loss = loss.value();
  if (want_grad) out.grad = ad::backward(tape, loss).wrt(net.params);
  return out;
}

}  // namespace

double segment_loss(const NodeModel& model, std::span<const Segment> batch, double dt) {
  return evaluate(model, batch, dt, false).loss;
}

LossAndGrad segment_loss_and_grad(const NodeModel& model, std::span<const Segment> batch, double dt) {
  return evaluate(model, batch, dt, true);
}

NodeTrainResult train_node(const SegmentSource& data, const NodeTrainConfig& cfg,
                           std::uint64_t seed, const EpochCallback& on_epoch) {
  cfg.validate();
  if (cfg.control_conditioned && data.trajectories.size() < 2) {
    throw Error(ErrorKind::invalid_argument,
                "control-conditioned training needs trajectories recorded at several controls");
  }
  NodeTrainResult res{make_model(cfg, seed), {}};
  mlp::Adam adam(res.model.net.size(), {cfg.lr});
  auto rng = make_rng(seed, Stream::segments);
  res.loss_history.reserve(cfg.epochs);
  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    const auto batch = sample_segments(data, cfg.n_b, cfg.m, cfg.t_train_end, rng);
    LossAndGrad lg;
    try {
      lg = segment_loss_and_grad(res.model, batch, cfg.dt);
    } catch (const BlowUpError& e) {
      throw TrainingAborted(epoch, res.loss_history, std::string("NODE rollout blew up: ") + e.what());
    }
    if (!std::isfinite(lg.loss)) {
      throw TrainingAborted(epoch, res.loss_history,
                            "NODE loss became non-finite at epoch " + std::to_string(epoch));
    }
    res.loss_history.push_back(lg.loss);
    adam.step(res.model.net.flat(), lg.grad);
    if (on_epoch && !on_epoch(epoch, lg.loss)) break;
  }
  return res;
}

smib::LinearModel node_linearize(const NodeModel& model, const smib::State& x_star, double u_star) {
  if (!model.control_conditioned()) {
    throw Error(ErrorKind::invalid_argument, "node_linearize needs a control-conditioned model");
  }
  const double in[3] = {x_star.delta, x_star.omega, u_star};
  const Eigen::MatrixXd J = mlp::input_jacobian(model.net, in);
  smib::LinearModel lm;
  lm.A = J.leftCols<2>();
  lm.B = J.col(2);
  lm.x_star = x_star;
  lm.u_star = u_star;
  return lm;
}

}  // namespace swingdiff::node
