#include "swingdiff/dpident.hpp"

#include <cmath>
#include <string>

#include "swingdiff/mlp.hpp"
#include "swingdiff/random.hpp"

namespace swingdiff::dp {

using ad::TracedScalar;

smib::SmibParams DpModel::physical() const {
  smib::SmibParams p = fixed;
  p.M = M();
  p.D = D();
  return p;
}

DpModel DpModel::from_physical(const smib::SmibParams& fixed, double M, double D) {
  if (!(M > 0.0) || !(D > 0.0)) {
    throw Error(ErrorKind::invalid_argument, "softplus-parameterised M and D must be > 0");
  }
  return {ad::softplus_inverse(M), ad::softplus_inverse(D), fixed};
}

void DpTrainConfig::validate() const {
  if (n_b < 1) throw Error(ErrorKind::invalid_argument, "n_b must be >= 1");
  if (m < 1) throw Error(ErrorKind::invalid_argument, "segment length m must be >= 1");
  if (!(dt > 0.0)) throw Error(ErrorKind::invalid_argument, "dt must be > 0");
  if (!(lr > 0.0)) throw Error(ErrorKind::invalid_argument, "learning rate must be > 0");
  if (!(init_M > 0.0) || !(init_D > 0.0)) {
    throw Error(ErrorKind::invalid_argument, "initial M and D must be > 0");
  }
}

Trajectory dp_rollout(const DpModel& model, const smib::State& x0, std::size_t steps, double dt,
                      double t0) {
  if (!(dt > 0.0)) throw Error(ErrorKind::invalid_argument, "dp_rollout: dt must be > 0");
  const auto p = model.physical();
  Trajectory out;
  out.states = rk4_states<double>(p, x0, p.Pm, steps, dt);
  for (std::size_t k = 0; k <= steps; ++k) out.times.push_back(t0 + static_cast<double>(k) * dt);
  return out;
}

namespace {

DpLoss evaluate(const DpModel& model, std::span<const Segment> batch, double dt, bool want_grad) {
  ad::Tape tape;
  const TracedScalar raw_M = tape.variable(model.theta_M_raw);
  const TracedScalar raw_D = tape.variable(model.theta_D_raw);
  smib::BasicParams<TracedScalar> p;
  p.M = ad::softplus(raw_M);
  p.D = ad::softplus(raw_D);
  p.E = model.fixed.E;
  p.Vinf = model.fixed.Vinf;
  p.X = model.fixed.X;
  p.Pm = model.fixed.Pm;

  std::vector<std::vector<smib::BasicState<TracedScalar>>> pred;
  pred.reserve(batch.size());
  for (const auto& seg : batch) {
    auto states = rk4_states<TracedScalar>(p, {seg.x0.delta, seg.x0.omega}, seg.u,
                                           seg.targets.size(), dt);
    states.erase(states.begin());
    pred.push_back(std::move(states));
  }
  const std::span<const std::vector<smib::BasicState<TracedScalar>>> view(pred);
  const TracedScalar loss = segment_mse<TracedScalar>(batch, view);
  DpLoss out;
  out.loss = loss.value();
  if (want_grad) {
    const auto g = ad::backward(tape, loss);
    out.grad = {g.wrt(raw_M), g.wrt(raw_D)};
  }
  return out;
}

}  // namespace

double segment_loss(const DpModel& model, std::span<const Segment> batch, double dt) {
  return evaluate(model, batch, dt, false).loss;
}

DpLoss segment_loss_and_grad(const DpModel& model, std::span<const Segment> batch, double dt) {
  return evaluate(model, batch, dt, true);
}

DpResult identify(const SegmentSource& data, const smib::SmibParams& fixed,
                  const DpTrainConfig& cfg, std::uint64_t seed, const EpochCallback& on_epoch) {
  cfg.validate();
  DpResult res{DpModel::from_physical(fixed, cfg.init_M, cfg.init_D), {}};
  mlp::Adam adam(2, {cfg.lr});
  auto rng = make_rng(seed, Stream::segments);
  std::vector<double> losses;
  res.history.reserve(cfg.epochs + 1);
  auto evaluate = [&](std::size_t epoch, const std::vector<Segment>& batch) {
    DpLoss lg;
    try {
      lg = segment_loss_and_grad(res.model, batch, cfg.dt);
    } catch (const BlowUpError& e) {
      throw TrainingAborted(epoch, losses, std::string("DP rollout blew up: ") + e.what());
    }
    if (!std::isfinite(lg.loss) || !std::isfinite(lg.grad[0]) || !std::isfinite(lg.grad[1])) {
      throw TrainingAborted(epoch, losses,
                            "DP loss became non-finite at epoch " + std::to_string(epoch));
    }
    losses.push_back(lg.loss);
    return lg;
  };
  // Row 0 reports the loss of the first batch at the initial values.
  auto batch = sample_segments(data, cfg.n_b, cfg.m, cfg.t_train_end, rng);
  DpLoss lg = evaluate(1, batch);
  res.history.push_back({0, res.model.M(), res.model.D(), lg.loss});
  for (std::size_t epoch = 1; epoch <= cfg.epochs; ++epoch) {
    if (epoch > 1) {
      batch = sample_segments(data, cfg.n_b, cfg.m, cfg.t_train_end, rng);
      lg = evaluate(epoch, batch);
    }
    double raw[2] = {res.model.theta_M_raw, res.model.theta_D_raw};
    adam.step(raw, lg.grad);
    res.model.theta_M_raw = raw[0];
    res.model.theta_D_raw = raw[1];
    res.history.push_back({epoch, res.model.M(), res.model.D(), lg.loss});
    if (on_epoch && !on_epoch(res.history.back())) break;
  }
  return res;
}

}  // namespace swingdiff::dp
