#include "swingdiff/pinn.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <string>

#include "swingdiff/random.hpp"

namespace swingdiff::pinn {

using ad::TracedScalar;

void PinnConfig::validate() const {
  if (n_c < 1) throw Error(ErrorKind::invalid_argument, "n_c must be >= 1");
  if (!(lambda_d >= 0.0) || !(lambda_i >= 0.0)) {
    throw Error(ErrorKind::invalid_argument, "loss weights must be >= 0");
  }
  if (!(t1 > t0)) throw Error(ErrorKind::invalid_argument, "PINN domain needs t1 > t0");
  if (!(lr > 0.0)) throw Error(ErrorKind::invalid_argument, "learning rate must be > 0");
  net_config().validate();
}

smib::SmibParams PinnModel::physics(const smib::SmibParams& p) const {
  smib::SmibParams q = p;
  if (raw) {
    q.M = ad::softplus((*raw)[0]);
    q.D = ad::softplus((*raw)[1]);
  }
  return q;
}

PinnModel make_model(const PinnConfig& cfg, std::uint64_t seed) {
  cfg.validate();
  PinnModel m{mlp::init(cfg.net_config(), seed), std::nullopt};
  if (cfg.identify) m.raw = std::array<double, 2>{cfg.theta_M_raw_init, cfg.theta_D_raw_init};
  return m;
}

namespace {

std::vector<TracedScalar> constants(std::span<const double> v) { return {v.begin(), v.end()}; }

struct Terms {
  bool physics = true;
  bool data = false;
  bool initial = false;
};

PinnGrad evaluate(const PinnModel& model, const smib::SmibParams& p,
                  std::span<const double> collocation, const Trajectory* data,
                  const smib::State& x0, double t_ic, double lambda_d, double lambda_i,
                  Terms terms, bool want_grad) {
  ad::Tape tape;
  const auto net = mlp::trace(tape, model.net);
  TracedScalar M = p.M, D = p.D, raw_M, raw_D;
  if (model.raw) {
    raw_M = tape.variable((*model.raw)[0]);
    raw_D = tape.variable((*model.raw)[1]);
    M = ad::softplus(raw_M);
    D = ad::softplus(raw_D);
  }
  const double b = p.b();
  TracedScalar loss = 0.0;

  if (terms.physics && !collocation.empty()) {
    const auto out = mlp::forward_fused(tape, net, constants(collocation), collocation.size(), 0);
    TracedScalar sum = 0.0;
    for (std::size_t i = 0; i < collocation.size(); ++i) {
      const auto& d = out.y[2 * i];
      const auto& w = out.y[2 * i + 1];
      const TracedScalar r1 = out.ydot[2 * i] - w;
      const TracedScalar r2 = out.ydot[2 * i + 1] - (p.Pm - b * ad::sin(d) - D * w) / M;
      sum = sum + r1 * r1 + r2 * r2;
    }
    loss = loss + sum / static_cast<double>(collocation.size());
  }
  if (terms.data && data != nullptr && data->size() > 0) {
    const auto out = mlp::forward_fused(tape, net, constants(data->times), data->size());
    TracedScalar sum = 0.0;
    for (std::size_t i = 0; i < data->size(); ++i) {
      const TracedScalar e1 = out.y[2 * i] - data->states[i].delta;
      const TracedScalar e2 = out.y[2 * i + 1] - data->states[i].omega;
      sum = sum + e1 * e1 + e2 * e2;
    }
    loss = loss + lambda_d * (sum / static_cast<double>(data->size()));
  }
  if (terms.initial) {
    const double t[1] = {t_ic};
    const auto out = mlp::forward_fused(tape, net, constants(t), 1);
    const TracedScalar e1 = out.y[0] - x0.delta;
    const TracedScalar e2 = out.y[1] - x0.omega;
    loss = loss + lambda_i * (e1 * e1 + e2 * e2);
  }

  PinnGrad g;
  g.loss = loss.value();
  if (want_grad) {
    const auto grad = ad::backward(tape, loss);
    g.net = grad.wrt(net.params);
    if (model.raw) g.raw = {grad.wrt(raw_M), grad.wrt(raw_D)};
  }
  return g;
}

}  // namespace

double physics_loss(const PinnModel& model, const smib::SmibParams& p,
                    std::span<const double> collocation) {
  return evaluate(model, p, collocation, nullptr, {}, 0.0, 0.0, 0.0, {true, false, false}, false)
      .loss;
}

double total_loss(const PinnModel& model, const smib::SmibParams& p,
                  std::span<const double> collocation, const Trajectory& data,
                  const smib::State& x0, const PinnConfig& cfg) {
  const Terms terms{true, cfg.lambda_d > 0.0, cfg.lambda_i > 0.0};
  return evaluate(model, p, collocation, &data, x0, cfg.t0, cfg.lambda_d, cfg.lambda_i, terms, false)
      .loss;
}

PinnGrad total_loss_and_grad(const PinnModel& model, const smib::SmibParams& p,
                             std::span<const double> collocation, const Trajectory& data,
                             const smib::State& x0, const PinnConfig& cfg) {
  const Terms terms{true, cfg.lambda_d > 0.0, cfg.lambda_i > 0.0};
  return evaluate(model, p, collocation, &data, x0, cfg.t0, cfg.lambda_d, cfg.lambda_i, terms, true);
}

PinnResult train_pinn(const smib::SmibParams& p, const smib::State& x0, const Trajectory& data,
                      const PinnConfig& cfg, std::uint64_t seed, const EpochCallback& on_epoch) {
  cfg.validate();
  const Trajectory window = data.window(cfg.t0, cfg.t1);
  PinnResult res{make_model(cfg, seed), {}};
  const std::size_t n_net = res.model.net.size();
  const std::size_t n_all = n_net + (cfg.identify ? 2 : 0);
  mlp::Adam adam(n_all, {cfg.lr});
  auto rng = make_rng(seed, Stream::collocation);
  std::uniform_real_distribution<double> uni(cfg.t0, cfg.t1);
  std::vector<double> colloc(cfg.n_c);
  std::vector<double> flat(n_all), grad(n_all);
  std::vector<double> losses;
  res.history.reserve(cfg.epochs + 1);
  auto current = [&](std::size_t epoch, double loss) {
    const auto q = res.model.physics(p);
    return PinnHistoryRow{epoch, loss, q.M, q.D};
  };

  auto evaluate_epoch = [&](std::size_t epoch) {
    for (auto& t : colloc) t = uni(rng);
    PinnGrad g = total_loss_and_grad(res.model, p, colloc, window, x0, cfg);
    if (!std::isfinite(g.loss)) {
      throw TrainingAborted(epoch, losses,
                            "PINN loss became non-finite at epoch " + std::to_string(epoch));
    }
    losses.push_back(g.loss);
    return g;
  };

  // Row 0 reports the loss of the first collocation draw at the initial values.
  PinnGrad g = evaluate_epoch(1);
  res.history.push_back(current(0, g.loss));
  for (std::size_t epoch = 1; epoch <= cfg.epochs; ++epoch) {
    if (epoch > 1) g = evaluate_epoch(epoch);

    auto net_flat = res.model.net.flat();
    std::copy(net_flat.begin(), net_flat.end(), flat.begin());
    std::copy(g.net.begin(), g.net.end(), grad.begin());
    if (cfg.identify) {
      flat[n_net] = (*res.model.raw)[0];
      flat[n_net + 1] = (*res.model.raw)[1];
      grad[n_net] = g.raw[0];
      grad[n_net + 1] = g.raw[1];
    }
    adam.step(flat, grad);
    std::copy(flat.begin(), flat.begin() + static_cast<std::ptrdiff_t>(n_net), net_flat.begin());
    if (cfg.identify) res.model.raw = std::array<double, 2>{flat[n_net], flat[n_net + 1]};

    res.history.push_back(current(epoch, g.loss));
    if (on_epoch && !on_epoch(res.history.back())) break;
  }
  return res;
}

Trajectory predict(const PinnModel& model, std::span<const double> times) {
  Eigen::MatrixXd in(1, static_cast<Eigen::Index>(times.size()));
  for (std::size_t i = 0; i < times.size(); ++i) in(0, static_cast<Eigen::Index>(i)) = times[i];
  const auto r = mlp::batch_forward(model.net, in);
  Trajectory out;
  out.times.assign(times.begin(), times.end());
  out.states.reserve(times.size());
  for (Eigen::Index i = 0; i < r.y.cols(); ++i) out.states.push_back({r.y(0, i), r.y(1, i)});
  return out;
}

}  // namespace swingdiff::pinn
