#include "swingdiff/experiments.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <exception>
#include <fstream>
#include <functional>
#include <limits>
#include <map>
#include <thread>

#include "json.hpp"

#ifndef SWINGDIFF_VERSION
#define SWINGDIFF_VERSION "unknown"
#endif

namespace swingdiff::bench {

namespace fs = std::filesystem;
using json = nlohmann::ordered_json;

namespace {

constexpr double kThreshold = 1e-2;
constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

std::string label(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%g", v);
  return buf;
}

double rel_err(double est, double truth) { return std::abs(est - truth) / std::abs(truth); }

std::optional<std::size_t> settle_epoch(const std::vector<std::vector<double>>& history, std::size_t col,
                                        double truth) {
  std::optional<std::size_t> out;
  for (auto it = history.rbegin(); it != history.rend(); ++it) {
    if (rel_err((*it)[col], truth) > kThreshold) break;
    out = static_cast<std::size_t>((*it)[0]);
  }
  return out;
}

json to_json(const node::NodeTrainConfig& c) {
  return {{"model", "node"},        {"n_b", c.n_b},   {"m", c.m},
          {"dt", c.dt},             {"epochs", c.epochs}, {"lr", c.lr},
          {"hidden", c.hidden},     {"control_conditioned", c.control_conditioned},
          {"t_train_end", c.t_train_end}};
}

json to_json(const pinn::PinnConfig& c) {
  return {{"model", "pinn"},     {"n_c", c.n_c},       {"lambda_d", c.lambda_d},
          {"lambda_i", c.lambda_i}, {"epochs", c.epochs}, {"lr", c.lr},
          {"t0", c.t0},          {"t1", c.t1},         {"hidden", c.hidden},
          {"identify", c.identify}, {"theta_M_raw_init", c.theta_M_raw_init},
          {"theta_D_raw_init", c.theta_D_raw_init}};
}

json to_json(const dp::DpTrainConfig& c) {
  return {{"model", "dp"},        {"n_b", c.n_b},       {"m", c.m},
          {"dt", c.dt},           {"epochs", c.epochs}, {"lr", c.lr},
          {"init_M", c.init_M},   {"init_D", c.init_D}, {"t_train_end", c.t_train_end}};
}

void apply(node::NodeTrainConfig& c, const ExperimentOptions& o) {
  if (o.epochs) c.epochs = *o.epochs;
  if (o.lr) c.lr = *o.lr;
  if (o.m) c.m = *o.m;
  if (o.hidden) c.hidden = *o.hidden;
}

void apply(pinn::PinnConfig& c, const ExperimentOptions& o) {
  if (o.epochs) c.epochs = *o.epochs;
  if (o.lr) c.lr = *o.lr;
  if (o.lambda_d) c.lambda_d = *o.lambda_d;
  if (o.hidden) c.hidden = *o.hidden;
}

void apply(dp::DpTrainConfig& c, const ExperimentOptions& o) {
  if (o.epochs) c.epochs = *o.epochs;
  if (o.lr) c.lr = *o.lr;
  if (o.m) c.m = *o.m;
}

std::vector<std::vector<double>> trajectory_rows(const lqr::ClosedLoopResult& r) {
  std::vector<std::vector<double>> rows;
  for (std::size_t k = 0; k < r.trajectory.size(); ++k) {
    rows.push_back({r.trajectory.times[k], r.trajectory.states[k].delta, r.trajectory.states[k].omega,
                    r.u[k], double(r.controller_active[k]), double(r.disturbance_active[k])});
  }
  return rows;
}

const std::vector<std::string> kLoopHeader{"t", "delta", "omega", "u", "controller", "disturbance"};

void write_history(const fs::path& path, const std::vector<std::string>& header,
                   const std::vector<std::vector<double>>& rows) {
  write_csv(path, header, rows);
}

// ---- trial plumbing ----------------------------------------------------

struct Variant {
  std::string name;
  json config;
  /// Writes shared inputs (references) once, before any trial runs.
  std::function<void(const fs::path&)> prepare;
  /// Runs one seed and returns its metrics; artifacts go into `dir`.
  std::function<std::vector<std::pair<std::string, double>>(std::uint64_t, const fs::path&)> trial;
};

void write_references(const fs::path& dir, const Scenario& sc) {
  const auto ref = reference(sc);
  if (ref.size() == 1) {
    write_trajectory_csv(dir / "reference.csv", ref[0]);
    return;
  }
  for (std::size_t i = 0; i < ref.size(); ++i) {
    write_trajectory_csv(dir / ("reference-u" + label(sc.controls[i]) + ".csv"), ref[i]);
  }
}

std::vector<std::pair<std::string, double>> forward_metrics(const ForwardRun& r) {
  return {{"delta_err", r.errors.delta},
          {"omega_err", r.errors.omega},
          {"train_delta_err", r.train_errors.delta},
          {"train_omega_err", r.train_errors.omega},
          {"final_loss", r.history.empty() ? kNaN : r.history.back()[1]}};
}

std::vector<std::pair<std::string, double>> inverse_metrics(const InverseRun& r) {
  return {{"M", r.M},
          {"D", r.D},
          {"M_err", r.M_err},
          {"D_err", r.D_err},
          {"epochs_to_1pct", r.epochs_to_threshold ? double(*r.epochs_to_threshold) : kNaN},
          {"epochs_to_settle_1pct", r.epochs_to_settle ? double(*r.epochs_to_settle) : kNaN}};
}

void save_forward(const fs::path& dir, const ForwardRun& r) {
  write_trajectory_csv(dir / "prediction.csv", r.prediction);
  write_history(dir / "history.csv", r.history_header, r.history);
}

void save_inverse(const fs::path& dir, const InverseRun& r) {
  write_history(dir / "history.csv", r.history_header, r.history);
}

std::vector<Variant> forward_node_variants(const ExperimentOptions& o) {
  std::vector<Variant> out;
  const double sigma = o.sigmas.empty() ? 0.0 : o.sigmas.front();
  const auto names = o.scenarios.empty() ? std::vector<std::string>{"stable", "oscillatory"} : o.scenarios;
  for (const auto& name : names) {
    const auto sc = scenario(name);
    auto cfg = node_defaults(name, o.full);
    apply(cfg, o);
    cfg.validate();
    out.push_back({name, {{"scenario", name}, {"sigma", sigma}, {"train", to_json(cfg)}},
                   [sc](const fs::path& d) { write_references(d, sc); },
                   [sc, cfg, sigma](std::uint64_t seed, const fs::path& d) {
                     const auto r = forward_node(sc, sigma, cfg, seed);
                     save_forward(d, r);
                     return forward_metrics(r);
                   }});
  }
  return out;
}

std::vector<Variant> forward_pinn_variants(const ExperimentOptions& o) {
  std::vector<Variant> out;
  const double sigma = o.sigmas.empty() ? 0.0 : o.sigmas.front();
  const auto names = o.scenarios.empty() ? std::vector<std::string>{"stable", "oscillatory"} : o.scenarios;
  for (const auto& name : names) {
    const auto sc = scenario(name);
    auto cfg = pinn_forward_defaults(name, o.full);
    apply(cfg, o);
    cfg.validate();
    out.push_back({name, {{"scenario", name}, {"sigma", sigma}, {"train", to_json(cfg)}},
                   [sc](const fs::path& d) { write_references(d, sc); },
                   [sc, cfg, sigma](std::uint64_t seed, const fs::path& d) {
                     const auto r = forward_pinn(sc, sigma, cfg, seed);
                     save_forward(d, r);
                     return forward_metrics(r);
                   }});
  }
  return out;
}

std::vector<Variant> forward_noise_variants(const ExperimentOptions& o) {
  std::vector<Variant> out;
  const auto sigmas = o.sigmas.empty() ? std::vector<double>{0.0, 0.01, 0.05} : o.sigmas;
  const auto sc = scenario(o.scenarios.empty() ? "oscillatory" : o.scenarios.front());
  for (double sigma : sigmas) {
    auto cfg = noise_node_defaults(sigma, o.full);
    apply(cfg, o);
    cfg.validate();
    out.push_back({"sigma-" + label(sigma),
                   {{"scenario", sc.name}, {"sigma", sigma}, {"train", to_json(cfg)}},
                   [sc](const fs::path& d) { write_references(d, sc); },
                   [sc, cfg, sigma](std::uint64_t seed, const fs::path& d) {
                     const auto r = forward_node(sc, sigma, cfg, seed);
                     save_forward(d, r);
                     return forward_metrics(r);
                   }});
  }
  return out;
}

std::vector<Variant> inverse_dp_variants(const ExperimentOptions& o) {
  std::vector<Variant> out;
  const auto sigmas = o.sigmas.empty() ? std::vector<double>{0.0} : o.sigmas;
  const auto sc = scenario("oscillatory");
  for (double sigma : sigmas) {
    auto cfg = dp_defaults(sigma);
    apply(cfg, o);
    cfg.validate();
    out.push_back({"sigma-" + label(sigma),
                   {{"scenario", sc.name}, {"sigma", sigma}, {"train", to_json(cfg)}},
                   [sc](const fs::path& d) { write_references(d, sc); },
                   [sc, cfg, sigma](std::uint64_t seed, const fs::path& d) {
                     const auto r = inverse_dp(sc, sigma, cfg, seed);
                     save_inverse(d, r);
                     return inverse_metrics(r);
                   }});
  }
  return out;
}

std::vector<Variant> inverse_pinn_variants(const ExperimentOptions& o) {
  std::vector<Variant> out;
  const auto sigmas = o.sigmas.empty() ? std::vector<double>{0.0} : o.sigmas;
  const auto sc = scenario("oscillatory");
  for (double sigma : sigmas) {
    auto cfg = pinn_inverse_defaults(o.full);
    apply(cfg, o);
    cfg.validate();
    out.push_back({"sigma-" + label(sigma),
                   {{"scenario", sc.name}, {"sigma", sigma}, {"train", to_json(cfg)}},
                   [sc](const fs::path& d) { write_references(d, sc); },
                   [sc, cfg, sigma](std::uint64_t seed, const fs::path& d) {
                     const auto r = inverse_pinn(sc, sigma, cfg, seed);
                     save_inverse(d, r);
                     return inverse_metrics(r);
                   }});
  }
  return out;
}

std::vector<Variant> lambda_sweep_variants(const ExperimentOptions& o) {
  std::vector<Variant> out;
  const auto sc = scenario("oscillatory");
  const double sigma = o.sigmas.empty() ? 0.0 : o.sigmas.front();
  auto dcfg = dp_defaults(0.0);
  dcfg.lr = 1e-3;
  dcfg.epochs = 10000;
  if (o.epochs) dcfg.epochs = *o.epochs;
  if (o.lr) dcfg.lr = *o.lr;
  if (o.m) dcfg.m = *o.m;
  dcfg.validate();
  out.push_back({"dp", {{"scenario", sc.name}, {"sigma", sigma}, {"train", to_json(dcfg)}},
                 [sc](const fs::path& d) { write_references(d, sc); },
                 [sc, dcfg, sigma](std::uint64_t seed, const fs::path& d) {
                   const auto r = inverse_dp(sc, sigma, dcfg, seed);
                   save_inverse(d, r);
                   return inverse_metrics(r);
                 }});
  const auto lambdas = o.lambda_d ? std::vector<double>{*o.lambda_d} : std::vector<double>{0.0, 0.1, 0.5, 1.0};
  for (double ld : lambdas) {
    auto cfg = pinn_inverse_defaults(o.full);
    apply(cfg, o);
    cfg.lambda_d = ld;
    cfg.validate();
    out.push_back({"pinn-lambda-" + label(ld),
                   {{"scenario", sc.name}, {"sigma", sigma}, {"train", to_json(cfg)}},
                   [sc](const fs::path& d) { write_references(d, sc); },
                   [sc, cfg, sigma](std::uint64_t seed, const fs::path& d) {
                     const auto r = inverse_pinn(sc, sigma, cfg, seed);
                     save_inverse(d, r);
                     return inverse_metrics(r);
                   }});
  }
  return out;
}

std::vector<std::pair<std::string, double>> save_dp_control(const fs::path& dir, const std::string& prefix,
                                                            const DpControlRun& r) {
  write_csv(dir / (prefix + "true-gain.csv"), kLoopHeader, trajectory_rows(r.truth));
  write_csv(dir / (prefix + "dp-gain.csv"), kLoopHeader, trajectory_rows(r.dp_gain));
  write_csv(dir / (prefix + "dp-model.csv"), kLoopHeader, trajectory_rows(r.dp_model));
  return {{prefix + "K0", r.K_dp(0)},
          {prefix + "K1", r.K_dp(1)},
          {prefix + "gain_delta_err", r.gain_errors.delta},
          {prefix + "gain_omega_err", r.gain_errors.omega},
          {prefix + "model_delta_err", r.model_errors.delta},
          {prefix + "model_omega_err", r.model_errors.omega}};
}

std::vector<Variant> lqr_dp_variants(const ExperimentOptions& o) {
  const auto data_sc = scenario("oscillatory");
  const double sigma = o.sigmas.empty() ? 0.0 : o.sigmas.front();
  auto cfg = dp_defaults(sigma);
  apply(cfg, o);
  cfg.validate();
  return {{"control-dp",
           {{"scenario", "control-dp"}, {"data_scenario", data_sc.name}, {"sigma", sigma},
            {"train", to_json(cfg)}, {"injected_values", {0.1003, 0.0124}}},
           [data_sc](const fs::path& d) { write_references(d, data_sc); },
           [data_sc, cfg, sigma](std::uint64_t seed, const fs::path& d) {
             const auto id = inverse_dp(data_sc, sigma, cfg, seed);
             save_inverse(d, id);
             auto metrics = inverse_metrics(id);
             const auto run = dp_control(id.M, id.D);
             const auto a = save_dp_control(d, "", run);
             metrics.insert(metrics.end(), a.begin(), a.end());
             const auto injected = dp_control(0.1003, 0.0124);
             const auto b = save_dp_control(d, "injected-", injected);
             metrics.insert(metrics.end(), b.begin(), b.end());
             return metrics;
           }}};
}

std::vector<Variant> lqr_node_variants(const ExperimentOptions& o) {
  const auto sc = scenario("control-node");
  auto cfg = control_node_defaults(o.full);
  apply(cfg, o);
  cfg.validate();
  return {{"control-node",
           {{"scenario", sc.name}, {"train", to_json(cfg)}},
           [sc](const fs::path& d) { write_references(d, sc); },
           [cfg](std::uint64_t seed, const fs::path& d) {
             const auto r = node_control(cfg, seed);
             write_csv(d / "node-gain.csv", kLoopHeader, trajectory_rows(r.node_gain));
             write_csv(d / "true-gain.csv", kLoopHeader, trajectory_rows(r.true_gain));
             std::vector<std::vector<double>> hist;
             for (std::size_t e = 0; e < r.loss_history.size(); ++e) hist.push_back({double(e + 1), r.loss_history[e]});
             write_history(d / "history.csv", {"epoch", "loss"}, hist);
             return std::vector<std::pair<std::string, double>>{
                 {"A10", r.learned.A(1, 0)},
                 {"A11", r.learned.A(1, 1)},
                 {"B1", r.learned.B(1)},
                 {"A_err_max", r.max_A_error},
                 {"max_dev_after_4s", r.max_deviation_after_4s},
                 {"delta_err", r.errors.delta},
                 {"omega_err", r.errors.omega},
                 {"final_loss", r.loss_history.empty() ? kNaN : r.loss_history.back()}};
           }}};
}

std::vector<Variant> variants_for(const std::string& id, const ExperimentOptions& o) {
  if (id == "forward-node") return forward_node_variants(o);
  if (id == "forward-pinn") return forward_pinn_variants(o);
  if (id == "forward-noise") return forward_noise_variants(o);
  if (id == "inverse-dp") return inverse_dp_variants(o);
  if (id == "inverse-pinn") return inverse_pinn_variants(o);
  if (id == "lambda-sweep") return lambda_sweep_variants(o);
  if (id == "lqr-dp") return lqr_dp_variants(o);
  if (id == "lqr-node") return lqr_node_variants(o);
  throw Error(ErrorKind::unknown_experiment, "unknown experiment '" + id + "'");
}

/// Runs f(0..n-1) on at most `workers` threads; returns one exception slot per job.
std::vector<std::exception_ptr> parallel_jobs(std::size_t n, std::size_t workers,
                                              const std::function<void(std::size_t)>& f) {
  std::vector<std::exception_ptr> errors(n);
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t i = next++; i < n; i = next++) {
      try {
        f(i);
      } catch (...) {
        errors[i] = std::current_exception();
      }
    }
  };
  const std::size_t count = std::max<std::size_t>(1, std::min(workers, n));
  if (count == 1) {
    worker();
    return errors;
  }
  std::vector<std::jthread> pool;
  for (std::size_t i = 0; i < count; ++i) pool.emplace_back(worker);
  return errors;
}

json error_json(const std::exception_ptr& e) {
  try {
    std::rethrow_exception(e);
  } catch (const TrainingAborted& t) {
    return {{"kind", std::string(to_string(t.kind()))}, {"message", t.what()},
            {"epoch", t.epoch()}, {"loss_tail", t.loss_tail()}};
  } catch (const Error& err) {
    return {{"kind", std::string(to_string(err.kind()))}, {"message", err.what()}};
  } catch (const std::exception& ex) {
    return {{"kind", "internal"}, {"message", ex.what()}};
  }
}

json number(double v) { return std::isfinite(v) ? json(v) : json(nullptr); }

}  // namespace

// ---- defaults --------------------------------------------------------------

node::NodeTrainConfig node_defaults(const std::string& scenario_name, bool full) {
  node::NodeTrainConfig c;
  c.epochs = scenario_name == "oscillatory" ? 2000 : 1000;
  if (!full) c.hidden = kDeskHidden;
  return c;
}

node::NodeTrainConfig noise_node_defaults(double sigma, bool full) {
  node::NodeTrainConfig c;
  if (full) {
    c.m = sigma >= 0.05 ? 60 : (sigma > 0.0 ? 30 : 10);
    c.epochs = sigma >= 0.05 ? 4000 : (sigma > 0.0 ? 2000 : 1000);
    return c;
  }
  c.hidden = kDeskHidden;
  c.m = 10;
  c.epochs = 2000;
  return c;
}

pinn::PinnConfig pinn_forward_defaults(const std::string& scenario_name, bool full) {
  pinn::PinnConfig c;
  c.lambda_d = 0.0;
  c.lambda_i = 2.0;
  if (full) {
    c.epochs = scenario_name == "oscillatory" ? 200000 : 100000;
  } else {
    c.epochs = 20000;
    c.hidden = kDeskHidden;
  }
  return c;
}

pinn::PinnConfig pinn_inverse_defaults(bool full) {
  pinn::PinnConfig c;
  c.identify = true;
  c.lambda_d = 1.0;
  c.epochs = 20000;
  if (!full) c.hidden = kDeskHidden;
  return c;
}

dp::DpTrainConfig dp_defaults(double sigma) {
  dp::DpTrainConfig c;
  c.m = sigma >= 0.05 ? 60 : (sigma > 0.0 ? 30 : 10);
  c.epochs = 4000;
  c.lr = 1e-2;
  return c;
}

node::NodeTrainConfig control_node_defaults(bool full) {
  node::NodeTrainConfig c;
  c.control_conditioned = true;
  c.epochs = 2000;
  c.m = 10;
  if (!full) c.hidden = kDeskHidden;
  return c;
}

// ---- single trials ---------------------------------------------------------

std::vector<Trajectory> observe(const std::vector<Trajectory>& ref, double sigma, std::uint64_t seed) {
  std::vector<Trajectory> out;
  for (std::size_t i = 0; i < ref.size(); ++i) out.push_back(add_noise(ref[i], {sigma, seed}, i));
  return out;
}

ForwardRun forward_node(const Scenario& sc, double sigma, const node::NodeTrainConfig& cfg,
                        std::uint64_t seed) {
  const auto ref = reference(sc);
  const auto data = observe(ref, sigma, seed);
  const auto trained = node::train_node({data, sc.controls}, cfg, seed);
  ForwardRun r;
  r.prediction = node::rollout(trained.model, data[0].states[0], sc.controls[0], ref[0].size() - 1,
                               sc.grid.dt_out, sc.grid.t0);
  r.prediction.meta = {sc.name, sigma, seed};
  r.errors = trajectory_errors(r.prediction, ref[0]);
  r.train_errors = trajectory_errors(r.prediction.window(sc.train_t0, sc.train_t1),
                                     ref[0].window(sc.train_t0, sc.train_t1));
  r.history_header = {"epoch", "loss"};
  for (std::size_t e = 0; e < trained.loss_history.size(); ++e) {
    r.history.push_back({double(e + 1), trained.loss_history[e]});
  }
  return r;
}

ForwardRun forward_pinn(const Scenario& sc, double sigma, const pinn::PinnConfig& cfg,
                        std::uint64_t seed) {
  const auto ref = reference(sc);
  const auto data = observe(ref, sigma, seed);
  const auto trained = pinn::train_pinn(sc.params, data[0].states[0], data[0], cfg, seed);
  ForwardRun r;
  r.prediction = pinn::predict(trained.model, ref[0].times);
  r.prediction.meta = {sc.name, sigma, seed};
  r.errors = trajectory_errors(r.prediction, ref[0]);
  r.train_errors = trajectory_errors(r.prediction.window(sc.train_t0, sc.train_t1),
                                     ref[0].window(sc.train_t0, sc.train_t1));
  r.history_header = {"epoch", "loss"};
  for (const auto& row : trained.history) r.history.push_back({double(row.epoch), row.loss});
  return r;
}

InverseRun inverse_dp(const Scenario& sc, double sigma, const dp::DpTrainConfig& cfg, std::uint64_t seed,
                      bool stop_at_threshold) {
  const auto ref = reference(sc);
  const auto data = observe(ref, sigma, seed);
  InverseRun r;
  const auto res = dp::identify({data, sc.controls}, sc.params, cfg, seed, [&](const dp::DpHistoryRow& row) {
    if (!r.epochs_to_threshold && rel_err(row.M, sc.params.M) <= kThreshold) r.epochs_to_threshold = row.epoch;
    return !(stop_at_threshold && r.epochs_to_threshold);
  });
  r.M = res.model.M();
  r.D = res.model.D();
  r.M_err = rel_err(r.M, sc.params.M);
  r.D_err = rel_err(r.D, sc.params.D);
  r.history_header = {"epoch", "theta_M", "theta_D", "loss"};
  for (const auto& row : res.history) r.history.push_back({double(row.epoch), row.M, row.D, row.loss});
  r.epochs_to_settle = settle_epoch(r.history, 1, sc.params.M);
  return r;
}

InverseRun inverse_pinn(const Scenario& sc, double sigma, const pinn::PinnConfig& cfg,
                        std::uint64_t seed, bool stop_at_threshold,
                        std::optional<std::size_t> max_epochs) {
  const auto ref = reference(sc);
  const auto data = observe(ref, sigma, seed);
  InverseRun r;
  const auto res = pinn::train_pinn(sc.params, data[0].states[0], data[0], cfg, seed,
                                    [&](const pinn::PinnHistoryRow& row) {
                                      if (!r.epochs_to_threshold && rel_err(row.M, sc.params.M) <= kThreshold) {
                                        r.epochs_to_threshold = row.epoch;
                                      }
                                      if (max_epochs && row.epoch >= *max_epochs) return false;
                                      return !(stop_at_threshold && r.epochs_to_threshold);
                                    });
  const auto q = res.model.physics(sc.params);
  r.M = q.M;
  r.D = q.D;
  r.M_err = rel_err(r.M, sc.params.M);
  r.D_err = rel_err(r.D, sc.params.D);
  r.history_header = {"epoch", "loss", "theta_M", "theta_D"};
  for (const auto& row : res.history) r.history.push_back({double(row.epoch), row.loss, row.M, row.D});
  r.epochs_to_settle = settle_epoch(r.history, 2, sc.params.M);
  return r;
}

DpControlRun dp_control(double M, double D) {
  const auto sc = scenario("control-dp");
  const auto xs = smib::equilibrium(sc.params);
  const lqr::LqrConfig cfg;
  const lqr::DisturbanceSchedule sched;  // disturbance on [1, 2), controller from t = 5
  auto learned = sc.params;
  learned.M = M;
  learned.D = D;
  const auto sol_true = lqr::solve_care(smib::linearize(sc.params, xs), cfg);
  const auto sol_dp = lqr::solve_care(smib::linearize(learned, xs), cfg);
  DpControlRun r;
  r.K_true = sol_true.K;
  r.K_dp = sol_dp.K;
  r.truth = lqr::closed_loop_simulate(sc.params, sc.x0, xs, sol_true, sched, sc.grid);
  r.dp_gain = lqr::closed_loop_simulate(sc.params, sc.x0, xs, sol_dp, sched, sc.grid);
  r.dp_model = lqr::closed_loop_simulate(learned, sc.x0, xs, sol_dp, sched, sc.grid);
  r.gain_errors = trajectory_errors(r.dp_gain.trajectory, r.truth.trajectory);
  r.model_errors = trajectory_errors(r.dp_model.trajectory, r.truth.trajectory);
  return r;
}

lqr::DisturbanceSchedule node_control_schedule() {
  lqr::DisturbanceSchedule s;
  s.t_activate = 2.0;
  return s;
}

NodeControlRun node_control(const node::NodeTrainConfig& cfg, std::uint64_t seed) {
  const auto sc = scenario("control-node");
  const auto ref = reference(sc);
  const auto trained = node::train_node({ref, sc.controls}, cfg, seed);
  const auto xs = smib::equilibrium(sc.params);
  NodeControlRun r;
  r.loss_history = trained.loss_history;
  r.learned = node::node_linearize(trained.model, xs, sc.params.Pm);
  r.truth = smib::linearize(sc.params, xs);
  r.max_A_error = (r.learned.A - r.truth.A).cwiseAbs().maxCoeff();
  const lqr::LqrConfig lcfg;
  const auto sched = node_control_schedule();
  const auto sol_node = lqr::solve_care(r.learned, lcfg, Eigen::RowVector2d(1.0, 1.0));
  const auto sol_true = lqr::solve_care(r.truth, lcfg);
  r.node_gain = lqr::closed_loop_simulate(sc.params, xs, xs, sol_node, sched, sc.grid);
  r.true_gain = lqr::closed_loop_simulate(sc.params, xs, xs, sol_true, sched, sc.grid);
  for (std::size_t k = 0; k < r.node_gain.trajectory.size(); ++k) {
    if (r.node_gain.trajectory.times[k] < 4.0 - 1e-9) continue;
    const auto& x = r.node_gain.trajectory.states[k];
    r.max_deviation_after_4s =
        std::max({r.max_deviation_after_4s, std::abs(x.delta - xs.delta), std::abs(x.omega - xs.omega)});
  }
  r.errors = trajectory_errors(r.node_gain.trajectory, r.true_gain.trajectory);
  return r;
}

// ---- experiments -----------------------------------------------------------

std::vector<std::string> experiment_ids() {
  return {"forward-node", "forward-pinn", "forward-noise", "inverse-dp",
          "inverse-pinn", "lambda-sweep", "lqr-dp",        "lqr-node"};
}

std::string version() { return SWINGDIFF_VERSION; }

ExperimentReport run_experiment(const std::string& id, const ExperimentOptions& opts) {
  const auto start = std::chrono::steady_clock::now();
  const auto variants = variants_for(id, opts);
  if (opts.seeds.empty()) throw Error(ErrorKind::invalid_argument, "benchmark needs at least one seed");

  ExperimentReport rep;
  rep.id = id;
  const fs::path root = opts.out / id;
  fs::create_directories(root);
  for (const auto& v : variants) {
    fs::create_directories(root / v.name);
    v.prepare(root / v.name);
  }

  const std::size_t n_seeds = opts.seeds.size();
  const std::size_t n_jobs = variants.size() * n_seeds;
  rep.trials.resize(n_jobs);
  const std::size_t workers = opts.workers ? opts.workers : std::max(1u, std::thread::hardware_concurrency());
  const auto errors = parallel_jobs(n_jobs, workers, [&](std::size_t j) {
    const auto& v = variants[j / n_seeds];
    const std::uint64_t seed = opts.seeds[j % n_seeds];
    const fs::path dir = root / v.name / ("seed-" + std::to_string(seed));
    fs::create_directories(dir);
    rep.trials[j] = {v.name, seed, v.trial(seed, dir), dir};
  });

  // Per-trial table, then aggregates per variant and metric.
  std::vector<std::string> metric_names;
  for (std::size_t j = 0; j < n_jobs; ++j) {
    for (const auto& [k, _] : rep.trials[j].metrics) {
      if (std::find(metric_names.begin(), metric_names.end(), k) == metric_names.end()) metric_names.push_back(k);
    }
  }
  {
    std::ofstream os(root / "trials.csv", std::ios::binary);
    if (!os) throw Error(ErrorKind::io, "cannot write " + (root / "trials.csv").string());
    os << "variant,seed";
    for (const auto& k : metric_names) os << ',' << k;
    os << '\n';
    for (std::size_t j = 0; j < n_jobs; ++j) {
      if (errors[j]) continue;
      const auto& t = rep.trials[j];
      os << t.variant << ',' << t.seed;
      for (const auto& k : metric_names) {
        const auto it = std::find_if(t.metrics.begin(), t.metrics.end(), [&](const auto& p) { return p.first == k; });
        os << ',' << (it == t.metrics.end() ? std::string("nan") : format_double(it->second));
      }
      os << '\n';
    }
  }

  json manifest;
  manifest["experiment"] = id;
  manifest["version"] = version();
  manifest["full"] = opts.full;
  manifest["seeds"] = opts.seeds;
  manifest["noise_model"] = "multiplicative, independent per component and sample";
  manifest["variants"] = json::array();
  std::size_t first_error = n_jobs;
  for (std::size_t vi = 0; vi < variants.size(); ++vi) {
    const auto& v = variants[vi];
    json jv;
    jv["name"] = v.name;
    jv["config"] = v.config;
    jv["trials"] = json::array();
    VariantSummary summary{v.name, {}};
    std::map<std::string, std::vector<double>> samples;
    for (std::size_t s = 0; s < n_seeds; ++s) {
      const std::size_t j = vi * n_seeds + s;
      json jt;
      jt["seed"] = opts.seeds[s];
      if (errors[j]) {
        jt["error"] = error_json(errors[j]);
        first_error = std::min(first_error, j);
      } else {
        jt["dir"] = fs::relative(rep.trials[j].dir, root).generic_string();
        json jm = json::object();
        for (const auto& [k, val] : rep.trials[j].metrics) {
          jm[k] = number(val);
          if (std::isfinite(val)) samples[k].push_back(val);
        }
        jt["metrics"] = jm;
      }
      jv["trials"].push_back(jt);
    }
    json ja = json::object();
    for (const auto& k : metric_names) {
      const auto it = samples.find(k);
      if (it == samples.end() || it->second.empty()) continue;
      const auto a = aggregate(it->second);
      summary.metrics.emplace_back(k, a);
      ja[k] = {{"min", a.min}, {"average", a.average}, {"max", a.max}, {"std", a.std}, {"count", it->second.size()}};
    }
    jv["aggregates"] = ja;
    manifest["variants"].push_back(jv);
    rep.summaries.push_back(std::move(summary));
  }
  rep.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  manifest["wall_seconds"] = rep.wall_seconds;
  rep.manifest = root / "manifest.json";
  {
    std::ofstream os(rep.manifest, std::ios::binary);
    os << manifest.dump(2) << '\n';
    if (!os) throw Error(ErrorKind::io, "cannot write " + rep.manifest.string());
  }
  if (first_error < n_jobs) std::rethrow_exception(errors[first_error]);
  return rep;
}

}  // namespace swingdiff::bench
