// swingdiff command-line front end. Every subcommand prints one JSON document
// on stdout; failures print {"error": {...}} and exit nonzero.

#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"
#include "swingdiff/experiments.hpp"

namespace fs = std::filesystem;
using json = nlohmann::ordered_json;
using namespace swingdiff;

namespace {

struct Flags {
  std::string scenario;
  std::vector<double> sigmas;
  std::vector<std::uint64_t> seeds;
  std::size_t epochs = 0;
  double lr = 0.0;
  std::size_t m = 0;
  double lambda_d = 0.0;
  std::vector<std::size_t> hidden;
  bool full = false;
  std::string out = "results";
  std::size_t workers = 0;
  std::string config;
};

struct Options {
  CLI::Option* scenario = nullptr;
  CLI::Option* sigma = nullptr;
  CLI::Option* seeds = nullptr;
  CLI::Option* epochs = nullptr;
  CLI::Option* lr = nullptr;
  CLI::Option* m = nullptr;
  CLI::Option* lambda_d = nullptr;
  CLI::Option* hidden = nullptr;
  CLI::Option* full = nullptr;
  CLI::Option* out = nullptr;
  CLI::Option* workers = nullptr;
};

void add_common(CLI::App* app, Flags& f, Options& o) {
  o.scenario = app->add_option("--scenario", f.scenario, "stable, oscillatory, control-node or control-dp");
  o.sigma = app->add_option("--sigma", f.sigmas, "relative noise level(s)");
  o.seeds = app->add_option("--seeds", f.seeds, "trial seeds");
  o.epochs = app->add_option("--epochs", f.epochs, "training epochs");
  o.lr = app->add_option("--lr", f.lr, "Adam learning rate");
  o.m = app->add_option("--m", f.m, "segment length in steps (NODE, DP)");
  o.lambda_d = app->add_option("--lambda-d", f.lambda_d, "PINN data-loss weight");
  o.hidden = app->add_option("--hidden", f.hidden, "hidden layer widths");
  o.full = app->add_flag("--full", f.full, "original (long) hyperparameters");
  o.out = app->add_option("--out", f.out, "output directory");
  o.workers = app->add_option("--workers", f.workers, "parallel trials (0: hardware threads)");
  app->add_option("--config", f.config, "JSON file with the same keys; flags win");
}

/// Config-file values fill every flag the command line left unset.
bench::ExperimentOptions resolve(const Flags& f, const Options& o) {
  json cfg = json::object();
  if (!f.config.empty()) {
    std::ifstream is(f.config);
    if (!is) throw Error(ErrorKind::io, "cannot read config " + f.config);
    try {
      cfg = json::parse(is);
    } catch (const json::exception& e) {
      throw Error(ErrorKind::invalid_argument, std::string("bad config JSON: ") + e.what());
    }
    if (!cfg.is_object()) throw Error(ErrorKind::invalid_argument, "config must be a JSON object");
  }
  auto pick = [&](CLI::Option* opt, const char* key, auto flag_value) {
    using T = decltype(flag_value);
    std::optional<T> v;
    if (opt->count() > 0) {
      v = flag_value;
    } else if (cfg.contains(key)) {
      try {
        v = cfg[key].get<T>();
      } catch (const json::exception&) {
        throw Error(ErrorKind::invalid_argument, std::string("config key '") + key + "' has the wrong type");
      }
    }
    return v;
  };

  bench::ExperimentOptions out;
  if (auto v = pick(o.scenario, "scenario", f.scenario)) out.scenarios = {*v};
  if (o.sigma->count() == 0 && cfg.contains("sigma") && cfg["sigma"].is_number()) {
    out.sigmas = {cfg["sigma"].get<double>()};
  } else if (auto v = pick(o.sigma, "sigma", f.sigmas)) {
    out.sigmas = *v;
  }
  out.seeds = pick(o.seeds, "seeds", f.seeds).value_or(std::vector<std::uint64_t>{1});
  out.epochs = pick(o.epochs, "epochs", f.epochs);
  out.lr = pick(o.lr, "lr", f.lr);
  out.m = pick(o.m, "m", f.m);
  out.lambda_d = pick(o.lambda_d, "lambda_d", f.lambda_d);
  out.hidden = pick(o.hidden, "hidden", f.hidden);
  out.full = pick(o.full, "full", f.full).value_or(false);
  out.out = pick(o.out, "out", f.out).value_or("results");
  out.workers = pick(o.workers, "workers", f.workers).value_or(0);
  return out;
}

json summary(const bench::ExperimentReport& r) {
  json j;
  j["experiment"] = r.id;
  j["manifest"] = r.manifest.string();
  j["wall_seconds"] = r.wall_seconds;
  json vs = json::object();
  for (const auto& s : r.summaries) {
    json ms = json::object();
    for (const auto& [k, a] : s.metrics) {
      ms[k] = {{"min", a.min}, {"average", a.average}, {"max", a.max}, {"std", a.std}};
    }
    vs[s.variant] = ms;
  }
  j["variants"] = vs;
  return j;
}

json simulate(const bench::ExperimentOptions& o) {
  const auto sc = bench::scenario(o.scenarios.empty() ? "stable" : o.scenarios.front());
  const auto ref = bench::reference(sc);
  const fs::path dir = o.out / "simulate" / sc.name;
  fs::create_directories(dir);
  json files = json::array();
  const double sigma = o.sigmas.empty() ? 0.0 : o.sigmas.front();
  for (std::size_t i = 0; i < ref.size(); ++i) {
    const std::string tag = ref.size() > 1 ? "-u" + bench::format_double(sc.controls[i]) : "";
    const auto clean = dir / ("reference" + tag + ".csv");
    bench::write_trajectory_csv(clean, ref[i]);
    files.push_back(clean.string());
    if (sigma > 0.0) {
      for (std::uint64_t seed : o.seeds) {
        const auto noisy = dir / ("noisy" + tag + "-seed-" + std::to_string(seed) + ".csv");
        bench::write_trajectory_csv(noisy, bench::add_noise(ref[i], {sigma, seed}, i));
        files.push_back(noisy.string());
      }
    }
  }
  const auto& last = ref.front().states.back();
  return {{"scenario", sc.name}, {"samples", ref.front().size()}, {"files", files},
          {"final_state", {last.delta, last.omega}}};
}

json lqr_injected(const bench::ExperimentOptions& o, double M, double D) {
  const auto r = bench::dp_control(M, D);
  const fs::path dir = o.out / "lqr-run" / ("M-" + bench::format_double(M) + "-D-" + bench::format_double(D));
  fs::create_directories(dir);
  const std::vector<std::string> header{"t", "delta", "omega", "u"};
  auto rows = [](const lqr::ClosedLoopResult& c) {
    std::vector<std::vector<double>> out;
    for (std::size_t k = 0; k < c.trajectory.size(); ++k) {
      out.push_back({c.trajectory.times[k], c.trajectory.states[k].delta, c.trajectory.states[k].omega, c.u[k]});
    }
    return out;
  };
  bench::write_csv(dir / "true-gain.csv", header, rows(r.truth));
  bench::write_csv(dir / "dp-gain.csv", header, rows(r.dp_gain));
  bench::write_csv(dir / "dp-model.csv", header, rows(r.dp_model));
  return {{"M", M},
          {"D", D},
          {"K_true", {r.K_true(0), r.K_true(1)}},
          {"K", {r.K_dp(0), r.K_dp(1)}},
          {"gain_errors", {{"delta", r.gain_errors.delta}, {"omega", r.gain_errors.omega}}},
          {"model_errors", {{"delta", r.model_errors.delta}, {"omega", r.model_errors.omega}}},
          {"dir", dir.string()}};
}

json error_json(std::string_view kind, const std::string& message) {
  return {{"error", {{"kind", kind}, {"message", message}}}};
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"PINN, NODE and differentiable-programming models of the SMIB swing equation"};
  app.require_subcommand(1);

  Flags f;
  struct Command {
    CLI::App* app;
    Options opts;
    std::string experiment;  // empty for commands with their own handler
  };
  std::vector<Command> commands;
  auto add = [&](const std::string& name, const std::string& help, const std::string& experiment) {
    Command c{app.add_subcommand(name, help), {}, experiment};
    add_common(c.app, f, c.opts);
    commands.push_back(c);
    return commands.back().app;
  };
  add("simulate", "write dopri5 reference (and noisy) trajectories", "");
  add("train-node", "fit a neural ODE and report forward errors", "forward-node");
  add("train-pinn", "fit a forward PINN and report forward errors", "forward-pinn");
  add("identify-dp", "identify M and D with the differentiable solver", "inverse-dp");
  add("identify-pinn", "identify M and D with an inverse PINN", "inverse-pinn");
  auto* lqr_cmd = add("lqr-run", "closed-loop LQR on control-dp or control-node", "");
  std::optional<double> inj_M, inj_D;
  lqr_cmd->add_option("--M", inj_M, "use this M instead of identifying it (control-dp)");
  lqr_cmd->add_option("--D", inj_D, "use this D instead of identifying it (control-dp)");
  std::string bench_id;
  auto* bench_cmd = add("benchmark", "run a full experiment over seeds", "");
  bench_cmd->add_option("experiment", bench_id, "experiment id")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::cout << error_json("invalid_argument", e.what()).dump() << '\n';
    return 2;
  }

  try {
    for (const auto& c : commands) {
      if (!c.app->parsed()) continue;
      auto opts = resolve(f, c.opts);
      const std::string name = c.app->get_name();
      json result;
      if (name == "simulate") {
        result = simulate(opts);
      } else if (name == "benchmark") {
        result = summary(bench::run_experiment(bench_id, opts));
      } else if (name == "lqr-run") {
        const std::string sc = opts.scenarios.empty() ? "control-dp" : opts.scenarios.front();
        opts.scenarios.clear();
        if (sc == "control-node") {
          result = summary(bench::run_experiment("lqr-node", opts));
        } else if (sc != "control-dp") {
          throw Error(ErrorKind::invalid_argument, "lqr-run needs --scenario control-dp or control-node");
        } else if (inj_M || inj_D) {
          if (!inj_M || !inj_D) throw Error(ErrorKind::invalid_argument, "--M and --D go together");
          result = lqr_injected(opts, *inj_M, *inj_D);
        } else {
          result = summary(bench::run_experiment("lqr-dp", opts));
        }
      } else {
        if (name == "identify-dp" || name == "identify-pinn") opts.scenarios.clear();
        result = summary(bench::run_experiment(c.experiment, opts));
      }
      std::cout << result.dump(2) << '\n';
    }
  } catch (const TrainingAborted& e) {
    json j = error_json(to_string(e.kind()), e.what());
    j["error"]["epoch"] = e.epoch();
    j["error"]["loss_tail"] = e.loss_tail();
    std::cout << j.dump() << '\n';
    return 1;
  } catch (const Error& e) {
    std::cout << error_json(to_string(e.kind()), e.what()).dump() << '\n';
    return 1;
  } catch (const std::exception& e) {
    std::cout << error_json("internal", e.what()).dump() << '\n';
    return 1;
  }
  return 0;
}
