#pragma once

// Experiment runners behind the `benchmark` CLI command. Each experiment is a
// set of variants (scenario, noise level or loss weight) crossed with seeds;
// every (variant, seed) trial is independent and writes into its own
// directory, and a manifest plus a per-trial metrics table summarise the run.

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "swingdiff/bench.hpp"
#include "swingdiff/dpident.hpp"
#include "swingdiff/lqr.hpp"
#include "swingdiff/node.hpp"
#include "swingdiff/pinn.hpp"

namespace swingdiff::bench {

/// Network widths used when `full` is off.
inline const std::vector<std::size_t> kDeskHidden{64, 64, 64, 32};

/// Overrides on top of the per-experiment defaults. Unset fields keep the
/// default of the chosen scale (`full` selects the original hyperparameters).
struct ExperimentOptions {
  std::vector<std::uint64_t> seeds;
  std::vector<std::string> scenarios;
  std::vector<double> sigmas;
  std::optional<std::size_t> epochs;
  std::optional<double> lr;
  std::optional<std::size_t> m;
  std::optional<double> lambda_d;
  std::optional<std::vector<std::size_t>> hidden;
  bool full = false;
  std::filesystem::path out = "results";
  std::size_t workers = 0;  // 0: one per hardware thread
};

// ---- defaults --------------------------------------------------------------

node::NodeTrainConfig node_defaults(const std::string& scenario, bool full);
/// Noise-study NODE config. At full scale m and epochs grow with sigma; at
/// desk scale every sigma shares one config.
node::NodeTrainConfig noise_node_defaults(double sigma, bool full);
pinn::PinnConfig pinn_forward_defaults(const std::string& scenario, bool full);
pinn::PinnConfig pinn_inverse_defaults(bool full);
dp::DpTrainConfig dp_defaults(double sigma);
node::NodeTrainConfig control_node_defaults(bool full);

// ---- single trials ---------------------------------------------------------

/// Noisy copies of every reference trajectory of a scenario, one noise
/// counter per trajectory.
std::vector<Trajectory> observe(const std::vector<Trajectory>& ref, double sigma, std::uint64_t seed);

struct ForwardRun {
  Trajectory prediction;
  StateErrors errors;  // full horizon, against the clean reference
  StateErrors train_errors;
  std::vector<std::string> history_header;
  std::vector<std::vector<double>> history;
};

ForwardRun forward_node(const Scenario& sc, double sigma, const node::NodeTrainConfig& cfg,
                        std::uint64_t seed);
ForwardRun forward_pinn(const Scenario& sc, double sigma, const pinn::PinnConfig& cfg,
                        std::uint64_t seed);

struct InverseRun {
  double M = 0.0;
  double D = 0.0;
  double M_err = 0.0;  // relative to the true value
  double D_err = 0.0;
  /// First epoch whose M relative error is <= 1e-2.
  std::optional<std::size_t> epochs_to_threshold;
  /// First epoch from which the M relative error stays <= 1e-2 up to the
  /// last recorded epoch; empty when the final error is above it.
  std::optional<std::size_t> epochs_to_settle;
  std::vector<std::string> history_header;
  std::vector<std::vector<double>> history;
};

/// Identification on oscillatory-type data of `sc`. `stop_at_threshold`
/// ends training once M is within 1e-2.
InverseRun inverse_dp(const Scenario& sc, double sigma, const dp::DpTrainConfig& cfg, std::uint64_t seed,
                      bool stop_at_threshold = false);
InverseRun inverse_pinn(const Scenario& sc, double sigma, const pinn::PinnConfig& cfg,
                        std::uint64_t seed, bool stop_at_threshold = false,
                        std::optional<std::size_t> max_epochs = std::nullopt);

/// Closed-loop comparison for DP-identified (M, D) on the control-dp setup.
struct DpControlRun {
  lqr::ClosedLoopResult truth;      // true plant, true gain
  lqr::ClosedLoopResult dp_gain;    // true plant, gain from the identified model
  lqr::ClosedLoopResult dp_model;   // identified model as plant, its own gain
  StateErrors gain_errors;   // dp_gain vs truth
  StateErrors model_errors;  // dp_model vs truth
  Eigen::RowVector2d K_true;
  Eigen::RowVector2d K_dp;
};

DpControlRun dp_control(double M, double D);

struct NodeControlRun {
  smib::LinearModel learned;
  smib::LinearModel truth;
  lqr::ClosedLoopResult node_gain;  // true plant, gain from the NODE Jacobian
  lqr::ClosedLoopResult true_gain;
  double max_A_error = 0.0;
  double max_deviation_after_4s = 0.0;  // inf-norm of x - x* over t >= 4
  StateErrors errors;                   // node_gain vs true_gain
  std::vector<double> loss_history;
};

NodeControlRun node_control(const node::NodeTrainConfig& cfg, std::uint64_t seed);

/// Control-node disturbance timing: controller switched on at t = 2.
lqr::DisturbanceSchedule node_control_schedule();

// ---- experiments -----------------------------------------------------------

struct TrialResult {
  std::string variant;
  std::uint64_t seed = 0;
  std::vector<std::pair<std::string, double>> metrics;
  std::filesystem::path dir;
};

struct VariantSummary {
  std::string variant;
  std::vector<std::pair<std::string, Aggregate>> metrics;
};

struct ExperimentReport {
  std::string id;
  std::vector<TrialResult> trials;
  std::vector<VariantSummary> summaries;
  double wall_seconds = 0.0;
  std::filesystem::path manifest;
};

std::vector<std::string> experiment_ids();

/// Runs every (variant, seed) trial on a bounded worker pool and writes
///   <out>/<id>/<variant>/reference*.csv
///   <out>/<id>/<variant>/seed-<s>/...
///   <out>/<id>/trials.csv and <out>/<id>/manifest.json.
/// Throws `unknown_experiment` for an unknown id and `invalid_argument` for an
/// empty seed list. A failing trial is rethrown after the manifest records it.
ExperimentReport run_experiment(const std::string& id, const ExperimentOptions& opts);

/// Version string recorded in manifests.
std::string version();

}  // namespace swingdiff::bench
