#pragma once

// Scenario registry, measurement noise, error metrics and CSV serialization
// shared by the experiment runners and the CLI.

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "swingdiff/integrate.hpp"
#include "swingdiff/smib.hpp"
#include "swingdiff/trajectory.hpp"

namespace swingdiff::bench {

struct Scenario {
  std::string name;
  smib::SmibParams params;
  /// Mechanical power of each recorded trajectory. Single-trajectory
  /// scenarios hold just params.Pm.
  std::vector<double> controls;
  smib::State x0;
  ode::TimeGrid grid;
  double train_t0 = 0.0;
  double train_t1 = 10.0;
};

/// "stable", "oscillatory", "control-node" or "control-dp". Throws
/// `invalid_argument` for any other name.
Scenario scenario(std::string_view name);
std::vector<std::string> scenario_names();

/// dopri5 reference trajectories at the default tolerances, one per control.
std::vector<Trajectory> reference(const Scenario& sc);

struct NoiseModel {
  double sigma = 0.0;
  std::uint64_t seed = 0;
};

/// x (1 + eps) with eps ~ N(0, sigma^2) drawn independently per component and
/// sample. sigma = 0 returns the input unchanged. `counter` separates the
/// draws for several trajectories under one seed.
Trajectory add_noise(const Trajectory& traj, const NoiseModel& nm, std::uint64_t counter = 0);

/// |pred - ref|_2 / |ref|_2. Throws on length mismatch or zero reference.
double rel_l2(std::span<const double> pred, std::span<const double> ref);

struct StateErrors {
  double delta = 0.0;
  double omega = 0.0;
};

StateErrors trajectory_errors(const Trajectory& pred, const Trajectory& ref);

struct Aggregate {
  double min = 0.0;
  double average = 0.0;
  double max = 0.0;
  double std = 0.0;  // population standard deviation
};

/// Throws `invalid_argument` on an empty sample.
Aggregate aggregate(std::span<const double> values);

// ---- CSV ----------------------------------------------------------------

/// Shortest-form formatting with 17 significant digits.
std::string format_double(double v);

/// `t,delta,omega` header plus one row per sample.
void write_trajectory_csv(const std::filesystem::path& path, const Trajectory& traj);
Trajectory read_trajectory_csv(const std::filesystem::path& path);

/// Generic numeric table with a header row.
void write_csv(const std::filesystem::path& path, const std::vector<std::string>& header,
               const std::vector<std::vector<double>>& rows);

}  // namespace swingdiff::bench
