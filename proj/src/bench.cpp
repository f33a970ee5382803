#include "swingdiff/bench.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <random>
#include <sstream>

#include "swingdiff/random.hpp"

namespace swingdiff::bench {

namespace {

smib::SmibParams params(double M, double D, double E, double Vinf, double X, double Pm) {
  smib::SmibParams p;
  p.M = M;
  p.D = D;
  p.E = E;
  p.Vinf = Vinf;
  p.X = X;
  p.Pm = Pm;
  return p;
}

}  // namespace

Scenario scenario(std::string_view name) {
  Scenario sc;
  sc.name = std::string(name);
  sc.x0 = {0.1, 0.1};
  sc.grid = {0.0, 20.0, 0.02};
  if (name == "stable") {
    sc.params = params(0.4, 0.2, 1.0, 1.0, 5.0, 0.1);
  } else if (name == "oscillatory" || name == "control-dp") {
    sc.params = params(0.1, 0.01, 5.0, 1.0, 5.0, 0.5);
  } else if (name == "control-node") {
    sc.params = params(0.2, 0.1, 1.0, 1.0, 2.0, 0.3);
    sc.controls = {0.1, 0.2, 0.3, 0.4};
  } else {
    throw Error(ErrorKind::invalid_argument, "unknown scenario '" + std::string(name) + "'");
  }
  if (sc.controls.empty()) sc.controls = {sc.params.Pm};
  // The DP control study starts at the synchronous equilibrium.
  if (name == "control-dp") sc.x0 = smib::equilibrium(sc.params);
  return sc;
}

std::vector<std::string> scenario_names() {
  return {"stable", "oscillatory", "control-node", "control-dp"};
}

std::vector<Trajectory> reference(const Scenario& sc) {
  std::vector<Trajectory> out;
  for (double u : sc.controls) {
    auto p = sc.params;
    p.Pm = u;
    auto tr = smib::simulate(p, sc.x0, sc.grid);
    tr.meta.scenario = sc.name;
    out.push_back(std::move(tr));
  }
  return out;
}

Trajectory add_noise(const Trajectory& traj, const NoiseModel& nm, std::uint64_t counter) {
  if (!(nm.sigma >= 0.0)) throw Error(ErrorKind::invalid_argument, "noise sigma must be >= 0");
  Trajectory out = traj;
  out.meta.sigma = nm.sigma;
  out.meta.seed = nm.seed;
  if (nm.sigma == 0.0) return out;
  auto rng = make_rng(nm.seed, Stream::noise, counter);
  std::normal_distribution<double> eps(0.0, nm.sigma);
  for (auto& s : out.states) {
    s.delta *= 1.0 + eps(rng);
    s.omega *= 1.0 + eps(rng);
  }
  return out;
}

double rel_l2(std::span<const double> pred, std::span<const double> ref) {
  if (pred.size() != ref.size()) {
    throw Error(ErrorKind::dimension_mismatch, "rel_l2: series differ in length");
  }
  double num = 0.0, den = 0.0;
  for (std::size_t i = 0; i < ref.size(); ++i) {
    num += (pred[i] - ref[i]) * (pred[i] - ref[i]);
    den += ref[i] * ref[i];
  }
  if (!(den > 0.0)) throw Error(ErrorKind::invalid_argument, "rel_l2: reference has zero norm");
  return std::sqrt(num / den);
}

StateErrors trajectory_errors(const Trajectory& pred, const Trajectory& ref) {
  return {rel_l2(pred.deltas(), ref.deltas()), rel_l2(pred.omegas(), ref.omegas())};
}

Aggregate aggregate(std::span<const double> values) {
  if (values.empty()) throw Error(ErrorKind::invalid_argument, "aggregate of an empty sample");
  Aggregate a{values[0], 0.0, values[0], 0.0};
  for (double v : values) {
    a.min = std::min(a.min, v);
    a.max = std::max(a.max, v);
    a.average += v;
  }
  a.average /= static_cast<double>(values.size());
  for (double v : values) a.std += (v - a.average) * (v - a.average);
  a.std = std::sqrt(a.std / static_cast<double>(values.size()));
  // Guard the ordering against rounding in the mean.
  a.average = std::clamp(a.average, a.min, a.max);
  return a;
}

std::string format_double(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

void write_csv(const std::filesystem::path& path, const std::vector<std::string>& header,
               const std::vector<std::vector<double>>& rows) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream os(path, std::ios::binary);
  if (!os) throw Error(ErrorKind::io, "cannot write " + path.string());
  for (std::size_t i = 0; i < header.size(); ++i) os << (i ? "," : "") << header[i];
  os << '\n';
  for (const auto& row : rows) {
    for (std::size_t i = 0; i < row.size(); ++i) os << (i ? "," : "") << format_double(row[i]);
    os << '\n';
  }
  if (!os) throw Error(ErrorKind::io, "write failed for " + path.string());
}

void write_trajectory_csv(const std::filesystem::path& path, const Trajectory& traj) {
  traj.validate();
  std::vector<std::vector<double>> rows;
  rows.reserve(traj.size());
  for (std::size_t i = 0; i < traj.size(); ++i) {
    rows.push_back({traj.times[i], traj.states[i].delta, traj.states[i].omega});
  }
  write_csv(path, {"t", "delta", "omega"}, rows);
}

Trajectory read_trajectory_csv(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) throw Error(ErrorKind::io, "cannot read " + path.string());
  std::string line;
  if (!std::getline(is, line) || line != "t,delta,omega") {
    throw Error(ErrorKind::io, path.string() + ": expected header t,delta,omega");
  }
  Trajectory out;
  std::size_t lineno = 1;
  while (std::getline(is, line)) {
    ++lineno;
    if (line.empty()) continue;
    std::istringstream row(line);
    double t, d, w;
    char c1, c2;
    if (!(row >> t >> c1 >> d >> c2 >> w) || c1 != ',' || c2 != ',') {
      throw Error(ErrorKind::io, path.string() + ":" + std::to_string(lineno) + ": malformed row");
    }
    out.times.push_back(t);
    out.states.push_back({d, w});
  }
  out.validate();
  return out;
}

}  // namespace swingdiff::bench
