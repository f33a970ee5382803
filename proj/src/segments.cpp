#include "swingdiff/segments.hpp"

#include <string>

namespace swingdiff {

namespace {

std::size_t last_index(const Trajectory& tr, double t_end) {
  std::size_t n = 0;
  while (n < tr.size() && tr.times[n] <= t_end + 1e-9) ++n;
  return n;  // samples [0, n) lie in the window
}

}  // namespace

std::size_t SegmentSource::valid_starts(std::size_t m, double t_end) const {
  std::size_t total = 0;
  for (const auto& tr : trajectories) {
    const std::size_t n = last_index(tr, t_end);
    if (n > m) total += n - m;
  }
  return total;
}

std::vector<Segment> sample_segments(const SegmentSource& src, std::size_t n, std::size_t m,
                                     double t_end, std::mt19937_64& rng) {
  if (m < 1) throw Error(ErrorKind::invalid_argument, "segment length m must be >= 1");
  if (src.controls.size() != src.trajectories.size()) {
    throw Error(ErrorKind::dimension_mismatch, "one control value per trajectory is required");
  }
  std::vector<std::size_t> counts;
  std::size_t total = 0;
  for (const auto& tr : src.trajectories) {
    const std::size_t len = last_index(tr, t_end);
    counts.push_back(len > m ? len - m : 0);
    total += counts.back();
  }
  if (total == 0) {
    throw Error(ErrorKind::invalid_argument,
                "no segment of length " + std::to_string(m) + " fits in the training window");
  }
  std::uniform_int_distribution<std::size_t> pick(0, total - 1);
  std::vector<Segment> out;
  out.reserve(n);
  for (std::size_t k = 0; k < n; ++k) {
    std::size_t idx = pick(rng);
    std::size_t tr = 0;
    while (idx >= counts[tr]) idx -= counts[tr++];
    const auto& traj = src.trajectories[tr];
    Segment s;
    s.x0 = traj.states[idx];
    s.targets.assign(traj.states.begin() + static_cast<std::ptrdiff_t>(idx + 1),
                     traj.states.begin() + static_cast<std::ptrdiff_t>(idx + 1 + m));
    s.u = src.controls[tr];
    out.push_back(std::move(s));
  }
  return out;
}

}  // namespace swingdiff
