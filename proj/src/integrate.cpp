#include "swingdiff/integrate.hpp"

#include <algorithm>
#include <cmath>

namespace swingdiff::ode {

void IntegratorConfig::validate() const {
  if (!(rtol > 0.0) || !(atol > 0.0)) {
    throw Error(ErrorKind::invalid_argument, "integrator tolerances must be positive");
  }
  if (!(dt_init > 0.0)) throw Error(ErrorKind::invalid_argument, "dt_init must be positive");
  if (max_steps < 1) throw Error(ErrorKind::invalid_argument, "max_steps must be >= 1");
  if (!(safety > 0.0 && safety <= 1.0)) {
    throw Error(ErrorKind::invalid_argument, "safety factor must lie in (0, 1]");
  }
}

void TimeGrid::validate() const {
  if (!(t_end > t0)) throw Error(ErrorKind::invalid_argument, "time grid needs t_end > t0");
  if (!(dt_out > 0.0)) throw Error(ErrorKind::invalid_argument, "time grid needs dt_out > 0");
  const double n = (t_end - t0) / dt_out;
  if (std::abs(n - std::round(n)) > 1e-9 * std::max(1.0, n)) {
    throw Error(ErrorKind::invalid_argument,
                "(t_end - t0) / dt_out must be an integer, got " + std::to_string(n));
  }
}

std::size_t TimeGrid::intervals() const {
  return static_cast<std::size_t>(std::llround((t_end - t0) / dt_out));
}

Dopri5Step dopri5_step(const VectorField<double>& f, double t, const Vec<double>& x, double h,
                       const IntegratorConfig& cfg) {
  using namespace dopri;
  if (!(h > 0.0)) throw Error(ErrorKind::invalid_argument, "dopri5_step: h must be positive");
  auto s = dopri5_stages<double>(f, t, x, h);
  const auto& k = s.k;

  double sum = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double err =
        h * (e1 * k[0][i] + e3 * k[2][i] + e4 * k[3][i] + e5 * k[4][i] + e6 * k[5][i] + e7 * k[6][i]);
    const double scale = cfg.atol + cfg.rtol * std::max(std::abs(x[i]), std::abs(s.x_next[i]));
    sum += (err / scale) * (err / scale);
  }
  Dopri5Step out;
  out.error_norm = x.empty() ? 0.0 : std::sqrt(sum / static_cast<double>(x.size()));
  bool finite = std::isfinite(out.error_norm);
  for (double v : s.x_next) finite = finite && std::isfinite(v);
  out.accepted = finite && out.error_norm <= 1.0;

  double factor = 5.0;
  if (!finite) {
    factor = 0.2;
  } else if (out.error_norm > 0.0) {
    factor = std::clamp(cfg.safety * std::pow(out.error_norm, -0.2), 0.2, 5.0);
  }
  out.h_next = h * factor;
  out.x_next = std::move(s.x_next);
  return out;
}

Solution<double> integrate(const VectorField<double>& f, const Vec<double>& x0,
                           const TimeGrid& grid, const IntegratorConfig& cfg) {
  grid.validate();
  cfg.validate();
  check_finite(x0, grid.t0);

  if (cfg.method == Method::rk4) {
    const auto substeps =
        static_cast<std::size_t>(std::max(1.0, std::ceil(grid.dt_out / cfg.dt_init - 1e-9)));
    return integrate_rk4<double>(f, x0, grid, substeps);
  }

  Solution<double> sol;
  const std::size_t n_out = grid.intervals();
  sol.t.reserve(n_out + 1);
  sol.x.reserve(n_out + 1);
  sol.t.push_back(grid.t0);
  sol.x.push_back(x0);

  Vec<double> x = x0;
  double t = grid.t0;
  double h = std::min(cfg.dt_init, grid.dt_out);
  std::size_t next_out = 1;
  std::size_t attempts = 0;
  bool last_non_finite = false;
  while (next_out <= n_out) {
    if (++attempts > cfg.max_steps) {
      throw Error(ErrorKind::divergence,
                  "dopri5 exceeded max_steps=" + std::to_string(cfg.max_steps) +
                      " at t=" + std::to_string(t));
    }
    const double target = grid.time(next_out);
    const bool clipped = t + h >= target - 1e-12 * std::max(1.0, std::abs(target));
    const double step = clipped ? target - t : h;
    if (step < 1e-14 * std::max(1.0, std::abs(t))) {
      if (last_non_finite) throw BlowUpError(t, "non-finite derivative at t=" + std::to_string(t));
      throw Error(ErrorKind::divergence, "dopri5 step size underflow at t=" + std::to_string(t));
    }
    auto r = dopri5_step(f, t, x, step, cfg);
    sol.stats.evaluations += 7;
    if (!r.accepted) {
      ++sol.stats.rejected;
      last_non_finite = !std::isfinite(r.error_norm);
      h = r.h_next;
      continue;
    }
    ++sol.stats.accepted;
    sol.steps.push_back(step);
    x = std::move(r.x_next);
    check_finite(x, t + step);
    if (clipped) {
      t = target;
      sol.t.push_back(target);
      sol.x.push_back(x);
      ++next_out;
      // A clipped step says nothing about the controller's preferred size.
      h = std::max(h, r.h_next);
    } else {
      t += step;
      h = r.h_next;
    }
  }
  return sol;
}

}  // namespace swingdiff::ode
