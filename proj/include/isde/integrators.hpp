#pragma once

// Sample-path generation: chart Euler-Maruyama on the local Ito form, the
// geodesic exponential map, and the two-step Belopolskya-Daletskii scheme
// (frozen coefficients in the tangent space, then exp).

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <random>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "isde/errors.hpp"
#include "isde/generators.hpp"
#include "isde/geometry.hpp"
#include "isde/sde_model.hpp"

namespace isde {

enum class Scheme { ChartEM, BelopolskyaDaletskii };

struct SchemeConfig {
  Scheme scheme = Scheme::ChartEM;
  double dt = 1e-3;
  double T = 1.0;
  int geodesic_substeps = 16;
  double chart_switch_margin = kChartMargin;

  void validate() const {
    if (!(dt > 0.0) || !(T > 0.0)) throw std::invalid_argument("dt and T must be positive");
    if (dt > T) throw std::invalid_argument("dt must not exceed T");
    if (geodesic_substeps < 1) throw std::invalid_argument("geodesic_substeps must be >= 1");
    if (!(chart_switch_margin >= 0.0)) throw std::invalid_argument("chart_switch_margin must be >= 0");
  }

  /// ceil(T / dt), treating ratios within 1e-9 of an integer as exact.
  [[nodiscard]] std::size_t step_count() const {
    const double r = T / dt;
    const double nearest = std::round(r);
    if (std::abs(r - nearest) <= 1e-9 * std::max(1.0, r)) return static_cast<std::size_t>(nearest);
    return static_cast<std::size_t>(std::ceil(r));
  }

  [[nodiscard]] double time(std::size_t k) const {
    return k >= step_count() ? T : static_cast<double>(k) * dt;
  }

  [[nodiscard]] double step_size(std::size_t k) const {
    const std::size_t n = step_count();
    return k + 1 < n ? dt : T - static_cast<double>(n - 1) * dt;
  }
};

/// Gaussian increments from std::mt19937_64 through std::normal_distribution.
/// Path i of a run seeded with s uses the substream seeded with s ^ i.
class NoiseStream {
 public:
  NoiseStream(std::uint64_t seed, std::size_t p) : seed_(seed), p_(p), engine_(seed) {}

  static NoiseStream for_path(std::uint64_t seed, std::size_t p, std::uint64_t path_index) {
    return {seed ^ path_index, p};
  }

  [[nodiscard]] std::uint64_t seed() const { return seed_; }
  [[nodiscard]] std::size_t dimension() const { return p_; }

  Eigen::VectorXd standard_normals() {
    Eigen::VectorXd z(static_cast<Eigen::Index>(p_));
    for (Eigen::Index l = 0; l < z.size(); ++l) z[l] = normal_(engine_);
    return z;
  }

  /// Brownian increment over a step of length h.
  Eigen::VectorXd increment(double h) { return std::sqrt(h) * standard_normals(); }

 private:
  std::uint64_t seed_;
  std::size_t p_;
  std::mt19937_64 engine_;
  std::normal_distribution<double> normal_;
};

struct ChartSwitch {
  std::size_t step;
  ChartId from;
  ChartId to;
};

struct PathRecord {
  std::vector<double> times;
  std::vector<Point> states;
  std::vector<ChartSwitch> chart_switches;
};

/// Supplies dW for step k of length h.
using IncrementSource = std::function<Eigen::VectorXd(std::size_t k, double h)>;

namespace detail {

inline Eigen::VectorXd tangent_increment(const Eigen::VectorXd& drift, const Eigen::MatrixXd& diffusion, double dt,
                                         const Eigen::VectorXd& dW) {
  if (dW.size() != diffusion.cols()) throw DimensionError("increment dimension differs from noise count");
  Eigen::VectorXd d = drift * dt;
  for (Eigen::Index l = 0; l < dW.size(); ++l) d += diffusion.col(l) * dW[l];
  return d;
}

/// First chart (in atlas order) that accepts x with the given margin.
inline Point settle_chart(const ChartedManifold& m, const Point& x, double margin) {
  if (m.contains(x, margin)) return x;
  for (ChartId c : m.chart_ids()) {
    if (c == x.chart || !m.has_transition(x.chart, c)) continue;
    try {
      return transform_point(m, x, c, margin);
    } catch (const OutOfChart&) {
    }
  }
  throw LeftAtlas("no chart accepts the state");
}

inline TangentVector settle_chart(const ChartedManifold& m, const TangentVector& v, double margin) {
  if (m.contains(v.at, margin)) return v;
  for (ChartId c : m.chart_ids()) {
    if (c == v.at.chart || !m.has_transition(v.at.chart, c)) continue;
    try {
      return transform_vector(m, v, c, margin);
    } catch (const OutOfChart&) {
    }
  }
  throw LeftAtlas("no chart accepts the geodesic state");
}

}  // namespace detail

/// One Euler-Maruyama step of the chart Ito form; the chart is unchanged.
[[nodiscard]] inline Point em_step(const IntrinsicSDE& sde, const Point& x, double dt, const Eigen::VectorXd& dW) {
  if (!(dt > 0.0)) throw std::invalid_argument("dt must be positive");
  const LocalItoCoefficients c = local_ito_coefficients(sde, x);
  return Point{x.chart, x.coords + detail::tangent_increment(c.drift, c.diffusion, dt, dW)};
}

/// Geodesic through (x, v) at unit parameter time: position and velocity.
/// Classical RK4 on q'' = -Gamma(q)(q', q') with `substeps` steps; charts
/// are switched between substeps when the state leaves its chart. In a flat
/// chart the result is x + v.
[[nodiscard]] inline TangentVector exp_map_with_velocity(const ChartedManifold& m, const TangentVector& v,
                                                         int substeps, double margin = kChartMargin) {
  if (substeps < 1) throw std::invalid_argument("substeps must be >= 1");
  if (v.components.size() != static_cast<Eigen::Index>(m.dimension())) throw DimensionError("tangent vector size");
  if (m.chart(v.at.chart).flat) {
    TangentVector r{Point{v.at.chart, v.at.coords + v.components}, v.components};
    return detail::settle_chart(m, r, margin);
  }
  TangentVector s = v;
  const double h = 1.0 / substeps;
  auto accel = [&](const Eigen::VectorXd& q, const Eigen::VectorXd& w) -> Eigen::VectorXd {
    return -connection_at(m, Point{s.at.chart, q}).contract(w);
  };
  for (int step = 0; step < substeps; ++step) {
    const Eigen::VectorXd& q = s.at.coords;
    const Eigen::VectorXd& w = s.components;
    const Eigen::VectorXd k1q = w;
    const Eigen::VectorXd k1w = accel(q, w);
    const Eigen::VectorXd k2q = w + 0.5 * h * k1w;
    const Eigen::VectorXd k2w = accel(q + 0.5 * h * k1q, k2q);
    const Eigen::VectorXd k3q = w + 0.5 * h * k2w;
    const Eigen::VectorXd k3w = accel(q + 0.5 * h * k2q, k3q);
    const Eigen::VectorXd k4q = w + h * k3w;
    const Eigen::VectorXd k4w = accel(q + h * k3q, k4q);
    TangentVector next{Point{s.at.chart, q + h / 6.0 * (k1q + 2.0 * k2q + 2.0 * k3q + k4q)},
                       w + h / 6.0 * (k1w + 2.0 * k2w + 2.0 * k3w + k4w)};
    if (!next.at.coords.allFinite() || !next.components.allFinite()) throw LeftAtlas("geodesic diverged");
    s = detail::settle_chart(m, next, margin);
  }
  return s;
}

[[nodiscard]] inline Point exp_map(const ChartedManifold& m, const Point& x, const TangentVector& v, int substeps,
                                   double margin = kChartMargin) {
  if (v.at.chart != x.chart) throw std::invalid_argument("tangent vector is attached to a different chart");
  return exp_map_with_velocity(m, TangentVector{x, v.components}, substeps, margin).at;
}

/// Belopolskya-Daletskii step: freeze the standard-Ito coefficients at x,
///   dY = [V + 1/2 sum_l (G - G_I)(sigma_l)] dt + sum_l sigma_l dW^l,
/// then move along the geodesic: x' = exp_x(dY).
[[nodiscard]] inline Point bd_step(const IntrinsicSDE& sde, const Point& x, double dt, const Eigen::VectorXd& dW,
                                   int substeps, double margin = kChartMargin) {
  if (!(dt > 0.0)) throw std::invalid_argument("dt must be positive");
  const DiffusionGenerator ito = DiffusionGenerator::geodesic(sde.manifold);
  const auto n = x.coords.size();
  const auto p = static_cast<Eigen::Index>(sde.noise.size());
  Eigen::VectorXd correction = Eigen::VectorXd::Zero(n);
  Eigen::MatrixXd diffusion(n, p);
  for (Eigen::Index l = 0; l < p; ++l) {
    const VectorFieldJet Y = detail::noise_jet(sde.noise[static_cast<std::size_t>(l)], sde.generator, x);
    correction += difference_one_form(sde.generator, ito, Y).components;
    diffusion.col(l) = Y.value;
  }
  const Eigen::VectorXd drift = sde.drift(x) + 0.5 * correction;
  const Eigen::VectorXd dY = detail::tangent_increment(drift, diffusion, dt, dW);
  return exp_map(*sde.manifold, x, TangentVector{x, dY}, substeps, margin);
}

/// Simulates one path on the grid of `cfg` with the given increments.
[[nodiscard]] inline PathRecord simulate_path(const IntrinsicSDE& sde, const SchemeConfig& cfg, const Point& x0,
                                              const IncrementSource& increments) {
  cfg.validate();
  const ChartedManifold& m = *sde.manifold;
  if (!m.contains(x0, 0.0)) throw OutOfChart("initial point is not in its chart");
  const std::size_t steps = cfg.step_count();
  PathRecord rec;
  rec.times.reserve(steps + 1);
  rec.states.reserve(steps + 1);
  rec.times.push_back(0.0);
  rec.states.push_back(x0);
  Point x = x0;
  for (std::size_t k = 0; k < steps; ++k) {
    try {
      const double h = cfg.step_size(k);
      const Eigen::VectorXd dW = increments(k, h);
      Point next = cfg.scheme == Scheme::ChartEM
                       ? em_step(sde, x, h, dW)
                       : bd_step(sde, x, h, dW, cfg.geodesic_substeps, cfg.chart_switch_margin);
      if (!next.coords.allFinite()) throw LeftAtlas("state is not finite");
      Point settled = detail::settle_chart(m, next, cfg.chart_switch_margin);
      if (settled.chart != x.chart) rec.chart_switches.push_back({k + 1, x.chart, settled.chart});
      x = std::move(settled);
    } catch (StepError& e) {
      if (!e.step()) e.attach_step(k);
      throw;
    }
    rec.times.push_back(cfg.time(k + 1));
    rec.states.push_back(x);
  }
  return rec;
}

[[nodiscard]] inline PathRecord simulate_path(const IntrinsicSDE& sde, const SchemeConfig& cfg, const Point& x0,
                                              NoiseStream& noise) {
  if (noise.dimension() != sde.noise.size()) throw DimensionError("noise stream dimension differs from noise count");
  return simulate_path(sde, cfg, x0, [&noise](std::size_t, double h) { return noise.increment(h); });
}

// ---------------------------------------------------------------------------
// Convergence study

struct ErrorRow {
  double dt;
  double strong;
  double weak;
};

/// Strong and weak terminal errors of each configuration against a reference
/// run on the finer grid `reference_dt`, with coupled increments (each coarse
/// increment is the sum of the fine increments it spans).
[[nodiscard]] inline std::vector<ErrorRow> error_study(const IntrinsicSDE& sde, std::span<const SchemeConfig> cfgs,
                                                       const Point& x0, double reference_dt, std::size_t n_paths,
                                                       std::uint64_t seed) {
  if (cfgs.empty() || n_paths == 0) throw std::invalid_argument("error_study needs configurations and paths");
  auto near_int = [](double r) { return std::abs(r - std::round(r)) <= 1e-9 * std::max(1.0, r); };
  const double T = cfgs.front().T;
  std::vector<std::size_t> ratio;
  for (const auto& c : cfgs) {
    c.validate();
    if (c.T != T) throw std::invalid_argument("grid incompatibility: configurations must share T");
    const double r = c.dt / reference_dt;
    if (!near_int(r) || !near_int(T / c.dt)) {
      throw std::invalid_argument("grid incompatibility: reference_dt must divide dt and dt must divide T");
    }
    ratio.push_back(static_cast<std::size_t>(std::llround(r)));
  }
  SchemeConfig ref = cfgs.front();
  ref.dt = reference_dt;
  if (!near_int(T / reference_dt)) throw std::invalid_argument("grid incompatibility: reference_dt must divide T");
  const std::size_t p = sde.noise.size();
  const std::size_t n_ref = ref.step_count();

  std::vector<double> strong(cfgs.size(), 0.0);
  std::vector<double> mean_coarse(cfgs.size(), 0.0);
  double mean_ref = 0.0;
  std::vector<Eigen::VectorXd> fine(n_ref);
  for (std::size_t path = 0; path < n_paths; ++path) {
    NoiseStream noise = NoiseStream::for_path(seed, p, path);
    for (std::size_t k = 0; k < n_ref; ++k) fine[k] = noise.increment(ref.step_size(k));
    const PathRecord r = simulate_path(sde, ref, x0, [&](std::size_t k, double) { return fine[k]; });
    const Point x_ref = transform_point(*sde.manifold, r.states.back(), x0.chart, 0.0);
    mean_ref += x_ref.coords[0];
    for (std::size_t c = 0; c < cfgs.size(); ++c) {
      const std::size_t m = ratio[c];
      const PathRecord coarse = simulate_path(sde, cfgs[c], x0, [&](std::size_t k, double) {
        Eigen::VectorXd s = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(p));
        for (std::size_t j = k * m; j < (k + 1) * m; ++j) s += fine[j];
        return s;
      });
      const Point x_c = transform_point(*sde.manifold, coarse.states.back(), x0.chart, 0.0);
      strong[c] += (x_c.coords - x_ref.coords).norm();
      mean_coarse[c] += x_c.coords[0];
    }
  }
  const auto np = static_cast<double>(n_paths);
  std::vector<ErrorRow> rows;
  for (std::size_t c = 0; c < cfgs.size(); ++c) {
    rows.push_back({cfgs[c].dt, strong[c] / np, std::abs(mean_coarse[c] - mean_ref) / np});
  }
  return rows;
}

/// Least-squares slope of log(error) against log(dt).
[[nodiscard]] inline double fit_order(std::span<const double> dts, std::span<const double> errors) {
  if (dts.size() != errors.size() || dts.size() < 2) throw std::invalid_argument("fit_order needs >= 2 pairs");
  double sx = 0, sy = 0, sxx = 0, sxy = 0;
  const auto n = static_cast<double>(dts.size());
  for (std::size_t i = 0; i < dts.size(); ++i) {
    if (!(dts[i] > 0.0) || !(errors[i] > 0.0)) throw std::invalid_argument("fit_order needs positive values");
    const double x = std::log(dts[i]);
    const double y = std::log(errors[i]);
    sx += x;
    sy += y;
    sxx += x * x;
    sxy += x * y;
  }
  return (n * sxy - sx * sy) / (n * sxx - sx * sx);
}

}  // namespace isde
