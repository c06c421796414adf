#pragma once

// Randomized property checks over an atlas: generator coordinate invariance,
// pushforward functoriality, the defining property of a generator, and
// transition round trips. Shared by the command-line `check` command and the
// test suite.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "isde/generators.hpp"
#include "isde/geometry.hpp"

namespace isde {

struct CheckReport {
  std::string name;
  double max_error = 0.0;
  std::size_t samples = 0;

  [[nodiscard]] bool passed(double tol) const { return samples > 0 && max_error <= tol; }
};

/// |a - b|_inf / max(1, |b|_inf).
[[nodiscard]] inline double relative_error(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) throw DimensionError("relative_error shapes differ");
  if (a.size() == 0) return 0.0;
  const double diff = (a - b).cwiseAbs().maxCoeff();
  return diff / std::max(1.0, b.cwiseAbs().maxCoeff());
}

/// Uniform sample from chart `from`'s sample box that also lies in chart `to`
/// (both with the default margin). Returns the point in `from` coordinates.
[[nodiscard]] inline std::optional<Point> sample_overlap_point(const ChartedManifold& m, ChartId from, ChartId to,
                                                               std::mt19937_64& rng, std::size_t max_attempts = 10000) {
  const Chart& c = m.chart(from);
  const auto n = static_cast<Eigen::Index>(m.dimension());
  for (std::size_t attempt = 0; attempt < max_attempts; ++attempt) {
    Eigen::VectorXd u(n);
    for (Eigen::Index i = 0; i < n; ++i) {
      const auto [lo, hi] = c.sample_box[static_cast<std::size_t>(i)];
      u[i] = std::uniform_real_distribution<double>(lo, hi)(rng);
    }
    Point x{from, u};
    if (!c.contains(u)) continue;
    if (from == to) return x;
    try {
      (void)transform_point(m, x, to);
      return x;
    } catch (const OutOfChart&) {
    }
  }
  return std::nullopt;
}

[[nodiscard]] inline Eigen::MatrixXd random_matrix(Eigen::Index rows, Eigen::Index cols, std::mt19937_64& rng,
                                                   double scale = 1.0) {
  std::uniform_real_distribution<double> u(-scale, scale);
  Eigen::MatrixXd a(rows, cols);
  for (Eigen::Index j = 0; j < cols; ++j)
    for (Eigen::Index i = 0; i < rows; ++i) a(i, j) = u(rng);
  return a;
}

[[nodiscard]] inline VectorFieldJet random_field_jet(const Point& x, std::mt19937_64& rng) {
  const auto n = x.coords.size();
  return VectorFieldJet{x, random_matrix(n, 1, rng), random_matrix(n, n, rng)};
}

namespace detail {

template <typename F>
void for_chart_pairs(const ChartedManifold& m, F&& f) {
  for (ChartId a : m.chart_ids())
    for (ChartId b : m.chart_ids())
      if (a != b && m.has_transition(a, b)) f(a, b);
}

}  // namespace detail

/// Pushes G(Y) from chart A to chart B and compares it with G applied to the
/// transported jet in chart B, for `points` samples per ordered chart pair.
[[nodiscard]] inline CheckReport check_generator_invariance(const ChartedManifold& m, const DiffusionGenerator& G,
                                                            std::size_t points, std::uint64_t seed) {
  CheckReport r{"generator_invariance", 0.0, 0};
  std::mt19937_64 rng(seed);
  detail::for_chart_pairs(m, [&](ChartId a, ChartId b) {
    for (std::size_t k = 0; k < points; ++k) {
      const auto x = sample_overlap_point(m, a, b, rng);
      if (!x) return;
      const VectorFieldJet Y = random_field_jet(*x, rng);
      const Diffusor pushed = transform_diffusor(m, G.generate(Y), b);
      const Diffusor direct = G.generate(transform_field_jet(m, Y, b));
      const double e = std::max(relative_error(pushed.first_order, direct.first_order),
                                relative_error(pushed.second_order, direct.second_order));
      r.max_error = std::max(r.max_error, e);
      ++r.samples;
    }
  });
  return r;
}

/// Pushforward under psi2 o psi1 (composed symbolically) against the pushforward
/// under psi2 of the pushforward under psi1, on random diffusors.
[[nodiscard]] inline CheckReport check_pushforward_functoriality(const ChartedManifold& m, std::size_t points,
                                                                 std::uint64_t seed) {
  CheckReport r{"pushforward_functoriality", 0.0, 0};
  std::mt19937_64 rng(seed);
  const auto n = static_cast<Eigen::Index>(m.dimension());
  detail::for_chart_pairs(m, [&](ChartId a, ChartId b) {
    for (ChartId c : m.chart_ids()) {
      if (!m.has_transition(b, c) || !m.has_transition(a, c)) continue;
      const SmoothMap composite = m.transition(b, c).compose(m.transition(a, b));
      for (std::size_t k = 0; k < points; ++k) {
        const auto x = sample_overlap_point(m, a, b, rng);
        if (!x) return;
        Point y;
        try {
          y = transform_point(m, transform_point(m, *x, b), c);
        } catch (const OutOfChart&) {
          continue;
        }
        const Eigen::MatrixXd s = random_matrix(n, n, rng);
        const Diffusor L{*x, random_matrix(n, 1, rng), s + s.transpose()};
        const Diffusor once = pushforward_diffusor(composite, L, c);
        Diffusor step = pushforward_diffusor(m.transition(a, b), L, b);
        step.at = transform_point(m, *x, b);
        const Diffusor twice = pushforward_diffusor(m.transition(b, c), step, c);
        const double e = std::max(relative_error(once.first_order, twice.first_order),
                                  relative_error(once.second_order, twice.second_order));
        r.max_error = std::max(r.max_error, e);
        ++r.samples;
      }
    }
  });
  return r;
}

/// max |symmetric_part(G(Y)) - sigma sigma^T| over random points of every chart.
[[nodiscard]] inline CheckReport check_defining_property(const ChartedManifold& m, const DiffusionGenerator& G,
                                                         std::size_t points, std::uint64_t seed) {
  CheckReport r{"defining_property", 0.0, 0};
  std::mt19937_64 rng(seed);
  for (ChartId a : m.chart_ids()) {
    for (std::size_t k = 0; k < points; ++k) {
      const auto x = sample_overlap_point(m, a, a, rng);
      if (!x) break;
      const VectorFieldJet Y = random_field_jet(*x, rng);
      const Eigen::MatrixXd b = symmetric_part(G.generate(Y));
      const Eigen::MatrixXd expected = Y.value * Y.value.transpose();
      r.max_error = std::max(r.max_error, (b - expected).cwiseAbs().maxCoeff());
      ++r.samples;
    }
  }
  return r;
}

/// transition(b, a) o transition(a, b) against the identity on overlap samples.
[[nodiscard]] inline CheckReport check_transition_round_trip(const ChartedManifold& m, std::size_t points,
                                                             std::uint64_t seed) {
  CheckReport r{"transition_round_trip", 0.0, 0};
  std::mt19937_64 rng(seed);
  detail::for_chart_pairs(m, [&](ChartId a, ChartId b) {
    if (!m.has_transition(b, a)) return;
    for (std::size_t k = 0; k < points; ++k) {
      const auto x = sample_overlap_point(m, a, b, rng);
      if (!x) return;
      const Eigen::VectorXd back = m.transition(b, a).evaluate(m.transition(a, b).evaluate(x->coords));
      r.max_error = std::max(r.max_error, relative_error(back, x->coords));
      ++r.samples;
    }
  });
  return r;
}

}  // namespace isde
