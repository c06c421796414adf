#pragma once

// Chart-wise expression data (one SmoothMap per chart) and the symbolic
// transport of fields, functions and tensors between charts.

#include <cstddef>
#include <functional>
#include <memory>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "isde/errors.hpp"
#include "isde/expr.hpp"
#include "isde/geometry.hpp"

namespace isde {

/// One optional representation per chart, indexed by ChartId::index.
using ChartwiseMap = std::vector<std::optional<SmoothMap>>;

[[nodiscard]] inline const SmoothMap& chart_representation(const ChartwiseMap& maps, ChartId c, const char* what) {
  if (c.index >= maps.size() || !maps[c.index]) {
    throw OutOfChart(std::string(what) + " has no representation in chart " + std::to_string(c.index));
  }
  return *maps[c.index];
}

namespace detail {

/// Symbolic Jacobian entries of psi = transition(from, to), as expressions in
/// the `from` coordinates; entry (i, j) at i*n + j.
inline std::vector<Expr> jacobian_exprs(const SmoothMap& psi) { return psi.jacobian_map().components(); }

}  // namespace detail

/// Vector field given in `home` coordinates, expressed in every chart that has
/// transitions to and from home: sigma_c(y) = D phi(psi(y)) sigma(psi(y)),
/// with psi = c -> home and phi = home -> c.
[[nodiscard]] inline ChartwiseMap push_forward_vector_map(const ChartedManifold& m, ChartId home,
                                                          const SmoothMap& field) {
  const std::size_t n = m.dimension();
  if (field.dimension_in() != n || field.dimension_out() != n) throw DimensionError("vector field arity");
  ChartwiseMap out(m.chart_count());
  for (ChartId c : m.chart_ids()) {
    if (c == home) {
      out[c.index] = field;
      continue;
    }
    if (!m.has_transition(c, home) || !m.has_transition(home, c)) continue;
    const SmoothMap& psi = m.transition(c, home);
    const SmoothMap jphi = m.transition(home, c).jacobian_map().compose(psi);
    const SmoothMap sigma = field.compose(psi);
    std::vector<Expr> comps;
    for (std::size_t i = 0; i < n; ++i) {
      Expr s(0.0);
      for (std::size_t k = 0; k < n; ++k) s = s + jphi.component(i * n + k) * sigma.component(k);
      comps.push_back(s);
    }
    out[c.index] = SmoothMap(n, std::move(comps));
  }
  return out;
}

/// Scalar function given in `home` coordinates, pulled back to every chart
/// with a transition into home.
[[nodiscard]] inline ChartwiseMap pull_back_scalar(const ChartedManifold& m, ChartId home, const SmoothMap& f) {
  if (f.dimension_in() != m.dimension() || f.dimension_out() != 1) throw DimensionError("scalar function arity");
  ChartwiseMap out(m.chart_count());
  for (ChartId c : m.chart_ids()) {
    if (c == home) {
      out[c.index] = f;
    } else if (m.has_transition(c, home)) {
      out[c.index] = f.compose(m.transition(c, home));
    }
  }
  return out;
}

/// Function on TM given in `home` coordinates (x1..xn, v1..vn), pulled back:
///   L_c(y, w) = L(psi(y), D psi(y) w).
[[nodiscard]] inline ChartwiseMap pull_back_tangent_function(const ChartedManifold& m, ChartId home,
                                                             const SmoothMap& L) {
  const std::size_t n = m.dimension();
  if (L.dimension_in() != 2 * n || L.dimension_out() != 1) throw DimensionError("tangent function arity");
  ChartwiseMap out(m.chart_count());
  for (ChartId c : m.chart_ids()) {
    if (c == home) {
      out[c.index] = L;
      continue;
    }
    if (!m.has_transition(c, home)) continue;
    const SmoothMap& psi = m.transition(c, home);
    const auto jac = detail::jacobian_exprs(psi);
    std::vector<Expr> repl;
    for (std::size_t i = 0; i < n; ++i) repl.push_back(psi.component(i));
    for (std::size_t i = 0; i < n; ++i) {
      Expr v(0.0);
      for (std::size_t j = 0; j < n; ++j) v = v + jac[i * n + j] * Expr::variable(n + j);
      repl.push_back(v);
    }
    out[c.index] = SmoothMap(2 * n, {L.component(0).substitute(repl)});
  }
  return out;
}

/// Covariant 2-tensor (flattened n*n) given in `home` coordinates, pulled back:
///   g_c(y)_{ab} = D psi_{ia} g_ij(psi(y)) D psi_{jb}.
[[nodiscard]] inline ChartwiseMap pull_back_bilinear(const ChartedManifold& m, ChartId home, const SmoothMap& g) {
  const std::size_t n = m.dimension();
  if (g.dimension_in() != n || g.dimension_out() != n * n) throw DimensionError("bilinear form arity");
  ChartwiseMap out(m.chart_count());
  for (ChartId c : m.chart_ids()) {
    if (c == home) {
      out[c.index] = g;
      continue;
    }
    if (!m.has_transition(c, home)) continue;
    const SmoothMap& psi = m.transition(c, home);
    const auto jac = detail::jacobian_exprs(psi);
    const SmoothMap gp = g.compose(psi);
    std::vector<Expr> comps;
    for (std::size_t a = 0; a < n; ++a) {
      for (std::size_t b = 0; b < n; ++b) {
        Expr s(0.0);
        for (std::size_t i = 0; i < n; ++i)
          for (std::size_t j = 0; j < n; ++j) s = s + jac[i * n + a] * gp.component(i * n + j) * jac[j * n + b];
        comps.push_back(s);
      }
    }
    out[c.index] = SmoothMap(n, std::move(comps));
  }
  return out;
}

/// Builds a ChartwiseMap holding the manifold's metric in every chart that has one.
[[nodiscard]] inline ChartwiseMap metric_maps(const ChartedManifold& m) {
  ChartwiseMap out(m.chart_count());
  for (ChartId c : m.chart_ids())
    if (m.has_metric(c)) out[c.index] = m.metric(c);
  return out;
}

/// Kinetic-energy Lagrangian L = 1/2 g_ij(x) v^i v^j in every chart with a metric.
[[nodiscard]] inline ChartwiseMap kinetic_lagrangian(const ChartedManifold& m) {
  const std::size_t n = m.dimension();
  ChartwiseMap out(m.chart_count());
  for (ChartId c : m.chart_ids()) {
    if (!m.has_metric(c)) continue;
    const SmoothMap& g = m.metric(c);
    Expr s(0.0);
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < n; ++j)
        s = s + g.component(i * n + j) * Expr::variable(n + i) * Expr::variable(n + j);
    out[c.index] = SmoothMap(2 * n, {Expr(0.5) * s});
  }
  return out;
}

/// A vector field on the manifold. The value rule is mandatory; the jet rule
/// (value plus Jacobian) is present for expression-backed fields.
class VectorField {
 public:
  using ValueRule = std::function<Eigen::VectorXd(const Point&)>;
  using JetRule = std::function<VectorFieldJet(const Point&)>;

  VectorField() = default;
  explicit VectorField(ValueRule value, JetRule jet = {}) : value_(std::move(value)), jet_(std::move(jet)) {}

  static VectorField from_maps(ChartwiseMap maps) {
    auto shared = std::make_shared<const ChartwiseMap>(std::move(maps));
    ValueRule value = [shared](const Point& x) {
      return chart_representation(*shared, x.chart, "vector field").evaluate(x.coords);
    };
    JetRule jet = [shared](const Point& x) {
      const SmoothMap& f = chart_representation(*shared, x.chart, "vector field");
      const auto jets = f.eval_jet2(x.coords);
      const auto n = x.coords.size();
      VectorFieldJet r{x, Eigen::VectorXd(n), Eigen::MatrixXd(n, n)};
      for (Eigen::Index i = 0; i < n; ++i) {
        r.value[i] = jets[static_cast<std::size_t>(i)].value();
        for (Eigen::Index j = 0; j < n; ++j) r.jacobian(i, j) = jets[static_cast<std::size_t>(i)].gradient(j);
      }
      return r;
    };
    return VectorField(std::move(value), std::move(jet));
  }

  /// Field written in `home` coordinates and transported to the other charts.
  static VectorField from_home_chart(const ChartedManifold& m, ChartId home, const SmoothMap& field) {
    return from_maps(push_forward_vector_map(m, home, field));
  }

  [[nodiscard]] Eigen::VectorXd operator()(const Point& x) const { return value_(x); }
  [[nodiscard]] bool has_jet() const { return static_cast<bool>(jet_); }
  [[nodiscard]] VectorFieldJet jet(const Point& x) const {
    if (!jet_) throw std::logic_error("vector field has no Jacobian rule");
    return jet_(x);
  }

 private:
  ValueRule value_;
  JetRule jet_;
};

}  // namespace isde
