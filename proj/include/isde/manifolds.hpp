#pragma once

// Ready-made charted manifolds used by the tests and the command-line tool.

#include <array>
#include <cmath>
#include <memory>
#include <numbers>
#include <stdexcept>
#include <string>
#include <string_view>

#include <Eigen/Dense>

#include "isde/expr.hpp"
#include "isde/fields.hpp"
#include "isde/generators.hpp"
#include "isde/geometry.hpp"

namespace isde::manifolds {

enum class Builtin { EuclideanN, EuclideanWarped2, Polar2, Circle, Sphere2 };

/// Radius of the coordinate disc used by each stereographic chart of Sphere2.
inline constexpr double kStereographicRadius = 3.0;

namespace detail {

inline Expr x(std::size_t i) { return Expr::variable(i); }

inline SmoothMap identity_metric(std::size_t n) {
  std::vector<Expr> g;
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j) g.emplace_back(i == j ? 1.0 : 0.0);
  return {n, std::move(g)};
}

inline Chart whole_space(std::string label, std::size_t n, double box = 2.0) {
  Chart c;
  c.label = std::move(label);
  c.dimension = n;
  c.domain = [](const Eigen::VectorXd& u, double) { return u.allFinite(); };
  c.sample_box.assign(n, {-box, box});
  return c;
}

/// Installs the Levi-Civita connection of each chart's metric.
inline void install_levi_civita(ChartedManifold& m) {
  for (ChartId c : m.chart_ids()) {
    if (!m.has_metric(c) || m.chart(c).flat) continue;
    SmoothMap g = m.metric(c);
    m.set_connection(c, [g](const Eigen::VectorXd& u) { return christoffel_from_metric(g, u); });
  }
}

}  // namespace detail

/// R^n with one Cartesian chart, identity metric and zero connection.
[[nodiscard]] inline std::shared_ptr<ChartedManifold> euclidean(std::size_t n) {
  if (n == 0) throw std::invalid_argument("EuclideanN needs n >= 1");
  Chart c = detail::whole_space("cartesian", n);
  c.flat = true;
  auto m = std::make_shared<ChartedManifold>(n, std::vector<Chart>{c});
  m->set_metric(ChartId{0}, detail::identity_metric(n));
  return m;
}

/// R^2 with the identity chart and the warped chart (x + y^3, y).
[[nodiscard]] inline std::shared_ptr<ChartedManifold> euclidean_warped2() {
  using detail::x;
  Chart a = detail::whole_space("cartesian", 2);
  a.flat = true;
  Chart b = detail::whole_space("warped", 2);
  b.sample_box = {{-3.0, 3.0}, {-1.5, 1.5}};
  auto m = std::make_shared<ChartedManifold>(2, std::vector<Chart>{a, b});
  m->set_transition(ChartId{0}, ChartId{1}, SmoothMap(2, {x(0) + pow(x(1), 3), x(1)}));
  m->set_transition(ChartId{1}, ChartId{0}, SmoothMap(2, {x(0) - pow(x(1), 3), x(1)}));
  m->set_metric(ChartId{0}, detail::identity_metric(2));
  const auto pulled = pull_back_bilinear(*m, ChartId{0}, detail::identity_metric(2));
  m->set_metric(ChartId{1}, *pulled[1]);
  detail::install_levi_civita(*m);
  return m;
}

/// R^2 minus the ray {x <= 0, y = 0}, with Cartesian and polar charts.
[[nodiscard]] inline std::shared_ptr<ChartedManifold> polar2() {
  using detail::x;
  Chart cart;
  cart.label = "cartesian";
  cart.dimension = 2;
  cart.domain = [](const Eigen::VectorXd& u, double margin) {
    return u.allFinite() && (u[0] > margin || std::abs(u[1]) > margin);
  };
  cart.sample_box = {{-2.0, 2.0}, {-2.0, 2.0}};
  cart.flat = true;
  Chart polar;
  polar.label = "polar";
  polar.dimension = 2;
  polar.domain = [](const Eigen::VectorXd& u, double margin) {
    return u.allFinite() && u[0] > margin && std::abs(u[1]) < std::numbers::pi - margin;
  };
  polar.sample_box = {{0.2, 2.5}, {-3.0, 3.0}};
  auto m = std::make_shared<ChartedManifold>(2, std::vector<Chart>{cart, polar});
  m->set_transition(ChartId{0}, ChartId{1}, SmoothMap(2, {sqrt(pow(x(0), 2) + pow(x(1), 2)), atan2(x(1), x(0))}));
  m->set_transition(ChartId{1}, ChartId{0}, SmoothMap(2, {x(0) * cos(x(1)), x(0) * sin(x(1))}));
  m->set_metric(ChartId{0}, detail::identity_metric(2));
  m->set_metric(ChartId{1}, SmoothMap(2, {Expr(1.0), Expr(0.0), Expr(0.0), pow(x(0), 2)}));
  detail::install_levi_civita(*m);
  return m;
}

/// S^1 with two angle charts: theta in (-pi, pi) and phi in (0, 2 pi).
[[nodiscard]] inline std::shared_ptr<ChartedManifold> circle() {
  using detail::x;
  constexpr double pi = std::numbers::pi;
  Chart a;
  a.label = "angle_a";
  a.dimension = 1;
  a.domain = [](const Eigen::VectorXd& u, double margin) { return std::abs(u[0]) < pi - margin; };
  a.sample_box = {{-3.0, 3.0}};
  a.flat = true;
  Chart b;
  b.label = "angle_b";
  b.dimension = 1;
  b.domain = [](const Eigen::VectorXd& u, double margin) { return u[0] > margin && u[0] < 2.0 * pi - margin; };
  b.sample_box = {{0.15, 2.0 * pi - 0.15}};
  b.flat = true;
  auto m = std::make_shared<ChartedManifold>(1, std::vector<Chart>{a, b});
  m->set_transition(ChartId{0}, ChartId{1}, SmoothMap(1, {Expr(pi) + atan2(-sin(x(0)), -cos(x(0)))}));
  m->set_transition(ChartId{1}, ChartId{0}, SmoothMap(1, {atan2(sin(x(0)), cos(x(0)))}));
  m->set_metric(ChartId{0}, detail::identity_metric(1));
  m->set_metric(ChartId{1}, detail::identity_metric(1));
  return m;
}

/// Round unit sphere with the two stereographic charts. Chart 0 ("north")
/// projects from the north pole, so its origin is the south pole; chart 1
/// ("south") projects from the south pole. Each chart is restricted to the
/// disc |u| < kStereographicRadius. Metric 4 delta / (1 + |u|^2)^2.
[[nodiscard]] inline std::shared_ptr<ChartedManifold> sphere2() {
  using detail::x;
  auto disc = [](std::string label) {
    Chart c;
    c.label = std::move(label);
    c.dimension = 2;
    c.domain = [](const Eigen::VectorXd& u, double margin) {
      return u.allFinite() && u.norm() < kStereographicRadius - margin;
    };
    c.sample_box = {{-2.0, 2.0}, {-2.0, 2.0}};
    return c;
  };
  auto m = std::make_shared<ChartedManifold>(2, std::vector<Chart>{disc("north"), disc("south")});
  const Expr r2 = pow(x(0), 2) + pow(x(1), 2);
  const SmoothMap inversion(2, {x(0) / r2, x(1) / r2});
  m->set_transition(ChartId{0}, ChartId{1}, inversion);
  m->set_transition(ChartId{1}, ChartId{0}, inversion);
  const Expr conformal = Expr(4.0) / pow(Expr(1.0) + r2, 2);
  const SmoothMap metric(2, {conformal, Expr(0.0), Expr(0.0), conformal});
  m->set_metric(ChartId{0}, metric);
  m->set_metric(ChartId{1}, metric);
  detail::install_levi_civita(*m);
  return m;
}

/// Builds a manifold by name: "euclidean" (with dimension), "euclidean_warped2",
/// "polar2", "circle", "sphere2".
[[nodiscard]] inline std::shared_ptr<ChartedManifold> make(std::string_view name, std::size_t dimension = 2) {
  if (name == "euclidean") return euclidean(dimension);
  if (name == "euclidean_warped2") return euclidean_warped2();
  if (name == "polar2") return polar2();
  if (name == "circle") return circle();
  if (name == "sphere2") return sphere2();
  throw std::invalid_argument("unknown manifold '" + std::string(name) + "'");
}

[[nodiscard]] inline std::shared_ptr<ChartedManifold> make(Builtin name, std::size_t dimension = 2) {
  switch (name) {
    case Builtin::EuclideanN:
      return euclidean(dimension);
    case Builtin::EuclideanWarped2:
      return euclidean_warped2();
    case Builtin::Polar2:
      return polar2();
    case Builtin::Circle:
      return circle();
    case Builtin::Sphere2:
      return sphere2();
  }
  throw std::invalid_argument("unknown manifold");
}

/// Inverse stereographic projection of a Sphere2 point to the unit sphere in R^3.
[[nodiscard]] inline Eigen::Vector3d embed_sphere(const Point& p) {
  if (p.coords.size() != 2 || p.chart.index > 1) throw std::invalid_argument("embed_sphere needs a Sphere2 point");
  const double u = p.coords[0];
  const double v = p.coords[1];
  const double s = u * u + v * v;
  const double z = (s - 1.0) / (1.0 + s);
  return {2.0 * u / (1.0 + s), 2.0 * v / (1.0 + s), p.chart.index == 0 ? z : -z};
}

/// Stereographic coordinates of a unit vector in the given Sphere2 chart.
[[nodiscard]] inline Point sphere_point(const Eigen::Vector3d& e, ChartId chart) {
  const double den = chart.index == 0 ? 1.0 - e[2] : 1.0 + e[2];
  if (den <= 0.0) throw OutOfChart("point is the projection pole of the chart");
  Eigen::VectorXd u(2);
  u << e[0] / den, e[1] / den;
  return Point{chart, u};
}

/// Closed-form Christoffel symbols of the round metric in a stereographic chart:
///   Gamma^i_{jk} = -2 (delta^i_j u_k + delta^i_k u_j - delta_jk u^i) / (1 + |u|^2).
[[nodiscard]] inline Christoffel stereographic_christoffel(const Eigen::VectorXd& u) {
  Christoffel g(2);
  const double s = 1.0 + u.squaredNorm();
  for (std::size_t i = 0; i < 2; ++i)
    for (std::size_t j = 0; j < 2; ++j)
      for (std::size_t k = 0; k < 2; ++k) {
        const double t = (i == j ? u[static_cast<Eigen::Index>(k)] : 0.0) +
                         (i == k ? u[static_cast<Eigen::Index>(j)] : 0.0) -
                         (j == k ? u[static_cast<Eigen::Index>(i)] : 0.0);
        g(i, j, k) = -2.0 * t / s;
      }
  return g;
}

}  // namespace isde::manifolds
