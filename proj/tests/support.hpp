#pragma once

// Test oracles and fixtures. Everything here is computed independently of
// the jet machinery: finite differences, closed forms and plain RK4.

#include <cmath>
#include <functional>
#include <memory>
#include <numbers>
#include <random>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "isde/expr.hpp"
#include "isde/fields.hpp"
#include "isde/generators.hpp"
#include "isde/manifolds.hpp"
#include "isde/sde_model.hpp"

namespace isde::testing {

using ScalarFn = std::function<double(const Eigen::VectorXd&)>;

inline Eigen::VectorXd vec(std::initializer_list<double> v) {
  Eigen::VectorXd r(static_cast<Eigen::Index>(v.size()));
  Eigen::Index i = 0;
  for (double x : v) r[i++] = x;
  return r;
}

inline Eigen::VectorXd fd_gradient(const ScalarFn& f, const Eigen::VectorXd& x, double h = 1e-5) {
  Eigen::VectorXd g(x.size());
  for (Eigen::Index i = 0; i < x.size(); ++i) {
    Eigen::VectorXd a = x, b = x;
    a[i] += h;
    b[i] -= h;
    g[i] = (f(a) - f(b)) / (2 * h);
  }
  return g;
}

inline Eigen::MatrixXd fd_hessian(const ScalarFn& f, const Eigen::VectorXd& x, double h = 1e-4) {
  const auto n = x.size();
  Eigen::MatrixXd H(n, n);
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = 0; j < n; ++j) {
      auto at = [&](double si, double sj) {
        Eigen::VectorXd y = x;
        y[i] += si * h;
        y[j] += sj * h;
        return f(y);
      };
      H(i, j) = (at(1, 1) - at(1, -1) - at(-1, 1) + at(-1, -1)) / (4 * h * h);
    }
  }
  return H;
}

/// Jacobian of a vector map by central differences.
inline Eigen::MatrixXd fd_jacobian(const std::function<Eigen::VectorXd(const Eigen::VectorXd&)>& f,
                                   const Eigen::VectorXd& x, double h = 1e-6) {
  const Eigen::VectorXd f0 = f(x);
  Eigen::MatrixXd J(f0.size(), x.size());
  for (Eigen::Index j = 0; j < x.size(); ++j) {
    Eigen::VectorXd a = x, b = x;
    a[j] += h;
    b[j] -= h;
    J.col(j) = (f(a) - f(b)) / (2 * h);
  }
  return J;
}

inline ScalarFn scalar(const Expr& e) {
  return [e](const Eigen::VectorXd& x) { return e.evaluate(std::span<const double>(x.data(), x.size())); };
}

/// Levi-Civita symbols from finite differences of a metric given as a matrix function.
inline std::vector<double> fd_christoffel(const std::function<Eigen::MatrixXd(const Eigen::VectorXd&)>& g,
                                          const Eigen::VectorXd& x, double h = 1e-5) {
  const auto n = x.size();
  std::vector<Eigen::MatrixXd> dg(static_cast<std::size_t>(n));
  for (Eigen::Index l = 0; l < n; ++l) {
    Eigen::VectorXd a = x, b = x;
    a[l] += h;
    b[l] -= h;
    dg[static_cast<std::size_t>(l)] = (g(a) - g(b)) / (2 * h);
  }
  const Eigen::MatrixXd ginv = g(x).inverse();
  std::vector<double> out(static_cast<std::size_t>(n * n * n));
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index j = 0; j < n; ++j)
      for (Eigen::Index k = 0; k < n; ++k) {
        double s = 0;
        for (Eigen::Index l = 0; l < n; ++l) {
          s += 0.5 * ginv(i, l) *
               (dg[static_cast<std::size_t>(j)](l, k) + dg[static_cast<std::size_t>(k)](l, j) -
                dg[static_cast<std::size_t>(l)](j, k));
        }
        out[static_cast<std::size_t>((i * n + j) * n + k)] = s;
      }
  return out;
}

/// Acceleration from the Euler-Lagrange equations, with every partial
/// derivative of L taken by finite differences:
///   H xdd = dL/dx - (d^2 L / dxdot dx) xdot.
inline Eigen::VectorXd fd_euler_lagrange_acceleration(const ScalarFn& L, const Eigen::VectorXd& x,
                                                      const Eigen::VectorXd& v) {
  const auto n = x.size();
  Eigen::VectorXd z(2 * n);
  z << x, v;
  const Eigen::VectorXd g = fd_gradient(L, z, 1e-6);
  const Eigen::MatrixXd H = fd_hessian(L, z, 1e-4);
  const Eigen::MatrixXd Hvv = H.bottomRightCorner(n, n);
  const Eigen::MatrixXd Hvx = H.bottomLeftCorner(n, n);
  return Hvv.lu().solve(g.head(n) - Hvx * v);
}

/// Classical RK4 on the Euler-Lagrange system over [0, t] with `steps` steps;
/// returns the final position.
inline Eigen::VectorXd euler_lagrange_flow(const ScalarFn& L, Eigen::VectorXd x, Eigen::VectorXd v, double t,
                                           int steps) {
  const double h = t / steps;
  auto acc = [&](const Eigen::VectorXd& q, const Eigen::VectorXd& w) { return fd_euler_lagrange_acceleration(L, q, w); };
  for (int s = 0; s < steps; ++s) {
    const Eigen::VectorXd k1x = v, k1v = acc(x, v);
    const Eigen::VectorXd k2x = v + 0.5 * h * k1v, k2v = acc(x + 0.5 * h * k1x, k2x);
    const Eigen::VectorXd k3x = v + 0.5 * h * k2v, k3v = acc(x + 0.5 * h * k2x, k3x);
    const Eigen::VectorXd k4x = v + h * k3v, k4v = acc(x + h * k3x, k4x);
    x += h / 6 * (k1x + 2 * k2x + 2 * k3x + k4x);
    v += h / 6 * (k1v + 2 * k2v + 2 * k3v + k4v);
  }
  return x;
}

/// Tangent map of the inverse stereographic projection at u (3 x 2).
inline Eigen::MatrixXd sphere_embedding_jacobian(const Point& p) {
  const double u = p.coords[0], v = p.coords[1];
  const double s = u * u + v * v, d = 1 + s;
  Eigen::MatrixXd J(3, 2);
  J << 2 / d - 4 * u * u / (d * d), -4 * u * v / (d * d), -4 * u * v / (d * d), 2 / d - 4 * v * v / (d * d),
      4 * u / (d * d), 4 * v / (d * d);
  if (p.chart.index == 1) J.row(2) *= -1;
  return J;
}

/// Point reached by the unit-time great circle from p with chart velocity v.
inline Eigen::Vector3d great_circle(const Point& p, const Eigen::VectorXd& v, double t = 1.0) {
  const Eigen::Vector3d e = manifolds::embed_sphere(p);
  const Eigen::Vector3d w = sphere_embedding_jacobian(p) * v;
  const double speed = w.norm();
  if (speed == 0) return e;
  return std::cos(speed * t) * e + std::sin(speed * t) * w / speed;
}

// ---------------------------------------------------------------------------
// Worked example on R^2

inline Expr x1() { return Expr::variable(0); }
inline Expr x2() { return Expr::variable(1); }
inline Expr v1() { return Expr::variable(2); }
inline Expr v2() { return Expr::variable(3); }

inline SmoothMap quartic_lagrangian() {
  return SmoothMap(4, {pow(v1(), 4) + pow(v1(), 2) + v1() + v2() + pow(v2(), 2) + pow(v2(), 4) - pow(x1(), 2) -
                           pow(x2(), 2)});
}

/// Drift formulas of the worked example, as printed.
inline Eigen::Vector2d quartic_drift_sigma1(double x, double y) { return {-x / (6 * y * y + 1), -y}; }
inline Eigen::Vector2d quartic_drift_sigma2(double x, double y) { return {-x, -y / (6 * y * y + 1)}; }
inline Eigen::Vector2d quartic_ito_drift(double x, double y) {
  const double pi = std::numbers::pi;
  return Eigen::Vector2d(1, std::sin(5 * pi * x)) + 0.5 * quartic_drift_sigma1(x, y) + 0.5 * quartic_drift_sigma2(x, y);
}

/// The worked-example SDE on `m` (written in chart `home`, which must be a
/// Cartesian chart of R^2).
inline IntrinsicSDE quartic_sde(std::shared_ptr<const ChartedManifold> m, ChartId home = ChartId{0}) {
  const Expr pi_x = Expr(5 * std::numbers::pi) * x1();
  auto field = [&](std::vector<Expr> c) { return VectorField::from_home_chart(*m, home, SmoothMap(2, std::move(c))); };
  VectorField V = field({Expr(1.0), sin(pi_x)});
  std::vector<VectorField> noise{field({x2(), Expr(0.0)}), field({Expr(0.0), x2()})};
  auto G = DiffusionGenerator::lagrangian(pull_back_tangent_function(*m, home, quartic_lagrangian()));
  return IntrinsicSDE{m, std::move(V), std::move(noise), std::move(G)};
}

/// Linear SDE dX = mu X dt + s X dW on R^1 with the Ito generator.
inline IntrinsicSDE linear_sde(double mu, double s) {
  auto m = manifolds::euclidean(1);
  VectorField V = VectorField::from_maps({SmoothMap(1, {Expr(mu) * Expr::variable(0)})});
  std::vector<VectorField> noise{VectorField::from_maps({SmoothMap(1, {Expr(s) * Expr::variable(0)})})};
  return IntrinsicSDE{m, std::move(V), std::move(noise), DiffusionGenerator::geodesic(m)};
}

inline Eigen::VectorXd uniform_vector(std::mt19937_64& rng, Eigen::Index n, double lo, double hi) {
  std::uniform_real_distribution<double> u(lo, hi);
  Eigen::VectorXd r(n);
  for (Eigen::Index i = 0; i < n; ++i) r[i] = u(rng);
  return r;
}

}  // namespace isde::testing
