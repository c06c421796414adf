#pragma once

// Diffusion generators: fiber maps TM -> DM whose symmetric part is Y (x) Y.
// Each kind supplies the first-order (drift) coefficient; the second-order
// coefficient is always the outer product of the input vector with itself.

#include <cmath>
#include <cstddef>
#include <functional>
#include <memory>
#include <string>
#include <utility>
#include <variant>

#include <Eigen/Dense>

#include "isde/errors.hpp"
#include "isde/expr.hpp"
#include "isde/fields.hpp"
#include "isde/geometry.hpp"

namespace isde {

namespace detail {

inline Eigen::MatrixXd outer(const Eigen::VectorXd& s) {
  const auto n = s.size();
  Eigen::MatrixXd b(n, n);
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index j = 0; j < n; ++j) b(i, j) = s[i] * s[j];
  return b;
}

/// Smallest |pivot| of a partial-pivoting LU relative to max|A|; 0 for a zero matrix.
inline double relative_min_pivot(const Eigen::PartialPivLU<Eigen::MatrixXd>& lu, double scale) {
  if (scale == 0.0) return 0.0;
  return lu.matrixLU().diagonal().cwiseAbs().minCoeff() / scale;
}

inline Eigen::MatrixXd unflatten(std::span<const Jet2> jets, std::size_t n) {
  Eigen::MatrixXd m(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(n));
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j)
      m(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = jets[i * n + j].value();
  return m;
}

/// Inverse of a symmetric tensor, or SingularTensorError.
inline Eigen::PartialPivLU<Eigen::MatrixXd> factor_tensor(const Eigen::MatrixXd& g, const char* what,
                                                           double rel_tol = 1e-12) {
  Eigen::PartialPivLU<Eigen::MatrixXd> lu(g);
  const double scale = g.cwiseAbs().maxCoeff();
  if (!(relative_min_pivot(lu, scale) > rel_tol)) throw SingularTensorError(std::string(what) + " is singular");
  return lu;
}

inline void check_vector(const Point& x, const Eigen::VectorXd& v) {
  if (v.size() != x.coords.size()) throw DimensionError("vector and point dimensions differ");
}

}  // namespace detail

/// Levi-Civita connection of a metric given as n*n flattened components:
///   Gamma^i_{jk} = 1/2 g^{il} (d_j g_{lk} + d_k g_{lj} - d_l g_{jk}).
[[nodiscard]] inline Christoffel christoffel_from_metric(const SmoothMap& metric, const Eigen::VectorXd& x) {
  const auto n = static_cast<std::size_t>(x.size());
  if (metric.dimension_in() != n || metric.dimension_out() != n * n) throw DimensionError("metric arity");
  const auto jets = metric.eval_jet2(x);
  const Eigen::MatrixXd g = detail::unflatten(jets, n);
  const auto lu = detail::factor_tensor(g, "metric");
  const Eigen::MatrixXd ginv = lu.inverse();
  auto dg = [&](std::size_t a, std::size_t b, std::size_t c) { return jets[a * n + b].gradient(c); };
  Christoffel gamma(n);
  for (std::size_t j = 0; j < n; ++j) {
    for (std::size_t k = j; k < n; ++k) {
      Eigen::VectorXd lower(static_cast<Eigen::Index>(n));
      for (std::size_t l = 0; l < n; ++l) lower[static_cast<Eigen::Index>(l)] = dg(l, k, j) + dg(l, j, k) - dg(j, k, l);
      const Eigen::VectorXd upper = 0.5 * ginv * lower;
      for (std::size_t i = 0; i < n; ++i) {
        gamma(i, j, k) = upper[static_cast<Eigen::Index>(i)];
        gamma(i, k, j) = upper[static_cast<Eigen::Index>(i)];
      }
    }
  }
  return gamma;
}

/// Connection coefficients at x: the chart's connection rule if present,
/// otherwise the Levi-Civita connection of the chart's metric.
[[nodiscard]] inline Christoffel connection_at(const ChartedManifold& m, const Point& x) {
  if (m.chart(x.chart).flat) return Christoffel(m.dimension());
  if (m.has_connection(x.chart)) return m.connection(x.chart)(x.coords);
  if (m.has_metric(x.chart)) return christoffel_from_metric(m.metric(x.chart), x.coords);
  throw std::invalid_argument("no connection available in chart '" + m.chart(x.chart).label + "'");
}

// ---------------------------------------------------------------------------
// Kind-specific constructions

/// Flow generator: a^i = (d sigma^i / d x^j) sigma^j.
[[nodiscard]] inline Diffusor stratonovich_generate(const VectorFieldJet& Y) {
  detail::check_vector(Y.at, Y.value);
  if (Y.jacobian.rows() != Y.value.size() || Y.jacobian.cols() != Y.value.size()) {
    throw DimensionError("field Jacobian shape");
  }
  return Diffusor{Y.at, Y.jacobian * Y.value, detail::outer(Y.value)};
}

/// Geodesic-equation generator: a^i = V_ext^i - Gamma^i_{jk} v^j v^k.
[[nodiscard]] inline Diffusor geodesic_generate(const Christoffel& gamma, const TangentVector& v,
                                                const Eigen::VectorXd& v_ext) {
  detail::check_vector(v.at, v.components);
  detail::check_vector(v.at, v_ext);
  if (gamma.dimension() != static_cast<std::size_t>(v.components.size())) throw DimensionError("connection dimension");
  return Diffusor{v.at, v_ext - gamma.contract(v.components), detail::outer(v.components)};
}

[[nodiscard]] inline Diffusor geodesic_generate(const ChartedManifold& m, const TangentVector& v,
                                                const Eigen::VectorXd& v_ext) {
  return geodesic_generate(connection_at(m, v.at), v, v_ext);
}

[[nodiscard]] inline Diffusor geodesic_generate(const ChartedManifold& m, const TangentVector& v) {
  return geodesic_generate(m, v, Eigen::VectorXd::Zero(v.components.size()));
}

/// Euler-Lagrange generator of a regular Lagrangian L(x, xdot) (2n inputs):
///   a = H^{-1} (dL/dx - (d^2 L / dx dxdot)^T sigma),  H = d^2 L / dxdot dxdot,
/// all evaluated at (x, sigma). `relative_tol` bounds the smallest LU pivot
/// relative to max|H|.
[[nodiscard]] inline Diffusor lagrangian_generate(const SmoothMap& L, const Point& x, const Eigen::VectorXd& sigma,
                                                  double relative_tol = 1e-10) {
  detail::check_vector(x, sigma);
  const auto n = static_cast<std::size_t>(sigma.size());
  if (L.dimension_in() != 2 * n || L.dimension_out() != 1) throw DimensionError("Lagrangian must map 2n -> 1");
  Eigen::VectorXd z(static_cast<Eigen::Index>(2 * n));
  z << x.coords, sigma;
  const Jet2 j = L.eval_jet2(z).front();
  Eigen::MatrixXd H(sigma.size(), sigma.size());
  Eigen::VectorXd rhs(sigma.size());
  for (std::size_t a = 0; a < n; ++a) {
    double r = j.gradient(a);
    for (std::size_t k = 0; k < n; ++k) r -= j.hessian(k, n + a) * sigma[static_cast<Eigen::Index>(k)];
    rhs[static_cast<Eigen::Index>(a)] = r;
    for (std::size_t b = 0; b < n; ++b) H(static_cast<Eigen::Index>(a), static_cast<Eigen::Index>(b)) = j.hessian(n + a, n + b);
  }
  Eigen::PartialPivLU<Eigen::MatrixXd> lu(H);
  const double scale = H.cwiseAbs().maxCoeff();
  const double pivot = detail::relative_min_pivot(lu, scale);
  if (!(pivot > relative_tol)) {
    throw RegularityError("Lagrangian velocity Hessian is singular (relative pivot " + std::to_string(pivot) + ")",
                          pivot * scale);
  }
  return Diffusor{x, lu.solve(rhs), detail::outer(sigma)};
}

/// Generator of L = 1/2 alpha(v, v) for a non-degenerate covariant 2-tensor:
///   a^i = alpha^{ij} (1/2 d_j alpha_{lm} s^l s^m - d_k alpha_{jm} s^k s^m).
[[nodiscard]] inline Diffusor quadratic_form_generate(const SmoothMap& alpha, const Point& x,
                                                      const Eigen::VectorXd& sigma) {
  detail::check_vector(x, sigma);
  const auto n = static_cast<std::size_t>(sigma.size());
  if (alpha.dimension_in() != n || alpha.dimension_out() != n * n) throw DimensionError("alpha arity");
  const auto jets = alpha.eval_jet2(x.coords);
  const auto lu = detail::factor_tensor(detail::unflatten(jets, n), "quadratic tensor");
  Eigen::VectorXd rhs(sigma.size());
  for (std::size_t j = 0; j < n; ++j) {
    double r = 0.0;
    for (std::size_t l = 0; l < n; ++l) {
      for (std::size_t m = 0; m < n; ++m) {
        const double sm = sigma[static_cast<Eigen::Index>(m)];
        r += 0.5 * jets[l * n + m].gradient(j) * sigma[static_cast<Eigen::Index>(l)] * sm;
        r -= jets[j * n + m].gradient(l) * sigma[static_cast<Eigen::Index>(l)] * sm;
      }
    }
    rhs[static_cast<Eigen::Index>(j)] = r;
  }
  return Diffusor{x, lu.solve(rhs), detail::outer(sigma)};
}

/// Generator of L = 1/2 g(v, v) - Phi(x):
///   a^i = -Gamma^i_{jk} s^j s^k - g^{ij} d_j Phi.
[[nodiscard]] inline Diffusor kinetic_potential_generate(const ChartedManifold& m, const SmoothMap& phi,
                                                         const Point& x, const Eigen::VectorXd& sigma) {
  detail::check_vector(x, sigma);
  if (phi.dimension_in() != m.dimension() || phi.dimension_out() != 1) throw DimensionError("potential arity");
  const Eigen::MatrixXd g = m.metric_at(x);
  const auto lu = detail::factor_tensor(g, "metric");
  const Eigen::VectorXd grad = phi.eval_jet2(x.coords).front().gradient_vector();
  const Christoffel gamma = connection_at(m, x);
  return Diffusor{x, -gamma.contract(sigma) - lu.solve(grad), detail::outer(sigma)};
}

// ---------------------------------------------------------------------------

namespace kinds {

struct Stratonovich {};

struct Geodesic {
  std::shared_ptr<const ChartedManifold> manifold;
};

/// Lagrangian on TM, one 2n-input representation per chart.
struct Lagrangian {
  ChartwiseMap lagrangian;
};

/// alpha_{ij}(x) flattened, one representation per chart.
struct QuadraticForm {
  ChartwiseMap alpha;
};

struct KineticPotential {
  std::shared_ptr<const ChartedManifold> manifold;
  ChartwiseMap potential;
};

/// Arbitrary drift rule; used for negative controls.
struct Custom {
  std::string label;
  std::function<Eigen::VectorXd(const VectorFieldJet&)> drift;
};

}  // namespace kinds

class DiffusionGenerator {
 public:
  using Kind = std::variant<kinds::Stratonovich, kinds::Geodesic, kinds::Lagrangian, kinds::QuadraticForm,
                            kinds::KineticPotential, kinds::Custom>;

  explicit DiffusionGenerator(Kind kind, double regularity_tolerance = 1e-10)
      : kind_(std::move(kind)), tol_(regularity_tolerance) {}

  static DiffusionGenerator stratonovich() { return DiffusionGenerator(kinds::Stratonovich{}); }
  static DiffusionGenerator geodesic(std::shared_ptr<const ChartedManifold> m) {
    return DiffusionGenerator(kinds::Geodesic{std::move(m)});
  }
  static DiffusionGenerator lagrangian(ChartwiseMap L) { return DiffusionGenerator(kinds::Lagrangian{std::move(L)}); }
  static DiffusionGenerator quadratic_form(ChartwiseMap alpha) {
    return DiffusionGenerator(kinds::QuadraticForm{std::move(alpha)});
  }
  static DiffusionGenerator kinetic_potential(std::shared_ptr<const ChartedManifold> m, ChartwiseMap phi) {
    return DiffusionGenerator(kinds::KineticPotential{std::move(m), std::move(phi)});
  }
  static DiffusionGenerator custom(std::string label, std::function<Eigen::VectorXd(const VectorFieldJet&)> drift) {
    return DiffusionGenerator(kinds::Custom{std::move(label), std::move(drift)});
  }

  [[nodiscard]] const Kind& kind() const { return kind_; }
  [[nodiscard]] double regularity_tolerance() const { return tol_; }

  [[nodiscard]] std::string name() const {
    return std::visit(
        [](const auto& k) -> std::string {
          using K = std::decay_t<decltype(k)>;
          if constexpr (std::is_same_v<K, kinds::Stratonovich>) return "stratonovich";
          if constexpr (std::is_same_v<K, kinds::Geodesic>) return "ito";
          if constexpr (std::is_same_v<K, kinds::Lagrangian>) return "lagrangian";
          if constexpr (std::is_same_v<K, kinds::QuadraticForm>) return "quadratic_form";
          if constexpr (std::is_same_v<K, kinds::KineticPotential>) return "kinetic_potential";
          if constexpr (std::is_same_v<K, kinds::Custom>) return "custom:" + k.label;
        },
        kind_);
  }

  /// G(Y): second order is Y (x) Y, first order per kind.
  [[nodiscard]] Diffusor generate(const VectorFieldJet& Y) const {
    detail::check_vector(Y.at, Y.value);
    const TangentVector v{Y.at, Y.value};
    return std::visit(
        [&](const auto& k) -> Diffusor {
          using K = std::decay_t<decltype(k)>;
          if constexpr (std::is_same_v<K, kinds::Stratonovich>) {
            return stratonovich_generate(Y);
          } else if constexpr (std::is_same_v<K, kinds::Geodesic>) {
            return geodesic_generate(*k.manifold, v);
          } else if constexpr (std::is_same_v<K, kinds::Lagrangian>) {
            return lagrangian_generate(chart_representation(k.lagrangian, Y.at.chart, "Lagrangian"), Y.at, Y.value,
                                       tol_);
          } else if constexpr (std::is_same_v<K, kinds::QuadraticForm>) {
            return quadratic_form_generate(chart_representation(k.alpha, Y.at.chart, "quadratic tensor"), Y.at,
                                           Y.value);
          } else if constexpr (std::is_same_v<K, kinds::KineticPotential>) {
            return kinetic_potential_generate(*k.manifold, chart_representation(k.potential, Y.at.chart, "potential"),
                                              Y.at, Y.value);
          } else {
            Eigen::VectorXd a = k.drift(Y);
            detail::check_vector(Y.at, a);
            return Diffusor{Y.at, std::move(a), detail::outer(Y.value)};
          }
        },
        kind_);
  }

  /// Whether generate() reads the field Jacobian.
  [[nodiscard]] bool uses_jacobian() const {
    return std::holds_alternative<kinds::Stratonovich>(kind_) || std::holds_alternative<kinds::Custom>(kind_);
  }

 private:
  Kind kind_;
  double tol_;
};

[[nodiscard]] inline Diffusor generate(const DiffusionGenerator& G, const VectorFieldJet& Y) { return G.generate(Y); }

}  // namespace isde
