#pragma once

// Charts, atlases and Schwartz diffusors. Everything is expressed in chart
// coordinates; a Point always carries the chart it is written in.

#include <compare>
#include <cstddef>
#include <functional>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "isde/errors.hpp"
#include "isde/expr.hpp"

namespace isde {

/// Default safety margin used when deciding chart membership.
inline constexpr double kChartMargin = 1e-6;

struct ChartId {
  std::size_t index = 0;
  friend auto operator<=>(const ChartId&, const ChartId&) = default;
};

/// `domain(coords, margin)` must return true only if coords lie in the chart
/// image at distance at least `margin` from its boundary.
struct Chart {
  std::string label;
  std::size_t dimension = 0;
  std::function<bool(const Eigen::VectorXd&, double)> domain;
  /// Box used when sampling test points in this chart.
  std::vector<std::pair<double, double>> sample_box;
  /// Connection coefficients vanish identically in this chart.
  bool flat = false;

  [[nodiscard]] bool contains(const Eigen::VectorXd& coords, double margin = kChartMargin) const {
    return static_cast<std::size_t>(coords.size()) == dimension && (!domain || domain(coords, margin));
  }
};

struct Point {
  ChartId chart;
  Eigen::VectorXd coords;
};

struct TangentVector {
  Point at;
  Eigen::VectorXd components;
};

/// Second-order tangent vector a^i d_i + b^{ij} d_ij at a point.
struct Diffusor {
  Point at;
  Eigen::VectorXd first_order;
  Eigen::MatrixXd second_order;
};

/// Value and Jacobian (d sigma^i / d x^j) of a vector field at a point.
struct VectorFieldJet {
  Point at;
  Eigen::VectorXd value;
  Eigen::MatrixXd jacobian;
};

/// Connection coefficients Gamma^i_{jk} at a point.
class Christoffel {
 public:
  explicit Christoffel(std::size_t n = 0) : n_(n), data_(n * n * n, 0.0) {}

  [[nodiscard]] std::size_t dimension() const { return n_; }
  double& operator()(std::size_t i, std::size_t j, std::size_t k) { return data_[(i * n_ + j) * n_ + k]; }
  double operator()(std::size_t i, std::size_t j, std::size_t k) const { return data_[(i * n_ + j) * n_ + k]; }

  /// Gamma^i_{jk} u^j w^k.
  [[nodiscard]] Eigen::VectorXd contract(const Eigen::VectorXd& u, const Eigen::VectorXd& w) const {
    Eigen::VectorXd r = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(n_));
    for (std::size_t i = 0; i < n_; ++i) {
      double s = 0.0;
      for (std::size_t j = 0; j < n_; ++j)
        for (std::size_t k = 0; k < n_; ++k) s += (*this)(i, j, k) * u[j] * w[k];
      r[static_cast<Eigen::Index>(i)] = s;
    }
    return r;
  }

  [[nodiscard]] Eigen::VectorXd contract(const Eigen::VectorXd& v) const { return contract(v, v); }

 private:
  std::size_t n_;
  std::vector<double> data_;
};

using ConnectionRule = std::function<Christoffel(const Eigen::VectorXd&)>;

/// An n-manifold described by an atlas: charts, transition maps, and
/// optional per-chart metric and connection.
class ChartedManifold {
 public:
  ChartedManifold(std::size_t dimension, std::vector<Chart> charts)
      : dim_(dimension),
        charts_(std::move(charts)),
        transitions_(charts_.size(), std::vector<std::optional<SmoothMap>>(charts_.size())),
        metrics_(charts_.size()),
        connections_(charts_.size()) {
    if (charts_.empty()) throw std::invalid_argument("a manifold needs at least one chart");
    for (std::size_t c = 0; c < charts_.size(); ++c) {
      if (charts_[c].dimension != dim_) throw DimensionError("chart dimension differs from manifold dimension");
      transitions_[c][c] = SmoothMap::identity(dim_);
    }
  }

  [[nodiscard]] std::size_t dimension() const { return dim_; }
  [[nodiscard]] std::size_t chart_count() const { return charts_.size(); }
  [[nodiscard]] const Chart& chart(ChartId id) const { return charts_.at(id.index); }
  [[nodiscard]] std::vector<ChartId> chart_ids() const {
    std::vector<ChartId> ids;
    for (std::size_t c = 0; c < charts_.size(); ++c) ids.push_back(ChartId{c});
    return ids;
  }

  void set_transition(ChartId from, ChartId to, SmoothMap map) {
    if (map.dimension_in() != dim_ || map.dimension_out() != dim_) throw DimensionError("transition arity");
    transitions_.at(from.index).at(to.index) = std::move(map);
  }
  [[nodiscard]] bool has_transition(ChartId from, ChartId to) const {
    return transitions_.at(from.index).at(to.index).has_value();
  }
  [[nodiscard]] const SmoothMap& transition(ChartId from, ChartId to) const {
    const auto& t = transitions_.at(from.index).at(to.index);
    if (!t) {
      throw OutOfChart("no transition from chart " + std::to_string(from.index) + " to " + std::to_string(to.index));
    }
    return *t;
  }

  /// Metric components g_ij, flattened row-major (n*n outputs).
  void set_metric(ChartId c, SmoothMap g) {
    if (g.dimension_in() != dim_ || g.dimension_out() != dim_ * dim_) throw DimensionError("metric arity");
    metrics_.at(c.index) = std::move(g);
  }
  [[nodiscard]] bool has_metric(ChartId c) const { return metrics_.at(c.index).has_value(); }
  [[nodiscard]] const SmoothMap& metric(ChartId c) const {
    const auto& g = metrics_.at(c.index);
    if (!g) throw std::invalid_argument("no metric in chart " + std::to_string(c.index));
    return *g;
  }
  [[nodiscard]] Eigen::MatrixXd metric_at(const Point& x) const {
    const Eigen::VectorXd flat = metric(x.chart).evaluate(x.coords);
    const auto n = static_cast<Eigen::Index>(dim_);
    return Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>(flat.data(), n,
                                                                                                    n);
  }

  void set_connection(ChartId c, ConnectionRule rule) { connections_.at(c.index) = std::move(rule); }
  [[nodiscard]] bool has_connection(ChartId c) const { return static_cast<bool>(connections_.at(c.index)); }
  [[nodiscard]] const ConnectionRule& connection(ChartId c) const { return connections_.at(c.index); }

  [[nodiscard]] bool contains(const Point& x, double margin = kChartMargin) const {
    return x.chart.index < charts_.size() && chart(x.chart).contains(x.coords, margin);
  }

 private:
  std::size_t dim_;
  std::vector<Chart> charts_;
  std::vector<std::vector<std::optional<SmoothMap>>> transitions_;
  std::vector<std::optional<SmoothMap>> metrics_;
  std::vector<ConnectionRule> connections_;
};

// ---------------------------------------------------------------------------
// Diffusor operations

/// Second-order pushforward of L under phi:
///   a'^k  = a^i d_i phi^k + b^{ij} d_ij phi^k
///   b'^kl = b^{ij} d_i phi^k d_j phi^l
/// The result is attached to `target` at phi(L.at).
[[nodiscard]] inline Diffusor pushforward_diffusor(const SmoothMap& phi, const Diffusor& L, ChartId target) {
  const auto n = L.first_order.size();
  if (static_cast<Eigen::Index>(phi.dimension_in()) != n || L.at.coords.size() != n || L.second_order.rows() != n ||
      L.second_order.cols() != n) {
    throw DimensionError("pushforward_diffusor: dimension mismatch");
  }
  const auto jets = phi.eval_jet2(L.at.coords);
  const auto m = static_cast<Eigen::Index>(jets.size());
  Eigen::MatrixXd J(m, n);
  Eigen::VectorXd value(m);
  Eigen::VectorXd a(m);
  for (Eigen::Index k = 0; k < m; ++k) {
    const Jet2& f = jets[static_cast<std::size_t>(k)];
    value[k] = f.value();
    double s = 0.0;
    for (Eigen::Index i = 0; i < n; ++i) {
      J(k, i) = f.gradient(static_cast<std::size_t>(i));
      s += L.first_order[i] * J(k, i);
    }
    for (Eigen::Index i = 0; i < n; ++i)
      for (Eigen::Index j = 0; j < n; ++j)
        s += L.second_order(i, j) * f.hessian(static_cast<std::size_t>(i), static_cast<std::size_t>(j));
    a[k] = s;
  }
  Eigen::MatrixXd b = J * L.second_order * J.transpose();
  b = 0.5 * (b + b.transpose()).eval();
  return Diffusor{Point{target, value}, a, b};
}

[[nodiscard]] inline Diffusor pushforward_diffusor(const SmoothMap& phi, const Diffusor& L) {
  return pushforward_diffusor(phi, L, L.at.chart);
}

/// The symmetric part of a diffusor: locally its b^{ij} coefficients.
[[nodiscard]] inline Eigen::MatrixXd symmetric_part(const Diffusor& L) { return L.second_order; }

/// L[f] = a^i d_i f + b^{ij} d_ij f for scalar-valued f.
[[nodiscard]] inline double apply_diffusor(const Diffusor& L, const SmoothMap& f) {
  if (f.dimension_out() != 1) throw DimensionError("apply_diffusor needs a scalar function");
  const Jet2 j = f.eval_jet2(L.at.coords).front();
  double s = 0.0;
  const auto n = L.first_order.size();
  for (Eigen::Index i = 0; i < n; ++i) {
    s += L.first_order[i] * j.gradient(static_cast<std::size_t>(i));
    for (Eigen::Index k = 0; k < n; ++k)
      s += L.second_order(i, k) * j.hessian(static_cast<std::size_t>(i), static_cast<std::size_t>(k));
  }
  return s;
}

// ---------------------------------------------------------------------------
// Chart changes

[[nodiscard]] inline Point transform_point(const ChartedManifold& m, const Point& x, ChartId to,
                                           double margin = kChartMargin) {
  if (x.chart == to) return x;
  Eigen::VectorXd y;
  try {
    y = m.transition(x.chart, to).evaluate(x.coords);
  } catch (const DomainError& e) {
    throw OutOfChart(std::string("transition undefined at point: ") + e.what());
  }
  if (!y.allFinite() || !m.chart(to).contains(y, margin)) {
    throw OutOfChart("point does not lie in chart '" + m.chart(to).label + "'");
  }
  return Point{to, y};
}

[[nodiscard]] inline TangentVector transform_vector(const ChartedManifold& m, const TangentVector& v, ChartId to,
                                                    double margin = kChartMargin) {
  if (v.at.chart == to) return v;
  Point y = transform_point(m, v.at, to, margin);
  const Eigen::MatrixXd J = m.transition(v.at.chart, to).jacobian(v.at.coords);
  return TangentVector{std::move(y), J * v.components};
}

[[nodiscard]] inline Diffusor transform_diffusor(const ChartedManifold& m, const Diffusor& L, ChartId to,
                                                 double margin = kChartMargin) {
  if (L.at.chart == to) return L;
  Point y = transform_point(m, L.at, to, margin);
  Diffusor r = pushforward_diffusor(m.transition(L.at.chart, to), L, to);
  r.at = std::move(y);
  return r;
}

/// Transforms a vector-field jet: sigma' = J sigma and
/// D sigma' = (d_l J sigma^l + J D sigma) J^{-1}.
[[nodiscard]] inline VectorFieldJet transform_field_jet(const ChartedManifold& m, const VectorFieldJet& Y, ChartId to,
                                                        double margin = kChartMargin) {
  if (Y.at.chart == to) return Y;
  Point y = transform_point(m, Y.at, to, margin);
  const auto jets = m.transition(Y.at.chart, to).eval_jet2(Y.at.coords);
  const auto n = Y.value.size();
  Eigen::MatrixXd J(n, n);
  Eigen::MatrixXd dJ_sigma(n, n);
  for (Eigen::Index i = 0; i < n; ++i) {
    const Jet2& f = jets[static_cast<std::size_t>(i)];
    for (Eigen::Index k = 0; k < n; ++k) {
      J(i, k) = f.gradient(static_cast<std::size_t>(k));
      double s = 0.0;
      for (Eigen::Index l = 0; l < n; ++l)
        s += f.hessian(static_cast<std::size_t>(l), static_cast<std::size_t>(k)) * Y.value[l];
      dJ_sigma(i, k) = s;
    }
  }
  Eigen::FullPivLU<Eigen::MatrixXd> lu(J);
  if (!lu.isInvertible()) throw OutOfChart("transition Jacobian is singular");
  const Eigen::MatrixXd Jinv = lu.inverse();
  return VectorFieldJet{std::move(y), J * Y.value, (dJ_sigma + J * Y.jacobian) * Jinv};
}

}  // namespace isde
