#pragma once

// Second-order forward-mode jets: value, gradient and symmetric Hessian of a
// scalar with respect to n seeded variables. Storage is inline (no heap) and
// the Hessian is kept as a packed upper triangle, so it is symmetric by
// construction.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "isde/errors.hpp"

namespace isde {

/// Largest number of independent variables a jet can carry.
inline constexpr std::size_t kMaxJetDim = 16;

class Jet2 {
 public:
  Jet2() = default;

  /// Constant jet in an n-variable context.
  explicit Jet2(std::size_t n, double value = 0.0) : n_(n), value_(value) {
    check_dim(n);
    std::fill_n(grad_.begin(), n_, 0.0);
    std::fill_n(hess_.begin(), packed_size(), 0.0);
  }

  Jet2(const Jet2& other) { copy_from(other); }
  Jet2& operator=(const Jet2& other) {
    if (this != &other) copy_from(other);
    return *this;
  }

  [[nodiscard]] std::size_t dim() const { return n_; }
  [[nodiscard]] double value() const { return value_; }
  [[nodiscard]] double gradient(std::size_t i) const { return grad_[i]; }
  [[nodiscard]] double hessian(std::size_t i, std::size_t j) const { return hess_[packed_index(i, j)]; }

  [[nodiscard]] Eigen::VectorXd gradient_vector() const {
    Eigen::VectorXd g(n_);
    for (std::size_t i = 0; i < n_; ++i) g[i] = grad_[i];
    return g;
  }

  [[nodiscard]] Eigen::MatrixXd hessian_matrix() const {
    Eigen::MatrixXd h(n_, n_);
    for (std::size_t i = 0; i < n_; ++i)
      for (std::size_t j = 0; j < n_; ++j) h(i, j) = hessian(i, j);
    return h;
  }

  void set_value(double v) { value_ = v; }
  void set_gradient(std::size_t i, double g) { grad_[i] = g; }
  /// Writes both (i,j) and (j,i).
  void set_hessian(std::size_t i, std::size_t j, double h) { hess_[packed_index(i, j)] = h; }

  Jet2& operator+=(const Jet2& o) {
    check_same(o);
    value_ += o.value_;
    for (std::size_t i = 0; i < n_; ++i) grad_[i] += o.grad_[i];
    for (std::size_t k = 0; k < packed_size(); ++k) hess_[k] += o.hess_[k];
    return *this;
  }

  Jet2& operator-=(const Jet2& o) {
    check_same(o);
    value_ -= o.value_;
    for (std::size_t i = 0; i < n_; ++i) grad_[i] -= o.grad_[i];
    for (std::size_t k = 0; k < packed_size(); ++k) hess_[k] -= o.hess_[k];
    return *this;
  }

  Jet2& operator*=(double s) {
    value_ *= s;
    for (std::size_t i = 0; i < n_; ++i) grad_[i] *= s;
    for (std::size_t k = 0; k < packed_size(); ++k) hess_[k] *= s;
    return *this;
  }

  Jet2& operator+=(double s) {
    value_ += s;
    return *this;
  }

  /// Scalar chain rule: f(u) given f(u.value), f'(u.value), f''(u.value).
  [[nodiscard]] Jet2 chain(double f, double df, double d2f) const {
    Jet2 r(*this);
    r.value_ = f;
    std::size_t k = 0;
    for (std::size_t i = 0; i < n_; ++i) {
      for (std::size_t j = i; j < n_; ++j, ++k) r.hess_[k] = df * hess_[k] + d2f * grad_[i] * grad_[j];
    }
    for (std::size_t i = 0; i < n_; ++i) r.grad_[i] = df * grad_[i];
    return r;
  }

  /// Chain rule for a scalar function of two jets, given its value, first
  /// partials (fu, fv) and second partials (fuu, fuv, fvv).
  [[nodiscard]] static Jet2 chain2(const Jet2& u, const Jet2& v, double f, double fu, double fv, double fuu,
                                   double fuv, double fvv) {
    u.check_same(v);
    Jet2 r(u.n_, f);
    std::size_t k = 0;
    for (std::size_t i = 0; i < u.n_; ++i) {
      for (std::size_t j = i; j < u.n_; ++j, ++k) {
        r.hess_[k] = fu * u.hess_[k] + fv * v.hess_[k] + fuu * u.grad_[i] * u.grad_[j] +
                     fvv * v.grad_[i] * v.grad_[j] + fuv * (u.grad_[i] * v.grad_[j] + v.grad_[i] * u.grad_[j]);
      }
    }
    for (std::size_t i = 0; i < u.n_; ++i) r.grad_[i] = fu * u.grad_[i] + fv * v.grad_[i];
    return r;
  }

  void check_same(const Jet2& o) const {
    if (n_ != o.n_) {
      throw DimensionError("jet dimension mismatch: " + std::to_string(n_) + " vs " + std::to_string(o.n_));
    }
  }

  friend Jet2 operator*(const Jet2& a, const Jet2& b) {
    a.check_same(b);
    Jet2 r(a.n_, a.value_ * b.value_);
    std::size_t k = 0;
    for (std::size_t i = 0; i < a.n_; ++i) {
      for (std::size_t j = i; j < a.n_; ++j, ++k) {
        r.hess_[k] = a.value_ * b.hess_[k] + b.value_ * a.hess_[k] + a.grad_[i] * b.grad_[j] +
                     b.grad_[i] * a.grad_[j];
      }
    }
    for (std::size_t i = 0; i < a.n_; ++i) r.grad_[i] = a.value_ * b.grad_[i] + b.value_ * a.grad_[i];
    return r;
  }

  friend Jet2 operator/(const Jet2& a, const Jet2& b) {
    a.check_same(b);
    if (b.value_ == 0.0) throw DomainError("jet division by zero");
    const double q = a.value_ / b.value_;
    Jet2 r(a.n_, q);
    for (std::size_t i = 0; i < a.n_; ++i) r.grad_[i] = (a.grad_[i] - q * b.grad_[i]) / b.value_;
    std::size_t k = 0;
    for (std::size_t i = 0; i < a.n_; ++i) {
      for (std::size_t j = i; j < a.n_; ++j, ++k) {
        r.hess_[k] = (a.hess_[k] - q * b.hess_[k] - r.grad_[i] * b.grad_[j] - b.grad_[i] * r.grad_[j]) / b.value_;
      }
    }
    return r;
  }

 private:
  static constexpr std::size_t kPacked = kMaxJetDim * (kMaxJetDim + 1) / 2;

  static void check_dim(std::size_t n) {
    if (n > kMaxJetDim) {
      throw DimensionError("jet dimension " + std::to_string(n) + " exceeds kMaxJetDim");
    }
  }

  [[nodiscard]] std::size_t packed_size() const { return n_ * (n_ + 1) / 2; }

  [[nodiscard]] std::size_t packed_index(std::size_t i, std::size_t j) const {
    if (i > j) std::swap(i, j);
    return i * (2 * n_ - i + 1) / 2 + (j - i);
  }

  void copy_from(const Jet2& o) {
    n_ = o.n_;
    value_ = o.value_;
    std::copy_n(o.grad_.begin(), n_, grad_.begin());
    std::copy_n(o.hess_.begin(), packed_size(), hess_.begin());
  }

  std::size_t n_ = 0;
  double value_ = 0.0;
  std::array<double, kMaxJetDim> grad_;
  std::array<double, kPacked> hess_;
};

/// Seed variable `index` of an n-variable context.
[[nodiscard]] inline Jet2 jet_variable(std::size_t index, double value, std::size_t n) {
  if (index >= n) {
    throw DimensionError("jet_variable index " + std::to_string(index) + " out of range for n=" + std::to_string(n));
  }
  Jet2 j(n, value);
  j.set_gradient(index, 1.0);
  return j;
}

/// Seeds all variables of a point at once.
[[nodiscard]] inline std::vector<Jet2> jet_variables(std::span<const double> x) {
  std::vector<Jet2> v;
  v.reserve(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) v.push_back(jet_variable(i, x[i], x.size()));
  return v;
}

inline Jet2 operator+(Jet2 a, const Jet2& b) { return a += b; }
inline Jet2 operator-(Jet2 a, const Jet2& b) { return a -= b; }
inline Jet2 operator-(Jet2 a) { return a *= -1.0; }
inline Jet2 operator+(Jet2 a, double s) { return a += s; }
inline Jet2 operator+(double s, Jet2 a) { return a += s; }
inline Jet2 operator-(Jet2 a, double s) { return a += -s; }
inline Jet2 operator-(double s, Jet2 a) {
  a *= -1.0;
  return a += s;
}
inline Jet2 operator*(Jet2 a, double s) { return a *= s; }
inline Jet2 operator*(double s, Jet2 a) { return a *= s; }
inline Jet2 operator/(const Jet2& a, double s) {
  if (s == 0.0) throw DomainError("jet division by zero");
  return a.chain(a.value() / s, 1.0 / s, 0.0);
}
inline Jet2 operator/(double s, const Jet2& b) {
  if (b.value() == 0.0) throw DomainError("jet division by zero");
  const double u = b.value();
  return b.chain(s / u, -s / (u * u), 2.0 * s / (u * u * u));
}

inline Jet2 sin(const Jet2& u) {
  const double s = std::sin(u.value());
  return u.chain(s, std::cos(u.value()), -s);
}

inline Jet2 cos(const Jet2& u) {
  const double c = std::cos(u.value());
  return u.chain(c, -std::sin(u.value()), -c);
}

inline Jet2 exp(const Jet2& u) {
  const double e = std::exp(u.value());
  return u.chain(e, e, e);
}

inline Jet2 log(const Jet2& u) {
  if (u.value() <= 0.0) throw DomainError("log of non-positive value " + std::to_string(u.value()));
  const double x = u.value();
  return u.chain(std::log(x), 1.0 / x, -1.0 / (x * x));
}

inline Jet2 sqrt(const Jet2& u) {
  if (u.value() <= 0.0) throw DomainError("sqrt is not differentiable at " + std::to_string(u.value()));
  const double s = std::sqrt(u.value());
  return u.chain(s, 0.5 / s, -0.25 / (s * u.value()));
}

inline Jet2 pow(const Jet2& u, int k) {
  if (k == 0) return Jet2(u.dim(), 1.0);
  const double x = u.value();
  if (x == 0.0 && k < 0) throw DomainError("negative power of zero");
  const double f = std::pow(x, k);
  const double df = k * std::pow(x, k - 1);
  const double d2f = k == 1 ? 0.0 : static_cast<double>(k) * (k - 1) * std::pow(x, k - 2);
  return u.chain(f, df, d2f);
}

/// Real power u^p for u > 0.
inline Jet2 pow(const Jet2& u, double p) {
  const double x = u.value();
  if (x <= 0.0) throw DomainError("real power of non-positive value");
  const double f = std::pow(x, p);
  return u.chain(f, p * f / x, p * (p - 1.0) * f / (x * x));
}

inline Jet2 atan2(const Jet2& y, const Jet2& x) {
  const double yv = y.value();
  const double xv = x.value();
  const double r2 = xv * xv + yv * yv;
  if (r2 == 0.0) throw DomainError("atan2 at the origin");
  const double r4 = r2 * r2;
  // partials with respect to (y, x)
  return Jet2::chain2(y, x, std::atan2(yv, xv), xv / r2, -yv / r2, -2.0 * xv * yv / r4, (yv * yv - xv * xv) / r4,
                      2.0 * xv * yv / r4);
}

/// Second-order chain rule. `outer[k]` holds jets of g_k with respect to the
/// intermediate variables y (m of them); `inner[l]` holds jets of y_l = f_l(x)
/// with respect to x. Returns jets of g_k(f(x)) with respect to x.
[[nodiscard]] inline std::vector<Jet2> compose_jets(std::span<const Jet2> outer, std::span<const Jet2> inner) {
  const std::size_t m = inner.size();
  if (m == 0) throw DimensionError("compose_jets needs at least one intermediate variable");
  const std::size_t n = inner.front().dim();
  std::vector<Jet2> out;
  out.reserve(outer.size());
  for (const Jet2& g : outer) {
    if (g.dim() != m) throw DimensionError("compose_jets: outer jet dimension must equal inner count");
    Jet2 r(n, g.value());
    for (std::size_t i = 0; i < n; ++i) {
      double gi = 0.0;
      for (std::size_t l = 0; l < m; ++l) gi += g.gradient(l) * inner[l].gradient(i);
      r.set_gradient(i, gi);
    }
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t j = i; j < n; ++j) {
        double h = 0.0;
        for (std::size_t l = 0; l < m; ++l) {
          h += g.gradient(l) * inner[l].hessian(i, j);
          for (std::size_t q = 0; q < m; ++q) h += g.hessian(l, q) * inner[l].gradient(i) * inner[q].gradient(j);
        }
        r.set_hessian(i, j, h);
      }
    }
    out.push_back(r);
  }
  return out;
}

}  // namespace isde
