#pragma once

// Intrinsic SDEs (V, {sigma_l}, G), their chart Ito coefficients, the
// Schwartz-morphism coefficient split, and conversion between generators.

#include <cstddef>
#include <memory>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "isde/errors.hpp"
#include "isde/fields.hpp"
#include "isde/generators.hpp"
#include "isde/geometry.hpp"

namespace isde {

struct IntrinsicSDE {
  std::shared_ptr<const ChartedManifold> manifold;
  VectorField drift;
  std::vector<VectorField> noise;
  DiffusionGenerator generator;

  [[nodiscard]] std::size_t noise_count() const { return noise.size(); }
};

/// Chart form dX^i = drift^i dt + diffusion^i_l dW^l.
struct LocalItoCoefficients {
  Eigen::VectorXd drift;
  Eigen::MatrixXd diffusion;                ///< n x p, column l is sigma_l
  Eigen::MatrixXd quadratic_variation_rate;  ///< diffusion * diffusion^T
};

/// Coefficients of the Schwartz morphism R^{p+1} -> M in a chart.
struct SchwartzMorphismCoefficients {
  Eigen::VectorXd f0;              ///< V^i
  Eigen::MatrixXd f;               ///< sigma^i_l
  std::vector<Eigen::MatrixXd> f2;  ///< f2[i](l, m), symmetric in (l, m)
};

namespace detail {

/// Jet of a noise field at x. The Jacobian is left zero when the generator
/// ignores it.
inline VectorFieldJet noise_jet(const VectorField& sigma, bool need_jacobian, const Point& x) {
  if (need_jacobian) {
    if (!sigma.has_jet()) throw std::invalid_argument("generator needs a noise field Jacobian");
    return sigma.jet(x);
  }
  const Eigen::VectorXd v = sigma(x);
  return VectorFieldJet{x, v, Eigen::MatrixXd::Zero(v.size(), v.size())};
}

inline VectorFieldJet noise_jet(const VectorField& sigma, const DiffusionGenerator& G, const Point& x) {
  return noise_jet(sigma, G.uses_jacobian(), x);
}

/// Sum over l of the generator drifts a_l = first_order(G(sigma_l)).
inline Eigen::VectorXd generator_drift_sum(const IntrinsicSDE& sde, const Point& x) {
  Eigen::VectorXd sum = Eigen::VectorXd::Zero(x.coords.size());
  for (const auto& sigma : sde.noise) sum += sde.generator.generate(noise_jet(sigma, sde.generator, x)).first_order;
  return sum;
}

}  // namespace detail

[[nodiscard]] inline LocalItoCoefficients local_ito_coefficients(const IntrinsicSDE& sde, const Point& x) {
  const auto n = x.coords.size();
  const auto p = static_cast<Eigen::Index>(sde.noise.size());
  Eigen::VectorXd v = sde.drift(x);
  if (v.size() != n) throw DimensionError("drift dimension");
  LocalItoCoefficients c;
  c.diffusion.resize(n, p);
  Eigen::VectorXd a_sum = Eigen::VectorXd::Zero(n);
  for (Eigen::Index l = 0; l < p; ++l) {
    const VectorFieldJet Y = detail::noise_jet(sde.noise[static_cast<std::size_t>(l)], sde.generator, x);
    a_sum += sde.generator.generate(Y).first_order;
    c.diffusion.col(l) = Y.value;
  }
  c.drift = v + 0.5 * a_sum;
  c.quadratic_variation_rate = c.diffusion * c.diffusion.transpose();
  return c;
}

/// Isotropic trace split f^i_{lm} = a^i delta_{lm} / p.
[[nodiscard]] inline SchwartzMorphismCoefficients schwartz_morphism_coefficients(const IntrinsicSDE& sde,
                                                                                 const Point& x) {
  const auto p = static_cast<Eigen::Index>(sde.noise.size());
  if (p == 0) throw std::invalid_argument("Schwartz morphism coefficients need at least one noise field");
  const auto n = x.coords.size();
  SchwartzMorphismCoefficients s;
  s.f0 = sde.drift(x);
  s.f.resize(n, p);
  for (Eigen::Index l = 0; l < p; ++l) s.f.col(l) = sde.noise[static_cast<std::size_t>(l)](x);
  const Eigen::VectorXd a = detail::generator_drift_sum(sde, x);
  for (Eigen::Index i = 0; i < n; ++i) {
    s.f2.push_back(Eigen::MatrixXd::Identity(p, p) * (a[i] / static_cast<double>(p)));
  }
  return s;
}

/// Applies the morphism matrix to d(t, W) with the Ito rule dW^l dW^m =
/// delta^{lm} dt, returning the chart Ito coefficients it encodes.
[[nodiscard]] inline LocalItoCoefficients apply_schwartz_morphism(const SchwartzMorphismCoefficients& s) {
  LocalItoCoefficients c;
  const auto n = s.f0.size();
  Eigen::VectorXd trace(n);
  for (Eigen::Index i = 0; i < n; ++i) trace[i] = s.f2[static_cast<std::size_t>(i)].trace();
  c.drift = s.f0 + 0.5 * trace;
  c.diffusion = s.f;
  c.quadratic_variation_rate = s.f * s.f.transpose();
  return c;
}

/// Difference 1-form G(Y) - G_alpha(Y); its second-order part vanishes.
[[nodiscard]] inline TangentVector difference_one_form(const DiffusionGenerator& G, const DiffusionGenerator& G_alpha,
                                                       const VectorFieldJet& Y) {
  const Diffusor a = G.generate(Y);
  const Diffusor b = G_alpha.generate(Y);
  if (!(a.second_order - b.second_order).isZero(0.0)) {
    throw std::logic_error("generators disagree on the symmetric part");
  }
  return TangentVector{Y.at, a.first_order - b.first_order};
}

/// (V, {sigma}, G) -> (V + 1/2 sum_l (G - target)(sigma_l), {sigma}, target).
/// The new drift is evaluated lazily through the source equation.
[[nodiscard]] inline IntrinsicSDE convert_generator(const IntrinsicSDE& sde, DiffusionGenerator target) {
  auto source = std::make_shared<const IntrinsicSDE>(sde);
  auto tgt = std::make_shared<const DiffusionGenerator>(target);
  const bool need_jacobian = sde.generator.uses_jacobian() || target.uses_jacobian();
  VectorField drift([source, tgt, need_jacobian](const Point& x) -> Eigen::VectorXd {
    Eigen::VectorXd correction = Eigen::VectorXd::Zero(x.coords.size());
    for (const auto& sigma : source->noise) {
      const VectorFieldJet Y = detail::noise_jet(sigma, need_jacobian, x);
      correction += difference_one_form(source->generator, *tgt, Y).components;
    }
    return source->drift(x) + 0.5 * correction;
  });
  return IntrinsicSDE{sde.manifold, std::move(drift), sde.noise, std::move(target)};
}

}  // namespace isde
