#include <cmath>
#include <numbers>
#include <random>
#include <vector>

#include <gtest/gtest.h>

#include "isde/checks.hpp"
#include "isde/integrators.hpp"
#include "isde/manifolds.hpp"
#include "support.hpp"

namespace isde {
namespace {

using testing::vec;

Expr X(std::size_t i) { return Expr::variable(i); }

VectorField constant_field(std::size_t n, std::vector<double> c) {
  std::vector<Expr> e;
  for (double v : c) e.emplace_back(v);
  return VectorField::from_maps({SmoothMap(n, std::move(e))});
}

/// Noise-free rotation u -> (-u2, u1) on the sphere; the equator |u| = 1 is
/// a unit-speed great circle.
IntrinsicSDE sphere_rotation() {
  auto m = manifolds::sphere2();
  return IntrinsicSDE{m, VectorField::from_home_chart(*m, ChartId{0}, SmoothMap(2, {-X(1), X(0)})), {},
                      DiffusionGenerator::geodesic(m)};
}

/// Conformal frame fields of the north chart, pushed to the south chart.
IntrinsicSDE sphere_brownian() {
  auto m = manifolds::sphere2();
  const Expr h = (Expr(1.0) + pow(X(0), 2) + pow(X(1), 2)) / Expr(2.0);
  auto field = [&](std::vector<Expr> c) { return VectorField::from_home_chart(*m, ChartId{0}, SmoothMap(2, std::move(c))); };
  return IntrinsicSDE{m, field({Expr(0.0), Expr(0.0)}), {field({h, Expr(0.0)}), field({Expr(0.0), h})},
                      DiffusionGenerator::geodesic(m)};
}

TEST(SchemeConfig, Validation) {
  SchemeConfig c;
  EXPECT_NO_THROW(c.validate());
  c.dt = 2.0;
  EXPECT_THROW(c.validate(), std::invalid_argument);
  c = SchemeConfig{};
  c.dt = -1;
  EXPECT_THROW(c.validate(), std::invalid_argument);
  c = SchemeConfig{};
  c.geodesic_substeps = 0;
  EXPECT_THROW(c.validate(), std::invalid_argument);
}

TEST(SchemeConfig, StepCountAndGrid) {
  SchemeConfig c;
  c.dt = 1e-3;
  c.T = 1.0;
  EXPECT_EQ(c.step_count(), 1000u);
  EXPECT_EQ(c.time(1000), 1.0);
  c.dt = 0.3;
  EXPECT_EQ(c.step_count(), 4u);
  EXPECT_NEAR(c.step_size(3), 0.1, 1e-15);
  EXPECT_EQ(c.time(4), 1.0);
}

TEST(NoiseStream, DeterministicAndSubstreamed) {
  NoiseStream a(42, 3), b(42, 3);
  for (int k = 0; k < 10; ++k) EXPECT_EQ(a.standard_normals(), b.standard_normals());
  NoiseStream c = NoiseStream::for_path(42, 3, 1);
  NoiseStream d(42 ^ 1, 3);
  EXPECT_EQ(c.increment(0.01), d.increment(0.01));
  EXPECT_NE(NoiseStream::for_path(42, 3, 1).standard_normals(), NoiseStream::for_path(42, 3, 2).standard_normals());
}

TEST(EmStep, Examples) {
  auto m = manifolds::euclidean(1);
  const IntrinsicSDE bm{m, constant_field(1, {0}), {constant_field(1, {1})}, DiffusionGenerator::geodesic(m)};
  EXPECT_EQ(em_step(bm, Point{ChartId{0}, vec({0.5})}, 0.01, vec({0.2})).coords, vec({0.7}));

  const IntrinsicSDE drift{m, constant_field(1, {3}), {constant_field(1, {1})}, DiffusionGenerator::geodesic(m)};
  EXPECT_DOUBLE_EQ(em_step(drift, Point{ChartId{0}, vec({0.5})}, 0.01, vec({0.0})).coords[0], 0.53);

  const IntrinsicSDE q = testing::quartic_sde(manifolds::euclidean(2));
  const Point x = em_step(q, Point{ChartId{0}, vec({1, 1})}, 0.01, vec({0, 0}));
  const double pi = std::numbers::pi;
  EXPECT_NEAR(x.coords[0], 1 + 0.01 * (1 - 0.5 / 7 - 0.5), 1e-15);
  EXPECT_NEAR(x.coords[1], 1 + 0.01 * (std::sin(5 * pi) - 0.5 - 0.5 / 7), 1e-15);
  EXPECT_NEAR(x.coords[0], 1.0042857142857143, 1e-15);
  EXPECT_NEAR(x.coords[1], 0.9942857142857143, 1e-15);
}

TEST(EmStep, RejectsBadInput) {
  const IntrinsicSDE q = testing::quartic_sde(manifolds::euclidean(2));
  EXPECT_THROW((void)em_step(q, Point{ChartId{0}, vec({1, 1})}, 0.0, vec({0, 0})), std::invalid_argument);
  EXPECT_THROW((void)em_step(q, Point{ChartId{0}, vec({1, 1})}, 0.1, vec({0})), DimensionError);
}

TEST(ExpMap, EuclideanIsAddition) {
  auto m = manifolds::euclidean(2);
  const Point x{ChartId{0}, vec({0.1, 0.2})};
  EXPECT_EQ(exp_map(*m, x, TangentVector{x, vec({0.3, -0.4})}, 16).coords, Eigen::VectorXd(x.coords + vec({0.3, -0.4})));
  EXPECT_EQ(exp_map(*m, x, TangentVector{x, vec({0, 0})}, 16).coords, x.coords);
}

TEST(ExpMap, ZeroVectorOnSphere) {
  auto m = manifolds::sphere2();
  const Point x{ChartId{0}, vec({0.3, -0.2})};
  EXPECT_EQ(exp_map(*m, x, TangentVector{x, vec({0, 0})}, 16).coords, x.coords);
}

TEST(ExpMap, QuarterGreatCircleFromChartOrigin) {
  auto m = manifolds::sphere2();
  const Point o{ChartId{0}, vec({0, 0})};
  // |v|_g = 2 |v| at the origin.
  const Eigen::VectorXd v = vec({std::numbers::pi / 4 * 0.6, std::numbers::pi / 4 * 0.8});
  const Point y = exp_map(*m, o, TangentVector{o, v}, 32);
  const Eigen::Vector3d e = manifolds::embed_sphere(y);
  EXPECT_NEAR(std::acos(std::clamp(e.dot(Eigen::Vector3d(0, 0, -1)), -1.0, 1.0)), std::numbers::pi / 2, 1e-8);
  EXPECT_LE((e - testing::great_circle(o, v)).cwiseAbs().maxCoeff(), 1e-8);
}

TEST(ExpMap, FourthOrderInSubsteps) {
  auto m = manifolds::sphere2();
  const Point o{ChartId{0}, vec({0, 0})};
  const Eigen::VectorXd v = vec({std::numbers::pi / 4 * 0.6, std::numbers::pi / 4 * 0.8});
  auto err = [&](int n) { return (manifolds::embed_sphere(exp_map(*m, o, TangentVector{o, v}, n)) - testing::great_circle(o, v)).cwiseAbs().maxCoeff(); };
  const std::vector<double> hs{1.0 / 16, 1.0 / 32, 1.0 / 64, 1.0 / 128};
  const std::vector<double> es{err(16), err(32), err(64), err(128)};
  EXPECT_NEAR(fit_order(hs, es), 4.0, 0.1);
  EXPECT_LE(es.back(), 1e-8);
}

TEST(ExpMap, MatchesGreatCircleAtRandomPoints) {
  auto m = manifolds::sphere2();
  std::mt19937_64 rng(1);
  for (int trial = 0; trial < 100; ++trial) {
    const Point x{ChartId{trial % 2 == 0 ? 0u : 1u}, testing::uniform_vector(rng, 2, -1.5, 1.5)};
    Eigen::VectorXd v = testing::uniform_vector(rng, 2, -1, 1);
    // Scale to geodesic length at most 1.5.
    const double len = std::sqrt(v.dot(m->metric_at(x) * v));
    v *= std::uniform_real_distribution<double>(0.0, 1.5)(rng) / len;
    const Point y = exp_map(*m, x, TangentVector{x, v}, 128);
    EXPECT_LE((manifolds::embed_sphere(y) - testing::great_circle(x, v)).cwiseAbs().maxCoeff(), 1e-8);
  }
}

TEST(ExpMap, SwitchesChartMidIntegration) {
  auto m = manifolds::sphere2();
  // Start near the edge of the north chart heading outward.
  const Point x{ChartId{0}, vec({2.5, 0})};
  const TangentVector v{x, vec({4, 0})};
  const TangentVector y = exp_map_with_velocity(*m, v, 256);
  EXPECT_EQ(y.at.chart, ChartId{1});
  EXPECT_LE((manifolds::embed_sphere(y.at) - testing::great_circle(x, v.components)).cwiseAbs().maxCoeff(), 1e-8);
}

TEST(ExpMap, Reversibility) {
  for (auto m : {manifolds::sphere2(), manifolds::polar2(), manifolds::euclidean_warped2()}) {
    std::mt19937_64 rng(2);
    for (ChartId c : m->chart_ids()) {
      for (int trial = 0; trial < 30; ++trial) {
        const auto x = sample_overlap_point(*m, c, c, rng);
        ASSERT_TRUE(x);
        Eigen::VectorXd v = testing::uniform_vector(rng, 2, -1, 1);
        v *= std::uniform_real_distribution<double>(0.0, 0.5)(rng) / v.norm();
        const TangentVector there = exp_map_with_velocity(*m, TangentVector{*x, v}, 16);
        const TangentVector back = exp_map_with_velocity(*m, TangentVector{there.at, -there.components}, 16);
        const Point home = transform_point(*m, back.at, x->chart, 0.0);
        EXPECT_LE((home.coords - x->coords).cwiseAbs().maxCoeff(), 1e-6);
      }
    }
  }
}

TEST(ExpMap, LeftAtlasWhenNoChartAccepts) {
  auto m = manifolds::polar2();
  // Cartesian chart is flat: the step lands on the excluded ray.
  const Point x{ChartId{0}, vec({-1, 0.5})};
  EXPECT_THROW((void)exp_map(*m, x, TangentVector{x, vec({0, -0.5})}, 4), LeftAtlas);
}

TEST(BdStep, EuclideanEqualsEmBitForBit) {
  auto m = manifolds::euclidean(2);
  const IntrinsicSDE sde{m, VectorField::from_maps({SmoothMap(2, {sin(X(0)) * X(1), Expr(0.5) - X(0)})}),
                         {VectorField::from_maps({SmoothMap(2, {X(1), Expr(0.3)})}),
                          VectorField::from_maps({SmoothMap(2, {cos(X(0)), X(0) * X(1)})})},
                         DiffusionGenerator::geodesic(m)};
  std::mt19937_64 rng(3);
  for (int trial = 0; trial < 100; ++trial) {
    const Point x{ChartId{0}, testing::uniform_vector(rng, 2, -2, 2)};
    const Eigen::VectorXd dW = testing::uniform_vector(rng, 2, -0.1, 0.1);
    EXPECT_EQ(bd_step(sde, x, 0.01, dW, 16).coords, em_step(sde, x, 0.01, dW).coords);
  }
}

TEST(BdStep, RestWithoutDriftOrNoise) {
  const IntrinsicSDE sde = sphere_brownian();
  const Point x{ChartId{0}, vec({0.4, 0.1})};
  const IntrinsicSDE still{sde.manifold, constant_field(2, {0, 0}), {}, sde.generator};
  EXPECT_EQ(bd_step(still, x, 0.01, Eigen::VectorXd(0), 16).coords, x.coords);
}

TEST(BdStep, StaysOnSphere) {
  const IntrinsicSDE sde = sphere_brownian();
  std::mt19937_64 rng(4);
  for (int trial = 0; trial < 50; ++trial) {
    const Point x{ChartId{0}, testing::uniform_vector(rng, 2, -2, 2)};
    const double h = std::uniform_real_distribution<double>(-0.1, 0.1)(rng);
    const Point y = bd_step(sde, x, 0.01, vec({h, 0}), 16);
    EXPECT_NEAR(manifolds::embed_sphere(y).norm(), 1.0, 1e-8);
  }
}

TEST(BdStep, FollowsGeodesicOfFrozenIncrement) {
  // On the sphere with the Ito generator, the increment is V dt + sigma dW.
  const IntrinsicSDE sde = sphere_brownian();
  const Point x{ChartId{0}, vec({0.5, -0.3})};
  const Eigen::VectorXd dW = vec({0.05, -0.02});
  const Eigen::VectorXd dY = sde.noise[0](x) * dW[0] + sde.noise[1](x) * dW[1];
  const Point y = bd_step(sde, x, 0.01, dW, 32);
  EXPECT_LE((manifolds::embed_sphere(y) - testing::great_circle(x, dY)).cwiseAbs().maxCoeff(), 1e-12);
}

TEST(SimulatePath, GreatCircleWithoutNoise) {
  const IntrinsicSDE sde = sphere_rotation();
  SchemeConfig cfg;
  cfg.scheme = Scheme::BelopolskyaDaletskii;
  cfg.dt = 1e-3;
  cfg.T = 1.0;
  NoiseStream noise(0, 0);
  const PathRecord r = simulate_path(sde, cfg, Point{ChartId{0}, vec({1, 0})}, noise);
  ASSERT_EQ(r.states.size(), 1001u);
  double worst = 0;
  for (std::size_t k = 0; k < r.states.size(); ++k) {
    const double t = r.times[k];
    const Eigen::Vector3d expected(std::cos(t), std::sin(t), 0);
    worst = std::max(worst, (manifolds::embed_sphere(r.states[k]) - expected).cwiseAbs().maxCoeff());
  }
  EXPECT_LE(worst, 1e-6);
}

TEST(SimulatePath, TimesAndDeterminism) {
  const IntrinsicSDE sde = testing::quartic_sde(manifolds::euclidean(2));
  SchemeConfig cfg;
  cfg.dt = 1e-3;
  cfg.T = 1.0;
  NoiseStream a(42, 2), b(42, 2);
  const PathRecord r1 = simulate_path(sde, cfg, Point{ChartId{0}, vec({0, 1})}, a);
  const PathRecord r2 = simulate_path(sde, cfg, Point{ChartId{0}, vec({0, 1})}, b);
  ASSERT_EQ(r1.states.size(), 1001u);
  EXPECT_EQ(r1.times.front(), 0.0);
  EXPECT_EQ(r1.times.back(), 1.0);
  for (std::size_t k = 1; k < r1.times.size(); ++k) EXPECT_LT(r1.times[k - 1], r1.times[k]);
  for (std::size_t k = 0; k < r1.states.size(); ++k) EXPECT_EQ(r1.states[k].coords, r2.states[k].coords);
}

TEST(SimulatePath, ChartSwitchesAtStepBoundaries) {
  // Rotation on the circle crosses the seam of chart 0 at theta = pi.
  auto m = manifolds::circle();
  const IntrinsicSDE sde{m, VectorField::from_home_chart(*m, ChartId{0}, SmoothMap(1, {Expr(1.0)})), {},
                         DiffusionGenerator::geodesic(m)};
  SchemeConfig cfg;
  cfg.dt = 0.01;
  cfg.T = 1.0;
  NoiseStream noise(0, 0);
  const PathRecord r = simulate_path(sde, cfg, Point{ChartId{0}, vec({2.8})}, noise);
  ASSERT_EQ(r.chart_switches.size(), 1u);
  const ChartSwitch& s = r.chart_switches.front();
  EXPECT_EQ(s.from, ChartId{0});
  EXPECT_EQ(s.to, ChartId{1});
  EXPECT_EQ(r.states[s.step].chart, ChartId{1});
  EXPECT_EQ(r.states[s.step - 1].chart, ChartId{0});
  EXPECT_NEAR(r.states.back().coords[0], 3.8, 1e-12);
  for (const auto& p : r.states) EXPECT_TRUE(m->contains(p, 0.0));
}

TEST(SimulatePath, ErrorsCarryStepIndex) {
  // dr/dt = -1 from r = 0.3 reaches the origin, which no chart covers.
  auto m = manifolds::polar2();
  const IntrinsicSDE sde{m, VectorField::from_home_chart(*m, ChartId{1}, SmoothMap(2, {Expr(-1.0), Expr(0.0)})),
                         {}, DiffusionGenerator::geodesic(m)};
  SchemeConfig cfg;
  cfg.dt = 0.1;
  cfg.T = 1.0;
  NoiseStream noise(0, 0);
  try {
    (void)simulate_path(sde, cfg, Point{ChartId{1}, vec({0.3, 3.0})}, noise);
    FAIL() << "expected LeftAtlas";
  } catch (const LeftAtlas& e) {
    EXPECT_EQ(e.step(), std::optional<std::size_t>(2));
    EXPECT_EQ(std::string(e.what()).rfind("step 2: ", 0), 0u);
  }
}

TEST(SimulatePath, RegularityErrorNamesStep) {
  // L = v1^4 + v2^2 is singular at v1 = 0, reached when x1 = 0 with sigma = (x1, 1).
  auto m = manifolds::euclidean(2);
  const SmoothMap L(4, {pow(X(2), 4) + pow(X(3), 2)});
  const IntrinsicSDE sde{m, constant_field(2, {-1, 0}), {VectorField::from_maps({SmoothMap(2, {X(0), Expr(1.0)})})},
                         DiffusionGenerator::lagrangian({L})};
  SchemeConfig cfg;
  cfg.dt = 0.25;
  cfg.T = 1.0;
  try {
    (void)simulate_path(sde, cfg, Point{ChartId{0}, vec({0.5, 0})},
                        [](std::size_t, double) { return Eigen::VectorXd(Eigen::VectorXd::Zero(1)); });
    FAIL() << "expected RegularityError";
  } catch (const RegularityError& e) {
    EXPECT_EQ(e.step(), std::optional<std::size_t>(2));
  }
}

TEST(SimulatePath, BrownianOnSphereKeepsUnitNorm) {
  const IntrinsicSDE sde = sphere_brownian();
  SchemeConfig cfg;
  cfg.scheme = Scheme::BelopolskyaDaletskii;
  cfg.dt = 1e-2;
  cfg.T = 1.0;
  for (std::uint64_t p = 0; p < 10; ++p) {
    NoiseStream noise = NoiseStream::for_path(9, 2, p);
    const PathRecord r = simulate_path(sde, cfg, Point{ChartId{0}, vec({0, 0})}, noise);
    for (const auto& s : r.states) EXPECT_NEAR(manifolds::embed_sphere(s).norm(), 1.0, 1e-6);
  }
}

TEST(SimulatePath, LinearSdeMean) {
  const IntrinsicSDE sde = testing::linear_sde(0.5, 0.3);
  SchemeConfig cfg;
  cfg.dt = 1e-2;
  cfg.T = 1.0;
  const std::size_t n = 4000;
  double sum = 0, sq = 0;
  for (std::size_t p = 0; p < n; ++p) {
    NoiseStream noise = NoiseStream::for_path(123, 1, p);
    const double x = simulate_path(sde, cfg, Point{ChartId{0}, vec({1})}, noise).states.back().coords[0];
    sum += x;
    sq += x * x;
  }
  const double mean = sum / n;
  const double se = std::sqrt((sq / n - mean * mean) / n);
  // Euler mean on this grid is (1 + mu dt)^N; the exact mean differs by O(dt).
  EXPECT_LE(std::abs(mean - std::pow(1.005, 100)), 3 * se);
}

TEST(SchemeCommutation, ConvertedRepresentationGivesSamePath) {
  auto m = manifolds::euclidean(2);
  const IntrinsicSDE sde = testing::quartic_sde(m);
  const IntrinsicSDE ito = convert_generator(sde, DiffusionGenerator::geodesic(m));
  SchemeConfig cfg;
  cfg.dt = 1e-3;
  cfg.T = 1.0;
  NoiseStream a(5, 2), b(5, 2);
  const PathRecord r1 = simulate_path(sde, cfg, Point{ChartId{0}, vec({0, 1})}, a);
  const PathRecord r2 = simulate_path(ito, cfg, Point{ChartId{0}, vec({0, 1})}, b);
  double worst = 0;
  for (std::size_t k = 0; k < r1.states.size(); ++k) {
    worst = std::max(worst, (r1.states[k].coords - r2.states[k].coords).cwiseAbs().maxCoeff());
  }
  EXPECT_LE(worst, 1e-12);
}

TEST(ErrorStudy, ReferenceGridGivesZeroError) {
  const IntrinsicSDE sde = testing::linear_sde(0.5, 0.3);
  SchemeConfig cfg;
  cfg.dt = 1.0 / 64;
  const std::vector<SchemeConfig> cfgs{cfg};
  const auto rows = error_study(sde, cfgs, Point{ChartId{0}, vec({1})}, 1.0 / 64, 50, 1);
  EXPECT_EQ(rows.front().strong, 0.0);
  EXPECT_EQ(rows.front().weak, 0.0);
}

TEST(ErrorStudy, GridIncompatibility) {
  const IntrinsicSDE sde = testing::linear_sde(0.5, 0.3);
  SchemeConfig a, b;
  a.dt = 0.1;
  b.dt = 0.1;
  b.T = 2.0;
  EXPECT_THROW((void)error_study(sde, std::vector<SchemeConfig>{a}, Point{ChartId{0}, vec({1})}, 0.03, 5, 1),
               std::invalid_argument);
  EXPECT_THROW((void)error_study(sde, std::vector<SchemeConfig>{a, b}, Point{ChartId{0}, vec({1})}, 0.01, 5, 1),
               std::invalid_argument);
}

TEST(ErrorStudy, DeterministicEulerOrderOne) {
  auto m = manifolds::euclidean(1);
  const IntrinsicSDE ode{m, VectorField::from_maps({SmoothMap(1, {-X(0)})}), {}, DiffusionGenerator::geodesic(m)};
  std::vector<SchemeConfig> cfgs;
  std::vector<double> dts;
  for (int k = 5; k <= 9; ++k) {
    SchemeConfig c;
    c.dt = std::ldexp(1.0, -k);
    cfgs.push_back(c);
    dts.push_back(c.dt);
  }
  const auto rows = error_study(ode, cfgs, Point{ChartId{0}, vec({1})}, std::ldexp(1.0, -14), 1, 0);
  std::vector<double> strong, weak;
  for (const auto& r : rows) {
    strong.push_back(r.strong);
    weak.push_back(r.weak);
    EXPECT_EQ(r.strong, r.weak);
  }
  EXPECT_NEAR(fit_order(dts, strong), 1.0, 0.15);
}

TEST(ErrorStudy, FitOrderRecoversSlope) {
  const std::vector<double> dts{0.1, 0.05, 0.025, 0.0125};
  std::vector<double> e;
  for (double h : dts) e.push_back(3 * std::pow(h, 1.5));
  EXPECT_NEAR(fit_order(dts, e), 1.5, 1e-12);
  EXPECT_THROW((void)fit_order(std::vector<double>{0.1}, std::vector<double>{1}), std::invalid_argument);
}

}  // namespace
}  // namespace isde
