#pragma once

// Command-line front end: INI-style run configurations, model construction,
// and the simulate / compare / check / convergence commands.
//
// Exit codes: 0 ok, 2 configuration error, 3 regularity error, 4 left the
// atlas, 5 comparison or check failure, 1 anything else.

#include <algorithm>
#include <atomic>
#include <charconv>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <exception>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <limits>
#include <map>
#include <memory>
#include <optional>
#include <set>
#include <sstream>
#include <stdexcept>
#include <string>
#include <string_view>
#include <system_error>
#include <thread>
#include <vector>

#include <Eigen/Dense>
#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>

#include "isde/checks.hpp"
#include "isde/errors.hpp"
#include "isde/expr.hpp"
#include "isde/fields.hpp"
#include "isde/generators.hpp"
#include "isde/geometry.hpp"
#include "isde/integrators.hpp"
#include "isde/manifolds.hpp"
#include "isde/sde_model.hpp"

namespace isde::cli {

enum ExitCode : int { kOk = 0, kFailure = 1, kConfig = 2, kRegularity = 3, kAtlas = 4, kMismatch = 5 };

class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// ---------------------------------------------------------------------------
// Text helpers

/// Shortest decimal string that reads back to the same double.
[[nodiscard]] inline std::string format_double(double v) {
  char buf[64];
  const auto r = std::to_chars(buf, buf + sizeof buf, v);
  return {buf, r.ptr};
}

inline std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r\n");
  return std::string(s.substr(b, e - b + 1));
}

/// Splits on commas that are not nested inside parentheses.
[[nodiscard]] inline std::vector<std::string> split_components(std::string_view s) {
  std::vector<std::string> out;
  int depth = 0;
  std::size_t start = 0;
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (s[i] == '(') ++depth;
    if (s[i] == ')') --depth;
    if (depth < 0) throw ConfigError("unbalanced parentheses in '" + std::string(s) + "'");
    if (s[i] == ',' && depth == 0) {
      out.push_back(trim(s.substr(start, i - start)));
      start = i + 1;
    }
  }
  if (depth != 0) throw ConfigError("unbalanced parentheses in '" + std::string(s) + "'");
  out.push_back(trim(s.substr(start)));
  for (const auto& c : out)
    if (c.empty()) throw ConfigError("empty component in '" + std::string(s) + "'");
  return out;
}

[[nodiscard]] inline double parse_double(std::string_view s, std::string_view key) {
  const std::string t = trim(s);
  double v = 0.0;
  const auto r = std::from_chars(t.data(), t.data() + t.size(), v);
  if (r.ec != std::errc() || r.ptr != t.data() + t.size() || !std::isfinite(v)) {
    throw ConfigError("'" + std::string(key) + "' expects a number, got '" + t + "'");
  }
  return v;
}

[[nodiscard]] inline std::uint64_t parse_uint(std::string_view s, std::string_view key) {
  const std::string t = trim(s);
  std::uint64_t v = 0;
  const auto r = std::from_chars(t.data(), t.data() + t.size(), v);
  if (r.ec != std::errc() || r.ptr != t.data() + t.size()) {
    throw ConfigError("'" + std::string(key) + "' expects a non-negative integer, got '" + t + "'");
  }
  return v;
}

[[nodiscard]] inline bool parse_bool(std::string_view s, std::string_view key) {
  const std::string t = trim(s);
  if (t == "true" || t == "1" || t == "yes") return true;
  if (t == "false" || t == "0" || t == "no") return false;
  throw ConfigError("'" + std::string(key) + "' expects true or false, got '" + t + "'");
}

// ---------------------------------------------------------------------------
// Configuration

/// Generator kind plus its payload expressions, written in the home chart.
struct GeneratorSpec {
  std::string kind = "ito";  ///< stratonovich | ito | lagrangian | quadratic_form | kinetic_potential
  std::string lagrangian;
  std::vector<std::string> alpha;
  std::string potential;
};

struct RunConfig {
  std::string manifold = "euclidean";
  std::size_t dimension = 2;
  ChartId home{0};

  std::vector<std::string> drift;
  std::vector<std::vector<std::string>> noise;
  GeneratorSpec generator;

  std::optional<GeneratorSpec> compare_target;
  bool compare_convert = true;

  SchemeConfig scheme;

  std::uint64_t seed = 0;
  std::size_t n_paths = 1;
  std::vector<double> x0;
  ChartId x0_chart{0};
  std::string out_dir = ".";
  std::size_t threads = 1;

  std::size_t check_points = 200;
  bool inject_broken_generator = false;

  std::vector<double> convergence_dts;
  double reference_dt = 0.0;
  std::size_t convergence_paths = 0;
};

namespace detail {

using boost::property_tree::ptree;

inline const std::map<std::string, std::set<std::string>>& known_keys() {
  static const std::map<std::string, std::set<std::string>> keys{
      {"manifold", {"name", "dimension"}},
      {"sde", {"chart", "drift", "generator", "lagrangian", "alpha", "potential"}},
      {"compare", {"generator", "lagrangian", "alpha", "potential", "convert"}},
      {"scheme", {"scheme", "dt", "T", "geodesic_substeps", "chart_switch_margin"}},
      {"run", {"seed", "n_paths", "x0", "x0_chart", "out", "threads"}},
      {"check", {"points", "inject_broken_generator"}},
      {"convergence", {"dts", "reference_dt", "n_paths"}},
  };
  return keys;
}

inline bool is_noise_key(const std::string& k) {
  if (k.size() <= 5 || k.rfind("noise", 0) != 0) return false;
  return std::all_of(k.begin() + 5, k.end(), [](char c) { return c >= '0' && c <= '9'; });
}

inline void validate_keys(const ptree& pt) {
  const auto& keys = known_keys();
  for (const auto& [section, body] : pt) {
    const auto it = keys.find(section);
    if (it == keys.end() || body.empty()) throw ConfigError("unknown section [" + section + "]");
    for (const auto& [key, value] : body) {
      if (section == "sde" && is_noise_key(key)) continue;
      if (!it->second.contains(key)) throw ConfigError("unknown key '" + key + "' in [" + section + "]");
    }
  }
}

/// Value with any trailing `#` or `;` comment removed.
inline std::optional<std::string> get(const ptree& pt, const std::string& path) {
  if (auto v = pt.get_optional<std::string>(ptree::path_type(path, '.'))) return trim(v->substr(0, v->find_first_of("#;")));
  return std::nullopt;
}

inline std::string require(const ptree& pt, const std::string& path) {
  auto v = get(pt, path);
  if (!v || v->empty()) throw ConfigError("missing required key '" + path + "'");
  return *v;
}

inline GeneratorSpec read_generator(const ptree& pt, const std::string& section) {
  GeneratorSpec g;
  g.kind = get(pt, section + ".generator").value_or("ito");
  g.lagrangian = get(pt, section + ".lagrangian").value_or("");
  if (auto a = get(pt, section + ".alpha")) g.alpha = split_components(*a);
  g.potential = get(pt, section + ".potential").value_or("");
  static const std::set<std::string> kinds{"stratonovich", "ito", "lagrangian", "quadratic_form", "kinetic_potential"};
  if (!kinds.contains(g.kind)) throw ConfigError("unknown generator kind '" + g.kind + "'");
  if (g.kind == "lagrangian" && g.lagrangian.empty()) throw ConfigError("generator 'lagrangian' needs a lagrangian");
  if (g.kind == "quadratic_form" && g.alpha.empty()) throw ConfigError("generator 'quadratic_form' needs alpha");
  if (g.kind == "kinetic_potential" && g.potential.empty()) {
    throw ConfigError("generator 'kinetic_potential' needs a potential");
  }
  return g;
}

inline std::vector<double> parse_list(const std::string& s, const std::string& key) {
  std::vector<double> out;
  for (const auto& c : split_components(s)) out.push_back(parse_double(c, key));
  return out;
}

}  // namespace detail

[[nodiscard]] inline RunConfig parse_config(std::istream& in) {
  detail::ptree pt;
  try {
    boost::property_tree::ini_parser::read_ini(in, pt);
  } catch (const boost::property_tree::ini_parser_error& e) {
    throw ConfigError(std::string("malformed config: ") + e.what());
  }
  detail::validate_keys(pt);
  using detail::get;
  RunConfig c;
  c.manifold = detail::require(pt, "manifold.name");
  if (auto d = get(pt, "manifold.dimension")) c.dimension = parse_uint(*d, "manifold.dimension");
  if (auto h = get(pt, "sde.chart")) c.home = ChartId{parse_uint(*h, "sde.chart")};

  c.drift = split_components(detail::require(pt, "sde.drift"));
  for (std::size_t l = 1;; ++l) {
    auto s = get(pt, "sde.noise" + std::to_string(l));
    if (!s) break;
    c.noise.push_back(split_components(*s));
  }
  if (const auto* sde = pt.get_child_optional("sde").get_ptr()) {
    std::size_t count = 0;
    for (const auto& kv : *sde) count += detail::is_noise_key(kv.first) ? 1 : 0;
    if (count != c.noise.size()) throw ConfigError("noise fields must be numbered noise1, noise2, ... without gaps");
  }
  c.generator = detail::read_generator(pt, "sde");

  if (pt.get_child_optional("compare")) {
    c.compare_target = detail::read_generator(pt, "compare");
    if (auto v = get(pt, "compare.convert")) c.compare_convert = parse_bool(*v, "compare.convert");
  }

  if (auto s = get(pt, "scheme.scheme")) {
    if (*s == "em") {
      c.scheme.scheme = Scheme::ChartEM;
    } else if (*s == "bd") {
      c.scheme.scheme = Scheme::BelopolskyaDaletskii;
    } else {
      throw ConfigError("scheme must be 'em' or 'bd', got '" + *s + "'");
    }
  }
  if (auto v = get(pt, "scheme.dt")) c.scheme.dt = parse_double(*v, "scheme.dt");
  if (auto v = get(pt, "scheme.T")) c.scheme.T = parse_double(*v, "scheme.T");
  if (auto v = get(pt, "scheme.geodesic_substeps")) {
    c.scheme.geodesic_substeps = static_cast<int>(parse_uint(*v, "scheme.geodesic_substeps"));
  }
  if (auto v = get(pt, "scheme.chart_switch_margin")) {
    c.scheme.chart_switch_margin = parse_double(*v, "scheme.chart_switch_margin");
  }
  try {
    c.scheme.validate();
  } catch (const std::invalid_argument& e) {
    throw ConfigError(std::string("[scheme] ") + e.what());
  }

  if (auto v = get(pt, "run.seed")) c.seed = parse_uint(*v, "run.seed");
  if (auto v = get(pt, "run.n_paths")) c.n_paths = parse_uint(*v, "run.n_paths");
  if (c.n_paths == 0) throw ConfigError("run.n_paths must be >= 1");
  c.x0 = detail::parse_list(detail::require(pt, "run.x0"), "run.x0");
  if (auto v = get(pt, "run.x0_chart")) c.x0_chart = ChartId{parse_uint(*v, "run.x0_chart")};
  if (auto v = get(pt, "run.out")) c.out_dir = *v;
  if (auto v = get(pt, "run.threads")) c.threads = parse_uint(*v, "run.threads");

  if (auto v = get(pt, "check.points")) c.check_points = parse_uint(*v, "check.points");
  if (auto v = get(pt, "check.inject_broken_generator")) {
    c.inject_broken_generator = parse_bool(*v, "check.inject_broken_generator");
  }

  if (auto v = get(pt, "convergence.dts")) c.convergence_dts = detail::parse_list(*v, "convergence.dts");
  if (auto v = get(pt, "convergence.reference_dt")) c.reference_dt = parse_double(*v, "convergence.reference_dt");
  if (auto v = get(pt, "convergence.n_paths")) c.convergence_paths = parse_uint(*v, "convergence.n_paths");
  return c;
}

[[nodiscard]] inline RunConfig load_config(const std::filesystem::path& file) {
  std::ifstream in(file);
  if (!in) throw ConfigError("cannot read config file '" + file.string() + "'");
  return parse_config(in);
}

// ---------------------------------------------------------------------------
// Model construction

struct Model {
  std::shared_ptr<const ChartedManifold> manifold;
  IntrinsicSDE sde;
  Point x0;
};

namespace detail {

inline SmoothMap parse_map(const std::vector<std::string>& comps, std::size_t dim_in, std::size_t expected_out,
                           VariableScheme scheme, const std::string& what) {
  if (comps.size() != expected_out) {
    throw ConfigError(what + " needs " + std::to_string(expected_out) + " components, got " +
                      std::to_string(comps.size()));
  }
  try {
    return SmoothMap::parse(dim_in, comps, scheme);
  } catch (const ParseError& e) {
    throw ConfigError(what + ": " + e.what());
  }
}

inline VectorField build_field(const ChartedManifold& m, ChartId home, const std::vector<std::string>& comps,
                               const std::string& what) {
  const std::size_t n = m.dimension();
  return VectorField::from_home_chart(m, home, parse_map(comps, n, n, {n, false}, what));
}

}  // namespace detail

[[nodiscard]] inline DiffusionGenerator build_generator(const GeneratorSpec& g,
                                                        const std::shared_ptr<const ChartedManifold>& m,
                                                        ChartId home) {
  const std::size_t n = m->dimension();
  if (g.kind == "stratonovich") return DiffusionGenerator::stratonovich();
  if (g.kind == "ito") return DiffusionGenerator::geodesic(m);
  if (g.kind == "lagrangian") {
    const SmoothMap L = detail::parse_map({g.lagrangian}, 2 * n, 1, {n, true}, "lagrangian");
    return DiffusionGenerator::lagrangian(pull_back_tangent_function(*m, home, L));
  }
  if (g.kind == "quadratic_form") {
    const SmoothMap a = detail::parse_map(g.alpha, n, n * n, {n, false}, "alpha");
    return DiffusionGenerator::quadratic_form(pull_back_bilinear(*m, home, a));
  }
  if (g.kind == "kinetic_potential") {
    const SmoothMap phi = detail::parse_map({g.potential}, n, 1, {n, false}, "potential");
    return DiffusionGenerator::kinetic_potential(m, pull_back_scalar(*m, home, phi));
  }
  throw ConfigError("unknown generator kind '" + g.kind + "'");
}

[[nodiscard]] inline Model build_model(const RunConfig& c) {
  std::shared_ptr<const ChartedManifold> m;
  try {
    m = manifolds::make(c.manifold, c.dimension);
  } catch (const std::invalid_argument& e) {
    throw ConfigError(std::string("[manifold] ") + e.what());
  }
  const std::size_t n = m->dimension();
  if (c.home.index >= m->chart_count()) throw ConfigError("sde.chart is not a chart of the manifold");
  if (c.x0_chart.index >= m->chart_count()) throw ConfigError("run.x0_chart is not a chart of the manifold");
  if (c.x0.size() != n) throw ConfigError("run.x0 needs " + std::to_string(n) + " coordinates");

  std::vector<VectorField> noise;
  for (std::size_t l = 0; l < c.noise.size(); ++l) {
    noise.push_back(detail::build_field(*m, c.home, c.noise[l], "noise" + std::to_string(l + 1)));
  }
  IntrinsicSDE sde{m, detail::build_field(*m, c.home, c.drift, "drift"), std::move(noise),
                   build_generator(c.generator, m, c.home)};
  Point x0{c.x0_chart, Eigen::Map<const Eigen::VectorXd>(c.x0.data(), static_cast<Eigen::Index>(n))};
  if (!m->contains(x0, 0.0)) throw ConfigError("run.x0 does not lie in chart " + std::to_string(c.x0_chart.index));
  return Model{m, std::move(sde), std::move(x0)};
}

// ---------------------------------------------------------------------------
// Parallel path simulation

/// Runs `n_paths` paths on up to `threads` workers. Path i uses the noise
/// substream for index i, so results do not depend on the worker count.
/// When paths fail, the failure of the lowest path index is rethrown.
template <typename PathFn>
[[nodiscard]] auto run_paths(std::size_t n_paths, std::size_t threads, PathFn&& fn) {
  using Result = decltype(fn(std::size_t{0}));
  std::vector<std::optional<Result>> results(n_paths);
  std::vector<std::exception_ptr> errors(n_paths);
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t i = next++; i < n_paths; i = next++) {
      try {
        results[i].emplace(fn(i));
      } catch (...) {
        errors[i] = std::current_exception();
      }
    }
  };
  const std::size_t workers = std::clamp<std::size_t>(threads, 1, std::max<std::size_t>(n_paths, 1));
  if (workers == 1) {
    worker();
  } else {
    std::vector<std::jthread> pool;
    for (std::size_t w = 0; w < workers; ++w) pool.emplace_back(worker);
  }
  std::vector<Result> out;
  out.reserve(n_paths);
  for (std::size_t i = 0; i < n_paths; ++i) {
    if (errors[i]) std::rethrow_exception(errors[i]);
    out.push_back(std::move(*results[i]));
  }
  return out;
}

[[nodiscard]] inline std::vector<PathRecord> simulate_paths(const IntrinsicSDE& sde, const SchemeConfig& cfg,
                                                            const Point& x0, std::uint64_t seed, std::size_t n_paths,
                                                            std::size_t threads) {
  return run_paths(n_paths, threads, [&](std::size_t i) {
    NoiseStream noise = NoiseStream::for_path(seed, sde.noise_count(), i);
    return simulate_path(sde, cfg, x0, noise);
  });
}

// ---------------------------------------------------------------------------
// Output

inline void write_paths_csv(std::ostream& out, const std::vector<PathRecord>& paths, std::size_t n) {
  out << "path_id,step,t,chart";
  for (std::size_t i = 1; i <= n; ++i) out << ",c" << i;
  out << '\n';
  for (std::size_t p = 0; p < paths.size(); ++p) {
    const PathRecord& r = paths[p];
    for (std::size_t k = 0; k < r.states.size(); ++k) {
      out << p << ',' << k << ',' << format_double(r.times[k]) << ',' << r.states[k].chart.index;
      for (Eigen::Index i = 0; i < r.states[k].coords.size(); ++i) out << ',' << format_double(r.states[k].coords[i]);
      out << '\n';
    }
  }
}

using Summary = std::vector<std::pair<std::string, std::string>>;

inline void write_summary(std::ostream& out, const Summary& s) {
  for (const auto& [k, v] : s) out << k << " = " << v << '\n';
}

inline void write_file(const std::filesystem::path& file, const std::string& content) {
  std::ofstream f(file, std::ios::binary);
  if (!f) throw std::runtime_error("cannot write '" + file.string() + "'");
  f << content;
}

/// Terminal-state mean and covariance in the chart of x0; paths whose final
/// state cannot be expressed there are counted separately.
inline void add_terminal_moments(Summary& s, const ChartedManifold& m, const std::vector<PathRecord>& paths,
                                 ChartId chart) {
  const auto n = static_cast<Eigen::Index>(m.dimension());
  std::vector<Eigen::VectorXd> xs;
  std::size_t unrepresented = 0;
  for (const auto& p : paths) {
    try {
      xs.push_back(transform_point(m, p.states.back(), chart, 0.0).coords);
    } catch (const OutOfChart&) {
      ++unrepresented;
    }
  }
  s.emplace_back("terminal_chart", std::to_string(chart.index));
  s.emplace_back("terminal_count", std::to_string(xs.size()));
  s.emplace_back("terminal_unrepresented", std::to_string(unrepresented));
  Eigen::VectorXd mean = Eigen::VectorXd::Zero(n);
  for (const auto& x : xs) mean += x;
  if (!xs.empty()) mean /= static_cast<double>(xs.size());
  Eigen::MatrixXd cov = Eigen::MatrixXd::Zero(n, n);
  for (const auto& x : xs) cov += (x - mean) * (x - mean).transpose();
  if (xs.size() > 1) cov /= static_cast<double>(xs.size() - 1);
  for (Eigen::Index i = 0; i < n; ++i) s.emplace_back("mean_c" + std::to_string(i + 1), format_double(mean[i]));
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index j = i; j < n; ++j)
      s.emplace_back("cov_c" + std::to_string(i + 1) + "_c" + std::to_string(j + 1), format_double(cov(i, j)));
}

inline std::string scheme_name(Scheme s) { return s == Scheme::ChartEM ? "em" : "bd"; }

// ---------------------------------------------------------------------------
// Commands

struct Overrides {
  std::optional<std::uint64_t> seed;
  std::optional<std::string> out_dir;
  std::optional<std::size_t> threads;
};

inline void apply(RunConfig& c, const Overrides& o) {
  if (o.seed) c.seed = *o.seed;
  if (o.out_dir) c.out_dir = *o.out_dir;
  if (o.threads) c.threads = *o.threads;
}

inline int cmd_simulate(const RunConfig& c, std::ostream& out) {
  const Model model = build_model(c);
  const auto paths = simulate_paths(model.sde, c.scheme, model.x0, c.seed, c.n_paths, c.threads);
  std::size_t switches = 0;
  for (const auto& p : paths) switches += p.chart_switches.size();
  Summary s{{"command", "simulate"},
            {"manifold", c.manifold},
            {"generator", model.sde.generator.name()},
            {"scheme", scheme_name(c.scheme.scheme)},
            {"seed", std::to_string(c.seed)},
            {"n_paths", std::to_string(c.n_paths)},
            {"steps", std::to_string(c.scheme.step_count())},
            {"dt", format_double(c.scheme.dt)},
            {"T", format_double(c.scheme.T)},
            {"chart_switches", std::to_string(switches)}};
  add_terminal_moments(s, *model.manifold, paths, model.x0.chart);

  std::ostringstream csv;
  write_paths_csv(csv, paths, model.manifold->dimension());
  std::ostringstream summary;
  write_summary(summary, s);
  const std::filesystem::path dir(c.out_dir);
  std::filesystem::create_directories(dir);
  write_file(dir / "paths.csv", csv.str());
  write_file(dir / "summary.txt", summary.str());
  out << summary.str();
  return kOk;
}

inline constexpr double kCompareTolerance = 1e-9;

inline int cmd_compare(const RunConfig& c, std::ostream& out) {
  if (!c.compare_target) throw ConfigError("compare needs a [compare] section naming the second generator");
  const Model model = build_model(c);
  const DiffusionGenerator target = build_generator(*c.compare_target, model.manifold, c.home);
  const IntrinsicSDE other = c.compare_convert
                                 ? convert_generator(model.sde, target)
                                 : IntrinsicSDE{model.sde.manifold, model.sde.drift, model.sde.noise, target};
  const auto a = simulate_paths(model.sde, c.scheme, model.x0, c.seed, c.n_paths, c.threads);
  const auto b = simulate_paths(other, c.scheme, model.x0, c.seed, c.n_paths, c.threads);
  double deviation = 0.0;
  for (std::size_t p = 0; p < a.size(); ++p) {
    for (std::size_t k = 0; k < a[p].states.size(); ++k) {
      const Point& xa = a[p].states[k];
      Point xb = b[p].states[k];
      try {
        xb = transform_point(*model.manifold, xb, xa.chart, 0.0);
      } catch (const OutOfChart&) {
        deviation = std::numeric_limits<double>::infinity();
        continue;
      }
      deviation = std::max(deviation, (xa.coords - xb.coords).cwiseAbs().maxCoeff());
    }
  }
  const bool ok = deviation <= kCompareTolerance;
  Summary s{{"command", "compare"},
            {"generator_a", model.sde.generator.name()},
            {"generator_b", other.generator.name()},
            {"converted", c.compare_convert ? "true" : "false"},
            {"scheme", scheme_name(c.scheme.scheme)},
            {"seed", std::to_string(c.seed)},
            {"n_paths", std::to_string(c.n_paths)},
            {"max_deviation", format_double(deviation)},
            {"tolerance", format_double(kCompareTolerance)},
            {"result", ok ? "pass" : "fail"}};
  std::ostringstream summary;
  write_summary(summary, s);
  const std::filesystem::path dir(c.out_dir);
  std::filesystem::create_directories(dir);
  write_file(dir / "summary.txt", summary.str());
  out << summary.str();
  return ok ? kOk : kMismatch;
}

inline constexpr double kCheckTolerance = 1e-9;

/// Generator whose drift is the true drift plus a constant vector written
/// identically in every chart, so it does not transform as a diffusor.
[[nodiscard]] inline DiffusionGenerator broken_generator(DiffusionGenerator base) {
  auto shared = std::make_shared<const DiffusionGenerator>(std::move(base));
  return DiffusionGenerator::custom("broken", [shared](const VectorFieldJet& Y) {
    return Eigen::VectorXd(shared->generate(Y).first_order + Eigen::VectorXd::Ones(Y.value.size()));
  });
}

inline int cmd_check(const RunConfig& c, std::ostream& out) {
  const Model model = build_model(c);
  if (model.manifold->chart_count() < 2) throw ConfigError("check needs a manifold with at least two charts");
  if (c.check_points == 0) throw ConfigError("check.points must be >= 1");
  const DiffusionGenerator G =
      c.inject_broken_generator ? broken_generator(model.sde.generator) : model.sde.generator;
  const ChartedManifold& m = *model.manifold;
  const std::vector<CheckReport> reports{
      check_transition_round_trip(m, c.check_points, c.seed),
      check_generator_invariance(m, G, c.check_points, c.seed + 1),
      check_pushforward_functoriality(m, c.check_points, c.seed + 2),
      check_defining_property(m, G, c.check_points, c.seed + 3),
  };
  bool ok = true;
  Summary s{{"command", "check"}, {"manifold", c.manifold}, {"generator", G.name()}};
  for (const auto& r : reports) {
    ok = ok && r.passed(kCheckTolerance);
    s.emplace_back(r.name + "_max_error", format_double(r.max_error));
    s.emplace_back(r.name + "_samples", std::to_string(r.samples));
  }
  s.emplace_back("tolerance", format_double(kCheckTolerance));
  s.emplace_back("result", ok ? "pass" : "fail");
  std::ostringstream summary;
  write_summary(summary, s);
  const std::filesystem::path dir(c.out_dir);
  std::filesystem::create_directories(dir);
  write_file(dir / "summary.txt", summary.str());
  out << summary.str();
  return ok ? kOk : kMismatch;
}

inline int cmd_convergence(const RunConfig& c, std::ostream& out) {
  if (c.convergence_dts.size() < 4) throw ConfigError("convergence.dts needs at least 4 step sizes for a fit");
  if (!(c.reference_dt > 0.0)) throw ConfigError("convergence.reference_dt must be positive");
  const Model model = build_model(c);
  std::vector<SchemeConfig> cfgs;
  for (double dt : c.convergence_dts) {
    SchemeConfig s = c.scheme;
    s.dt = dt;
    cfgs.push_back(s);
  }
  const std::size_t n_paths = c.convergence_paths > 0 ? c.convergence_paths : c.n_paths;
  std::vector<ErrorRow> rows;
  try {
    rows = error_study(model.sde, cfgs, model.x0, c.reference_dt, n_paths, c.seed);
  } catch (const std::invalid_argument& e) {
    throw ConfigError(std::string("[convergence] ") + e.what());
  }
  std::vector<double> dts, strong, weak;
  for (const auto& r : rows) {
    dts.push_back(r.dt);
    strong.push_back(r.strong);
    weak.push_back(r.weak);
  }
  auto slope = [&](const std::vector<double>& e) -> std::string {
    try {
      return format_double(fit_order(dts, e));
    } catch (const std::invalid_argument&) {
      return "nan";
    }
  };
  std::ostringstream csv;
  csv << "dt,strong,weak\n";
  for (const auto& r : rows) csv << format_double(r.dt) << ',' << format_double(r.strong) << ',' << format_double(r.weak) << '\n';
  Summary s{{"command", "convergence"},
            {"scheme", scheme_name(c.scheme.scheme)},
            {"seed", std::to_string(c.seed)},
            {"n_paths", std::to_string(n_paths)},
            {"reference_dt", format_double(c.reference_dt)},
            {"strong_order", slope(strong)},
            {"weak_order", slope(weak)}};
  std::ostringstream summary;
  write_summary(summary, s);
  const std::filesystem::path dir(c.out_dir);
  std::filesystem::create_directories(dir);
  write_file(dir / "convergence.csv", csv.str());
  write_file(dir / "summary.txt", summary.str());
  out << csv.str() << summary.str();
  return kOk;
}

/// Runs a command and maps failures to exit codes, reporting on `err`.
inline int run(std::string_view command, const std::filesystem::path& config, const Overrides& overrides,
               std::ostream& out, std::ostream& err) {
  try {
    RunConfig c = load_config(config);
    apply(c, overrides);
    if (command == "simulate") return cmd_simulate(c, out);
    if (command == "compare") return cmd_compare(c, out);
    if (command == "check") return cmd_check(c, out);
    if (command == "convergence") return cmd_convergence(c, out);
    err << "error: unknown command '" << command << "'\n";
    return kConfig;
  } catch (const ConfigError& e) {
    err << "config error: " << e.what() << '\n';
    return kConfig;
  } catch (const RegularityError& e) {
    err << "regularity error: " << e.what() << '\n';
    return kRegularity;
  } catch (const SingularTensorError& e) {
    err << "regularity error: " << e.what() << '\n';
    return kRegularity;
  } catch (const LeftAtlas& e) {
    err << "atlas error: " << e.what() << '\n';
    return kAtlas;
  } catch (const OutOfChart& e) {
    err << "atlas error: " << e.what() << '\n';
    return kAtlas;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kFailure;
  }
}

}  // namespace isde::cli
