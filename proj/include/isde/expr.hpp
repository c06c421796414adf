#pragma once

// Expression trees over indexed variables. An Expr can be evaluated on plain
// doubles or on Jet2 values, differentiated symbolically (no simplification
// beyond constant folding) and have its variables substituted. SmoothMap is a
// vector of Exprs with a fixed input arity.

#include <cctype>
#include <cmath>
#include <cstddef>
#include <memory>
#include <numbers>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "isde/errors.hpp"
#include "isde/jet.hpp"

namespace isde {

enum class Op { Constant, Variable, Neg, Add, Sub, Mul, Div, PowInt, Sin, Cos, Exp, Log, Sqrt, Atan2 };

class Expr {
 public:
  struct Node {
    Op op;
    double constant = 0.0;
    std::size_t index = 0;  // Variable
    int exponent = 0;       // PowInt
    std::vector<Expr> args;
  };

  Expr() : Expr(0.0) {}
  Expr(double c) : node_(std::make_shared<const Node>(Node{Op::Constant, c, 0, 0, {}})) {}  // NOLINT

  static Expr variable(std::size_t index) { return Expr(Node{Op::Variable, 0.0, index, 0, {}}); }

  static Expr make(Op op, std::vector<Expr> args, int exponent = 0) {
    return Expr(Node{op, 0.0, 0, exponent, std::move(args)});
  }

  [[nodiscard]] Op op() const { return node_->op; }
  [[nodiscard]] bool is_constant() const { return node_->op == Op::Constant; }
  [[nodiscard]] bool is_constant(double c) const { return is_constant() && node_->constant == c; }
  [[nodiscard]] double constant() const { return node_->constant; }
  [[nodiscard]] std::size_t index() const { return node_->index; }
  [[nodiscard]] int exponent() const { return node_->exponent; }
  [[nodiscard]] const Expr& arg(std::size_t i) const { return node_->args[i]; }

  /// One past the largest variable index referenced.
  [[nodiscard]] std::size_t arity() const {
    if (op() == Op::Variable) return index() + 1;
    std::size_t a = 0;
    for (const auto& e : node_->args) a = std::max(a, e.arity());
    return a;
  }

  [[nodiscard]] double evaluate(std::span<const double> x) const {
    return evaluate_impl<double>(x, [](double c) { return c; });
  }

  [[nodiscard]] Jet2 evaluate(std::span<const Jet2> x) const {
    const std::size_t n = x.empty() ? 0 : x.front().dim();
    return evaluate_impl<Jet2>(x, [n](double c) { return Jet2(n, c); });
  }

  /// Symbolic partial derivative with respect to variable `var`.
  [[nodiscard]] Expr derivative(std::size_t var) const;

  /// Replaces variable i by replacements[i].
  [[nodiscard]] Expr substitute(std::span<const Expr> replacements) const;

  [[nodiscard]] std::string to_string() const;

 private:
  explicit Expr(Node n) : node_(std::make_shared<const Node>(std::move(n))) {}

  template <typename T, typename MakeConst>
  T evaluate_impl(std::span<const T> x, const MakeConst& make_const) const {
    using std::atan2;
    using std::cos;
    using std::exp;
    using std::log;
    using std::sin;
    using std::sqrt;
    const auto& a = node_->args;
    switch (op()) {
      case Op::Constant:
        return make_const(constant());
      case Op::Variable:
        if (index() >= x.size()) {
          throw DimensionError("expression references variable " + std::to_string(index()) + " but only " +
                               std::to_string(x.size()) + " inputs were given");
        }
        return x[index()];
      case Op::Neg:
        return -a[0].evaluate_impl<T>(x, make_const);
      case Op::Add:
        return a[0].evaluate_impl<T>(x, make_const) + a[1].evaluate_impl<T>(x, make_const);
      case Op::Sub:
        return a[0].evaluate_impl<T>(x, make_const) - a[1].evaluate_impl<T>(x, make_const);
      case Op::Mul:
        // constant factors scale instead of multiplying jets
        if (a[0].is_constant()) return a[0].constant() * a[1].evaluate_impl<T>(x, make_const);
        if (a[1].is_constant()) return a[0].evaluate_impl<T>(x, make_const) * a[1].constant();
        return a[0].evaluate_impl<T>(x, make_const) * a[1].evaluate_impl<T>(x, make_const);
      case Op::Div: {
        if constexpr (std::is_same_v<T, double>) {
          const double den = a[1].evaluate_impl<T>(x, make_const);
          if (den == 0.0) throw DomainError("division by zero");
          return a[0].evaluate_impl<T>(x, make_const) / den;
        } else {
          if (a[1].is_constant()) return a[0].evaluate_impl<T>(x, make_const) / a[1].constant();
          return a[0].evaluate_impl<T>(x, make_const) / a[1].evaluate_impl<T>(x, make_const);
        }
      }
      case Op::PowInt: {
        if constexpr (std::is_same_v<T, double>) {
          const double b = a[0].evaluate_impl<T>(x, make_const);
          if (b == 0.0 && exponent() < 0) throw DomainError("negative power of zero");
          return std::pow(b, exponent());
        } else {
          return pow(a[0].evaluate_impl<T>(x, make_const), exponent());
        }
      }
      case Op::Sin:
        return sin(a[0].evaluate_impl<T>(x, make_const));
      case Op::Cos:
        return cos(a[0].evaluate_impl<T>(x, make_const));
      case Op::Exp:
        return exp(a[0].evaluate_impl<T>(x, make_const));
      case Op::Log: {
        T v = a[0].evaluate_impl<T>(x, make_const);
        if constexpr (std::is_same_v<T, double>) {
          if (v <= 0.0) throw DomainError("log of non-positive value");
        }
        return log(v);
      }
      case Op::Sqrt: {
        T v = a[0].evaluate_impl<T>(x, make_const);
        if constexpr (std::is_same_v<T, double>) {
          if (v < 0.0) throw DomainError("sqrt of negative value");
        }
        return sqrt(v);
      }
      case Op::Atan2: {
        T y = a[0].evaluate_impl<T>(x, make_const);
        T xx = a[1].evaluate_impl<T>(x, make_const);
        if constexpr (std::is_same_v<T, double>) {
          if (y == 0.0 && xx == 0.0) throw DomainError("atan2 at the origin");
        }
        return atan2(y, xx);
      }
    }
    throw std::logic_error("unknown expression op");
  }

  std::shared_ptr<const Node> node_;
};

// Builders with light constant folding; keeps symbolic derivatives small.

inline Expr operator-(const Expr& a) {
  if (a.is_constant()) return Expr(-a.constant());
  if (a.op() == Op::Neg) return a.arg(0);
  return Expr::make(Op::Neg, {a});
}

inline Expr operator+(const Expr& a, const Expr& b) {
  if (a.is_constant() && b.is_constant()) return Expr(a.constant() + b.constant());
  if (a.is_constant(0.0)) return b;
  if (b.is_constant(0.0)) return a;
  return Expr::make(Op::Add, {a, b});
}

inline Expr operator-(const Expr& a, const Expr& b) {
  if (a.is_constant() && b.is_constant()) return Expr(a.constant() - b.constant());
  if (b.is_constant(0.0)) return a;
  if (a.is_constant(0.0)) return -b;
  return Expr::make(Op::Sub, {a, b});
}

inline Expr operator*(const Expr& a, const Expr& b) {
  if (a.is_constant() && b.is_constant()) return Expr(a.constant() * b.constant());
  if (a.is_constant(0.0) || b.is_constant(0.0)) return Expr(0.0);
  if (a.is_constant(1.0)) return b;
  if (b.is_constant(1.0)) return a;
  if (a.is_constant(-1.0)) return -b;
  if (b.is_constant(-1.0)) return -a;
  return Expr::make(Op::Mul, {a, b});
}

inline Expr operator/(const Expr& a, const Expr& b) {
  if (b.is_constant(0.0)) throw DomainError("division by constant zero");
  if (a.is_constant() && b.is_constant()) return Expr(a.constant() / b.constant());
  if (a.is_constant(0.0)) return Expr(0.0);
  if (b.is_constant(1.0)) return a;
  return Expr::make(Op::Div, {a, b});
}

inline Expr pow(const Expr& a, int k) {
  if (k == 0) return Expr(1.0);
  if (k == 1) return a;
  if (a.is_constant()) return Expr(std::pow(a.constant(), k));
  return Expr::make(Op::PowInt, {a}, k);
}

inline Expr sin(const Expr& a) { return a.is_constant() ? Expr(std::sin(a.constant())) : Expr::make(Op::Sin, {a}); }
inline Expr cos(const Expr& a) { return a.is_constant() ? Expr(std::cos(a.constant())) : Expr::make(Op::Cos, {a}); }
inline Expr exp(const Expr& a) { return a.is_constant() ? Expr(std::exp(a.constant())) : Expr::make(Op::Exp, {a}); }
inline Expr log(const Expr& a) { return Expr::make(Op::Log, {a}); }
inline Expr sqrt(const Expr& a) { return Expr::make(Op::Sqrt, {a}); }
inline Expr atan2(const Expr& y, const Expr& x) { return Expr::make(Op::Atan2, {y, x}); }

/// Real power via exp(p log a), for a > 0.
inline Expr pow(const Expr& a, const Expr& p) {
  if (p.is_constant() && p.constant() == std::round(p.constant()) && std::abs(p.constant()) < 1024) {
    return pow(a, static_cast<int>(p.constant()));
  }
  return exp(p * log(a));
}

inline Expr Expr::derivative(std::size_t var) const {
  const auto& a = node_->args;
  switch (op()) {
    case Op::Constant:
      return Expr(0.0);
    case Op::Variable:
      return Expr(index() == var ? 1.0 : 0.0);
    case Op::Neg:
      return -a[0].derivative(var);
    case Op::Add:
      return a[0].derivative(var) + a[1].derivative(var);
    case Op::Sub:
      return a[0].derivative(var) - a[1].derivative(var);
    case Op::Mul:
      return a[0].derivative(var) * a[1] + a[0] * a[1].derivative(var);
    case Op::Div: {
      const Expr du = a[0].derivative(var);
      const Expr dv = a[1].derivative(var);
      if (dv.is_constant(0.0)) return du / a[1];
      return (du * a[1] - a[0] * dv) / pow(a[1], 2);
    }
    case Op::PowInt:
      return Expr(static_cast<double>(exponent())) * pow(a[0], exponent() - 1) * a[0].derivative(var);
    case Op::Sin:
      return cos(a[0]) * a[0].derivative(var);
    case Op::Cos:
      return -(sin(a[0]) * a[0].derivative(var));
    case Op::Exp:
      return *this * a[0].derivative(var);
    case Op::Log:
      return a[0].derivative(var) / a[0];
    case Op::Sqrt:
      return a[0].derivative(var) / (Expr(2.0) * *this);
    case Op::Atan2: {
      const Expr& y = a[0];
      const Expr& x = a[1];
      const Expr num = x * y.derivative(var) - y * x.derivative(var);
      if (num.is_constant(0.0)) return Expr(0.0);
      return num / (pow(x, 2) + pow(y, 2));
    }
  }
  throw std::logic_error("unknown expression op");
}

inline Expr Expr::substitute(std::span<const Expr> replacements) const {
  const auto& a = node_->args;
  switch (op()) {
    case Op::Constant:
      return *this;
    case Op::Variable:
      if (index() >= replacements.size()) {
        throw DimensionError("substitute: no replacement for variable " + std::to_string(index()));
      }
      return replacements[index()];
    case Op::Neg:
      return -a[0].substitute(replacements);
    case Op::Add:
      return a[0].substitute(replacements) + a[1].substitute(replacements);
    case Op::Sub:
      return a[0].substitute(replacements) - a[1].substitute(replacements);
    case Op::Mul:
      return a[0].substitute(replacements) * a[1].substitute(replacements);
    case Op::Div:
      return a[0].substitute(replacements) / a[1].substitute(replacements);
    case Op::PowInt:
      return pow(a[0].substitute(replacements), exponent());
    case Op::Sin:
      return sin(a[0].substitute(replacements));
    case Op::Cos:
      return cos(a[0].substitute(replacements));
    case Op::Exp:
      return exp(a[0].substitute(replacements));
    case Op::Log:
      return log(a[0].substitute(replacements));
    case Op::Sqrt:
      return sqrt(a[0].substitute(replacements));
    case Op::Atan2:
      return atan2(a[0].substitute(replacements), a[1].substitute(replacements));
  }
  throw std::logic_error("unknown expression op");
}

inline std::string Expr::to_string() const {
  const auto& a = node_->args;
  auto fn = [&](const char* name) { return std::string(name) + "(" + a[0].to_string() + ")"; };
  switch (op()) {
    case Op::Constant: {
      std::string s = std::to_string(constant());
      return constant() < 0 ? "(" + s + ")" : s;
    }
    case Op::Variable:
      return "_" + std::to_string(index());
    case Op::Neg:
      return "(-" + a[0].to_string() + ")";
    case Op::Add:
      return "(" + a[0].to_string() + " + " + a[1].to_string() + ")";
    case Op::Sub:
      return "(" + a[0].to_string() + " - " + a[1].to_string() + ")";
    case Op::Mul:
      return "(" + a[0].to_string() + " * " + a[1].to_string() + ")";
    case Op::Div:
      return "(" + a[0].to_string() + " / " + a[1].to_string() + ")";
    case Op::PowInt:
      return "(" + a[0].to_string() + "^" + std::to_string(exponent()) + ")";
    case Op::Sin:
      return fn("sin");
    case Op::Cos:
      return fn("cos");
    case Op::Exp:
      return fn("exp");
    case Op::Log:
      return fn("log");
    case Op::Sqrt:
      return fn("sqrt");
    case Op::Atan2:
      return "atan2(" + a[0].to_string() + ", " + a[1].to_string() + ")";
  }
  return "?";
}

// ---------------------------------------------------------------------------
// Parser for the config mini-language.
//
//   expr    := term (('+' | '-') term)*
//   term    := unary (('*' | '/') unary)*
//   unary   := ('-' | '+') unary | power
//   power   := primary ('^' unary)?
//   primary := number | 'pi' | x<k> | v<k> | func '(' expr (',' expr)? ')' | '(' expr ')'
//
// x1..xn map to variables 0..n-1 and v1..vn to n..2n-1. Functions: sin cos
// exp log sqrt atan2.

class ParseError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

struct VariableScheme {
  std::size_t dimension = 0;
  bool allow_velocities = false;
};

namespace detail {

class ExprParser {
 public:
  ExprParser(std::string_view src, VariableScheme scheme) : src_(src), scheme_(scheme) {}

  Expr parse() {
    Expr e = expression();
    skip_ws();
    if (pos_ != src_.size()) fail("unexpected '" + std::string(1, src_[pos_]) + "'");
    return e;
  }

 private:
  [[noreturn]] void fail(const std::string& msg) const {
    throw ParseError("expression '" + std::string(src_) + "' at column " + std::to_string(pos_ + 1) + ": " + msg);
  }

  void skip_ws() {
    while (pos_ < src_.size() && std::isspace(static_cast<unsigned char>(src_[pos_]))) ++pos_;
  }

  bool accept(char c) {
    skip_ws();
    if (pos_ < src_.size() && src_[pos_] == c) {
      ++pos_;
      return true;
    }
    return false;
  }

  void expect(char c) {
    if (!accept(c)) fail(std::string("expected '") + c + "'");
  }

  Expr expression() {
    Expr e = term();
    for (;;) {
      if (accept('+')) {
        e = Expr::make(Op::Add, {e, term()});
      } else if (accept('-')) {
        e = Expr::make(Op::Sub, {e, term()});
      } else {
        return e;
      }
    }
  }

  Expr term() {
    Expr e = unary();
    for (;;) {
      if (accept('*')) {
        e = e * unary();
      } else if (accept('/')) {
        e = e / unary();
      } else {
        return e;
      }
    }
  }

  Expr unary() {
    if (accept('-')) return -unary();
    if (accept('+')) return unary();
    return power();
  }

  Expr power() {
    Expr base = primary();
    if (accept('^')) return pow(base, unary());
    return base;
  }

  Expr primary() {
    skip_ws();
    if (pos_ >= src_.size()) fail("unexpected end of expression");
    const char c = src_[pos_];
    if (accept('(')) {
      Expr e = expression();
      expect(')');
      return e;
    }
    if (std::isdigit(static_cast<unsigned char>(c)) || c == '.') return number();
    if (std::isalpha(static_cast<unsigned char>(c))) return identifier();
    fail(std::string("unexpected '") + c + "'");
  }

  Expr number() {
    const char* begin = src_.data() + pos_;
    char* end = nullptr;
    const double v = std::strtod(begin, &end);
    if (end == begin) fail("bad number");
    pos_ += static_cast<std::size_t>(end - begin);
    return Expr(v);
  }

  Expr identifier() {
    const std::size_t start = pos_;
    while (pos_ < src_.size() && std::isalnum(static_cast<unsigned char>(src_[pos_]))) ++pos_;
    const std::string name(src_.substr(start, pos_ - start));
    if (name == "pi") return Expr(std::numbers::pi);
    if ((name[0] == 'x' || name[0] == 'v') && name.size() > 1 &&
        name.find_first_not_of("0123456789", 1) == std::string::npos) {
      const std::size_t k = std::stoul(name.substr(1));
      if (k < 1 || k > scheme_.dimension) fail("variable " + name + " out of range");
      if (name[0] == 'v') {
        if (!scheme_.allow_velocities) fail("velocity variable " + name + " not allowed here");
        return Expr::variable(scheme_.dimension + k - 1);
      }
      return Expr::variable(k - 1);
    }
    expect('(');
    Expr a = expression();
    if (name == "atan2") {
      expect(',');
      Expr b = expression();
      expect(')');
      return atan2(a, b);
    }
    expect(')');
    if (name == "sin") return sin(a);
    if (name == "cos") return cos(a);
    if (name == "exp") return exp(a);
    if (name == "log") return log(a);
    if (name == "sqrt") return sqrt(a);
    fail("unknown function " + name);
  }

  std::string_view src_;
  VariableScheme scheme_;
  std::size_t pos_ = 0;
};

}  // namespace detail

[[nodiscard]] inline Expr parse_expr(std::string_view src, VariableScheme scheme) {
  return detail::ExprParser(src, scheme).parse();
}

// ---------------------------------------------------------------------------

/// A smooth map R^dim_in -> R^dim_out given componentwise by expressions.
class SmoothMap {
 public:
  SmoothMap() = default;

  SmoothMap(std::size_t dim_in, std::vector<Expr> outputs) : dim_in_(dim_in), outputs_(std::move(outputs)) {
    for (const auto& e : outputs_) {
      if (e.arity() > dim_in_) throw DimensionError("SmoothMap output references a variable beyond dim_in");
    }
  }

  static SmoothMap identity(std::size_t n) {
    std::vector<Expr> out;
    for (std::size_t i = 0; i < n; ++i) out.push_back(Expr::variable(i));
    return {n, std::move(out)};
  }

  static SmoothMap parse(std::size_t dim_in, std::span<const std::string> components, VariableScheme scheme) {
    std::vector<Expr> out;
    for (const auto& c : components) out.push_back(parse_expr(c, scheme));
    return {dim_in, std::move(out)};
  }

  [[nodiscard]] std::size_t dimension_in() const { return dim_in_; }
  [[nodiscard]] std::size_t dimension_out() const { return outputs_.size(); }
  [[nodiscard]] const Expr& component(std::size_t i) const { return outputs_[i]; }
  [[nodiscard]] const std::vector<Expr>& components() const { return outputs_; }

  [[nodiscard]] Eigen::VectorXd evaluate(const Eigen::VectorXd& x) const {
    check_input(static_cast<std::size_t>(x.size()));
    Eigen::VectorXd y(outputs_.size());
    const std::span<const double> xs(x.data(), static_cast<std::size_t>(x.size()));
    for (std::size_t i = 0; i < outputs_.size(); ++i) y[static_cast<Eigen::Index>(i)] = outputs_[i].evaluate(xs);
    return y;
  }

  /// Value, gradient and Hessian of every output component at x.
  [[nodiscard]] std::vector<Jet2> eval_jet2(const Eigen::VectorXd& x) const {
    check_input(static_cast<std::size_t>(x.size()));
    const auto seeds = jet_variables(std::span<const double>(x.data(), static_cast<std::size_t>(x.size())));
    return eval_jet2(seeds);
  }

  /// Evaluates on arbitrary input jets (chain rule applied implicitly).
  [[nodiscard]] std::vector<Jet2> eval_jet2(std::span<const Jet2> x) const {
    check_input(x.size());
    std::vector<Jet2> out;
    out.reserve(outputs_.size());
    for (const auto& e : outputs_) out.push_back(e.evaluate(x));
    return out;
  }

  /// Jacobian matrix (dim_out x dim_in) at x.
  [[nodiscard]] Eigen::MatrixXd jacobian(const Eigen::VectorXd& x) const {
    const auto jets = eval_jet2(x);
    Eigen::MatrixXd j(outputs_.size(), dim_in_);
    for (std::size_t i = 0; i < jets.size(); ++i)
      for (std::size_t k = 0; k < dim_in_; ++k)
        j(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(k)) = jets[i].gradient(k);
    return j;
  }

  /// Symbolic Jacobian, flattened row-major: output i*dim_in + k is d f_i / d x_k.
  [[nodiscard]] SmoothMap jacobian_map() const {
    std::vector<Expr> out;
    out.reserve(outputs_.size() * dim_in_);
    for (const auto& e : outputs_)
      for (std::size_t k = 0; k < dim_in_; ++k) out.push_back(e.derivative(k));
    return {dim_in_, std::move(out)};
  }

  /// this ∘ inner.
  [[nodiscard]] SmoothMap compose(const SmoothMap& inner) const {
    if (inner.dimension_out() != dim_in_) throw DimensionError("compose: inner output dimension mismatch");
    std::vector<Expr> out;
    out.reserve(outputs_.size());
    for (const auto& e : outputs_) out.push_back(e.substitute(inner.components()));
    return {inner.dimension_in(), std::move(out)};
  }

 private:
  void check_input(std::size_t n) const {
    if (n != dim_in_) {
      throw DimensionError("SmoothMap expects " + std::to_string(dim_in_) + " inputs, got " + std::to_string(n));
    }
  }

  std::size_t dim_in_ = 0;
  std::vector<Expr> outputs_;
};

/// Free-function form of SmoothMap::eval_jet2.
[[nodiscard]] inline std::vector<Jet2> eval_jet2(const SmoothMap& f, const Eigen::VectorXd& x) {
  return f.eval_jet2(x);
}

}  // namespace isde
