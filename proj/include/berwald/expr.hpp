#pragma once

// Scalar expressions over base coordinates x1..xn (and, for generic Finsler
// functions, direction coordinates y1..yn): parsing, evaluation, printing and
// symbolic partial derivatives.
//
// Grammar (precedence high to low):
//   primary := number | pi | x<k> | y<k> | fn '(' expr ')' | '(' expr ')'
//   power   := primary [ '^' unary ]          right associative
//   unary   := '-' unary | '+' unary | power  so -a^b == -(a^b)
//   term    := unary { ('*' | '/') unary }
//   expr    := term { ('+' | '-') term }
// with fn in {sin, cos, exp, log, sqrt}. Angles are radians.

#include <array>
#include <charconv>
#include <cctype>
#include <cmath>
#include <cstdint>
#include <memory>
#include <numbers>
#include <span>
#include <string>
#include <string_view>
#include <system_error>

#include "berwald/errors.hpp"

namespace berwald {

enum class VarKind : std::uint8_t { X, Y };

struct Variable {
  VarKind kind = VarKind::X;
  int index = 1;  // 1-based

  friend bool operator==(const Variable&, const Variable&) = default;
};

class Expr {
 public:
  enum class Op : std::uint8_t { Const, Var, Neg, Add, Sub, Mul, Div, Pow, Sin, Cos, Exp, Log, Sqrt };

  Expr() : Expr(constant(0.0)) {}

  static Expr constant(double v) { return Expr(std::make_shared<const Node>(Node{Op::Const, v, {}, {}, {}})); }
  static Expr variable(Variable v) {
    if (v.index < 1) throw DomainError("variable index must be >= 1");
    return Expr(std::make_shared<const Node>(Node{Op::Var, 0.0, v, {}, {}}));
  }
  static Expr x(int i) { return variable({VarKind::X, i}); }
  static Expr y(int i) { return variable({VarKind::Y, i}); }

  static Expr unary(Op op, const Expr& a) { return Expr(std::make_shared<const Node>(Node{op, 0.0, {}, a.node_, {}})); }
  static Expr binary(Op op, const Expr& a, const Expr& b) {
    return Expr(std::make_shared<const Node>(Node{op, 0.0, {}, a.node_, b.node_}));
  }

  Op op() const noexcept { return node_->op; }
  double value() const noexcept { return node_->value; }
  Variable var() const noexcept { return node_->var; }
  Expr lhs() const { return Expr(node_->a); }
  Expr rhs() const { return Expr(node_->b); }

  bool is_constant() const noexcept { return node_->op == Op::Const; }
  bool is_constant(double v) const noexcept { return is_constant() && node_->value == v; }

  /// Largest variable index of the given kind appearing in the tree (0 if none).
  int max_index(VarKind kind) const noexcept { return max_index(*node_, kind); }
  bool depends_on(Variable v) const noexcept { return depends_on(*node_, v); }

  /// Evaluates with x = base coordinates and y = direction coordinates.
  double eval(std::span<const double> xs, std::span<const double> ys = {}) const { return eval(*node_, xs, ys); }

  friend bool structurally_equal(const Expr& a, const Expr& b) noexcept { return equal(*a.node_, *b.node_); }

 private:
  struct Node {
    Op op;
    double value;
    Variable var;
    std::shared_ptr<const Node> a;
    std::shared_ptr<const Node> b;
  };

  explicit Expr(std::shared_ptr<const Node> n) : node_(std::move(n)) {}

  static int max_index(const Node& n, VarKind kind) noexcept {
    int m = (n.op == Op::Var && n.var.kind == kind) ? n.var.index : 0;
    if (n.a) m = std::max(m, max_index(*n.a, kind));
    if (n.b) m = std::max(m, max_index(*n.b, kind));
    return m;
  }

  static bool depends_on(const Node& n, Variable v) noexcept {
    if (n.op == Op::Var) return n.var == v;
    return (n.a && depends_on(*n.a, v)) || (n.b && depends_on(*n.b, v));
  }

  static bool equal(const Node& p, const Node& q) noexcept {
    if (p.op != q.op) return false;
    if (p.op == Op::Const) return p.value == q.value;
    if (p.op == Op::Var) return p.var == q.var;
    if (static_cast<bool>(p.a) != static_cast<bool>(q.a) || static_cast<bool>(p.b) != static_cast<bool>(q.b)) return false;
    return (!p.a || equal(*p.a, *q.a)) && (!p.b || equal(*p.b, *q.b));
  }

  static double eval(const Node& n, std::span<const double> xs, std::span<const double> ys) {
    switch (n.op) {
      case Op::Const:
        return n.value;
      case Op::Var: {
        const auto& src = n.var.kind == VarKind::X ? xs : ys;
        const auto idx = static_cast<std::size_t>(n.var.index - 1);
        if (idx >= src.size()) {
          throw DimensionError(std::string(n.var.kind == VarKind::X ? "x" : "y") + std::to_string(n.var.index) +
                               " is not bound (only " + std::to_string(src.size()) + " coordinates supplied)");
        }
        return src[idx];
      }
      case Op::Neg:
        return -eval(*n.a, xs, ys);
      case Op::Add:
        return eval(*n.a, xs, ys) + eval(*n.b, xs, ys);
      case Op::Sub:
        return eval(*n.a, xs, ys) - eval(*n.b, xs, ys);
      case Op::Mul:
        return eval(*n.a, xs, ys) * eval(*n.b, xs, ys);
      case Op::Div: {
        const double den = eval(*n.b, xs, ys);
        if (den == 0.0) throw DomainError("division by zero");
        return eval(*n.a, xs, ys) / den;
      }
      case Op::Pow: {
        const double base = eval(*n.a, xs, ys);
        const double ex = eval(*n.b, xs, ys);
        if (base == 0.0 && ex < 0.0) throw DomainError("zero raised to a negative power");
        const double r = std::pow(base, ex);
        if (std::isnan(r) && !std::isnan(base) && !std::isnan(ex)) {
          throw DomainError("negative base raised to a non-integer power");
        }
        return r;
      }
      case Op::Sin:
        return std::sin(eval(*n.a, xs, ys));
      case Op::Cos:
        return std::cos(eval(*n.a, xs, ys));
      case Op::Exp:
        return std::exp(eval(*n.a, xs, ys));
      case Op::Log: {
        const double v = eval(*n.a, xs, ys);
        if (!(v > 0.0)) throw DomainError("log of a non-positive number");
        return std::log(v);
      }
      case Op::Sqrt: {
        const double v = eval(*n.a, xs, ys);
        if (v < 0.0) throw DomainError("sqrt of a negative number");
        return std::sqrt(v);
      }
    }
    return 0.0;
  }

  std::shared_ptr<const Node> node_;
};

// Folding constructors, used by both the parser and diff_expr. They drop
// additive/multiplicative identities and combine constant operands of + - *,
// so "1 + 0*x1" parses to the constant 1 and a negated literal becomes a
// negative constant.

inline Expr operator-(const Expr& a) {
  if (a.is_constant()) return Expr::constant(-a.value());
  if (a.op() == Expr::Op::Neg) return a.lhs();
  return Expr::unary(Expr::Op::Neg, a);
}

inline Expr operator+(const Expr& a, const Expr& b) {
  if (a.is_constant(0.0)) return b;
  if (b.is_constant(0.0)) return a;
  if (a.is_constant() && b.is_constant()) return Expr::constant(a.value() + b.value());
  return Expr::binary(Expr::Op::Add, a, b);
}

inline Expr operator-(const Expr& a, const Expr& b) {
  if (b.is_constant(0.0)) return a;
  if (a.is_constant(0.0)) return -b;
  if (a.is_constant() && b.is_constant()) return Expr::constant(a.value() - b.value());
  return Expr::binary(Expr::Op::Sub, a, b);
}

inline Expr operator*(const Expr& a, const Expr& b) {
  if (a.is_constant(0.0) || b.is_constant(0.0)) return Expr::constant(0.0);
  if (a.is_constant(1.0)) return b;
  if (b.is_constant(1.0)) return a;
  if (a.is_constant() && b.is_constant()) return Expr::constant(a.value() * b.value());
  return Expr::binary(Expr::Op::Mul, a, b);
}

inline Expr operator/(const Expr& a, const Expr& b) {
  if (b.is_constant(1.0)) return a;
  if (a.is_constant(0.0) && !b.is_constant(0.0)) return Expr::constant(0.0);
  return Expr::binary(Expr::Op::Div, a, b);
}

inline Expr pow(const Expr& a, const Expr& b) {
  if (b.is_constant(1.0)) return a;
  if (b.is_constant(0.0)) return Expr::constant(1.0);
  return Expr::binary(Expr::Op::Pow, a, b);
}

inline Expr sin(const Expr& a) { return Expr::unary(Expr::Op::Sin, a); }
inline Expr cos(const Expr& a) { return Expr::unary(Expr::Op::Cos, a); }
inline Expr exp(const Expr& a) { return Expr::unary(Expr::Op::Exp, a); }
inline Expr log(const Expr& a) { return Expr::unary(Expr::Op::Log, a); }
inline Expr sqrt(const Expr& a) { return Expr::unary(Expr::Op::Sqrt, a); }

namespace detail {

class ExprParser {
 public:
  explicit ExprParser(std::string_view text) : text_(text) {}

  Expr parse() {
    Expr e = parse_sum();
    skip_ws();
    if (pos_ != text_.size()) throw ParseError("unexpected '" + std::string(1, text_[pos_]) + "'", pos_);
    return e;
  }

 private:
  void skip_ws() {
    while (pos_ < text_.size() && std::isspace(static_cast<unsigned char>(text_[pos_]))) ++pos_;
  }

  bool accept(char c) {
    skip_ws();
    if (pos_ < text_.size() && text_[pos_] == c) {
      ++pos_;
      return true;
    }
    return false;
  }

  void expect(char c) {
    if (!accept(c)) {
      if (pos_ >= text_.size()) throw ParseError(std::string("expected '") + c + "' before end of input", pos_);
      throw ParseError(std::string("expected '") + c + "'", pos_);
    }
  }

  Expr parse_sum() {
    Expr e = parse_product();
    for (;;) {
      if (accept('+')) {
        e = e + parse_product();
      } else if (accept('-')) {
        e = e - parse_product();
      } else {
        return e;
      }
    }
  }

  Expr parse_product() {
    Expr e = parse_unary();
    for (;;) {
      if (accept('*')) {
        e = e * parse_unary();
      } else if (accept('/')) {
        e = e / parse_unary();
      } else {
        return e;
      }
    }
  }

  Expr parse_unary() {
    if (accept('-')) return -parse_unary();
    if (accept('+')) return parse_unary();
    return parse_power();
  }

  Expr parse_power() {
    Expr base = parse_primary();
    if (accept('^')) return pow(base, parse_unary());
    return base;
  }

  Expr parse_primary() {
    skip_ws();
    if (pos_ >= text_.size()) throw ParseError("unexpected end of input", pos_);
    const char c = text_[pos_];
    if (c == '(') {
      ++pos_;
      Expr e = parse_sum();
      expect(')');
      return e;
    }
    if (std::isdigit(static_cast<unsigned char>(c)) || c == '.') return parse_number();
    if (std::isalpha(static_cast<unsigned char>(c))) return parse_identifier();
    throw ParseError("unexpected '" + std::string(1, c) + "'", pos_);
  }

  Expr parse_number() {
    const std::size_t start = pos_;
    while (pos_ < text_.size() && (std::isdigit(static_cast<unsigned char>(text_[pos_])) || text_[pos_] == '.')) ++pos_;
    if (pos_ < text_.size() && (text_[pos_] == 'e' || text_[pos_] == 'E')) {
      std::size_t p = pos_ + 1;
      if (p < text_.size() && (text_[p] == '+' || text_[p] == '-')) ++p;
      if (p < text_.size() && std::isdigit(static_cast<unsigned char>(text_[p]))) {
        pos_ = p;
        while (pos_ < text_.size() && std::isdigit(static_cast<unsigned char>(text_[pos_]))) ++pos_;
      }
    }
    double v = 0.0;
    const auto* first = text_.data() + start;
    const auto* last = text_.data() + pos_;
    const auto res = std::from_chars(first, last, v, std::chars_format::general);
    if (res.ec != std::errc{} || res.ptr != last) throw ParseError("malformed number", start);
    return Expr::constant(v);
  }

  Expr parse_identifier() {
    const std::size_t start = pos_;
    while (pos_ < text_.size() && std::isalnum(static_cast<unsigned char>(text_[pos_]))) ++pos_;
    const std::string_view name = text_.substr(start, pos_ - start);

    static constexpr std::array<std::pair<std::string_view, Expr::Op>, 5> kFunctions{{
        {"sin", Expr::Op::Sin},
        {"cos", Expr::Op::Cos},
        {"exp", Expr::Op::Exp},
        {"log", Expr::Op::Log},
        {"sqrt", Expr::Op::Sqrt},
    }};
    for (const auto& [fname, op] : kFunctions) {
      if (name != fname) continue;
      skip_ws();
      if (pos_ >= text_.size() || text_[pos_] != '(') {
        throw ParseError("function '" + std::string(name) + "' expects one argument", pos_);
      }
      ++pos_;
      Expr arg = parse_sum();
      skip_ws();
      if (pos_ < text_.size() && text_[pos_] == ',') {
        throw ParseError("function '" + std::string(name) + "' takes exactly one argument", pos_);
      }
      expect(')');
      return Expr::unary(op, arg);
    }

    Expr e;
    if (name == "pi") {
      e = Expr::constant(std::numbers::pi);
    } else if ((name[0] == 'x' || name[0] == 'y') && name.size() > 1 &&
               name.substr(1).find_first_not_of("0123456789") == std::string_view::npos) {
      int idx = 0;
      std::from_chars(name.data() + 1, name.data() + name.size(), idx);
      if (idx < 1) throw ParseError("variable index must be >= 1 in '" + std::string(name) + "'", start);
      e = Expr::variable({name[0] == 'x' ? VarKind::X : VarKind::Y, idx});
    } else {
      throw ParseError("unknown identifier '" + std::string(name) + "'", start);
    }
    skip_ws();
    if (pos_ < text_.size() && text_[pos_] == '(') {
      throw ParseError("'" + std::string(name) + "' is not a function", pos_);
    }
    return e;
  }

  std::string_view text_;
  std::size_t pos_ = 0;
};

inline void print_expr(const Expr& e, std::string& out) {
  using Op = Expr::Op;
  auto bin = [&](const char* sym) {
    out += '(';
    print_expr(e.lhs(), out);
    out += sym;
    print_expr(e.rhs(), out);
    out += ')';
  };
  auto fn = [&](const char* name) {
    out += name;
    out += '(';
    print_expr(e.lhs(), out);
    out += ')';
  };
  switch (e.op()) {
    case Op::Const: {
      std::array<char, 32> buf{};
      const auto res = std::to_chars(buf.data(), buf.data() + buf.size(), e.value());
      const std::string_view digits(buf.data(), static_cast<std::size_t>(res.ptr - buf.data()));
      if (e.value() < 0.0 || std::signbit(e.value())) {
        out += '(';
        out += digits;
        out += ')';
      } else {
        out += digits;
      }
      return;
    }
    case Op::Var:
      out += e.var().kind == VarKind::X ? 'x' : 'y';
      out += std::to_string(e.var().index);
      return;
    case Op::Neg:
      out += "(-";
      print_expr(e.lhs(), out);
      out += ')';
      return;
    case Op::Add: return bin(" + ");
    case Op::Sub: return bin(" - ");
    case Op::Mul: return bin(" * ");
    case Op::Div: return bin(" / ");
    case Op::Pow: return bin("^");
    case Op::Sin: return fn("sin");
    case Op::Cos: return fn("cos");
    case Op::Exp: return fn("exp");
    case Op::Log: return fn("log");
    case Op::Sqrt: return fn("sqrt");
  }
}

}  // namespace detail

inline Expr parse_expr(std::string_view text) { return detail::ExprParser(text).parse(); }

inline double eval_expr(const Expr& e, std::span<const double> xs, std::span<const double> ys = {}) {
  return e.eval(xs, ys);
}

/// Fully parenthesized text form; parse_expr(to_string(e)) reproduces e.
inline std::string to_string(const Expr& e) {
  std::string out;
  detail::print_expr(e, out);
  return out;
}

/// Symbolic partial derivative with respect to `v`.
inline Expr diff_expr(const Expr& e, Variable v) {
  using Op = Expr::Op;
  const auto d = [&](const Expr& s) { return diff_expr(s, v); };
  switch (e.op()) {
    case Op::Const:
      return Expr::constant(0.0);
    case Op::Var:
      return Expr::constant(e.var() == v ? 1.0 : 0.0);
    case Op::Neg:
      return -d(e.lhs());
    case Op::Add:
      return d(e.lhs()) + d(e.rhs());
    case Op::Sub:
      return d(e.lhs()) - d(e.rhs());
    case Op::Mul:
      return d(e.lhs()) * e.rhs() + e.lhs() * d(e.rhs());
    case Op::Div: {
      const Expr& u = e.lhs();
      const Expr& w = e.rhs();
      return (d(u) * w - u * d(w)) / (w * w);
    }
    case Op::Pow: {
      const Expr& u = e.lhs();
      const Expr& p = e.rhs();
      if (!p.depends_on(v)) {
        const Expr reduced = p.is_constant() ? Expr::constant(p.value() - 1.0) : p - Expr::constant(1.0);
        return p * pow(u, reduced) * d(u);
      }
      return e * (d(p) * log(u) + p * d(u) / u);
    }
    case Op::Sin:
      return cos(e.lhs()) * d(e.lhs());
    case Op::Cos:
      return -(sin(e.lhs()) * d(e.lhs()));
    case Op::Exp:
      return e * d(e.lhs());
    case Op::Log:
      return d(e.lhs()) / e.lhs();
    case Op::Sqrt:
      return d(e.lhs()) / (Expr::constant(2.0) * e);
  }
  return Expr::constant(0.0);
}

/// Partial derivative with respect to the base coordinate x_i (1-based).
inline Expr diff_expr(const Expr& e, int i) {
  if (i < 1) throw DomainError("variable index must be >= 1");
  return diff_expr(e, Variable{VarKind::X, i});
}

}  // namespace berwald
