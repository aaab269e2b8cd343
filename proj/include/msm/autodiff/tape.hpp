#pragma once

#include <cmath>
#include <vector>

namespace msm::ad {

class Tape;

/// Scalar recorded on a `Tape`. A `Var` built from a plain double has no tape and
/// behaves as a constant in every operation.
class Var {
 public:
  Var() = default;
  Var(double value) : value_(value) {}  // NOLINT: implicit constants keep templated code generic

  double value() const { return value_; }
  int index() const { return index_; }
  Tape* tape() const { return tape_; }
  bool is_constant() const { return tape_ == nullptr; }

 private:
  friend class Tape;
  Var(Tape* tape, int index, double value) : tape_(tape), index_(index), value_(value) {}

  Tape* tape_ = nullptr;
  int index_ = -1;
  double value_ = 0.0;
};

/// Wengert list for reverse-mode differentiation of small scalar expressions.
///
/// Each node stores at most two parents with their local partials; `backward`
/// sweeps once in reverse and leaves d(output)/d(node) in `adjoint`.
class Tape {
 public:
  Var variable(double value) { return push(value, -1, 0.0, -1, 0.0); }

  Var unary(double value, const Var& a, double da) {
    if (a.is_constant()) return Var(value);
    return push(value, a.index_, da, -1, 0.0);
  }

  Var binary(double value, const Var& a, double da, const Var& b, double db) {
    if (a.is_constant()) return unary(value, b, db);
    if (b.is_constant()) return push(value, a.index_, da, -1, 0.0);
    return push(value, a.index_, da, b.index_, db);
  }

  void clear() {
    nodes_.clear();
    adjoints_.clear();
  }
  std::size_t size() const { return nodes_.size(); }

  void backward(const Var& output) {
    adjoints_.assign(nodes_.size(), 0.0);
    if (output.is_constant()) return;
    adjoints_[output.index_] = 1.0;
    for (int i = output.index_; i >= 0; --i) {
      const double g = adjoints_[i];
      if (g == 0.0) continue;
      const Node& n = nodes_[i];
      if (n.a >= 0) adjoints_[n.a] += n.da * g;
      if (n.b >= 0) adjoints_[n.b] += n.db * g;
    }
  }

  double adjoint(const Var& v) const { return v.is_constant() ? 0.0 : adjoints_[v.index_]; }

 private:
  struct Node {
    int a;
    int b;
    double da;
    double db;
  };

  Var push(double value, int a, double da, int b, double db) {
    nodes_.push_back({a, b, da, db});
    return Var(this, static_cast<int>(nodes_.size()) - 1, value);
  }

  std::vector<Node> nodes_;
  std::vector<double> adjoints_;
};

namespace detail {
inline Tape* tape_of(const Var& a, const Var& b) { return a.tape() ? a.tape() : b.tape(); }
}  // namespace detail

inline Var operator+(const Var& a, const Var& b) {
  Tape* t = detail::tape_of(a, b);
  if (!t) return Var(a.value() + b.value());
  return t->binary(a.value() + b.value(), a, 1.0, b, 1.0);
}
inline Var operator-(const Var& a, const Var& b) {
  Tape* t = detail::tape_of(a, b);
  if (!t) return Var(a.value() - b.value());
  return t->binary(a.value() - b.value(), a, 1.0, b, -1.0);
}
inline Var operator*(const Var& a, const Var& b) {
  Tape* t = detail::tape_of(a, b);
  if (!t) return Var(a.value() * b.value());
  return t->binary(a.value() * b.value(), a, b.value(), b, a.value());
}
inline Var operator/(const Var& a, const Var& b) {
  Tape* t = detail::tape_of(a, b);
  const double q = a.value() / b.value();
  if (!t) return Var(q);
  return t->binary(q, a, 1.0 / b.value(), b, -q / b.value());
}
inline Var operator-(const Var& a) {
  if (!a.tape()) return Var(-a.value());
  return a.tape()->unary(-a.value(), a, -1.0);
}

inline Var operator+(const Var& a, double b) { return a + Var(b); }
inline Var operator+(double a, const Var& b) { return Var(a) + b; }
inline Var operator-(const Var& a, double b) { return a - Var(b); }
inline Var operator-(double a, const Var& b) { return Var(a) - b; }
inline Var operator*(const Var& a, double b) { return a * Var(b); }
inline Var operator*(double a, const Var& b) { return Var(a) * b; }
inline Var operator/(const Var& a, double b) { return a / Var(b); }
inline Var operator/(double a, const Var& b) { return Var(a) / b; }

inline Var& operator+=(Var& a, const Var& b) { return a = a + b; }
inline Var& operator-=(Var& a, const Var& b) { return a = a - b; }
inline Var& operator*=(Var& a, const Var& b) { return a = a * b; }

namespace detail {
inline Var apply(const Var& a, double value, double derivative) {
  if (!a.tape()) return Var(value);
  return a.tape()->unary(value, a, derivative);
}
}  // namespace detail

inline Var exp(const Var& a) {
  const double e = std::exp(a.value());
  return detail::apply(a, e, e);
}
inline Var log(const Var& a) { return detail::apply(a, std::log(a.value()), 1.0 / a.value()); }
inline Var sin(const Var& a) {
  return detail::apply(a, std::sin(a.value()), std::cos(a.value()));
}
inline Var cos(const Var& a) {
  return detail::apply(a, std::cos(a.value()), -std::sin(a.value()));
}
inline Var tanh(const Var& a) {
  const double t = std::tanh(a.value());
  return detail::apply(a, t, 1.0 - t * t);
}
inline Var sqrt(const Var& a) {
  const double r = std::sqrt(a.value());
  return detail::apply(a, r, 0.5 / r);
}

}  // namespace msm::ad
