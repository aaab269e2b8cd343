#pragma once

#include <cmath>

namespace msm::ad {

/// Hyper-dual number a + b e1 + c e2 + d e1e2 with e1² = e2² = 0.
///
/// Seeding e1 along x_i and e2 along x_j makes `d` the exact mixed partial
/// d²f/dx_i dx_j. Used for closed-form solution jets.
struct HyperDual {
  double v = 0.0;
  double e1 = 0.0;
  double e2 = 0.0;
  double e12 = 0.0;

  HyperDual() = default;
  HyperDual(double value) : v(value) {}  // NOLINT
  HyperDual(double value, double d1, double d2, double d12) : v(value), e1(d1), e2(d2), e12(d12) {}
};

/// f(a) given f, f', f'' at a.v.
inline HyperDual chain(const HyperDual& a, double f, double df, double ddf) {
  return {f, df * a.e1, df * a.e2, df * a.e12 + ddf * a.e1 * a.e2};
}

inline HyperDual operator+(const HyperDual& a, const HyperDual& b) {
  return {a.v + b.v, a.e1 + b.e1, a.e2 + b.e2, a.e12 + b.e12};
}
inline HyperDual operator-(const HyperDual& a, const HyperDual& b) {
  return {a.v - b.v, a.e1 - b.e1, a.e2 - b.e2, a.e12 - b.e12};
}
inline HyperDual operator-(const HyperDual& a) { return {-a.v, -a.e1, -a.e2, -a.e12}; }
inline HyperDual operator*(const HyperDual& a, const HyperDual& b) {
  return {a.v * b.v, a.e1 * b.v + a.v * b.e1, a.e2 * b.v + a.v * b.e2,
          a.e12 * b.v + a.e1 * b.e2 + a.e2 * b.e1 + a.v * b.e12};
}
inline HyperDual operator/(const HyperDual& a, const HyperDual& b) {
  const double inv = 1.0 / b.v;
  const HyperDual recip = chain(b, inv, -inv * inv, 2.0 * inv * inv * inv);
  return a * recip;
}

inline HyperDual operator+(const HyperDual& a, double b) { return a + HyperDual(b); }
inline HyperDual operator+(double a, const HyperDual& b) { return HyperDual(a) + b; }
inline HyperDual operator-(const HyperDual& a, double b) { return a - HyperDual(b); }
inline HyperDual operator-(double a, const HyperDual& b) { return HyperDual(a) - b; }
inline HyperDual operator*(const HyperDual& a, double b) { return {a.v * b, a.e1 * b, a.e2 * b, a.e12 * b}; }
inline HyperDual operator*(double a, const HyperDual& b) { return b * a; }
inline HyperDual operator/(const HyperDual& a, double b) { return a * (1.0 / b); }
inline HyperDual operator/(double a, const HyperDual& b) { return HyperDual(a) / b; }

inline HyperDual exp(const HyperDual& a) {
  const double e = std::exp(a.v);
  return chain(a, e, e, e);
}
inline HyperDual log(const HyperDual& a) {
  return chain(a, std::log(a.v), 1.0 / a.v, -1.0 / (a.v * a.v));
}
inline HyperDual sin(const HyperDual& a) {
  const double s = std::sin(a.v);
  const double c = std::cos(a.v);
  return chain(a, s, c, -s);
}
inline HyperDual cos(const HyperDual& a) {
  const double s = std::sin(a.v);
  const double c = std::cos(a.v);
  return chain(a, c, -s, -c);
}
inline HyperDual tanh(const HyperDual& a) {
  const double t = std::tanh(a.v);
  const double s = 1.0 - t * t;
  return chain(a, t, s, -2.0 * t * s);
}
inline HyperDual sqrt(const HyperDual& a) {
  const double r = std::sqrt(a.v);
  return chain(a, r, 0.5 / r, -0.25 / (r * a.v));
}

}  // namespace msm::ad
