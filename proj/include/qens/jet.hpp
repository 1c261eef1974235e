// Second-order forward jets over the two PDE inputs: a value together with
// d/dt, d/dx and d2/dx2, propagated exactly through every primitive.
#pragma once

#include <cmath>

namespace qens {

struct Jet2 {
  double v = 0.0;    // value
  double dt = 0.0;   // d/dt
  double dx = 0.0;   // d/dx
  double dxx = 0.0;  // d2/dx2

  static Jet2 constant(double c) { return {c, 0.0, 0.0, 0.0}; }
  static Jet2 time_var(double t) { return {t, 1.0, 0.0, 0.0}; }
  static Jet2 space_var(double x) { return {x, 0.0, 1.0, 0.0}; }
};

inline Jet2 operator+(const Jet2& a, const Jet2& b) {
  return {a.v + b.v, a.dt + b.dt, a.dx + b.dx, a.dxx + b.dxx};
}

inline Jet2 operator-(const Jet2& a, const Jet2& b) {
  return {a.v - b.v, a.dt - b.dt, a.dx - b.dx, a.dxx - b.dxx};
}

inline Jet2 operator-(const Jet2& a) { return {-a.v, -a.dt, -a.dx, -a.dxx}; }

// d2(ab)/dx2 = a'' b + 2 a' b' + a b''
inline Jet2 operator*(const Jet2& a, const Jet2& b) {
  return {a.v * b.v,
          a.dt * b.v + a.v * b.dt,
          a.dx * b.v + a.v * b.dx,
          a.dxx * b.v + 2.0 * a.dx * b.dx + a.v * b.dxx};
}

inline Jet2 operator+(const Jet2& a, double c) { return {a.v + c, a.dt, a.dx, a.dxx}; }
inline Jet2 operator+(double c, const Jet2& a) { return a + c; }
inline Jet2 operator-(const Jet2& a, double c) { return {a.v - c, a.dt, a.dx, a.dxx}; }
inline Jet2 operator-(double c, const Jet2& a) { return {c - a.v, -a.dt, -a.dx, -a.dxx}; }
inline Jet2 operator*(const Jet2& a, double c) { return {a.v * c, a.dt * c, a.dx * c, a.dxx * c}; }
inline Jet2 operator*(double c, const Jet2& a) { return a * c; }

inline Jet2& operator+=(Jet2& a, const Jet2& b) {
  a.v += b.v;
  a.dt += b.dt;
  a.dx += b.dx;
  a.dxx += b.dxx;
  return a;
}

inline Jet2 operator/(const Jet2& a, const Jet2& b) {
  const double q = a.v / b.v;
  const double dt = (a.dt - q * b.dt) / b.v;
  const double dx = (a.dx - q * b.dx) / b.v;
  const double dxx = (a.dxx - 2.0 * dx * b.dx - q * b.dxx) / b.v;
  return {q, dt, dx, dxx};
}

inline Jet2 operator/(const Jet2& a, double c) { return a * (1.0 / c); }
inline Jet2 operator/(double c, const Jet2& a) { return Jet2::constant(c) / a; }

// Unary lift: g(u) -> (g, g'u_t, g'u_x, g''u_x^2 + g'u_xx)
inline Jet2 lift(const Jet2& u, double g, double g1, double g2) {
  return {g, g1 * u.dt, g1 * u.dx, g2 * u.dx * u.dx + g1 * u.dxx};
}

inline Jet2 exp(const Jet2& u) {
  const double e = std::exp(u.v);
  return lift(u, e, e, e);
}

inline Jet2 tanh(const Jet2& u) {
  const double s = std::tanh(u.v);
  const double s1 = 1.0 - s * s;
  return lift(u, s, s1, -2.0 * s * s1);
}

inline Jet2 sigmoid(const Jet2& u) {
  const double s = 1.0 / (1.0 + std::exp(-u.v));
  const double s1 = s * (1.0 - s);
  return lift(u, s, s1, s1 * (1.0 - 2.0 * s));
}

inline Jet2 sin(const Jet2& u) { return lift(u, std::sin(u.v), std::cos(u.v), -std::sin(u.v)); }
inline Jet2 cos(const Jet2& u) { return lift(u, std::cos(u.v), -std::sin(u.v), -std::cos(u.v)); }

}  // namespace qens
