#pragma once

#include <cmath>

namespace dpbam {

// First-order dual number: value plus directional tangent. Running any
// computation on duals propagates d/dalpha f(x + alpha*v) alongside f(x),
// which is the forward-mode half of forward-over-reverse Hessian-vector
// products.
struct Dual {
  double v = 0.0;  // primal value
  double t = 0.0;  // tangent

  constexpr Dual() = default;
  constexpr Dual(double value) : v(value), t(0.0) {}  // NOLINT: implicit by design
  constexpr Dual(double value, double tangent) : v(value), t(tangent) {}

  Dual& operator+=(const Dual& o) {
    v += o.v;
    t += o.t;
    return *this;
  }
  Dual& operator-=(const Dual& o) {
    v -= o.v;
    t -= o.t;
    return *this;
  }
  Dual& operator*=(const Dual& o) {
    t = t * o.v + v * o.t;
    v *= o.v;
    return *this;
  }
  Dual& operator/=(const Dual& o) {
    t = (t * o.v - v * o.t) / (o.v * o.v);
    v /= o.v;
    return *this;
  }
};

inline Dual operator+(Dual a, const Dual& b) { return a += b; }
inline Dual operator-(Dual a, const Dual& b) { return a -= b; }
inline Dual operator*(Dual a, const Dual& b) { return a *= b; }
inline Dual operator/(Dual a, const Dual& b) { return a /= b; }
inline Dual operator-(const Dual& a) { return Dual(-a.v, -a.t); }

inline bool operator<(const Dual& a, const Dual& b) { return a.v < b.v; }
inline bool operator>(const Dual& a, const Dual& b) { return a.v > b.v; }
inline bool operator<=(const Dual& a, const Dual& b) { return a.v <= b.v; }
inline bool operator>=(const Dual& a, const Dual& b) { return a.v >= b.v; }

inline Dual exp(const Dual& x) {
  double e = std::exp(x.v);
  return Dual(e, e * x.t);
}
inline Dual log(const Dual& x) { return Dual(std::log(x.v), x.t / x.v); }
inline Dual sqrt(const Dual& x) {
  double s = std::sqrt(x.v);
  return Dual(s, 0.5 * x.t / s);
}
inline Dual tanh(const Dual& x) {
  double th = std::tanh(x.v);
  return Dual(th, (1.0 - th * th) * x.t);
}

// Value extraction shared by generic code that needs to branch on magnitudes
// (branch decisions follow the primal lane).
inline double value_of(double x) { return x; }
inline double value_of(const Dual& x) { return x.v; }

inline bool is_finite(double x) { return std::isfinite(x); }
inline bool is_finite(const Dual& x) { return std::isfinite(x.v) && std::isfinite(x.t); }

inline double tangent_of(double) { return 0.0; }
inline double tangent_of(const Dual& x) { return x.t; }

}  // namespace dpbam
