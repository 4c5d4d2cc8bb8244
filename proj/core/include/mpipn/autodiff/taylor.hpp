#pragma once

#include <array>
#include <cmath>

namespace mpipn::ad {

/// Truncated univariate Taylor polynomial: coeff[k] = f^(k)(t0) / k!.
///
/// Order 1 is the classic dual number (primal, tangent). Higher orders give
/// the derivative tables used by the tape's elementwise primitives; every
/// supported elementary function obeys the chain rule exactly up to Order.
template <int Order>
struct TaylorScalar {
  static_assert(Order >= 0 && Order <= 3, "derivative tables are provided up to third order");
  std::array<double, Order + 1> c{};

  TaylorScalar() = default;
  TaylorScalar(double value) { c[0] = value; }  // NOLINT: constants promote implicitly

  /// Independent variable at `value` with unit seed.
  static TaylorScalar variable(double value, double seed = 1.0) {
    TaylorScalar t(value);
    if constexpr (Order >= 1) t.c[1] = seed;
    return t;
  }

  double primal() const { return c[0]; }

  /// k-th derivative with respect to the seeded variable.
  double derivative(int k) const {
    double factorial = 1.0;
    for (int i = 2; i <= k; ++i) factorial *= i;
    return c[static_cast<std::size_t>(k)] * factorial;
  }

  TaylorScalar operator-() const {
    TaylorScalar r;
    for (int k = 0; k <= Order; ++k) r.c[k] = -c[k];
    return r;
  }
  friend TaylorScalar operator+(const TaylorScalar& a, const TaylorScalar& b) {
    TaylorScalar r;
    for (int k = 0; k <= Order; ++k) r.c[k] = a.c[k] + b.c[k];
    return r;
  }
  friend TaylorScalar operator-(const TaylorScalar& a, const TaylorScalar& b) {
    TaylorScalar r;
    for (int k = 0; k <= Order; ++k) r.c[k] = a.c[k] - b.c[k];
    return r;
  }
  friend TaylorScalar operator*(const TaylorScalar& a, const TaylorScalar& b) {
    TaylorScalar r;
    for (int k = 0; k <= Order; ++k) {
      double s = 0.0;
      for (int j = 0; j <= k; ++j) s += a.c[j] * b.c[k - j];
      r.c[k] = s;
    }
    return r;
  }
  friend TaylorScalar operator/(const TaylorScalar& a, const TaylorScalar& b) { return a * recip(b); }

  /// g(u) for an elementary g whose derivatives at u.c[0] are g[0..Order].
  static TaylorScalar compose(const TaylorScalar& u, const std::array<double, 4>& g) {
    TaylorScalar delta = u;
    delta.c[0] = 0.0;
    TaylorScalar result(g[0]);
    TaylorScalar power(1.0);
    double factorial = 1.0;
    for (int j = 1; j <= Order; ++j) {
      power = power * delta;
      factorial *= j;
      for (int k = 0; k <= Order; ++k) result.c[k] += g[j] / factorial * power.c[k];
    }
    return result;
  }

  friend TaylorScalar exp(const TaylorScalar& u) {
    const double e = std::exp(u.c[0]);
    return compose(u, {e, e, e, e});
  }
  friend TaylorScalar log1p(const TaylorScalar& u) {
    const double inv = 1.0 / (1.0 + u.c[0]);
    return compose(u, {std::log1p(u.c[0]), inv, -inv * inv, 2.0 * inv * inv * inv});
  }
  friend TaylorScalar tanh(const TaylorScalar& u) {
    const double t = std::tanh(u.c[0]);
    const double s = 1.0 - t * t;
    return compose(u, {t, s, -2.0 * t * s, (6.0 * t * t - 2.0) * s});
  }
  friend TaylorScalar sin(const TaylorScalar& u) {
    const double s = std::sin(u.c[0]), co = std::cos(u.c[0]);
    return compose(u, {s, co, -s, -co});
  }
  friend TaylorScalar cos(const TaylorScalar& u) {
    const double s = std::sin(u.c[0]), co = std::cos(u.c[0]);
    return compose(u, {co, -s, -co, s});
  }
  friend TaylorScalar recip(const TaylorScalar& u) {
    const double inv = 1.0 / u.c[0];
    return compose(u, {inv, -inv * inv, 2.0 * inv * inv * inv, -6.0 * inv * inv * inv * inv});
  }
  friend TaylorScalar abs(const TaylorScalar& u) { return u.c[0] < 0.0 ? -u : u; }
};

/// Value plus directional derivative.
using DualValue = TaylorScalar<1>;

inline double primal(double x) { return x; }
template <int N>
double primal(const TaylorScalar<N>& x) {
  return x.primal();
}

inline double recip(double x) { return 1.0 / x; }

/// ln(1 + e^x), evaluated without overflow: identity above 20, e^x below -20.
template <class S>
S softplus(const S& x) {
  using std::exp;
  using std::log1p;
  const double p = primal(x);
  if (p > 20.0) return x;
  if (p < -20.0) return exp(x);
  return log1p(exp(x));
}

/// x * tanh(softplus(x)).
template <class S>
S mish(const S& x) {
  using std::tanh;
  return x * tanh(softplus(x));
}

/// mish and its first three derivatives at x in closed form, from one exp.
/// With e = exp(x) and n = e^2 + 2e: tanh(softplus x) = n / (n + 2) and
/// sech^2(softplus x) = 4 (1 + e)^2 / (n + 2)^2. For x >= 0 both are rewritten
/// in exp(-x) so nothing overflows and no difference cancels.
inline std::array<double, 4> mish_derivatives(double x) {
  double t, s, sig;
  if (x >= 0.0) {
    const double m = std::exp(-x);
    const double q = 1.0 + 2.0 * m * (1.0 + m);
    t = (1.0 + 2.0 * m) / q;
    const double r = (1.0 + m) * m / q;
    s = 4.0 * r * r;
    sig = 1.0 / (1.0 + m);
  } else {
    const double e = std::exp(x);
    const double n = e * (e + 2.0);
    t = n / (n + 2.0);
    const double r = (1.0 + e) / (n + 2.0);
    s = 4.0 * r * r;
    sig = e / (1.0 + e);
  }
  const double ss = s * sig;
  const double u = 1.0 - sig - 2.0 * t * sig;
  const double d1 = t + x * ss;
  const double d2 = 2.0 * ss + x * ss * u;
  const double d3 = 3.0 * ss * u + x * ss * (u * u - sig * (1.0 - sig) * (1.0 + 2.0 * t) - 2.0 * ss * sig);
  return {x * t, d1, d2, d3};
}

}  // namespace mpipn::ad
