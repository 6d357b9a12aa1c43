#pragma once

// Forward-mode second-order ("hyper-dual") arithmetic along one seeded
// direction. A value carries (f, f', f'') with respect to a single real
// coordinate; d+1 passes give the Laplacian and the time derivative.

#include <array>
#include <cmath>
#include <complex>
#include <span>
#include <vector>

#include "glinv/error.hpp"
#include "glinv/spectral_core.hpp"

namespace glinv {

template <class T>
struct HyperDual {
  T value{};
  T d1{};
  T d2{};

  HyperDual() = default;
  HyperDual(T v) : value(v) {}  // NOLINT: constants promote implicitly
  HyperDual(T v, T first, T second) : value(v), d1(first), d2(second) {}

  HyperDual& operator+=(const HyperDual& o) {
    value += o.value;
    d1 += o.d1;
    d2 += o.d2;
    return *this;
  }
  HyperDual& operator-=(const HyperDual& o) {
    value -= o.value;
    d1 -= o.d1;
    d2 -= o.d2;
    return *this;
  }
  HyperDual& operator*=(const HyperDual& o) { return *this = *this * o; }

  friend HyperDual operator+(HyperDual a, const HyperDual& b) { return a += b; }
  friend HyperDual operator-(HyperDual a, const HyperDual& b) { return a -= b; }
  friend HyperDual operator-(const HyperDual& a) { return {-a.value, -a.d1, -a.d2}; }

  friend HyperDual operator*(const HyperDual& u, const HyperDual& v) {
    return {u.value * v.value, u.d1 * v.value + u.value * v.d1,
            u.d2 * v.value + T(2) * u.d1 * v.d1 + u.value * v.d2};
  }

  friend HyperDual operator/(const HyperDual& u, const HyperDual& v) {
    if (v.value == T(0)) throw InvalidInput("HyperDual: division by zero value");
    // u * (1/v) with (1/v)' = -v'/v^2, (1/v)'' = 2 v'^2 / v^3 - v'' / v^2
    const T inv = T(1) / v.value;
    const T inv2 = inv * inv;
    const HyperDual r{inv, -v.d1 * inv2, T(2) * v.d1 * v.d1 * inv2 * inv - v.d2 * inv2};
    return u * r;
  }
};

/// Applies a scalar function given its value and first two derivatives at x.
template <class T>
HyperDual<T> chain(const HyperDual<T>& x, T f, T df, T ddf) {
  return {f, df * x.d1, ddf * x.d1 * x.d1 + df * x.d2};
}

template <class T>
HyperDual<T> seed(T value, bool active) {
  return {value, active ? T(1) : T(0), T(0)};
}

template <class T>
HyperDual<T> exp(const HyperDual<T>& x) {
  using std::exp;
  const T e = exp(x.value);
  return chain(x, e, e, e);
}

template <class T>
HyperDual<T> tanh(const HyperDual<T>& x) {
  using std::tanh;
  const T th = tanh(x.value);
  const T sech2 = T(1) - th * th;
  return chain(x, th, sech2, T(-2) * th * sech2);
}

/// sigma(x) = x tanh(x), composed from the primitives.
template <class T>
HyperDual<T> sigma(const HyperDual<T>& x) {
  return x * tanh(x);
}

inline double sigma(double x) { return x * std::tanh(x); }

inline HyperDual<double> real_part(const HyperDual<ComplexVal>& z) {
  return {z.value.real(), z.d1.real(), z.d2.real()};
}
inline HyperDual<double> imag_part(const HyperDual<ComplexVal>& z) {
  return {z.value.imag(), z.d1.imag(), z.d2.imag()};
}
inline HyperDual<ComplexVal> make_complex(const HyperDual<double>& re, const HyperDual<double>& im) {
  return {{re.value, im.value}, {re.d1, im.d1}, {re.d2, im.d2}};
}

/// u, du/dt and the spatial Laplacian at (p, t).
struct SpaceTimeDerivatives {
  ComplexVal u;
  ComplexVal u_t;
  ComplexVal laplacian;
};

/// `eval` maps inputs (x[, y], t) to a HyperDual<ComplexVal>; one pass per
/// spatial axis plus one for time.
template <class Evaluator>
SpaceTimeDerivatives laplacian_and_time(Evaluator&& eval, const Point& p, double t, int dim) {
  using HD = HyperDual<ComplexVal>;
  SpaceTimeDerivatives out;
  std::array<HD, 3> in;
  const int n_in = dim + 1;
  auto load = [&](int active) {
    for (int a = 0; a < dim; ++a) in[a] = seed(ComplexVal(p[a]), a == active);
    in[dim] = seed(ComplexVal(t), dim == active);
  };
  for (int a = 0; a < dim; ++a) {
    load(a);
    const HD r = eval(std::span<const HD>(in.data(), n_in));
    out.u = r.value;
    out.laplacian += r.d2;
  }
  load(dim);
  out.u_t = eval(std::span<const HD>(in.data(), n_in)).d1;
  return out;
}

}  // namespace glinv
