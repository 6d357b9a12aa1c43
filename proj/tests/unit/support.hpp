#pragma once

#include <boost/math/quadrature/gauss_kronrod.hpp>
#include <cmath>
#include <complex>
#include <functional>
#include <numbers>

#include "glinv/spectral_core.hpp"

namespace glinv::test {

inline constexpr double kPi = std::numbers::pi;

inline DomainSpec unit_interval() { return DomainSpec::interval(kPi); }
inline DomainSpec unit_square() { return DomainSpec::rectangle(kPi, kPi); }

/// Adaptive Gauss-Kronrod integral of a complex integrand over [lo, hi].
inline ComplexVal integrate(const std::function<ComplexVal(double)>& f, double lo, double hi) {
  using boost::math::quadrature::gauss_kronrod;
  const auto re = [&](double s) { return f(s).real(); };
  const auto im = [&](double s) { return f(s).imag(); };
  return {gauss_kronrod<double, 61>::integrate(re, lo, hi, 15, 1e-14),
          gauss_kronrod<double, 61>::integrate(im, lo, hi, 15, 1e-14)};
}

/// Double integral over [0, lx] x [0, ly] by nested Gauss-Kronrod.
inline double integrate2(const std::function<double(double, double)>& f, double lx, double ly) {
  using boost::math::quadrature::gauss_kronrod;
  const auto outer = [&](double x) {
    return gauss_kronrod<double, 61>::integrate([&](double y) { return f(x, y); }, 0.0, ly, 10, 1e-13);
  };
  return gauss_kronrod<double, 61>::integrate(outer, 0.0, lx, 10, 1e-13);
}

}  // namespace glinv::test
