#pragma once

#include <array>
#include <complex>
#include <cstddef>
#include <functional>
#include <optional>
#include <vector>

#include "glinv/quadrature.hpp"

namespace glinv {

using ComplexVal = std::complex<double>;

/// A point of the spatial domain. `y` is ignored in one dimension.
struct Point {
  double x = 0.0;
  double y = 0.0;

  double operator[](int axis) const { return axis == 0 ? x : y; }
  double& operator[](int axis) { return axis == 0 ? x : y; }
  friend bool operator==(const Point&, const Point&) = default;
};

/// Axis-aligned box [lo, hi] (interval in 1D).
struct Box {
  Point lo;
  Point hi;

  double width(int axis) const { return hi[axis] - lo[axis]; }
  double measure(int dim) const { return dim == 1 ? width(0) : width(0) * width(1); }
  bool contains(const Point& p, int dim, double tol = 0.0) const;
};

/// The interval [0, L1] or the rectangle [0, L1] x [0, L2].
class DomainSpec {
 public:
  static DomainSpec interval(double length);
  static DomainSpec rectangle(double length_x, double length_y);

  int dim() const noexcept { return dim_; }
  double length(int axis) const { return lengths_[axis]; }
  Box box() const;
  bool contains(const Point& p) const;
  bool on_boundary(const Point& p) const;
  double measure() const { return box().measure(dim_); }

  friend bool operator==(const DomainSpec&, const DomainSpec&) = default;

 private:
  DomainSpec(int dim, double lx, double ly);

  int dim_ = 1;
  std::array<double, 2> lengths_{1.0, 1.0};
};

/// Tensor-product composite Gauss-Legendre rule over a box. Node k maps to
/// (i, j) with k = i * ny + j, so the x index varies slowest.
class TensorRule {
 public:
  TensorRule(const Box& box, int dim, QuadratureSpec spec = {});

  int dim() const noexcept { return dim_; }
  std::size_t size() const noexcept { return axes_[0].size() * (dim_ == 2 ? axes_[1].size() : 1); }
  Point node(std::size_t k) const;
  double weight(std::size_t k) const;
  const AxisRule& axis(int a) const { return axes_[a]; }

 private:
  int dim_;
  std::array<AxisRule, 2> axes_;
};

/// Dirichlet eigenpair of -Laplace on a DomainSpec.
struct EigenMode {
  std::array<int, 2> index{1, 1};
  std::array<double, 2> wavenumber{0.0, 0.0};  // n_i * pi / L_i
  double eigenvalue = 0.0;
  double normalization = 0.0;
  DomainSpec domain = DomainSpec::interval(1.0);

  /// Product-of-sines value without the domain check.
  double value(const Point& p) const;

  friend bool operator==(const EigenMode& a, const EigenMode& b) {
    return a.index == b.index && a.domain == b.domain;
  }
};

/// Truncated eigen-expansion: values[n] multiplies modes[n].
struct CoefficientVector {
  std::vector<EigenMode> modes;
  std::vector<ComplexVal> values;

  std::size_t size() const noexcept { return values.size(); }
  /// Zero coefficients over the given modes.
  static CoefficientVector zeros(std::vector<EigenMode> modes);
  ComplexVal evaluate(const Point& p) const;
  /// L2 norm (orthonormal basis).
  double l2_norm() const;
  /// (sum lambda_n^2 |c_n|^2)^{1/2}, equal to ||Laplace f||_{L2} for Dirichlet data.
  double lambda2_norm() const;
};

/// Parameters of u_t - (a + ib) Laplace u = exp(-gamma t) f(x).
struct PdeParams {
  double a = 1.0;
  double b = 1.0;
  ComplexVal gamma{1.0, 0.0};
  double T = 1.0;

  ComplexVal diffusion() const { return {a, b}; }
  void validate() const;
};

/// Threshold on |(a+ib)lambda - gamma| that selects the confluent kernel branch.
inline constexpr double kDegenerateTolerance = 1e-12;

/// First N modes in nondecreasing eigenvalue order, lexicographic index on ties.
std::vector<EigenMode> enumerate_modes(const DomainSpec& domain, std::size_t n);

/// All modes with every index <= max_index, in enumeration order.
std::vector<EigenMode> enumerate_box_modes(const DomainSpec& domain, int max_index);

/// Eigenfunction value; throws InvalidInput outside the closed domain.
double eigenfunction_eval(const EigenMode& mode, const Point& p);

/// Field values sampled on the nodes of a TensorRule.
struct SampledField {
  TensorRule rule;
  std::vector<ComplexVal> values;
};

SampledField sample(const std::function<ComplexVal(const Point&)>& f, const TensorRule& rule);

/// c_n = sum_k w_k h_k phi_n(x_k). Throws on non-finite samples.
CoefficientVector project(const SampledField& field, const std::vector<EigenMode>& modes);

CoefficientVector project(const std::function<ComplexVal(const Point&)>& f, const DomainSpec& domain,
                          std::size_t n, QuadratureSpec quad = {});

/// I(t) = int_0^t exp(-(a+ib) lambda (t - s)) exp(-gamma s) ds in closed form.
ComplexVal time_kernel(const PdeParams& params, double lambda, double t);

struct ResonanceOffender {
  std::size_t mode_position = 0;
  long k = 0;
  double distance = 0.0;
};

struct ResonanceReport {
  bool ok = true;
  /// Nearest member of the resonance set (reported when !ok).
  std::optional<ResonanceOffender> offender;
  double min_distance = 0.0;
};

/// Distance of gamma from { a lambda_n + i (b lambda_n - 2 k pi / T) : |k| <= k_range }.
ResonanceReport resonance_check(const PdeParams& params, const std::vector<EigenMode>& modes, long k_range,
                                double tol);

/// Smallest k_range that covers the nearest resonance candidate of every mode.
long resonance_k_range(const PdeParams& params, const std::vector<EigenMode>& modes);

/// u(x, t) = sum u0_n e^{-(a+ib) lambda_n t} phi_n(x) + sum f_n I_n(t) phi_n(x).
ComplexVal series_eval(const CoefficientVector& u0, const CoefficientVector& f, const PdeParams& params,
                       const Point& p, double t);

}  // namespace glinv
