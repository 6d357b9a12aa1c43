#pragma once

#include <Eigen/Dense>
#include <array>
#include <functional>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "glinv/inverse_spectral.hpp"
#include "glinv/spectral_core.hpp"

namespace glinv {

/// Union of axis-aligned boxes inside the domain.
class Region {
 public:
  Region(int dim, std::vector<Box> boxes);

  static Region whole(const DomainSpec& domain) { return Region(domain.dim(), {domain.box()}); }

  int dim() const noexcept { return dim_; }
  const std::vector<Box>& boxes() const noexcept { return boxes_; }
  bool contains(const Point& p) const;
  bool inside(const DomainSpec& domain) const;
  double measure() const;
  /// Compact label such as `0:0.5pi|0.9pi:pi` (x-ranges joined by `x` in 2D).
  std::string label() const;

 private:
  int dim_;
  std::vector<Box> boxes_;
};

/// Data u(x, T_j) = h_j(x) at points of a subdomain, T_1 <= T_2.
struct ObservationSet {
  Region region;
  std::vector<Point> points;
  std::array<double, 2> instants{0.0, 0.0};
  std::array<std::vector<ComplexVal>, 2> values;
  NoiseSpec noise;

  void validate(const DomainSpec& domain, double T) const;
};

/// Deterministic midpoint lattice with about `per_box` points in each box.
std::vector<Point> lattice_points(const Region& region, std::size_t per_box);

/// Builds observations of `truth(x, t)` with instants sorted ascending. Noise
/// draws for the second instant use seed + 1.
ObservationSet make_observations(const Region& region, std::vector<Point> points, std::array<double, 2> instants,
                                 const std::function<ComplexVal(const Point&, double)>& truth,
                                 const NoiseSpec& noise);

/// Scaled tensor bump prod_i (1 - s_i^2)^2 on a box, unit L2 norm.
struct TestFunction {
  Box support;
  double scale = 1.0;
  int dim = 1;

  double operator()(const Point& p) const;
};

struct TestDictionary {
  std::vector<TestFunction> members;
};

/// Depth-2 dyadic bumps on every box of the region: 1 + 2^d + 4^d per box.
/// Supports are inset by 1% of the sub-box width so they lie strictly inside.
TestDictionary build_dictionary(const Region& region, int depth = 2);

/// <phi, phi_n> over the modes, integrating only over the bump's support.
CoefficientVector project_test_function(const TestFunction& phi, const std::vector<EigenMode>& modes,
                                        QuadratureSpec quad = {16, 8});

/// Phi(x) = e^{-gamma T2} h_1(x) - e^{-gamma T1} h_2(x) at the observation points.
std::vector<ComplexVal> combine_two_instants(const ObservationSet& obs, ComplexVal gamma);

/// Solution of v_t + (a+ib) Laplace v = 0, v(., terminal) = phi.
ComplexVal dual_solution(const CoefficientVector& phi, const PdeParams& params, const Point& p, double t,
                         std::optional<double> terminal = std::nullopt);

struct IdentityCheck {
  ComplexVal lhs;
  ComplexVal rhs;
  double gap = 0.0;
};

/// Compares int_Omega int_0^T g v f dt dx (space-time quadrature of the dual
/// solution) against int_{Omega_0} u(x, T) phi(x) dx (quadrature of the
/// forward series) for u0 = 0.
IdentityCheck integral_identity_check(const CoefficientVector& f, const TestFunction& phi, const PdeParams& params,
                                      double t_end, QuadratureSpec quad = {32, 8});
IdentityCheck integral_identity_check(const CoefficientVector& f, const CoefficientVector& phi,
                                      const PdeParams& params, double t_end, QuadratureSpec quad = {32, 8});

/// max over dictionary pairs of sum_j |int_Omega int_0^{T_j} g v_j f dt dx|.
double b_norm_lower_bound(const CoefficientVector& f, const TestDictionary& dict, const PdeParams& params,
                          double t1, double t2);

struct LocalReconstruction {
  CoefficientVector f;
  double mu = 0.0;
  double sigma_max = 0.0;
  double sigma_min = 0.0;
  double condition = 0.0;
};

/// Forward map coefficients -> stacked (h_1, h_2) samples.
Eigen::MatrixXcd local_forward_matrix(const ObservationSet& obs, const std::vector<EigenMode>& modes,
                                      const PdeParams& params);

/// argmin ||G c - h||^2 + mu ||c||^2 over the first n modes, via the normal
/// equations. Without `mu`, uses 1e-8 sigma_max^2 for noisy data and 1e-10
/// otherwise.
LocalReconstruction reconstruct_local_lsq(const ObservationSet& obs, const DomainSpec& domain,
                                          const PdeParams& params, std::size_t n,
                                          std::optional<double> mu = std::nullopt);

struct LocalResultRow {
  std::string region;
  double re_f = 0.0;
  double cond_g = 0.0;
};

/// `region,Re_f,condG` with `%.6g`.
void write_local_results_csv(std::ostream& out, std::span<const LocalResultRow> rows);
std::vector<LocalResultRow> read_local_results_csv(std::istream& in);

}  // namespace glinv
