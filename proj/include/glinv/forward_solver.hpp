#pragma once

#include <functional>
#include <iosfwd>
#include <vector>

#include "glinv/spectral_core.hpp"

namespace glinv {

/// Uniform space-time grid on [0, L] (x [0, L2]) x [0, T].
struct GridSpec {
  int intervals_x = 100;
  int intervals_y = 0;  // used in 2D only
  int time_steps = 100;
};

/// Complex samples indexed (time, x, y) on a uniform grid; boundary nodes
/// are exactly zero for Dirichlet solves.
class GridField {
 public:
  GridField(const DomainSpec& domain, const GridSpec& grid, double T);

  const DomainSpec& domain() const noexcept { return domain_; }
  int nx() const noexcept { return nx_; }
  int ny() const noexcept { return ny_; }
  int nt() const noexcept { return nt_; }
  double dx() const { return domain_.length(0) / (nx_ - 1); }
  double dy() const { return domain_.dim() == 2 ? domain_.length(1) / (ny_ - 1) : 1.0; }
  double dt() const { return T_ / (nt_ - 1); }
  double T() const noexcept { return T_; }

  double x(int i) const { return i * dx(); }
  double y(int j) const { return domain_.dim() == 2 ? j * dy() : 0.0; }
  double t(int k) const { return k * dt(); }
  Point point(int i, int j) const { return {x(i), y(j)}; }
  std::size_t spatial_size() const { return static_cast<std::size_t>(nx_) * ny_; }

  ComplexVal& at(int k, int i, int j = 0) { return values_[index(k, i, j)]; }
  const ComplexVal& at(int k, int i, int j = 0) const { return values_[index(k, i, j)]; }
  ComplexVal* slice(int k) { return values_.data() + static_cast<std::size_t>(k) * spatial_size(); }
  const ComplexVal* slice(int k) const { return values_.data() + static_cast<std::size_t>(k) * spatial_size(); }
  const std::vector<ComplexVal>& values() const noexcept { return values_; }

  bool is_boundary(int i, int j) const;

 private:
  std::size_t index(int k, int i, int j) const {
    return (static_cast<std::size_t>(k) * nx_ + i) * ny_ + j;
  }

  DomainSpec domain_;
  int nx_, ny_, nt_;
  double T_;
  std::vector<ComplexVal> values_;
};

/// Samples the truncated series on the grid.
GridField solve_series(const CoefficientVector& u0, const CoefficientVector& f, const PdeParams& params,
                       const GridSpec& grid);

using SpatialSamples = std::vector<ComplexVal>;  // one value per grid node, x-major
using TimeSignal = std::function<ComplexVal(double)>;

/// theta-weighted finite differences (theta = 1/2 is Crank-Nicolson) with
/// the centered second-order Laplacian and zero Dirichlet data. The 2D step
/// matrix is factorized once per run.
GridField solve_theta_scheme(const SpatialSamples& u0, const SpatialSamples& f, const TimeSignal& g,
                             const PdeParams& params, const DomainSpec& domain, const GridSpec& grid,
                             double theta = 0.5);

/// Samples a spatial function on the grid nodes (boundary included).
SpatialSamples sample_grid(const std::function<ComplexVal(const Point&)>& f, const DomainSpec& domain,
                           const GridSpec& grid);

/// Exact solution of the one-dimensional benchmark with f = sin x, u0 = 0 on [0, pi].
ComplexVal exact_reference_1d(const PdeParams& params, double x, double t);
/// Exact solution of the two-dimensional benchmark with f = sin x sin y on [0, pi]^2.
ComplexVal exact_reference_2d(const PdeParams& params, double x, double y, double t);

/// ||u - v||_{L2(Omega_T)} / ||v||_{L2(Omega_T)} with trapezoidal weights.
double relative_l2_distance(const GridField& u, const GridField& v);
/// max_t ||u(., t)||_{L2(Omega)}.
double max_spatial_l2(const GridField& u);

/// Ratio max_t ||u|| / (||u0||_{H2 surrogate} + ||g f||_{L2(Omega_T)}).
double energy_ratio(const GridField& u, double u0_h2, double source_l2);

/// Writes `x[,y],t,re,im` rows, space fastest, `%.17g` formatting.
void write_field_csv(std::ostream& out, const GridField& field);

}  // namespace glinv
