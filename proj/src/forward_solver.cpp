#include "glinv/forward_solver.hpp"

#include <Eigen/Sparse>
#include <Eigen/SparseLU>
#include <cmath>
#include <cstdio>
#include <ostream>

#include "glinv/error.hpp"

namespace glinv {

GridField::GridField(const DomainSpec& domain, const GridSpec& grid, double T)
    : domain_(domain),
      nx_(grid.intervals_x + 1),
      ny_(domain.dim() == 2 ? grid.intervals_y + 1 : 1),
      nt_(grid.time_steps + 1),
      T_(T) {
  if (grid.intervals_x < 2 || (domain.dim() == 2 && grid.intervals_y < 2)) {
    throw InvalidInput("GridSpec: need at least 2 intervals per axis");
  }
  if (grid.time_steps < 1) throw InvalidInput("GridSpec: need at least one time step");
  if (!(T > 0.0)) throw InvalidInput("GridField: T must be > 0");
  values_.assign(static_cast<std::size_t>(nt_) * spatial_size(), ComplexVal{});
}

bool GridField::is_boundary(int i, int j) const {
  if (i == 0 || i == nx_ - 1) return true;
  return domain_.dim() == 2 && (j == 0 || j == ny_ - 1);
}

GridField solve_series(const CoefficientVector& u0, const CoefficientVector& f, const PdeParams& params,
                       const GridSpec& grid) {
  params.validate();
  const CoefficientVector& ref = f.size() != 0 ? f : u0;
  if (ref.size() == 0) throw InvalidInput("solve_series: empty coefficient vectors");
  if (u0.size() != 0 && f.size() != 0 && u0.modes != f.modes) {
    throw InvalidInput("solve_series: truncation mismatch between u0 and f");
  }
  const DomainSpec& domain = ref.modes.front().domain;
  GridField field(domain, grid, params.T);
  const auto& modes = ref.modes;
  const std::size_t nmodes = modes.size();
  const std::size_t ns = field.spatial_size();

  // basis[n * ns + s] = phi_n at spatial node s (zero on the boundary).
  std::vector<double> basis(nmodes * ns, 0.0);
  for (std::size_t n = 0; n < nmodes; ++n) {
    for (int i = 0; i < field.nx(); ++i) {
      for (int j = 0; j < field.ny(); ++j) {
        if (field.is_boundary(i, j)) continue;
        basis[n * ns + static_cast<std::size_t>(i) * field.ny() + j] = modes[n].value(field.point(i, j));
      }
    }
  }

  const ComplexVal z = params.diffusion();
  std::vector<ComplexVal> coeff(nmodes);
  for (int k = 0; k < field.nt(); ++k) {
    const double t = field.t(k);
    for (std::size_t n = 0; n < nmodes; ++n) {
      ComplexVal c{};
      if (u0.size() != 0) c += u0.values[n] * std::exp(-z * modes[n].eigenvalue * t);
      if (f.size() != 0) c += f.values[n] * time_kernel(params, modes[n].eigenvalue, t);
      coeff[n] = c;
    }
    ComplexVal* out = field.slice(k);
    for (std::size_t n = 0; n < nmodes; ++n) {
      const double* row = basis.data() + n * ns;
      for (std::size_t s = 0; s < ns; ++s) out[s] += coeff[n] * row[s];
    }
  }
  return field;
}

SpatialSamples sample_grid(const std::function<ComplexVal(const Point&)>& f, const DomainSpec& domain,
                           const GridSpec& grid) {
  GridField shape(domain, GridSpec{grid.intervals_x, grid.intervals_y, 1}, 1.0);
  SpatialSamples s(shape.spatial_size());
  for (int i = 0; i < shape.nx(); ++i)
    for (int j = 0; j < shape.ny(); ++j) s[static_cast<std::size_t>(i) * shape.ny() + j] = f(shape.point(i, j));
  return s;
}

namespace {

void solve_theta_1d(GridField& field, const SpatialSamples& f, const TimeSignal& g, ComplexVal z, double theta) {
  const int m = field.nx() - 2;  // interior unknowns
  const double dt = field.dt();
  const double r = dt / (field.dx() * field.dx());
  const ComplexVal off = -theta * r * z;
  const ComplexVal diag = 1.0 + 2.0 * theta * r * z;

  // Thomas factorization of the constant tridiagonal step matrix.
  std::vector<ComplexVal> cprime(m), denom(m);
  for (int i = 0; i < m; ++i) {
    denom[i] = diag - (i > 0 ? off * cprime[i - 1] : ComplexVal{});
    if (std::abs(denom[i]) == 0.0) throw NumericalError("solve_theta_scheme: singular step matrix");
    cprime[i] = off / denom[i];
  }

  const ComplexVal er = (1.0 - theta) * r * z;
  std::vector<ComplexVal> rhs(m);
  for (int k = 0; k + 1 < field.nt(); ++k) {
    const ComplexVal* u = field.slice(k);
    ComplexVal* next = field.slice(k + 1);
    const ComplexVal gmix = dt * (theta * g(field.t(k + 1)) + (1.0 - theta) * g(field.t(k)));
    for (int i = 1; i <= m; ++i) {
      rhs[i - 1] = u[i] + er * (u[i - 1] - 2.0 * u[i] + u[i + 1]) + gmix * f[i];
    }
    // forward sweep, back substitution
    rhs[0] /= denom[0];
    for (int i = 1; i < m; ++i) rhs[i] = (rhs[i] - off * rhs[i - 1]) / denom[i];
    for (int i = m - 2; i >= 0; --i) rhs[i] -= cprime[i] * rhs[i + 1];
    next[0] = 0.0;
    next[m + 1] = 0.0;
    for (int i = 1; i <= m; ++i) next[i] = rhs[i - 1];
  }
}

void solve_theta_2d(GridField& field, const SpatialSamples& f, const TimeSignal& g, ComplexVal z, double theta) {
  using SpMat = Eigen::SparseMatrix<ComplexVal>;
  const int mx = field.nx() - 2, my = field.ny() - 2;
  const int n = mx * my;
  const double dt = field.dt();
  const double rx = dt / (field.dx() * field.dx());
  const double ry = dt / (field.dy() * field.dy());
  auto unknown = [my](int i, int j) { return (i - 1) * my + (j - 1); };

  std::vector<Eigen::Triplet<ComplexVal>> trip;
  trip.reserve(static_cast<std::size_t>(n) * 5);
  for (int i = 1; i <= mx; ++i) {
    for (int j = 1; j <= my; ++j) {
      const int row = unknown(i, j);
      trip.emplace_back(row, row, 1.0 + 2.0 * theta * (rx + ry) * z);
      if (i > 1) trip.emplace_back(row, unknown(i - 1, j), -theta * rx * z);
      if (i < mx) trip.emplace_back(row, unknown(i + 1, j), -theta * rx * z);
      if (j > 1) trip.emplace_back(row, unknown(i, j - 1), -theta * ry * z);
      if (j < my) trip.emplace_back(row, unknown(i, j + 1), -theta * ry * z);
    }
  }
  SpMat lhs(n, n);
  lhs.setFromTriplets(trip.begin(), trip.end());
  lhs.makeCompressed();
  Eigen::SparseLU<SpMat> lu;
  lu.compute(lhs);
  if (lu.info() != Eigen::Success) throw NumericalError("solve_theta_scheme: singular step matrix");

  const int ny = field.ny();
  Eigen::VectorXcd rhs(n);
  const ComplexVal ex = (1.0 - theta) * rx * z, ey = (1.0 - theta) * ry * z;
  for (int k = 0; k + 1 < field.nt(); ++k) {
    const ComplexVal* u = field.slice(k);
    ComplexVal* next = field.slice(k + 1);
    const ComplexVal gmix = dt * (theta * g(field.t(k + 1)) + (1.0 - theta) * g(field.t(k)));
    for (int i = 1; i <= mx; ++i) {
      for (int j = 1; j <= my; ++j) {
        const std::size_t c = static_cast<std::size_t>(i) * ny + j;
        const ComplexVal lapx = u[c - ny] - 2.0 * u[c] + u[c + ny];
        const ComplexVal lapy = u[c - 1] - 2.0 * u[c] + u[c + 1];
        rhs[unknown(i, j)] = u[c] + ex * lapx + ey * lapy + gmix * f[c];
      }
    }
    const Eigen::VectorXcd sol = lu.solve(rhs);
    std::fill(next, next + field.spatial_size(), ComplexVal{});
    for (int i = 1; i <= mx; ++i)
      for (int j = 1; j <= my; ++j) next[static_cast<std::size_t>(i) * ny + j] = sol[unknown(i, j)];
  }
}

}  // namespace

GridField solve_theta_scheme(const SpatialSamples& u0, const SpatialSamples& f, const TimeSignal& g,
                             const PdeParams& params, const DomainSpec& domain, const GridSpec& grid,
                             double theta) {
  params.validate();
  if (!(theta >= 0.0 && theta <= 1.0)) throw InvalidInput("solve_theta_scheme: theta must lie in [0, 1]");
  GridField field(domain, grid, params.T);
  if (u0.size() != field.spatial_size() || f.size() != field.spatial_size()) {
    throw InvalidInput("solve_theta_scheme: sample count does not match grid");
  }
  ComplexVal* first = field.slice(0);
  for (int i = 0; i < field.nx(); ++i) {
    for (int j = 0; j < field.ny(); ++j) {
      const std::size_t s = static_cast<std::size_t>(i) * field.ny() + j;
      first[s] = field.is_boundary(i, j) ? ComplexVal{} : u0[s];
    }
  }
  if (domain.dim() == 1) {
    solve_theta_1d(field, f, g, params.diffusion(), theta);
  } else {
    solve_theta_2d(field, f, g, params.diffusion(), theta);
  }
  return field;
}

ComplexVal exact_reference_1d(const PdeParams& params, double x, double t) {
  const ComplexVal z = params.diffusion();
  const ComplexVal denom = z - params.gamma;
  if (std::abs(denom) < 1e-12) throw InvalidInput("exact_reference_1d: a + ib - gamma vanishes");
  return std::sin(x) / denom * (std::exp(-params.gamma * t) - std::exp(-z * t));
}

ComplexVal exact_reference_2d(const PdeParams& params, double x, double y, double t) {
  const ComplexVal z = params.diffusion();
  const ComplexVal denom = 2.0 * z - params.gamma;
  if (std::abs(denom) < 1e-12) throw InvalidInput("exact_reference_2d: 2(a + ib) - gamma vanishes");
  return std::sin(x) * std::sin(y) / denom * (std::exp(-params.gamma * t) - std::exp(-2.0 * z * t));
}

namespace {

// Trapezoidal weight of node i out of n (unit spacing).
double trap(int i, int n) { return (i == 0 || i == n - 1) ? 0.5 : 1.0; }

double spatial_l2_sq(const GridField& u, int k, const GridField* minus = nullptr) {
  double s = 0.0;
  for (int i = 0; i < u.nx(); ++i) {
    for (int j = 0; j < u.ny(); ++j) {
      ComplexVal v = u.at(k, i, j);
      if (minus) v -= minus->at(k, i, j);
      double w = trap(i, u.nx()) * u.dx();
      if (u.domain().dim() == 2) w *= trap(j, u.ny()) * u.dy();
      s += w * std::norm(v);
    }
  }
  return s;
}

}  // namespace

double relative_l2_distance(const GridField& u, const GridField& v) {
  if (u.nx() != v.nx() || u.ny() != v.ny() || u.nt() != v.nt()) {
    throw InvalidInput("relative_l2_distance: grid mismatch");
  }
  double num = 0.0, den = 0.0;
  for (int k = 0; k < u.nt(); ++k) {
    const double w = trap(k, u.nt()) * u.dt();
    num += w * spatial_l2_sq(u, k, &v);
    den += w * spatial_l2_sq(v, k);
  }
  if (den == 0.0) throw InvalidInput("relative_l2_distance: reference has zero norm");
  return std::sqrt(num / den);
}

double max_spatial_l2(const GridField& u) {
  double m = 0.0;
  for (int k = 0; k < u.nt(); ++k) m = std::max(m, spatial_l2_sq(u, k));
  return std::sqrt(m);
}

double energy_ratio(const GridField& u, double u0_h2, double source_l2) {
  const double denom = u0_h2 + source_l2;
  if (denom == 0.0) return 0.0;
  return max_spatial_l2(u) / denom;
}

void write_field_csv(std::ostream& out, const GridField& field) {
  const bool two_d = field.domain().dim() == 2;
  out << (two_d ? "x,y,t,re,im\n" : "x,t,re,im\n");
  char buf[160];
  for (int k = 0; k < field.nt(); ++k) {
    for (int i = 0; i < field.nx(); ++i) {
      for (int j = 0; j < field.ny(); ++j) {
        const ComplexVal v = field.at(k, i, j);
        if (two_d) {
          std::snprintf(buf, sizeof buf, "%.17g,%.17g,%.17g,%.17g,%.17g\n", field.x(i), field.y(j), field.t(k),
                        v.real(), v.imag());
        } else {
          std::snprintf(buf, sizeof buf, "%.17g,%.17g,%.17g,%.17g\n", field.x(i), field.t(k), v.real(), v.imag());
        }
        out << buf;
      }
    }
  }
}

}  // namespace glinv
