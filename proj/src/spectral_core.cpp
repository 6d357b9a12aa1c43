#include "glinv/spectral_core.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <numbers>
#include <string>

#include "glinv/error.hpp"

namespace glinv {

namespace {

constexpr double kPi = std::numbers::pi;

bool finite(ComplexVal z) { return std::isfinite(z.real()) && std::isfinite(z.imag()); }

// (e^w - 1) / w, accurate near w = 0.
ComplexVal phi1(ComplexVal w) {
  ComplexVal term = 1.0;
  ComplexVal sum = 1.0;
  for (int k = 2; k < 40; ++k) {
    term *= w / static_cast<double>(k);
    sum += term;
    if (std::abs(term) < 1e-18 * std::abs(sum)) break;
  }
  return sum;
}

EigenMode make_mode(const DomainSpec& domain, int n, int m) {
  EigenMode mode;
  mode.domain = domain;
  mode.index = {n, domain.dim() == 2 ? m : 0};
  mode.wavenumber[0] = n * kPi / domain.length(0);
  mode.eigenvalue = mode.wavenumber[0] * mode.wavenumber[0];
  mode.normalization = std::sqrt(2.0 / domain.length(0));
  if (domain.dim() == 2) {
    mode.wavenumber[1] = m * kPi / domain.length(1);
    mode.eigenvalue += mode.wavenumber[1] * mode.wavenumber[1];
    mode.normalization *= std::sqrt(2.0 / domain.length(1));
  }
  return mode;
}

// Nondecreasing eigenvalue; runs of eigenvalues equal up to rounding are
// ordered lexicographically by index.
void sort_modes(std::vector<EigenMode>& modes) {
  std::stable_sort(modes.begin(), modes.end(),
                   [](const EigenMode& a, const EigenMode& b) { return a.eigenvalue < b.eigenvalue; });
  std::size_t start = 0;
  while (start < modes.size()) {
    std::size_t end = start + 1;
    while (end < modes.size() &&
           modes[end].eigenvalue - modes[start].eigenvalue <= 1e-12 * modes[start].eigenvalue) {
      ++end;
    }
    std::sort(modes.begin() + start, modes.begin() + end,
              [](const EigenMode& a, const EigenMode& b) { return a.index < b.index; });
    start = end;
  }
}

}  // namespace

bool Box::contains(const Point& p, int dim, double tol) const {
  for (int a = 0; a < dim; ++a) {
    if (p[a] < lo[a] - tol || p[a] > hi[a] + tol) return false;
  }
  return true;
}

DomainSpec::DomainSpec(int dim, double lx, double ly) : dim_(dim), lengths_{lx, ly} {
  if (!(lx > 0.0) || !std::isfinite(lx) || !(ly > 0.0) || !std::isfinite(ly)) {
    throw InvalidInput("DomainSpec: side lengths must be finite and > 0");
  }
}

DomainSpec DomainSpec::interval(double length) { return DomainSpec(1, length, 1.0); }

DomainSpec DomainSpec::rectangle(double length_x, double length_y) { return DomainSpec(2, length_x, length_y); }

Box DomainSpec::box() const {
  return Box{{0.0, 0.0}, {lengths_[0], dim_ == 2 ? lengths_[1] : 0.0}};
}

bool DomainSpec::contains(const Point& p) const {
  return box().contains(p, dim_, 1e-12 * std::max(lengths_[0], lengths_[1]));
}

bool DomainSpec::on_boundary(const Point& p) const {
  for (int a = 0; a < dim_; ++a) {
    if (p[a] == 0.0 || p[a] == lengths_[a]) return true;
  }
  return false;
}

TensorRule::TensorRule(const Box& box, int dim, QuadratureSpec spec) : dim_(dim) {
  if (dim != 1 && dim != 2) throw InvalidInput("TensorRule: dimension must be 1 or 2");
  axes_[0] = composite_gauss_legendre(box.lo.x, box.hi.x, spec.panels, spec.order);
  if (dim == 2) axes_[1] = composite_gauss_legendre(box.lo.y, box.hi.y, spec.panels, spec.order);
}

Point TensorRule::node(std::size_t k) const {
  if (dim_ == 1) return {axes_[0].nodes[k], 0.0};
  const std::size_t ny = axes_[1].size();
  return {axes_[0].nodes[k / ny], axes_[1].nodes[k % ny]};
}

double TensorRule::weight(std::size_t k) const {
  if (dim_ == 1) return axes_[0].weights[k];
  const std::size_t ny = axes_[1].size();
  return axes_[0].weights[k / ny] * axes_[1].weights[k % ny];
}

double EigenMode::value(const Point& p) const {
  double v = normalization * std::sin(wavenumber[0] * p.x);
  if (domain.dim() == 2) v *= std::sin(wavenumber[1] * p.y);
  return v;
}

CoefficientVector CoefficientVector::zeros(std::vector<EigenMode> modes) {
  CoefficientVector c;
  c.values.assign(modes.size(), ComplexVal{});
  c.modes = std::move(modes);
  return c;
}

ComplexVal CoefficientVector::evaluate(const Point& p) const {
  ComplexVal sum{};
  for (std::size_t n = 0; n < values.size(); ++n) sum += values[n] * modes[n].value(p);
  return sum;
}

double CoefficientVector::l2_norm() const {
  double s = 0.0;
  for (const auto& c : values) s += std::norm(c);
  return std::sqrt(s);
}

double CoefficientVector::lambda2_norm() const {
  double s = 0.0;
  for (std::size_t n = 0; n < values.size(); ++n) {
    const double lam = modes[n].eigenvalue;
    s += lam * lam * std::norm(values[n]);
  }
  return std::sqrt(s);
}

void PdeParams::validate() const {
  if (!(a > 0.0)) throw InvalidInput("PdeParams: a must be > 0");
  if (b == 0.0 || !std::isfinite(b)) throw InvalidInput("PdeParams: b must be nonzero");
  if (!(T > 0.0)) throw InvalidInput("PdeParams: T must be > 0");
  if (!finite(gamma)) throw InvalidInput("PdeParams: gamma must be finite");
}

std::vector<EigenMode> enumerate_modes(const DomainSpec& domain, std::size_t n) {
  if (n == 0) throw InvalidInput("enumerate_modes: N must be >= 1");
  std::vector<EigenMode> modes;
  const int cap = static_cast<int>(n);
  if (domain.dim() == 1) {
    for (int i = 1; i <= cap; ++i) modes.push_back(make_mode(domain, i, 0));
    return modes;
  }
  // The N smallest eigenvalues have both indices <= N.
  modes.reserve(n * n);
  for (int i = 1; i <= cap; ++i)
    for (int j = 1; j <= cap; ++j) modes.push_back(make_mode(domain, i, j));
  sort_modes(modes);
  modes.resize(n);
  return modes;
}

std::vector<EigenMode> enumerate_box_modes(const DomainSpec& domain, int max_index) {
  if (max_index < 1) throw InvalidInput("enumerate_box_modes: max_index must be >= 1");
  if (domain.dim() == 1) return enumerate_modes(domain, static_cast<std::size_t>(max_index));
  std::vector<EigenMode> modes;
  for (int i = 1; i <= max_index; ++i)
    for (int j = 1; j <= max_index; ++j) modes.push_back(make_mode(domain, i, j));
  sort_modes(modes);
  return modes;
}

double eigenfunction_eval(const EigenMode& mode, const Point& p) {
  if (!mode.domain.contains(p)) throw InvalidInput("eigenfunction_eval: point outside domain");
  for (int a = 0; a < mode.domain.dim(); ++a) {
    if (p[a] <= 0.0 || p[a] >= mode.domain.length(a)) return 0.0;
  }
  return mode.value(p);
}

SampledField sample(const std::function<ComplexVal(const Point&)>& f, const TensorRule& rule) {
  SampledField field{rule, {}};
  field.values.resize(rule.size());
  for (std::size_t k = 0; k < rule.size(); ++k) field.values[k] = f(rule.node(k));
  return field;
}

CoefficientVector project(const SampledField& field, const std::vector<EigenMode>& modes) {
  const TensorRule& rule = field.rule;
  if (field.values.size() != rule.size()) throw InvalidInput("project: sample count does not match rule");
  for (const auto& v : field.values) {
    if (!finite(v)) throw InvalidInput("project: non-finite sample");
  }
  CoefficientVector out = CoefficientVector::zeros(modes);
  if (modes.empty()) return out;
  const AxisRule& ax = rule.axis(0);
  const std::size_t nx = ax.size();

  auto sine_table = [](const AxisRule& axis, double k) {
    std::vector<double> t(axis.size());
    for (std::size_t i = 0; i < axis.size(); ++i) t[i] = std::sin(k * axis.nodes[i]) * axis.weights[i];
    return t;
  };

  if (rule.dim() == 1) {
    for (std::size_t n = 0; n < modes.size(); ++n) {
      const auto sx = sine_table(ax, modes[n].wavenumber[0]);
      ComplexVal s{};
      for (std::size_t i = 0; i < nx; ++i) s += sx[i] * field.values[i];
      out.values[n] = modes[n].normalization * s;
    }
    return out;
  }

  const AxisRule& ay = rule.axis(1);
  const std::size_t ny = ay.size();
  // inner[m][i] = sum_j w_j h_ij sin(k_m y_j), cached per distinct y index.
  std::map<int, std::vector<ComplexVal>> inner;
  std::map<int, std::vector<double>> xtables;
  for (const auto& mode : modes) {
    const int m = mode.index[1];
    if (!inner.count(m)) {
      const auto sy = sine_table(ay, mode.wavenumber[1]);
      std::vector<ComplexVal> acc(nx);
      for (std::size_t i = 0; i < nx; ++i) {
        ComplexVal s{};
        const ComplexVal* row = field.values.data() + i * ny;
        for (std::size_t j = 0; j < ny; ++j) s += sy[j] * row[j];
        acc[i] = s;
      }
      inner.emplace(m, std::move(acc));
    }
    if (!xtables.count(mode.index[0])) xtables.emplace(mode.index[0], sine_table(ax, mode.wavenumber[0]));
  }
  for (std::size_t n = 0; n < modes.size(); ++n) {
    const auto& sx = xtables.at(modes[n].index[0]);
    const auto& in = inner.at(modes[n].index[1]);
    ComplexVal s{};
    for (std::size_t i = 0; i < nx; ++i) s += sx[i] * in[i];
    out.values[n] = modes[n].normalization * s;
  }
  return out;
}

CoefficientVector project(const std::function<ComplexVal(const Point&)>& f, const DomainSpec& domain,
                          std::size_t n, QuadratureSpec quad) {
  const TensorRule rule(domain.box(), domain.dim(), quad);
  return project(sample(f, rule), enumerate_modes(domain, n));
}

ComplexVal time_kernel(const PdeParams& params, double lambda, double t) {
  if (t == 0.0) return 0.0;
  const ComplexVal z = params.diffusion() * lambda;
  const ComplexVal delta = z - params.gamma;
  if (std::abs(delta) <= kDegenerateTolerance) return t * std::exp(-z * t);
  const ComplexVal w = -delta * t;
  if (std::abs(w) < 1.0) {
    // e^{-gamma t} (1 - e^{-delta t}) / delta without cancellation.
    return std::exp(-params.gamma * t) * t * phi1(w);
  }
  return (std::exp(-params.gamma * t) - std::exp(-z * t)) / delta;
}

ResonanceReport resonance_check(const PdeParams& params, const std::vector<EigenMode>& modes, long k_range,
                                double tol) {
  if (modes.empty()) throw InvalidInput("resonance_check: empty mode list");
  if (k_range < 0) throw InvalidInput("resonance_check: k_range must be >= 0");
  ResonanceReport report;
  report.min_distance = std::numeric_limits<double>::infinity();
  for (std::size_t n = 0; n < modes.size(); ++n) {
    const double lam = modes[n].eigenvalue;
    // Nearest admissible k to the imaginary part of gamma.
    const double kstar = params.T * (params.b * lam - params.gamma.imag()) / (2.0 * kPi);
    const long k = std::clamp(std::lround(kstar), -k_range, k_range);
    const ComplexVal member{params.a * lam, params.b * lam - 2.0 * kPi * static_cast<double>(k) / params.T};
    const double dist = std::abs(params.gamma - member);
    if (dist < report.min_distance) {
      report.min_distance = dist;
      report.offender = ResonanceOffender{n, k, dist};
    }
  }
  report.ok = report.min_distance > tol;
  if (report.ok) report.offender.reset();
  return report;
}

long resonance_k_range(const PdeParams& params, const std::vector<EigenMode>& modes) {
  long k = 0;
  for (const auto& m : modes) {
    const double kstar = params.T * (params.b * m.eigenvalue - params.gamma.imag()) / (2.0 * kPi);
    k = std::max(k, std::abs(std::lround(kstar)) + 1);
  }
  return k;
}

ComplexVal series_eval(const CoefficientVector& u0, const CoefficientVector& f, const PdeParams& params,
                       const Point& p, double t) {
  if (u0.size() != 0 && f.size() != 0 && u0.modes != f.modes) {
    throw InvalidInput("series_eval: truncation mismatch between u0 and f");
  }
  const ComplexVal z = params.diffusion();
  ComplexVal sum{};
  for (std::size_t n = 0; n < u0.size(); ++n) {
    const double lam = u0.modes[n].eigenvalue;
    sum += u0.values[n] * std::exp(-z * lam * t) * u0.modes[n].value(p);
  }
  for (std::size_t n = 0; n < f.size(); ++n) {
    sum += f.values[n] * time_kernel(params, f.modes[n].eigenvalue, t) * f.modes[n].value(p);
  }
  return sum;
}

}  // namespace glinv
