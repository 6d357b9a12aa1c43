#include "glinv/inverse_local.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <istream>
#include <limits>
#include <numbers>
#include <ostream>
#include <sstream>

#include "glinv/error.hpp"

namespace glinv {

namespace {

constexpr double kPi = std::numbers::pi;
// int_{-1}^{1} (1 - s^2)^4 ds
constexpr double kBumpSquareIntegral = 256.0 / 315.0;

std::string pi_multiple(double v) {
  if (v == 0.0) return "0";
  const double r = v / kPi;
  if (std::abs(r - 1.0) < 1e-12) return "pi";
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.6gpi", r);
  return buf;
}

}  // namespace

Region::Region(int dim, std::vector<Box> boxes) : dim_(dim), boxes_(std::move(boxes)) {
  if (dim != 1 && dim != 2) throw InvalidInput("Region: dimension must be 1 or 2");
  if (boxes_.empty()) throw InvalidInput("Region: needs at least one box");
  for (const auto& b : boxes_) {
    for (int a = 0; a < dim; ++a) {
      if (!(b.hi[a] > b.lo[a])) throw InvalidInput("Region: empty box");
    }
  }
}

bool Region::contains(const Point& p) const {
  return std::any_of(boxes_.begin(), boxes_.end(), [&](const Box& b) { return b.contains(p, dim_, 1e-12); });
}

bool Region::inside(const DomainSpec& domain) const {
  if (domain.dim() != dim_) return false;
  const Box outer = domain.box();
  return std::all_of(boxes_.begin(), boxes_.end(), [&](const Box& b) {
    return outer.contains(b.lo, dim_, 1e-12) && outer.contains(b.hi, dim_, 1e-12);
  });
}

double Region::measure() const {
  double m = 0.0;
  for (const auto& b : boxes_) m += b.measure(dim_);
  return m;
}

std::string Region::label() const {
  std::string out;
  for (std::size_t i = 0; i < boxes_.size(); ++i) {
    if (i) out += "|";
    const Box& b = boxes_[i];
    out += pi_multiple(b.lo.x) + ":" + pi_multiple(b.hi.x);
    if (dim_ == 2) out += "x" + pi_multiple(b.lo.y) + ":" + pi_multiple(b.hi.y);
  }
  return out;
}

void ObservationSet::validate(const DomainSpec& domain, double T) const {
  if (!region.inside(domain)) throw InvalidInput("ObservationSet: region not contained in the domain");
  if (!(instants[0] > 0.0 && instants[0] <= instants[1] && instants[1] <= T)) {
    throw InvalidInput("ObservationSet: need 0 < T1 <= T2 <= T");
  }
  for (const auto& p : points) {
    if (!region.contains(p)) throw InvalidInput("ObservationSet: point outside the observation region");
  }
  for (const auto& v : values) {
    if (v.size() != points.size()) throw InvalidInput("ObservationSet: value count does not match points");
  }
}

std::vector<Point> lattice_points(const Region& region, std::size_t per_box) {
  if (per_box == 0) throw InvalidInput("lattice_points: per_box must be >= 1");
  std::vector<Point> pts;
  for (const auto& b : region.boxes()) {
    if (region.dim() == 1) {
      for (std::size_t i = 0; i < per_box; ++i) {
        pts.push_back({b.lo.x + b.width(0) * (i + 0.5) / per_box, 0.0});
      }
    } else {
      const auto k = static_cast<std::size_t>(std::max(1.0, std::round(std::sqrt(double(per_box)))));
      for (std::size_t i = 0; i < k; ++i)
        for (std::size_t j = 0; j < k; ++j)
          pts.push_back({b.lo.x + b.width(0) * (i + 0.5) / k, b.lo.y + b.width(1) * (j + 0.5) / k});
    }
  }
  return pts;
}

ObservationSet make_observations(const Region& region, std::vector<Point> points, std::array<double, 2> instants,
                                 const std::function<ComplexVal(const Point&, double)>& truth,
                                 const NoiseSpec& noise) {
  std::sort(instants.begin(), instants.end());
  ObservationSet obs{region, std::move(points), instants, {}, noise};
  for (int j = 0; j < 2; ++j) {
    std::vector<ComplexVal> clean(obs.points.size());
    for (std::size_t k = 0; k < obs.points.size(); ++k) clean[k] = truth(obs.points[k], instants[j]);
    obs.values[j] = add_noise(clean, NoiseSpec{noise.delta, noise.seed + static_cast<std::uint64_t>(j)});
  }
  return obs;
}

double TestFunction::operator()(const Point& p) const {
  double v = scale;
  for (int a = 0; a < dim; ++a) {
    if (p[a] <= support.lo[a] || p[a] >= support.hi[a]) return 0.0;
    const double s = 2.0 * (p[a] - support.lo[a]) / support.width(a) - 1.0;
    const double q = 1.0 - s * s;
    v *= q * q;
  }
  return v;
}

TestDictionary build_dictionary(const Region& region, int depth) {
  if (depth < 0) throw InvalidInput("build_dictionary: depth must be >= 0");
  TestDictionary dict;
  const int dim = region.dim();
  for (const auto& box : region.boxes()) {
    for (int level = 0; level <= depth; ++level) {
      const int parts = 1 << level;
      const int ny = dim == 2 ? parts : 1;
      for (int i = 0; i < parts; ++i) {
        for (int j = 0; j < ny; ++j) {
          Box sub;
          const std::array<int, 2> cell{i, j};
          for (int a = 0; a < dim; ++a) {
            const double w = box.width(a) / parts;
            const double lo = box.lo[a] + cell[a] * w;
            sub.lo[a] = lo + 0.01 * w;
            sub.hi[a] = lo + w - 0.01 * w;
          }
          double sq = 1.0;
          for (int a = 0; a < dim; ++a) sq *= 0.5 * sub.width(a) * kBumpSquareIntegral;
          dict.members.push_back(TestFunction{sub, 1.0 / std::sqrt(sq), dim});
        }
      }
    }
  }
  return dict;
}

CoefficientVector project_test_function(const TestFunction& phi, const std::vector<EigenMode>& modes,
                                        QuadratureSpec quad) {
  const TensorRule rule(phi.support, phi.dim, quad);
  return project(sample([&](const Point& p) { return ComplexVal(phi(p)); }, rule), modes);
}

std::vector<ComplexVal> combine_two_instants(const ObservationSet& obs, ComplexVal gamma) {
  const ComplexVal e1 = std::exp(-gamma * obs.instants[0]);
  const ComplexVal e2 = std::exp(-gamma * obs.instants[1]);
  std::vector<ComplexVal> phi(obs.points.size());
  for (std::size_t k = 0; k < phi.size(); ++k) phi[k] = e2 * obs.values[0][k] - e1 * obs.values[1][k];
  return phi;
}

ComplexVal dual_solution(const CoefficientVector& phi, const PdeParams& params, const Point& p, double t,
                         std::optional<double> terminal) {
  const double t_term = terminal.value_or(params.T);
  const ComplexVal z = params.diffusion();
  ComplexVal v{};
  for (std::size_t n = 0; n < phi.size(); ++n) {
    v += phi.values[n] * std::exp(-z * phi.modes[n].eigenvalue * (t_term - t)) * phi.modes[n].value(p);
  }
  return v;
}

namespace {

// int_Omega f(x) int_0^T g(t) v(x, t) dt dx with v driven by phi_coeffs,
// using Gauss-Legendre in time and space.
ComplexVal dual_pairing_by_quadrature(const CoefficientVector& f, const CoefficientVector& phi_coeffs,
                                      const PdeParams& params, double t_end, QuadratureSpec quad) {
  if (f.size() == 0 || phi_coeffs.size() == 0) return 0.0;
  const DomainSpec& domain = f.modes.front().domain;
  const AxisRule time = composite_gauss_legendre(0.0, t_end, quad.panels, quad.order);
  const ComplexVal z = params.diffusion();
  std::vector<ComplexVal> time_weight(phi_coeffs.size());
  for (std::size_t n = 0; n < phi_coeffs.size(); ++n) {
    ComplexVal s{};
    for (std::size_t q = 0; q < time.size(); ++q) {
      const double t = time.nodes[q];
      s += time.weights[q] * std::exp(-params.gamma * t) *
           std::exp(-z * phi_coeffs.modes[n].eigenvalue * (t_end - t));
    }
    time_weight[n] = phi_coeffs.values[n] * s;
  }
  const TensorRule space(domain.box(), domain.dim(), quad);
  ComplexVal lhs{};
  for (std::size_t k = 0; k < space.size(); ++k) {
    const Point x = space.node(k);
    ComplexVal w{};
    for (std::size_t n = 0; n < phi_coeffs.size(); ++n) w += time_weight[n] * phi_coeffs.modes[n].value(x);
    lhs += space.weight(k) * f.evaluate(x) * w;
  }
  return lhs;
}

ComplexVal forward_pairing(const CoefficientVector& f, const std::function<double(const Point&)>& phi,
                           const Box& support, int dim, const PdeParams& params, double t_end,
                           QuadratureSpec quad) {
  const TensorRule rule(support, dim, quad);
  const CoefficientVector none;
  ComplexVal rhs{};
  for (std::size_t k = 0; k < rule.size(); ++k) {
    const Point x = rule.node(k);
    rhs += rule.weight(k) * series_eval(none, f, params, x, t_end) * phi(x);
  }
  return rhs;
}

}  // namespace

IdentityCheck integral_identity_check(const CoefficientVector& f, const TestFunction& phi, const PdeParams& params,
                                      double t_end, QuadratureSpec quad) {
  IdentityCheck out;
  if (f.size() == 0) return out;
  const CoefficientVector phi_coeffs = project_test_function(phi, f.modes, quad);
  out.lhs = dual_pairing_by_quadrature(f, phi_coeffs, params, t_end, quad);
  out.rhs = forward_pairing(f, phi, phi.support, phi.dim, params, t_end, quad);
  out.gap = std::abs(out.lhs - out.rhs);
  return out;
}

IdentityCheck integral_identity_check(const CoefficientVector& f, const CoefficientVector& phi,
                                      const PdeParams& params, double t_end, QuadratureSpec quad) {
  IdentityCheck out;
  if (f.size() == 0 || phi.size() == 0) return out;
  const DomainSpec& domain = f.modes.front().domain;
  out.lhs = dual_pairing_by_quadrature(f, phi, params, t_end, quad);
  out.rhs = forward_pairing(
      f, [&](const Point& p) { return phi.evaluate(p).real(); }, domain.box(), domain.dim(), params, t_end, quad);
  // phi may carry complex coefficients; the pairing is bilinear.
  if (std::any_of(phi.values.begin(), phi.values.end(), [](ComplexVal c) { return c.imag() != 0.0; })) {
    out.rhs += ComplexVal(0.0, 1.0) *
               forward_pairing(
                   f, [&](const Point& p) { return phi.evaluate(p).imag(); }, domain.box(), domain.dim(), params,
                   t_end, quad);
  }
  out.gap = std::abs(out.lhs - out.rhs);
  return out;
}

double b_norm_lower_bound(const CoefficientVector& f, const TestDictionary& dict, const PdeParams& params,
                          double t1, double t2) {
  if (dict.members.empty()) throw InvalidInput("b_norm_lower_bound: empty dictionary");
  if (f.size() == 0) return 0.0;
  std::vector<std::array<ComplexVal, 2>> weights(f.size());
  for (std::size_t n = 0; n < f.size(); ++n) {
    weights[n][0] = f.values[n] * time_kernel(params, f.modes[n].eigenvalue, t1);
    weights[n][1] = f.values[n] * time_kernel(params, f.modes[n].eigenvalue, t2);
  }
  double best1 = 0.0, best2 = 0.0;
  for (const auto& member : dict.members) {
    const CoefficientVector c = project_test_function(member, f.modes);
    ComplexVal s1{}, s2{};
    for (std::size_t n = 0; n < f.size(); ++n) {
      s1 += weights[n][0] * c.values[n];
      s2 += weights[n][1] * c.values[n];
    }
    best1 = std::max(best1, std::abs(s1));
    best2 = std::max(best2, std::abs(s2));
  }
  return best1 + best2;
}

Eigen::MatrixXcd local_forward_matrix(const ObservationSet& obs, const std::vector<EigenMode>& modes,
                                      const PdeParams& params) {
  const auto k = static_cast<Eigen::Index>(obs.points.size());
  Eigen::MatrixXcd g(2 * k, static_cast<Eigen::Index>(modes.size()));
  for (std::size_t n = 0; n < modes.size(); ++n) {
    const auto col = static_cast<Eigen::Index>(n);
    for (int j = 0; j < 2; ++j) {
      const ComplexVal kern = time_kernel(params, modes[n].eigenvalue, obs.instants[j]);
      for (Eigen::Index r = 0; r < k; ++r) {
        g(j * k + r, col) = kern * modes[n].value(obs.points[static_cast<std::size_t>(r)]);
      }
    }
  }
  return g;
}

LocalReconstruction reconstruct_local_lsq(const ObservationSet& obs, const DomainSpec& domain,
                                          const PdeParams& params, std::size_t n, std::optional<double> mu) {
  params.validate();
  obs.validate(domain, params.T);
  const auto modes = enumerate_modes(domain, n);
  for (std::size_t m = 0; m < modes.size(); ++m) {
    if (std::abs(params.diffusion() * modes[m].eigenvalue - params.gamma) <= kDegenerateTolerance) {
      throw NumericalError("reconstruct_local_lsq: gamma = (a+ib) lambda_n for mode " + std::to_string(m));
    }
  }
  if (4 * obs.points.size() < 2 * n) {
    throw InvalidInput("reconstruct_local_lsq: need at least 2N real observations");
  }

  const Eigen::MatrixXcd g = local_forward_matrix(obs, modes, params);
  const auto k = static_cast<Eigen::Index>(obs.points.size());
  Eigen::VectorXcd h(2 * k);
  for (int j = 0; j < 2; ++j)
    for (Eigen::Index r = 0; r < k; ++r) h[j * k + r] = obs.values[j][static_cast<std::size_t>(r)];

  LocalReconstruction out;
  const Eigen::JacobiSVD<Eigen::MatrixXcd> svd(g);
  const auto& sv = svd.singularValues();
  out.sigma_max = sv.size() ? sv[0] : 0.0;
  out.sigma_min = sv.size() ? sv[sv.size() - 1] : 0.0;
  out.condition = out.sigma_min > 0.0 ? out.sigma_max / out.sigma_min : std::numeric_limits<double>::infinity();
  out.mu = mu.value_or(obs.noise.delta > 0.0 ? 1e-8 * out.sigma_max * out.sigma_max : 1e-10);
  if (!(out.mu >= 0.0)) throw InvalidInput("reconstruct_local_lsq: mu must be >= 0");

  const double floor = 1e-15 * out.sigma_max * out.sigma_max;
  if (out.sigma_min * out.sigma_min + out.mu <= floor) {
    std::ostringstream msg;
    msg << "reconstruct_local_lsq: rank deficient forward map (condition estimate " << out.condition << ")";
    throw NumericalError(msg.str());
  }

  Eigen::MatrixXcd normal = g.adjoint() * g;
  normal.diagonal().array() += out.mu;
  const Eigen::LDLT<Eigen::MatrixXcd> ldlt(normal);
  if (ldlt.info() != Eigen::Success) throw NumericalError("reconstruct_local_lsq: factorization failed");
  const Eigen::VectorXcd c = ldlt.solve(g.adjoint() * h);

  out.f = CoefficientVector::zeros(modes);
  for (std::size_t m = 0; m < modes.size(); ++m) out.f.values[m] = c[static_cast<Eigen::Index>(m)];
  return out;
}

void write_local_results_csv(std::ostream& out, std::span<const LocalResultRow> rows) {
  out << "region,Re_f,condG\n";
  char buf[256];
  for (const auto& r : rows) {
    std::snprintf(buf, sizeof buf, "%s,%.6g,%.6g\n", r.region.c_str(), r.re_f, r.cond_g);
    out << buf;
  }
}

std::vector<LocalResultRow> read_local_results_csv(std::istream& in) {
  std::string line;
  if (!std::getline(in, line) || line != "region,Re_f,condG") {
    throw InvalidInput("read_local_results_csv: bad header");
  }
  std::vector<LocalResultRow> rows;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const auto c1 = line.find(',');
    const auto c2 = line.find(',', c1 == std::string::npos ? c1 : c1 + 1);
    if (c1 == std::string::npos || c2 == std::string::npos || line.find(',', c2 + 1) != std::string::npos) {
      throw InvalidInput("read_local_results_csv: malformed row '" + line + "'");
    }
    LocalResultRow r;
    r.region = line.substr(0, c1);
    try {
      std::size_t used = 0;
      const std::string a = line.substr(c1 + 1, c2 - c1 - 1), b = line.substr(c2 + 1);
      r.re_f = std::stod(a, &used);
      if (used != a.size()) throw std::invalid_argument("trailing");
      r.cond_g = std::stod(b, &used);
      if (used != b.size()) throw std::invalid_argument("trailing");
    } catch (const std::exception&) {
      throw InvalidInput("read_local_results_csv: malformed row '" + line + "'");
    }
    rows.push_back(std::move(r));
  }
  return rows;
}

}  // namespace glinv
