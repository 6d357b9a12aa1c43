#include "glinv/inverse_spectral.hpp"

#include <cinttypes>
#include <cmath>
#include <cstdio>
#include <istream>
#include <limits>
#include <ostream>
#include <random>
#include <sstream>
#include <string>

#include "glinv/error.hpp"

namespace glinv {

std::vector<ComplexVal> add_noise(std::span<const ComplexVal> h, const NoiseSpec& spec) {
  if (!(spec.delta >= 0.0)) throw InvalidInput("add_noise: delta must be >= 0");
  std::vector<ComplexVal> out(h.begin(), h.end());
  if (spec.delta == 0.0) return out;
  std::mt19937_64 rng(spec.seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  for (auto& v : out) v *= 1.0 + spec.delta * normal(rng);
  return out;
}

CutoffRule CutoffRule::defaults_for(int dim) {
  if (dim == 2) return CutoffRule{64, 1e-8, 8};
  return CutoffRule{8, 1e-8, 0};
}

std::vector<EigenMode> CutoffRule::modes(const DomainSpec& domain) const {
  if (n_cut == 0) throw InvalidInput("CutoffRule: n_cut must be >= 1");
  if (axis_cap <= 0) return enumerate_modes(domain, n_cut);
  auto modes = enumerate_box_modes(domain, axis_cap);
  if (modes.size() > n_cut) modes.resize(n_cut);
  return modes;
}

GlobalReconstruction reconstruct_global(const SampledField& h, const DomainSpec& domain, const PdeParams& params,
                                        const CutoffRule& rule) {
  params.validate();
  if (!(rule.floor >= 0.0)) throw InvalidInput("reconstruct_global: floor must be >= 0");
  if (h.rule.dim() != domain.dim()) throw InvalidInput("reconstruct_global: dimension mismatch");
  const auto modes = rule.modes(domain);
  const ResonanceReport res = resonance_check(params, modes, resonance_k_range(params, modes), kDegenerateTolerance);
  if (!res.ok) {
    std::ostringstream msg;
    msg << "reconstruct_global: gamma is resonant with mode " << res.offender->mode_position << " (k = "
        << res.offender->k << ", distance " << res.offender->distance << ")";
    throw NumericalError(msg.str());
  }

  GlobalReconstruction out;
  out.f = project(h, modes);
  for (std::size_t n = 0; n < modes.size(); ++n) {
    const ComplexVal kernel = time_kernel(params, modes[n].eigenvalue, params.T);
    const double mag = std::abs(kernel);
    if (mag <= rule.floor || mag == 0.0) {
      if (rule.floor == 0.0) {
        throw NumericalError("reconstruct_global: vanishing time kernel at mode " + std::to_string(n));
      }
      out.f.values[n] = 0.0;
      out.dropped.push_back(n);
      continue;
    }
    out.f.values[n] /= kernel;
  }
  return out;
}

double relative_error_f(const std::function<ComplexVal(const Point&)>& estimate,
                        const std::function<ComplexVal(const Point&)>& truth, const DomainSpec& domain,
                        QuadratureSpec quad) {
  const TensorRule rule(domain.box(), domain.dim(), quad);
  std::vector<double> num(rule.size()), den(rule.size());
  for (std::size_t k = 0; k < rule.size(); ++k) {
    const Point p = rule.node(k);
    const ComplexVal tv = truth(p);
    num[k] = rule.weight(k) * std::norm(estimate(p) - tv);
    den[k] = rule.weight(k) * std::norm(tv);
  }
  const double d = pairwise_sum(den.data(), den.size());
  if (d == 0.0) throw InvalidInput("relative_error_f: reference has zero norm");
  return std::sqrt(pairwise_sum(num.data(), num.size()) / d);
}

double relative_error_u(const GridField& estimate, const GridField& truth) {
  return relative_l2_distance(estimate, truth);
}

StabilityReport stability_diagnostic(double f_norm, double h_norm, double bound_m) {
  StabilityReport r{f_norm, h_norm, bound_m, 0.0};
  if (f_norm == 0.0) return r;
  const double denom = std::sqrt(bound_m) * std::sqrt(h_norm);
  r.ratio = denom > 0.0 ? f_norm / denom : std::numeric_limits<double>::infinity();
  return r;
}

void write_global_results_csv(std::ostream& out, std::span<const GlobalResultRow> rows) {
  out << "delta,seed,Re_f\n";
  char buf[128];
  for (const auto& r : rows) {
    std::snprintf(buf, sizeof buf, "%.6g,%" PRIu64 ",%.6g\n", r.delta, r.seed, r.re_f);
    out << buf;
  }
}

std::vector<GlobalResultRow> read_global_results_csv(std::istream& in) {
  std::string line;
  if (!std::getline(in, line) || line != "delta,seed,Re_f") {
    throw InvalidInput("read_global_results_csv: bad header");
  }
  std::vector<GlobalResultRow> rows;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    GlobalResultRow r;
    char tail = 0;
    if (std::sscanf(line.c_str(), "%lf,%" SCNu64 ",%lf%c", &r.delta, &r.seed, &r.re_f, &tail) != 3) {
      throw InvalidInput("read_global_results_csv: malformed row '" + line + "'");
    }
    rows.push_back(r);
  }
  return rows;
}

}  // namespace glinv
