#pragma once

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <span>
#include <vector>

#include "glinv/forward_solver.hpp"
#include "glinv/spectral_core.hpp"

namespace glinv {

/// Relative multiplicative noise h (1 + delta xi), xi ~ N(0, 1) per sample.
struct NoiseSpec {
  double delta = 0.0;
  std::uint64_t seed = 0;
};

std::vector<ComplexVal> add_noise(std::span<const ComplexVal> h, const NoiseSpec& spec);

/// Spectral cutoff: keep the first n_cut modes (optionally only those with
/// every index <= axis_cap) whose |I_n(T)| exceeds `floor`.
struct CutoffRule {
  std::size_t n_cut = 8;
  double floor = 1e-8;
  int axis_cap = 0;  // 0: no per-axis cap

  static CutoffRule defaults_for(int dim);
  std::vector<EigenMode> modes(const DomainSpec& domain) const;
};

struct GlobalReconstruction {
  CoefficientVector f;
  /// Mode positions zeroed because |I_n(T)| <= floor.
  std::vector<std::size_t> dropped;
};

/// f_n = <h, phi_n> / I_n(T) over the modes selected by `rule`.
/// Throws NumericalError on resonance, or when a kept |I_n(T)| is zero with floor = 0.
GlobalReconstruction reconstruct_global(const SampledField& h, const DomainSpec& domain, const PdeParams& params,
                                        const CutoffRule& rule);

/// ||est - truth||_{L2(Omega)} / ||truth||_{L2(Omega)} by tensor quadrature.
double relative_error_f(const std::function<ComplexVal(const Point&)>& estimate,
                        const std::function<ComplexVal(const Point&)>& truth, const DomainSpec& domain,
                        QuadratureSpec quad = {});

/// Space-time relative error on a common grid.
double relative_error_u(const GridField& estimate, const GridField& truth);

struct StabilityReport {
  double f_norm = 0.0;
  double h_norm = 0.0;
  double bound_m = 0.0;
  /// ||f||_{L2} / (M^{1/2} ||h||^{1/2}); 0 when f and h both vanish.
  double ratio = 0.0;
};

StabilityReport stability_diagnostic(double f_norm, double h_norm, double bound_m);

struct GlobalResultRow {
  double delta = 0.0;
  std::uint64_t seed = 0;
  double re_f = 0.0;
};

/// `delta,seed,Re_f` with `%.6g`.
void write_global_results_csv(std::ostream& out, std::span<const GlobalResultRow> rows);
std::vector<GlobalResultRow> read_global_results_csv(std::istream& in);

}  // namespace glinv
