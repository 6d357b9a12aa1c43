#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <functional>
#include <iosfwd>
#include <span>
#include <vector>

#include "glinv/autodiff.hpp"
#include "glinv/inverse_local.hpp"
#include "glinv/spectral_core.hpp"

namespace glinv {

/// s(z) = (z1 W1 - z2 W2 + d1) + i (z1 W2 + z2 W1 + d2) for z = z1 + i z2.
struct ComplexLinearLayer {
  Eigen::MatrixXd w_re;  // out x in
  Eigen::MatrixXd w_im;
  Eigen::VectorXd b_re;
  Eigen::VectorXd b_im;

  int in() const { return static_cast<int>(w_re.cols()); }
  int out() const { return static_cast<int>(w_re.rows()); }
};

struct RealLinearLayer {
  Eigen::MatrixXd w;  // out x in
  Eigen::VectorXd b;

  int in() const { return static_cast<int>(w.cols()); }
  int out() const { return static_cast<int>(w.rows()); }
};

struct NetworkShape {
  int dim = 1;
  int hidden_layers = 2;
  int width = 20;
  bool complex_source = false;
};

/// Weights of u_NN (complex layers on (x[, y], t)) and f_eta (real layers on x).
struct CPinnParams {
  int dim = 1;
  bool complex_source = false;
  std::vector<ComplexLinearLayer> u_layers;
  std::vector<RealLinearLayer> f_layers;

  /// Glorot-uniform weights (each real component drawn independently), zero biases.
  static CPinnParams initialize(const NetworkShape& shape, std::uint64_t seed);
  /// Same shapes, all entries zero.
  static CPinnParams zeros_like(const CPinnParams& other);

  std::size_t parameter_count() const;
  /// Declaration order: u layers (W_re, W_im row-major, b_re, b_im), then f layers (W row-major, b).
  std::vector<double> flatten() const;
  void unflatten(std::span<const double> flat);
  void validate() const;
};

inline constexpr double kComplexifyShift = 1e-5;

/// z -> z + i eps, coordinate-wise.
std::vector<ComplexVal> complexify(std::span<const double> z, double eps = kComplexifyShift);

std::vector<ComplexVal> layer_apply(const ComplexLinearLayer& layer, std::span<const ComplexVal> z);

namespace detail {
inline ComplexVal activate(ComplexVal s) { return {sigma(s.real()), sigma(s.imag())}; }
inline HyperDual<ComplexVal> activate(const HyperDual<ComplexVal>& s) {
  return make_complex(sigma(real_part(s)), sigma(imag_part(s)));
}
}  // namespace detail

/// u_NN on real inputs (x[, y], t) carried in S = ComplexVal or
/// HyperDual<ComplexVal>; the network complexifies them itself. sigma acts on
/// real and imaginary parts separately.
template <class S>
S forward_u_generic(const CPinnParams& params, std::span<const S> inputs, double eps = kComplexifyShift) {
  std::vector<S> z(inputs.begin(), inputs.end());
  for (auto& v : z) v += S(ComplexVal(0.0, eps));
  for (std::size_t l = 0; l < params.u_layers.size(); ++l) {
    const auto& layer = params.u_layers[l];
    const bool hidden = l + 1 < params.u_layers.size();
    std::vector<S> s(static_cast<std::size_t>(layer.out()));
    for (int i = 0; i < layer.out(); ++i) {
      S acc = S(ComplexVal(layer.b_re[i], layer.b_im[i]));
      for (int j = 0; j < layer.in(); ++j) acc += S(ComplexVal(layer.w_re(i, j), layer.w_im(i, j))) * z[j];
      s[i] = hidden ? detail::activate(acc) : acc;
    }
    z = std::move(s);
  }
  return z.front();
}

ComplexVal forward_u(const CPinnParams& params, const Point& p, double t, double eps = kComplexifyShift);
/// f_eta(x); imaginary part is zero unless the network has a complex source head.
ComplexVal forward_f(const CPinnParams& params, const Point& p);

/// Batched value-only evaluation; u coords have dim + 1 rows (x[, y], t), f
/// coords have dim rows.
Eigen::VectorXcd forward_u_batch(const CPinnParams& params, const Eigen::MatrixXd& coords,
                                 double eps = kComplexifyShift);
Eigen::VectorXcd forward_f_batch(const CPinnParams& params, const Eigen::MatrixXd& coords);

// Residuals against arbitrary evaluators. `u` takes span<const HyperDual<ComplexVal>>
// inputs (x[, y], t); `f` takes a Point.

template <class UEval, class FEval>
ComplexVal residual_interior(UEval&& u, FEval&& f, const PdeParams& pde, const Point& p, double t, int dim) {
  const SpaceTimeDerivatives d = laplacian_and_time(u, p, t, dim);
  return d.u_t - pde.diffusion() * d.laplacian - ComplexVal(f(p)) * std::exp(-pde.gamma * t);
}

ComplexVal residual_interior(const CPinnParams& params, const PdeParams& pde, const Point& p, double t);
/// Throws InvalidInput when p is not on the boundary of `domain`.
ComplexVal residual_sb(const CPinnParams& params, const DomainSpec& domain, const Point& p, double t);
ComplexVal residual_tb(const CPinnParams& params, const Point& p);
ComplexVal residual_obs(const CPinnParams& params, const Point& p, double t_j, ComplexVal h);

struct SpaceTimePoint {
  Point x;
  double t = 0.0;
};

struct BoundaryPoint {
  Point x;
  double t = 0.0;
  int tangent_axis = -1;  // axis along the boundary edge (2D), -1 in 1D
};

struct CollocationCounts {
  std::size_t n_int = 256;
  std::size_t n_sb = 512;
  std::size_t n_tb = 256;
  std::size_t n_d = 256;  // observation points, shared by every instant

  static CollocationCounts defaults(int dim);
  std::size_t total(std::size_t instants) const { return n_int + n_sb + n_tb + n_d * instants; }
};

struct CollocationSets {
  std::vector<SpaceTimePoint> interior;  // S_int
  std::vector<BoundaryPoint> boundary;   // S_sb
  std::vector<Point> initial;            // S_tb
  std::vector<Point> data;               // S_d, in the observation region
};

CollocationSets sample_collocation(const CollocationCounts& counts, const DomainSpec& domain,
                                   const Region& observed, double T, std::uint64_t seed);

struct LossWeights {
  double lambda = 0.01;
  double beta = 1.0;
};

/// Observation targets h^delta_j at S_d for each instant (one instant for
/// global data, two for local data).
struct LossData {
  std::vector<double> instants;
  std::vector<std::vector<ComplexVal>> values;
};

struct LossProblem {
  DomainSpec domain = DomainSpec::interval(1.0);
  PdeParams pde;
  CollocationSets sets;
  LossData data;
  LossWeights weights;
  double eps = kComplexifyShift;
  bool sobolev_tb = true;  // add first and second axis derivatives at S_tb
  bool sobolev_sb = true;  // add d/dt (and the tangential derivative in 2D) at S_sb

  void validate() const;
};

struct LossBreakdown {
  double data = 0.0;      // sum_j ||R_Tj||^2
  double interior = 0.0;  // ||R_int||^2 (unweighted)
  double initial = 0.0;   // H^2 surrogate of R_tb
  double boundary = 0.0;  // H^1-in-time surrogate of R_sb (unweighted)
  double total = 0.0;
};

/// Batched evaluation of the weighted loss.
LossBreakdown loss(const CPinnParams& params, const LossProblem& problem);

/// Point-by-point evaluation through HyperDual passes; independent of the
/// batched engine.
LossBreakdown loss_reference(const CPinnParams& params, const LossProblem& problem);

struct GradientRecord {
  LossBreakdown loss;
  CPinnParams gradient;
  std::vector<double> flat;  // same order as CPinnParams::flatten
};

/// Reverse accumulation of d loss / d parameter through the residual
/// pipeline. Throws NumericalError on non-finite entries.
GradientRecord param_gradient(const CPinnParams& params, const LossProblem& problem);

struct TrainConfig {
  long epochs = 300000;
  double learning_rate = 0.01;
  long halving_interval = 0;  // 0: epochs / 10
  std::uint64_t seed = 0;
  int history_every = 100;
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.999;
  double adam_epsilon = 1e-8;
  double divergence_factor = 1e6;
  NetworkShape shape;

  long effective_halving_interval() const;
  double rate_at(long epoch) const;
};

struct HistoryRow {
  long epoch = 0;
  double loss = 0.0;
  double re_f = 0.0;
  double re_u = 0.0;
};

struct PinnProblem {
  LossProblem loss;
  std::function<ComplexVal(const Point&)> f_exact;
  std::function<ComplexVal(const Point&, double)> u_exact;
};

struct TrainResult {
  CPinnParams params;
  std::vector<HistoryRow> history;
  std::vector<double> loss_trace;  // loss at every epoch before its update
  double re_f = 0.0;
  double re_u = 0.0;
};

/// Full-batch Adam with step rate lr * 2^{-floor(epoch / interval)}.
/// Throws NumericalError when the loss exceeds divergence_factor times its
/// initial value or becomes non-finite.
TrainResult train(const TrainConfig& config, const PinnProblem& problem);

/// Re_f of f_eta against `truth` by tensor quadrature.
double pinn_relative_error_f(const CPinnParams& params, const DomainSpec& domain,
                             const std::function<ComplexVal(const Point&)>& truth, QuadratureSpec quad = {16, 8});
/// Re_u of u_NN over Omega x (0, T) by space-time quadrature.
double pinn_relative_error_u(const CPinnParams& params, const DomainSpec& domain, double T,
                             const std::function<ComplexVal(const Point&, double)>& truth,
                             QuadratureSpec quad = {4, 8});

/// `epoch,loss,Re_f,Re_u` with `%.9g`.
void write_history_csv(std::ostream& out, std::span<const HistoryRow> rows);
std::vector<HistoryRow> read_history_csv(std::istream& in);

/// Binary checkpoint: magic `CPNN1`, shape manifest, little-endian float64
/// parameters in declaration order.
void save_checkpoint(std::ostream& out, const CPinnParams& params);
CPinnParams load_checkpoint(std::istream& in);

}  // namespace glinv
