#include "glinv/cpinn.hpp"

#include <bit>
#include <cinttypes>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <istream>
#include <ostream>
#include <random>
#include <sstream>
#include <string>

#include "cpinn_engine.hpp"
#include "glinv/error.hpp"

namespace glinv {

namespace {

std::vector<int> chain_sizes(int in, const NetworkShape& shape, int out) {
  std::vector<int> sizes{in};
  for (int h = 0; h < shape.hidden_layers; ++h) sizes.push_back(shape.width);
  sizes.push_back(out);
  return sizes;
}

template <class Fn>
void for_each_block(const CPinnParams& p, Fn&& fn) {
  for (const auto& l : p.u_layers) {
    fn(l.w_re.data(), l.w_re.size(), true);
    fn(l.w_im.data(), l.w_im.size(), true);
    fn(l.b_re.data(), l.b_re.size(), false);
    fn(l.b_im.data(), l.b_im.size(), false);
  }
  for (const auto& l : p.f_layers) {
    fn(l.w.data(), l.w.size(), true);
    fn(l.b.data(), l.b.size(), false);
  }
}

// Row-major traversal of a column-major out x in matrix.
template <class Fn>
void visit_rowmajor(const Eigen::MatrixXd& m, Fn&& fn) {
  for (Eigen::Index i = 0; i < m.rows(); ++i)
    for (Eigen::Index j = 0; j < m.cols(); ++j) fn(m(i, j));
}

}  // namespace

CPinnParams CPinnParams::initialize(const NetworkShape& shape, std::uint64_t seed) {
  if (shape.dim != 1 && shape.dim != 2) throw InvalidInput("CPinnParams: dim must be 1 or 2");
  if (shape.hidden_layers < 1 || shape.width < 1) throw InvalidInput("CPinnParams: need >= 1 hidden layer of width >= 1");
  CPinnParams p;
  p.dim = shape.dim;
  p.complex_source = shape.complex_source;
  std::mt19937_64 rng(seed);
  auto glorot = [&](int out, int in) {
    const double limit = std::sqrt(6.0 / (in + out));
    std::uniform_real_distribution<double> u(-limit, limit);
    Eigen::MatrixXd w(out, in);
    for (int i = 0; i < out; ++i)
      for (int j = 0; j < in; ++j) w(i, j) = u(rng);
    return w;
  };
  const auto us = chain_sizes(shape.dim + 1, shape, 1);
  for (std::size_t l = 0; l + 1 < us.size(); ++l) {
    ComplexLinearLayer layer;
    layer.w_re = glorot(us[l + 1], us[l]);
    layer.w_im = glorot(us[l + 1], us[l]);
    layer.b_re = Eigen::VectorXd::Zero(us[l + 1]);
    layer.b_im = Eigen::VectorXd::Zero(us[l + 1]);
    p.u_layers.push_back(std::move(layer));
  }
  const auto fs = chain_sizes(shape.dim, shape, shape.complex_source ? 2 : 1);
  for (std::size_t l = 0; l + 1 < fs.size(); ++l) {
    RealLinearLayer layer;
    layer.w = glorot(fs[l + 1], fs[l]);
    layer.b = Eigen::VectorXd::Zero(fs[l + 1]);
    p.f_layers.push_back(std::move(layer));
  }
  return p;
}

CPinnParams CPinnParams::zeros_like(const CPinnParams& other) {
  CPinnParams p = other;
  engine::set_zero(p);
  return p;
}

std::size_t CPinnParams::parameter_count() const {
  std::size_t n = 0;
  for_each_block(*this, [&](const double*, Eigen::Index size, bool) { n += static_cast<std::size_t>(size); });
  return n;
}

std::vector<double> CPinnParams::flatten() const {
  std::vector<double> flat;
  flat.reserve(parameter_count());
  auto push = [&](double v) { flat.push_back(v); };
  for (const auto& l : u_layers) {
    visit_rowmajor(l.w_re, push);
    visit_rowmajor(l.w_im, push);
    for (double v : l.b_re) flat.push_back(v);
    for (double v : l.b_im) flat.push_back(v);
  }
  for (const auto& l : f_layers) {
    visit_rowmajor(l.w, push);
    for (double v : l.b) flat.push_back(v);
  }
  return flat;
}

void CPinnParams::unflatten(std::span<const double> flat) {
  if (flat.size() != parameter_count()) throw InvalidInput("CPinnParams::unflatten: size mismatch");
  std::size_t k = 0;
  auto fill_rowmajor = [&](Eigen::MatrixXd& m) {
    for (Eigen::Index i = 0; i < m.rows(); ++i)
      for (Eigen::Index j = 0; j < m.cols(); ++j) m(i, j) = flat[k++];
  };
  auto fill = [&](Eigen::VectorXd& v) {
    for (auto& x : v) x = flat[k++];
  };
  for (auto& l : u_layers) {
    fill_rowmajor(l.w_re);
    fill_rowmajor(l.w_im);
    fill(l.b_re);
    fill(l.b_im);
  }
  for (auto& l : f_layers) {
    fill_rowmajor(l.w);
    fill(l.b);
  }
}

void CPinnParams::validate() const {
  if (dim != 1 && dim != 2) throw InvalidInput("CPinnParams: dim must be 1 or 2");
  if (u_layers.empty() || f_layers.empty()) throw InvalidInput("CPinnParams: empty network");
  int in = dim + 1;
  for (const auto& l : u_layers) {
    if (l.in() != in || l.w_im.rows() != l.w_re.rows() || l.w_im.cols() != l.w_re.cols() ||
        l.b_re.size() != l.out() || l.b_im.size() != l.out())
      throw InvalidInput("CPinnParams: inconsistent complex layer shapes");
    in = l.out();
  }
  if (in != 1) throw InvalidInput("CPinnParams: u network must end in one complex output");
  in = dim;
  for (const auto& l : f_layers) {
    if (l.in() != in || l.b.size() != l.out()) throw InvalidInput("CPinnParams: inconsistent real layer shapes");
    in = l.out();
  }
  if (in != (complex_source ? 2 : 1)) throw InvalidInput("CPinnParams: f network output size mismatch");
}

std::vector<ComplexVal> complexify(std::span<const double> z, double eps) {
  std::vector<ComplexVal> out;
  out.reserve(z.size());
  for (double v : z) out.emplace_back(v, eps);
  return out;
}

std::vector<ComplexVal> layer_apply(const ComplexLinearLayer& layer, std::span<const ComplexVal> z) {
  if (static_cast<int>(z.size()) != layer.in()) throw InvalidInput("layer_apply: input size mismatch");
  std::vector<ComplexVal> s(static_cast<std::size_t>(layer.out()));
  for (int i = 0; i < layer.out(); ++i) {
    double re = layer.b_re[i];
    double im = layer.b_im[i];
    for (int j = 0; j < layer.in(); ++j) {
      re += z[j].real() * layer.w_re(i, j) - z[j].imag() * layer.w_im(i, j);
      im += z[j].real() * layer.w_im(i, j) + z[j].imag() * layer.w_re(i, j);
    }
    s[i] = {re, im};
  }
  return s;
}

ComplexVal forward_u(const CPinnParams& params, const Point& p, double t, double eps) {
  std::array<ComplexVal, 3> in{ComplexVal(p.x), ComplexVal(p.y), ComplexVal(t)};
  if (params.dim == 1) in[1] = t;
  return forward_u_generic<ComplexVal>(params, std::span<const ComplexVal>(in.data(), params.dim + 1), eps);
}

ComplexVal forward_f(const CPinnParams& params, const Point& p) {
  std::vector<double> z{p.x};
  if (params.dim == 2) z.push_back(p.y);
  for (std::size_t l = 0; l < params.f_layers.size(); ++l) {
    const auto& layer = params.f_layers[l];
    const bool hidden = l + 1 < params.f_layers.size();
    std::vector<double> s(static_cast<std::size_t>(layer.out()));
    for (int i = 0; i < layer.out(); ++i) {
      double acc = layer.b[i];
      for (int j = 0; j < layer.in(); ++j) acc += layer.w(i, j) * z[j];
      s[i] = hidden ? sigma(acc) : acc;
    }
    z = std::move(s);
  }
  return {z[0], z.size() > 1 ? z[1] : 0.0};
}

Eigen::VectorXcd forward_u_batch(const CPinnParams& params, const Eigen::MatrixXd& coords, double eps) {
  if (coords.rows() != params.dim + 1) throw InvalidInput("forward_u_batch: expected dim + 1 coordinate rows");
  engine::UPass pass;
  pass.layout.set(coords.cols(), {});
  engine::u_forward(engine::prepare(params), coords, eps, pass);
  Eigen::VectorXcd out(coords.cols());
  for (Eigen::Index p = 0; p < coords.cols(); ++p) out[p] = {pass.out()(0, p), pass.out()(1, p)};
  return out;
}

Eigen::VectorXcd forward_f_batch(const CPinnParams& params, const Eigen::MatrixXd& coords) {
  if (coords.rows() != params.dim) throw InvalidInput("forward_f_batch: expected dim coordinate rows");
  engine::FPass pass;
  engine::f_forward(params, coords, pass);
  const auto& f = pass.out();
  Eigen::VectorXcd out(coords.cols());
  for (Eigen::Index p = 0; p < coords.cols(); ++p) out[p] = {f(0, p), f.rows() > 1 ? f(1, p) : 0.0};
  return out;
}

namespace {

using HD = HyperDual<ComplexVal>;

auto network_evaluator(const CPinnParams& params, double eps) {
  return [&params, eps](std::span<const HD> in) { return forward_u_generic<HD>(params, in, eps); };
}

// u and its first (and optionally second) derivative along input `axis`.
HD directional(const CPinnParams& params, const Point& p, double t, int axis, double eps) {
  std::array<HD, 3> in;
  for (int a = 0; a < params.dim; ++a) in[a] = seed(ComplexVal(p[a]), a == axis);
  in[params.dim] = seed(ComplexVal(t), params.dim == axis);
  return forward_u_generic<HD>(params, std::span<const HD>(in.data(), params.dim + 1), eps);
}

}  // namespace

ComplexVal residual_interior(const CPinnParams& params, const PdeParams& pde, const Point& p, double t) {
  return residual_interior(network_evaluator(params, kComplexifyShift),
                           [&params](const Point& q) { return forward_f(params, q); }, pde, p, t, params.dim);
}

ComplexVal residual_sb(const CPinnParams& params, const DomainSpec& domain, const Point& p, double t) {
  if (!domain.on_boundary(p)) throw InvalidInput("residual_sb: point is not on the boundary");
  return forward_u(params, p, t);
}

ComplexVal residual_tb(const CPinnParams& params, const Point& p) { return forward_u(params, p, 0.0); }

ComplexVal residual_obs(const CPinnParams& params, const Point& p, double t_j, ComplexVal h) {
  return forward_u(params, p, t_j) - h;
}

CollocationCounts CollocationCounts::defaults(int dim) {
  if (dim == 2) return {256, 1024, 256, 256};
  return {256, 512, 256, 256};
}

CollocationSets sample_collocation(const CollocationCounts& counts, const DomainSpec& domain, const Region& observed,
                                   double T, std::uint64_t seed) {
  if (counts.n_int < 1 || counts.n_sb < 1 || counts.n_tb < 1 || counts.n_d < 1)
    throw InvalidInput("sample_collocation: every count must be >= 1");
  if (!(T > 0.0)) throw InvalidInput("sample_collocation: T must be > 0");
  if (observed.dim() != domain.dim()) throw InvalidInput("sample_collocation: region dimension mismatch");
  if (!(observed.measure() > 0.0)) throw InvalidInput("sample_collocation: empty observation region");
  if (!observed.inside(domain)) throw InvalidInput("sample_collocation: observation region leaves the domain");

  const int dim = domain.dim();
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  auto interior_point = [&] {
    Point p;
    for (int a = 0; a < dim; ++a) p[a] = domain.length(a) * unit(rng);
    return p;
  };
  auto time = [&] { return T * (1.0 - unit(rng)); };  // (0, T]

  CollocationSets sets;
  sets.interior.reserve(counts.n_int);
  for (std::size_t k = 0; k < counts.n_int; ++k) {
    const Point p = interior_point();
    sets.interior.push_back({p, time()});
  }

  const double lx = domain.length(0), ly = dim == 2 ? domain.length(1) : 0.0;
  sets.boundary.reserve(counts.n_sb);
  for (std::size_t k = 0; k < counts.n_sb; ++k) {
    BoundaryPoint b;
    if (dim == 1) {
      b.x.x = unit(rng) < 0.5 ? 0.0 : lx;
    } else {
      double s = unit(rng) * 2.0 * (lx + ly);
      if (s < ly) {
        b.x = {0.0, s};
        b.tangent_axis = 1;
      } else if ((s -= ly) < lx) {
        b.x = {s, 0.0};
        b.tangent_axis = 0;
      } else if ((s -= lx) < ly) {
        b.x = {lx, s};
        b.tangent_axis = 1;
      } else {
        b.x = {std::min(s - ly, lx), ly};
        b.tangent_axis = 0;
      }
    }
    b.t = time();
    sets.boundary.push_back(b);
  }

  sets.initial.reserve(counts.n_tb);
  for (std::size_t k = 0; k < counts.n_tb; ++k) sets.initial.push_back(interior_point());

  const auto& boxes = observed.boxes();
  std::vector<double> cumulative;
  double acc = 0.0;
  for (const auto& b : boxes) cumulative.push_back(acc += b.measure(dim));
  sets.data.reserve(counts.n_d);
  for (std::size_t k = 0; k < counts.n_d; ++k) {
    const double pick = unit(rng) * acc;
    std::size_t i = 0;
    while (i + 1 < boxes.size() && pick >= cumulative[i]) ++i;
    Point p;
    for (int a = 0; a < dim; ++a) p[a] = boxes[i].lo[a] + boxes[i].width(a) * unit(rng);
    sets.data.push_back(p);
  }
  return sets;
}

void LossProblem::validate() const {
  pde.validate();
  if (!(weights.lambda >= 0.0) || !(weights.beta >= 0.0)) throw InvalidInput("LossWeights: lambda and beta must be >= 0");
  if (sets.initial.empty()) throw InvalidInput("loss: S_tb is empty");
  if (sets.data.empty()) throw InvalidInput("loss: S_d is empty");
  if (weights.lambda > 0.0 && sets.interior.empty()) throw InvalidInput("loss: S_int is empty");
  if (weights.beta > 0.0 && sets.boundary.empty()) throw InvalidInput("loss: S_sb is empty");
  if (data.instants.empty() || data.instants.size() != data.values.size())
    throw InvalidInput("loss: observation instants and values disagree");
  for (const auto& v : data.values)
    if (v.size() != sets.data.size()) throw InvalidInput("loss: observation values do not match S_d");
  for (const auto& b : sets.boundary) {
    if (!domain.on_boundary(b.x)) throw InvalidInput("loss: S_sb point off the boundary");
    if (domain.dim() == 2 && b.tangent_axis != 0 && b.tangent_axis != 1)
      throw InvalidInput("loss: S_sb point without a tangent axis");
  }
}

LossBreakdown loss(const CPinnParams& params, const LossProblem& problem) {
  params.validate();
  engine::LossEngine eng(problem);
  return eng.run(params, nullptr);
}

LossBreakdown loss_reference(const CPinnParams& params, const LossProblem& problem) {
  params.validate();
  problem.validate();
  const int dim = problem.domain.dim();
  const double eps = problem.eps;
  auto mean = [](std::vector<double>& v) {
    return v.empty() ? 0.0 : pairwise_sum(v.data(), v.size()) / static_cast<double>(v.size());
  };
  LossBreakdown out;
  std::vector<double> terms;

  for (const auto& q : problem.sets.interior) {
    const ComplexVal r =
        residual_interior(network_evaluator(params, eps), [&](const Point& x) { return forward_f(params, x); },
                          problem.pde, q.x, q.t, dim);
    terms.push_back(std::norm(r));
  }
  out.interior = mean(terms);

  terms.clear();
  for (const auto& x : problem.sets.initial) {
    double s = std::norm(forward_u(params, x, 0.0, eps));
    if (problem.sobolev_tb)
      for (int a = 0; a < dim; ++a) {
        const HD d = directional(params, x, 0.0, a, eps);
        s += std::norm(d.d1) + std::norm(d.d2);
      }
    terms.push_back(s);
  }
  out.initial = mean(terms);

  terms.clear();
  for (const auto& b : problem.sets.boundary) {
    double s = std::norm(forward_u(params, b.x, b.t, eps));
    if (problem.sobolev_sb) {
      s += std::norm(directional(params, b.x, b.t, dim, eps).d1);
      if (dim == 2) s += std::norm(directional(params, b.x, b.t, b.tangent_axis, eps).d1);
    }
    terms.push_back(s);
  }
  out.boundary = mean(terms);

  for (std::size_t j = 0; j < problem.data.instants.size(); ++j) {
    terms.clear();
    for (std::size_t p = 0; p < problem.sets.data.size(); ++p) {
      const ComplexVal u = forward_u(params, problem.sets.data[p], problem.data.instants[j], eps);
      terms.push_back(std::norm(u - problem.data.values[j][p]));
    }
    out.data += mean(terms);
  }
  out.total = out.data + problem.weights.lambda * out.interior + out.initial + problem.weights.beta * out.boundary;
  return out;
}

GradientRecord param_gradient(const CPinnParams& params, const LossProblem& problem) {
  params.validate();
  engine::LossEngine eng(problem);
  GradientRecord rec;
  rec.gradient = CPinnParams::zeros_like(params);
  rec.loss = eng.run(params, &rec.gradient);
  rec.flat = rec.gradient.flatten();
  for (std::size_t k = 0; k < rec.flat.size(); ++k)
    if (!std::isfinite(rec.flat[k]))
      throw NumericalError("param_gradient: non-finite gradient at parameter " + std::to_string(k));
  return rec;
}

long TrainConfig::effective_halving_interval() const {
  if (halving_interval > 0) return halving_interval;
  return std::max(1L, epochs / 10);
}

double TrainConfig::rate_at(long epoch) const {
  return learning_rate * std::ldexp(1.0, -static_cast<int>(epoch / effective_halving_interval()));
}

namespace {

// Quadrature probes for Re_f and Re_u with truth values cached.
class ErrorProbe {
 public:
  ErrorProbe(const DomainSpec& domain, double T, const std::function<ComplexVal(const Point&)>& f_truth,
             const std::function<ComplexVal(const Point&, double)>& u_truth, QuadratureSpec f_quad,
             QuadratureSpec u_quad) {
    const int dim = domain.dim();
    if (f_truth) {
      const TensorRule rule(domain.box(), dim, f_quad);
      f_coords_.resize(dim, static_cast<Eigen::Index>(rule.size()));
      for (std::size_t k = 0; k < rule.size(); ++k) {
        const Point p = rule.node(k);
        for (int a = 0; a < dim; ++a) f_coords_(a, k) = p[a];
        f_w_.push_back(rule.weight(k));
        f_true_.push_back(f_truth(p));
      }
    }
    if (u_truth) {
      const TensorRule rule(domain.box(), dim, u_quad);
      const AxisRule tr = composite_gauss_legendre(0.0, T, u_quad.panels, u_quad.order);
      const auto n = static_cast<Eigen::Index>(rule.size() * tr.size());
      u_coords_.resize(dim + 1, n);
      Eigen::Index c = 0;
      for (std::size_t i = 0; i < tr.size(); ++i)
        for (std::size_t k = 0; k < rule.size(); ++k, ++c) {
          const Point p = rule.node(k);
          for (int a = 0; a < dim; ++a) u_coords_(a, c) = p[a];
          u_coords_(dim, c) = tr.nodes[i];
          u_w_.push_back(rule.weight(k) * tr.weights[i]);
          u_true_.push_back(u_truth(p, tr.nodes[i]));
        }
    }
  }

  double re_f(const CPinnParams& params) const {
    if (f_w_.empty()) return std::nan("");
    return relative(forward_f_batch(params, f_coords_), f_true_, f_w_);
  }
  double re_u(const CPinnParams& params) const {
    if (u_w_.empty()) return std::nan("");
    return relative(forward_u_batch(params, u_coords_), u_true_, u_w_);
  }

 private:
  static double relative(const Eigen::VectorXcd& est, const std::vector<ComplexVal>& truth,
                         const std::vector<double>& w) {
    std::vector<double> num(w.size()), den(w.size());
    for (std::size_t k = 0; k < w.size(); ++k) {
      num[k] = w[k] * std::norm(est[static_cast<Eigen::Index>(k)] - truth[k]);
      den[k] = w[k] * std::norm(truth[k]);
    }
    const double d = pairwise_sum(den.data(), den.size());
    if (!(d > 0.0)) throw InvalidInput("relative error: reference has zero norm");
    return std::sqrt(pairwise_sum(num.data(), num.size()) / d);
  }

  Eigen::MatrixXd f_coords_, u_coords_;
  std::vector<double> f_w_, u_w_;
  std::vector<ComplexVal> f_true_, u_true_;
};

}  // namespace

double pinn_relative_error_f(const CPinnParams& params, const DomainSpec& domain,
                             const std::function<ComplexVal(const Point&)>& truth, QuadratureSpec quad) {
  if (!truth) throw InvalidInput("pinn_relative_error_f: missing reference");
  return ErrorProbe(domain, 1.0, truth, nullptr, quad, quad).re_f(params);
}

double pinn_relative_error_u(const CPinnParams& params, const DomainSpec& domain, double T,
                             const std::function<ComplexVal(const Point&, double)>& truth, QuadratureSpec quad) {
  if (!truth) throw InvalidInput("pinn_relative_error_u: missing reference");
  if (!(T > 0.0)) throw InvalidInput("pinn_relative_error_u: T must be > 0");
  return ErrorProbe(domain, T, nullptr, truth, quad, quad).re_u(params);
}

TrainResult train(const TrainConfig& config, const PinnProblem& problem) {
  if (config.epochs < 0) throw InvalidInput("train: epochs must be >= 0");
  if (!(config.learning_rate > 0.0)) throw InvalidInput("train: learning rate must be > 0");
  if (config.history_every < 1) throw InvalidInput("train: history interval must be >= 1");
  const LossProblem& lp = problem.loss;
  lp.validate();
  const auto modes = enumerate_modes(lp.domain, lp.domain.dim() == 2 ? 16 : 8);
  const ResonanceReport res = resonance_check(lp.pde, modes, resonance_k_range(lp.pde, modes), kDegenerateTolerance);
  if (!res.ok) throw NumericalError("train: gamma is resonant with the spectrum");

  NetworkShape shape = config.shape;
  shape.dim = lp.domain.dim();
  TrainResult result;
  result.params = CPinnParams::initialize(shape, config.seed);
  CPinnParams& params = result.params;

  const ErrorProbe probe(lp.domain, lp.pde.T, problem.f_exact, problem.u_exact, {16, 8}, {4, 8});
  engine::LossEngine eng(lp);
  CPinnParams grad = CPinnParams::zeros_like(params);
  std::vector<double> flat = params.flatten();
  std::vector<double> m(flat.size(), 0.0), v(flat.size(), 0.0);
  double initial = 0.0;
  double b1t = 1.0, b2t = 1.0;

  for (long epoch = 0; epoch < config.epochs; ++epoch) {
    engine::set_zero(grad);
    const double value = eng.run(params, &grad).total;
    if (epoch == 0) initial = value;
    if (!std::isfinite(value) || value > config.divergence_factor * initial) {
      std::ostringstream msg;
      msg << "train: diverged at epoch " << epoch << " (loss " << value << ", initial " << initial << ")";
      throw NumericalError(msg.str());
    }
    result.loss_trace.push_back(value);
    if (epoch % config.history_every == 0)
      result.history.push_back({epoch, value, probe.re_f(params), probe.re_u(params)});

    const std::vector<double> g = grad.flatten();
    const double lr = config.rate_at(epoch);
    b1t *= config.adam_beta1;
    b2t *= config.adam_beta2;
    for (std::size_t k = 0; k < flat.size(); ++k) {
      if (!std::isfinite(g[k]))
        throw NumericalError("train: non-finite gradient at parameter " + std::to_string(k) + ", epoch " +
                             std::to_string(epoch));
      m[k] = config.adam_beta1 * m[k] + (1.0 - config.adam_beta1) * g[k];
      v[k] = config.adam_beta2 * v[k] + (1.0 - config.adam_beta2) * g[k] * g[k];
      const double mhat = m[k] / (1.0 - b1t);
      const double vhat = v[k] / (1.0 - b2t);
      flat[k] -= lr * mhat / (std::sqrt(vhat) + config.adam_epsilon);
    }
    params.unflatten(flat);
  }

  const double final_loss = eng.run(params, nullptr).total;
  result.re_f = probe.re_f(params);
  result.re_u = probe.re_u(params);
  result.history.push_back({config.epochs, final_loss, result.re_f, result.re_u});
  return result;
}

void write_history_csv(std::ostream& out, std::span<const HistoryRow> rows) {
  out << "epoch,loss,Re_f,Re_u\n";
  char buf[128];
  for (const auto& r : rows) {
    std::snprintf(buf, sizeof buf, "%ld,%.9g,%.9g,%.9g\n", r.epoch, r.loss, r.re_f, r.re_u);
    out << buf;
  }
}

std::vector<HistoryRow> read_history_csv(std::istream& in) {
  std::string line;
  if (!std::getline(in, line) || line != "epoch,loss,Re_f,Re_u") throw InvalidInput("history csv: bad header");
  std::vector<HistoryRow> rows;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    HistoryRow r;
    if (std::sscanf(line.c_str(), "%ld,%lg,%lg,%lg", &r.epoch, &r.loss, &r.re_f, &r.re_u) != 4)
      throw InvalidInput("history csv: malformed row '" + line + "'");
    rows.push_back(r);
  }
  return rows;
}

namespace {

constexpr char kMagic[5] = {'C', 'P', 'N', 'N', '1'};

template <class U>
void put_le(std::ostream& out, U v) {
  unsigned char bytes[sizeof(U)];
  for (std::size_t i = 0; i < sizeof(U); ++i) bytes[i] = static_cast<unsigned char>(v >> (8 * i));
  out.write(reinterpret_cast<const char*>(bytes), sizeof(U));
}

template <class U>
U get_le(std::istream& in) {
  unsigned char bytes[sizeof(U)];
  if (!in.read(reinterpret_cast<char*>(bytes), sizeof(U))) throw InvalidInput("checkpoint: truncated file");
  U v = 0;
  for (std::size_t i = 0; i < sizeof(U); ++i) v |= static_cast<U>(bytes[i]) << (8 * i);
  return v;
}

}  // namespace

void save_checkpoint(std::ostream& out, const CPinnParams& params) {
  params.validate();
  out.write(kMagic, sizeof kMagic);
  put_le<std::uint32_t>(out, static_cast<std::uint32_t>(params.dim));
  put_le<std::uint32_t>(out, params.complex_source ? 1u : 0u);
  put_le<std::uint32_t>(out, static_cast<std::uint32_t>(params.u_layers.size()));
  for (const auto& l : params.u_layers) {
    put_le<std::uint32_t>(out, static_cast<std::uint32_t>(l.in()));
    put_le<std::uint32_t>(out, static_cast<std::uint32_t>(l.out()));
  }
  put_le<std::uint32_t>(out, static_cast<std::uint32_t>(params.f_layers.size()));
  for (const auto& l : params.f_layers) {
    put_le<std::uint32_t>(out, static_cast<std::uint32_t>(l.in()));
    put_le<std::uint32_t>(out, static_cast<std::uint32_t>(l.out()));
  }
  const auto flat = params.flatten();
  put_le<std::uint64_t>(out, flat.size());
  for (double v : flat) put_le<std::uint64_t>(out, std::bit_cast<std::uint64_t>(v));
  if (!out) throw InvalidInput("checkpoint: write failed");
}

CPinnParams load_checkpoint(std::istream& in) {
  char magic[sizeof kMagic];
  if (!in.read(magic, sizeof magic) || std::memcmp(magic, kMagic, sizeof kMagic) != 0)
    throw InvalidInput("checkpoint: bad magic");
  CPinnParams p;
  p.dim = static_cast<int>(get_le<std::uint32_t>(in));
  p.complex_source = get_le<std::uint32_t>(in) != 0;
  const auto nu = get_le<std::uint32_t>(in);
  if (nu > 1024) throw InvalidInput("checkpoint: implausible layer count");
  for (std::uint32_t k = 0; k < nu; ++k) {
    const int i = static_cast<int>(get_le<std::uint32_t>(in));
    const int o = static_cast<int>(get_le<std::uint32_t>(in));
    p.u_layers.push_back({Eigen::MatrixXd(o, i), Eigen::MatrixXd(o, i), Eigen::VectorXd(o), Eigen::VectorXd(o)});
  }
  const auto nf = get_le<std::uint32_t>(in);
  if (nf > 1024) throw InvalidInput("checkpoint: implausible layer count");
  for (std::uint32_t k = 0; k < nf; ++k) {
    const int i = static_cast<int>(get_le<std::uint32_t>(in));
    const int o = static_cast<int>(get_le<std::uint32_t>(in));
    p.f_layers.push_back({Eigen::MatrixXd(o, i), Eigen::VectorXd(o)});
  }
  p.validate();
  const auto count = get_le<std::uint64_t>(in);
  if (count != p.parameter_count()) throw InvalidInput("checkpoint: parameter count disagrees with manifest");
  std::vector<double> flat(count);
  for (auto& v : flat) v = std::bit_cast<double>(get_le<std::uint64_t>(in));
  p.unflatten(flat);
  return p;
}

}  // namespace glinv
