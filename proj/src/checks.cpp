#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <random>
#include <sstream>

#include "glinv/autodiff.hpp"
#include "glinv/cpinn.hpp"
#include "glinv/experiment.hpp"
#include "glinv/forward_solver.hpp"
#include "glinv/inverse_local.hpp"
#include "glinv/inverse_spectral.hpp"

namespace glinv {

namespace {

constexpr double kPi = std::numbers::pi;
using HD = HyperDual<ComplexVal>;

std::string num(double v) {
  std::ostringstream s;
  s.precision(3);
  s << v;
  return s.str();
}

class Suite {
 public:
  template <class Fn>
  void run(const std::string& name, Fn&& fn) {
    CheckOutcome c{name, false, {}};
    try {
      fn(c);
    } catch (const std::exception& e) {
      c.passed = false;
      c.detail = std::string("exception: ") + e.what();
    }
    out.push_back(std::move(c));
  }
  std::vector<CheckOutcome> out;
};

CoefficientVector random_coefficients(const DomainSpec& domain, std::size_t n, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  CoefficientVector c = CoefficientVector::zeros(enumerate_modes(domain, n));
  for (auto& v : c.values) v = {u(rng), u(rng)};
  return c;
}

double l2_on_region(const std::function<ComplexVal(const Point&)>& g, const Region& region) {
  double s = 0.0;
  for (const auto& box : region.boxes()) {
    const TensorRule rule(box, region.dim(), {16, 8});
    for (std::size_t k = 0; k < rule.size(); ++k) s += rule.weight(k) * std::norm(g(rule.node(k)));
  }
  return std::sqrt(s);
}

void spectral_checks(Suite& suite) {
  suite.run("orthonormality", [](CheckOutcome& c) {
    double worst = 0.0;
    for (int dim : {1, 2}) {
      const DomainSpec d = dim == 1 ? DomainSpec::interval(kPi) : DomainSpec::rectangle(kPi, 0.7 * kPi);
      const auto modes = enumerate_modes(d, 30);
      const TensorRule rule(d.box(), dim, {dim == 1 ? 64 : 16, 8});
      for (std::size_t i = 0; i < modes.size(); ++i) {
        for (std::size_t j = 0; j <= i; ++j) {
          double s = 0.0;
          for (std::size_t k = 0; k < rule.size(); ++k)
            s += rule.weight(k) * modes[i].value(rule.node(k)) * modes[j].value(rule.node(k));
          worst = std::max(worst, std::abs(s - (i == j ? 1.0 : 0.0)));
        }
      }
    }
    c.passed = worst < 1e-8;
    c.detail = "max |G - I| = " + num(worst);
  });

  suite.run("kernel_vs_quadrature", [](CheckOutcome& c) {
    double worst = 0.0;
    const AxisRule ref = gauss_legendre(12);
    for (double lam : {0.5, 1.0, 4.0, 25.0, 100.0}) {
      for (double t : {0.1, 0.5, 1.0, 2.0}) {
        for (ComplexVal gamma : {ComplexVal(1.0), ComplexVal(0.5, 2.0), ComplexVal(-1.0, 0.3)}) {
          PdeParams p;
          p.gamma = gamma;
          p.T = 2.0;
          const ComplexVal z = p.diffusion() * lam;
          ComplexVal s{};
          const int panels = 256;
          for (int q = 0; q < panels; ++q) {
            const double lo = t * q / panels, hi = t * (q + 1) / panels;
            for (std::size_t k = 0; k < ref.size(); ++k) {
              const double tau = 0.5 * (lo + hi) + 0.5 * (hi - lo) * ref.nodes[k];
              s += 0.5 * (hi - lo) * ref.weights[k] * std::exp(-z * (t - tau)) * std::exp(-gamma * tau);
            }
          }
          worst = std::max(worst, std::abs(time_kernel(p, lam, t) - s));
        }
      }
    }
    c.passed = worst < 1e-10;
    c.detail = "max gap = " + num(worst);
  });

  suite.run("kernel_lower_bound", [](CheckOutcome& c) {
    const PdeParams p;
    double lo = std::numeric_limits<double>::infinity();
    for (const auto& m : enumerate_modes(DomainSpec::interval(kPi), 50))
      lo = std::min(lo, m.eigenvalue * std::abs(time_kernel(p, m.eigenvalue, p.T)));
    c.passed = lo >= 0.2;
    c.detail = "min lambda |I_n(T)| = " + num(lo);
  });

  suite.run("degenerate_continuity", [](CheckOutcome& c) {
    PdeParams p;
    const double lam = 2.0;
    double worst = 0.0;
    for (double eta : {5e-13, 2e-12, 1e-9, 1e-7}) {
      p.gamma = p.diffusion() * lam + ComplexVal(eta, 0.0);
      const ComplexVal near = time_kernel(p, lam, 1.0);
      const ComplexVal limit = std::exp(-p.diffusion() * lam);
      worst = std::max(worst, std::abs(near - limit));
    }
    c.passed = worst < 1e-6;
    c.detail = "max branch gap = " + num(worst);
  });

  suite.run("superposition", [](CheckOutcome& c) {
    std::mt19937_64 rng(7);
    const PdeParams p;
    double worst = 0.0;
    for (int dim : {1, 2}) {
      const DomainSpec d = dim == 1 ? DomainSpec::interval(kPi) : DomainSpec::rectangle(kPi, kPi);
      const auto u0 = random_coefficients(d, 6, rng), u1 = random_coefficients(d, 6, rng);
      const auto f0 = random_coefficients(d, 6, rng), f1 = random_coefficients(d, 6, rng);
      const ComplexVal al(0.7, -0.2), be(-1.3, 0.4);
      CoefficientVector uc = u0, fc = f0;
      for (std::size_t n = 0; n < 6; ++n) {
        uc.values[n] = al * u0.values[n] + be * u1.values[n];
        fc.values[n] = al * f0.values[n] + be * f1.values[n];
      }
      for (double t : {0.2, 1.0}) {
        const Point x{1.1, 0.6};
        const ComplexVal lhs = series_eval(uc, fc, p, x, t);
        const ComplexVal rhs = al * series_eval(u0, f0, p, x, t) + be * series_eval(u1, f1, p, x, t);
        worst = std::max(worst, std::abs(lhs - rhs) / std::max(1.0, std::abs(rhs)));
      }
    }
    c.passed = worst < 1e-13;
    c.detail = "max gap = " + num(worst);
  });
}

struct ForwardPair {
  GridField series;
  GridField theta;
};

ForwardPair forward_pair(const DomainSpec& d, const GridSpec& grid, const PdeParams& p) {
  const auto modes = enumerate_modes(d, 1);
  CoefficientVector f = CoefficientVector::zeros(modes);
  f.values[0] = 1.0 / modes[0].normalization;
  const auto fx = [&](const Point& x) {
    return ComplexVal(std::sin(x.x) * (d.dim() == 2 ? std::sin(x.y) : 1.0));
  };
  GridField series = solve_series(CoefficientVector::zeros(modes), f, p, grid);
  const SpatialSamples zero(series.spatial_size(), ComplexVal(0.0));
  const ComplexVal gamma = p.gamma;
  GridField theta = solve_theta_scheme(zero, sample_grid(fx, d, grid), [gamma](double t) { return std::exp(-gamma * t); },
                                       p, d, grid, 0.5);
  return {std::move(series), std::move(theta)};
}

void forward_checks(Suite& suite) {
  const PdeParams p;
  suite.run("series_vs_theta", [&](CheckOutcome& c) {
    const auto one = forward_pair(DomainSpec::interval(kPi), {200, 0, 1000}, p);
    const auto two = forward_pair(DomainSpec::rectangle(kPi, kPi), {64, 64, 1000}, p);
    const double g1 = relative_l2_distance(one.theta, one.series);
    const double g2 = relative_l2_distance(two.theta, two.series);
    c.passed = g1 < 1e-3 && g2 < 1e-3;
    c.detail = "1D gap " + num(g1) + "; 2D gap " + num(g2);
  });

  suite.run("second_order_convergence", [&](CheckOutcome& c) {
    const DomainSpec d = DomainSpec::interval(kPi);
    const auto coarse = forward_pair(d, {20, 0, 20}, p);
    const auto fine = forward_pair(d, {40, 0, 40}, p);
    const double ratio =
        relative_l2_distance(coarse.theta, coarse.series) / relative_l2_distance(fine.theta, fine.series);
    c.passed = std::abs(ratio - 4.0) <= 0.5;
    c.detail = "error ratio " + num(ratio);
  });

  suite.run("energy_estimate", [&](CheckOutcome& c) {
    const DomainSpec d = DomainSpec::interval(kPi);
    const double src = std::sqrt(kPi / 2.0) * std::sqrt((1.0 - std::exp(-2.0)) / 2.0);
    std::vector<double> ratios;
    for (int n : {50, 100, 200}) ratios.push_back(energy_ratio(forward_pair(d, {n, 0, 2 * n}, p).theta, 0.0, src));
    double spread = 0.0;
    for (double r : ratios) spread = std::max(spread, std::abs(r / ratios.back() - 1.0));
    c.passed = spread <= 0.2;
    c.detail = "C = " + num(ratios.back()) + "; spread " + num(spread);
  });

  suite.run("zero_boundary", [&](CheckOutcome& c) {
    bool exact = true;
    for (int dim : {1, 2}) {
      const DomainSpec d = dim == 1 ? DomainSpec::interval(kPi) : DomainSpec::rectangle(kPi, kPi);
      const auto pair = forward_pair(d, {16, dim == 2 ? 16 : 0, 16}, p);
      for (const GridField* g : {&pair.series, &pair.theta})
        for (int k = 0; k < g->nt(); ++k)
          for (int i = 0; i < g->nx(); ++i)
            for (int j = 0; j < g->ny(); ++j)
              if (g->is_boundary(i, j) && g->at(k, i, j) != ComplexVal(0.0)) exact = false;
    }
    c.passed = exact;
    c.detail = exact ? "boundary nodes are exactly zero" : "nonzero boundary node";
  });
}

void inverse_checks(Suite& suite) {
  const PdeParams p;
  suite.run("global_round_trip", [&](CheckOutcome& c) {
    std::mt19937_64 rng(11);
    double worst = 0.0;
    for (int dim : {1, 2}) {
      const DomainSpec d = dim == 1 ? DomainSpec::interval(kPi) : DomainSpec::rectangle(kPi, kPi);
      const CoefficientVector f = random_coefficients(d, 8, rng);
      const TensorRule rule(d.box(), dim, {dim == 1 ? 32 : 16, 8});
      const CoefficientVector none;
      std::vector<ComplexVal> h(rule.size());
      for (std::size_t k = 0; k < rule.size(); ++k) h[k] = series_eval(none, f, p, rule.node(k), p.T);
      CutoffRule cut = CutoffRule::defaults_for(dim);
      const auto rec = reconstruct_global({rule, h}, d, p, cut);
      double err = 0.0, norm = 0.0;
      for (std::size_t n = 0; n < rec.f.size(); ++n) {
        const auto it = std::find(f.modes.begin(), f.modes.end(), rec.f.modes[n]);
        const ComplexVal truth = it == f.modes.end() ? 0.0 : f.values[static_cast<std::size_t>(it - f.modes.begin())];
        err += std::norm(rec.f.values[n] - truth);
        norm += std::norm(truth);
      }
      worst = std::max(worst, std::sqrt(err / norm));
    }
    c.passed = worst < 1e-8;
    c.detail = "max relative coefficient error " + num(worst);
  });

  suite.run("noise_monotonicity", [&](CheckOutcome& c) {
    ExperimentConfig cfg;
    cfg.kind = ExperimentKind::InvertGlobal;
    const DomainSpec d = DomainSpec::interval(kPi);
    const TensorRule rule(d.box(), 1, {32, 8});
    std::vector<ComplexVal> clean(rule.size());
    const double lam = 1.0;
    for (std::size_t k = 0; k < rule.size(); ++k) clean[k] = time_kernel(p, lam, p.T) * std::sin(rule.node(k).x);
    std::vector<double> medians;
    for (double delta : {0.0, 1e-3, 1e-2, 1e-1}) {
      std::vector<double> errs;
      for (std::uint64_t seed = 1; seed <= 20; ++seed) {
        const auto rec = reconstruct_global({rule, add_noise(clean, {delta, SeedSet::derive(seed).noise})}, d, p,
                                            CutoffRule::defaults_for(1));
        errs.push_back(relative_error_f([&](const Point& x) { return rec.f.evaluate(x); },
                                        [](const Point& x) { return ComplexVal(std::sin(x.x)); }, d));
      }
      std::sort(errs.begin(), errs.end());
      medians.push_back(0.5 * (errs[9] + errs[10]));
    }
    c.passed = std::is_sorted(medians.begin(), medians.end());
    c.detail = "medians " + num(medians[0]) + " " + num(medians[1]) + " " + num(medians[2]) + " " + num(medians[3]);
  });

  suite.run("cutoff_safety", [&](CheckOutcome& c) {
    const DomainSpec d = DomainSpec::interval(kPi);
    std::mt19937_64 rng(5);
    const CoefficientVector f = random_coefficients(d, 8, rng);
    const TensorRule rule(d.box(), 1, {32, 8});
    const CoefficientVector none;
    std::vector<ComplexVal> h(rule.size());
    for (std::size_t k = 0; k < rule.size(); ++k) h[k] = series_eval(none, f, p, rule.node(k), p.T);
    const double floor = 0.03;
    const auto rec = reconstruct_global({rule, h}, d, p, {8, floor, 0});
    bool ok = !rec.dropped.empty();
    for (std::size_t n = 0; n < rec.f.size(); ++n) {
      const bool small = std::abs(time_kernel(p, rec.f.modes[n].eigenvalue, p.T)) <= floor;
      const bool listed = std::find(rec.dropped.begin(), rec.dropped.end(), n) != rec.dropped.end();
      if (small != listed) ok = false;
      if (small && rec.f.values[n] != ComplexVal(0.0)) ok = false;
    }
    c.passed = ok;
    c.detail = std::to_string(rec.dropped.size()) + " modes zeroed and reported";
  });

  suite.run("integral_identity", [&](CheckOutcome& c) {
    std::mt19937_64 rng(13);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    const DomainSpec d = DomainSpec::interval(kPi);
    double worst = 0.0;
    for (int trial = 0; trial < 10; ++trial) {
      const CoefficientVector f = random_coefficients(d, 1 + trial % 10, rng);
      const double lo = u(rng) * 2.0;
      const Box support{{lo, 0.0}, {lo + 0.3 + u(rng), 0.0}};
      const TestFunction phi{support, 1.0, 1};
      worst = std::max(worst, integral_identity_check(f, phi, p, p.T).gap);
    }
    c.passed = worst < 1e-6;
    c.detail = "max gap " + num(worst);
  });

  suite.run("b_norm_bound", [&](CheckOutcome& c) {
    std::mt19937_64 rng(17);
    const DomainSpec d = DomainSpec::interval(kPi);
    const Region region(1, {Box{{0.0, 0.0}, {0.5 * kPi, 0.0}}});
    const CoefficientVector f = random_coefficients(d, 6, rng);
    const TestDictionary dict = build_dictionary(region);
    const double t1 = 0.5, t2 = 1.0;
    const double lhs = b_norm_lower_bound(f, dict, p, t1, t2);
    const CoefficientVector none;
    double rhs = 0.0;
    for (double t : {t1, t2}) rhs += l2_on_region([&](const Point& x) { return series_eval(none, f, p, x, t); }, region);
    c.passed = lhs <= rhs + 1e-8;
    c.detail = "bound " + num(lhs) + " <= " + num(rhs);
  });

  const DomainSpec d = DomainSpec::interval(kPi);
  const auto box = [](double lo, double hi) { return Box{{lo * kPi, 0.0}, {hi * kPi, 0.0}}; };
  const std::vector<Region> regions{Region(1, {box(0.0, 0.5)}), Region(1, {box(0.0, 0.1)}),
                                    Region(1, {box(0.3, 0.5)}), Region(1, {box(0.0, 0.1), box(0.9, 1.0)})};
  const auto truth = [](const Point& x, double t) { return time_kernel(PdeParams{}, 1.0, t) * std::sin(x.x); };
  const auto lsq = [&](const Region& r, std::size_t n) {
    const auto obs = make_observations(r, lattice_points(r, 64), {0.3, 0.5}, truth, {});
    return reconstruct_local_lsq(obs, d, p, n);
  };

  suite.run("condition_monotonicity", [&](CheckOutcome& c) {
    const double big = lsq(regions[0], 6).condition;
    const double small = lsq(regions[1], 6).condition;
    const double inner = lsq(regions[2], 6).condition;
    c.passed = small >= big && inner >= big;
    c.detail = "cond " + num(big) + " -> " + num(small) + " and " + num(inner);
  });

  suite.run("uniqueness_witness", [&](CheckOutcome& c) {
    bool ok = true;
    std::string detail;
    for (const auto& r : regions) {
      const auto rec = lsq(r, 6);
      ok = ok && rec.sigma_min > 1e-12 * rec.sigma_max;
      detail += (detail.empty() ? "" : "; ") + r.label() + " sigma_min " + num(rec.sigma_min);
    }
    c.passed = ok;
    c.detail = detail;
  });
}

void autodiff_checks(Suite& suite) {
  suite.run("hyperdual_algebra", [](CheckOutcome& c) {
    std::mt19937_64 rng(19);
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    const auto draw = [&] { return HD({u(rng), u(rng)}, {u(rng), u(rng)}, {u(rng), u(rng)}); };
    double worst = 0.0;
    for (int k = 0; k < 200; ++k) {
      const HD a = draw(), b = draw(), e = draw();
      const HD l = (a * b) * e, r = a * (b * e);
      const HD pr = a * b;
      worst = std::max({worst, std::abs(l.value - r.value), std::abs(l.d1 - r.d1), std::abs(l.d2 - r.d2),
                        std::abs(pr.d1 - (a.d1 * b.value + a.value * b.d1)),
                        std::abs(pr.d2 - (a.d2 * b.value + 2.0 * a.d1 * b.d1 + a.value * b.d2))});
    }
    c.passed = worst < 1e-13;
    c.detail = "max deviation " + num(worst);
  });

  suite.run("hyperdual_vs_fd", [](CheckOutcome& c) {
    std::mt19937_64 rng(23);
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    double worst = 0.0;
    for (int k = 0; k < 50; ++k) {
      const ComplexVal w(u(rng), u(rng)), s(1.5 + u(rng), u(rng));
      const auto fn = [&](const HD& x) {
        const HD inner = x * HD(w) + HD(s);
        const HyperDual<double> sr = sigma(real_part(exp(inner) / (x * x + HD(2.0))));
        return make_complex(sr, HyperDual<double>(0.0)) + HD(ComplexVal(0.0, 1.0)) * tanh(inner);
      };
      const auto val = [&](double x) { return fn(HD(ComplexVal(x))).value; };
      const double x0 = u(rng);
      const HD r = fn(seed(ComplexVal(x0), true));
      const double h1 = 1e-6, h2 = 1e-4;
      const ComplexVal fd1 = (val(x0 + h1) - val(x0 - h1)) / (2.0 * h1);
      const ComplexVal fd2 = (val(x0 + h2) - 2.0 * val(x0) + val(x0 - h2)) / (h2 * h2);
      const double scale = std::max(1.0, std::abs(r.value));
      worst = std::max({worst, std::abs(r.d1 - fd1) / scale, std::abs(r.d2 - fd2) / scale});
    }
    c.passed = worst < 1e-5;
    c.detail = "max gap " + num(worst);
  });
}

CPinnParams random_network(int dim, int width, std::uint64_t seed, bool complex_source = false) {
  NetworkShape shape;
  shape.dim = dim;
  shape.width = width;
  shape.complex_source = complex_source;
  CPinnParams params = CPinnParams::initialize(shape, seed);
  std::mt19937_64 rng(seed ^ 0x5bd1e995ULL);
  std::uniform_real_distribution<double> u(-0.3, 0.3);
  for (auto& l : params.u_layers) {
    for (Eigen::Index i = 0; i < l.b_re.size(); ++i) {
      l.b_re[i] = u(rng);
      l.b_im[i] = u(rng);
    }
  }
  for (auto& l : params.f_layers)
    for (Eigen::Index i = 0; i < l.b.size(); ++i) l.b[i] = u(rng);
  return params;
}

LossProblem small_problem(int dim, std::uint64_t seed, std::size_t n = 12) {
  LossProblem lp;
  lp.domain = dim == 1 ? DomainSpec::interval(kPi) : DomainSpec::rectangle(kPi, kPi);
  lp.sets = sample_collocation({n, n, n, n}, lp.domain, Region::whole(lp.domain), 1.0, seed);
  lp.data.instants = {0.5, 1.0};
  std::mt19937_64 rng(seed + 99);
  std::uniform_real_distribution<double> u(-0.2, 0.2);
  for (int j = 0; j < 2; ++j) {
    std::vector<ComplexVal> v(lp.sets.data.size());
    for (auto& x : v) x = {u(rng), u(rng)};
    lp.data.values.push_back(v);
  }
  return lp;
}

void cpinn_checks(Suite& suite) {
  suite.run("inactive_direction", [](CheckOutcome& c) {
    bool same = true;
    for (int dim : {1, 2}) {
      const CPinnParams params = random_network(dim, 20, 29);
      for (int k = 0; k < 20; ++k) {
        const Point p{0.1 * k, 0.05 * k + 0.3};
        const double t = 0.03 * k;
        std::vector<HD> in{HD(ComplexVal(p.x))};
        if (dim == 2) in.push_back(HD(ComplexVal(p.y)));
        in.push_back(HD(ComplexVal(t)));
        const HD r = forward_u_generic<HD>(params, in);
        if (r.value != forward_u(params, p, t) || r.d1 != ComplexVal(0.0) || r.d2 != ComplexVal(0.0)) same = false;
      }
    }
    c.passed = same;
    c.detail = same ? "bit-identical" : "mismatch";
  });

  suite.run("layer_equivalence", [](CheckOutcome& c) {
    std::mt19937_64 rng(31);
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    std::uniform_int_distribution<int> size(1, 24);
    double worst = 0.0;
    for (int k = 0; k < 1000; ++k) {
      const int in = size(rng), out = size(rng);
      ComplexLinearLayer layer{Eigen::MatrixXd(out, in), Eigen::MatrixXd(out, in), Eigen::VectorXd(out),
                               Eigen::VectorXd(out)};
      Eigen::MatrixXcd w(out, in);
      Eigen::VectorXcd b(out), z(in);
      for (int i = 0; i < out; ++i) {
        for (int j = 0; j < in; ++j) {
          layer.w_re(i, j) = u(rng);
          layer.w_im(i, j) = u(rng);
          w(i, j) = {layer.w_re(i, j), layer.w_im(i, j)};
        }
        layer.b_re[i] = u(rng);
        layer.b_im[i] = u(rng);
        b[i] = {layer.b_re[i], layer.b_im[i]};
      }
      std::vector<ComplexVal> zs(static_cast<std::size_t>(in));
      for (int j = 0; j < in; ++j) zs[static_cast<std::size_t>(j)] = z[j] = {u(rng), u(rng)};
      const Eigen::VectorXcd ref = w * z + b;
      const auto got = layer_apply(layer, zs);
      double scale = 0.0;
      for (int i = 0; i < out; ++i) {
        for (int j = 0; j < in; ++j) scale += std::abs(w(i, j)) * std::abs(z[j]);
        scale += std::abs(b[i]);
      }
      for (int i = 0; i < out; ++i) worst = std::max(worst, std::abs(got[static_cast<std::size_t>(i)] - ref[i]) / scale);
    }
    const double eps = std::numeric_limits<double>::epsilon();
    c.passed = worst < 10.0 * eps;
    c.detail = "max gap " + num(worst / eps) + " eps";
  });

  suite.run("param_gradient_fd", [](CheckOutcome& c) {
    double worst = 0.0;
    for (int dim : {1, 2}) {
      const LossProblem lp = small_problem(dim, 37 + dim, 8);
      CPinnParams params = random_network(dim, 20, 41 + dim, dim == 2);
      const GradientRecord g = param_gradient(params, lp);
      std::vector<double> flat = params.flatten();
      double gmax = 0.0;
      for (double v : g.flat) gmax = std::max(gmax, std::abs(v));
      for (std::size_t k = 0; k < flat.size(); k += 3) {
        const double h = 1e-6 * std::max(1.0, std::abs(flat[k]));
        const double x0 = flat[k];
        flat[k] = x0 + h;
        params.unflatten(flat);
        const double up = loss(params, lp).total;
        flat[k] = x0 - h;
        params.unflatten(flat);
        const double dn = loss(params, lp).total;
        flat[k] = x0;
        const double fd = (up - dn) / (2.0 * h);
        worst = std::max(worst, std::abs(fd - g.flat[k]) / std::max({std::abs(fd), std::abs(g.flat[k]), 1e-3 * gmax}));
      }
      params.unflatten(flat);
    }
    c.passed = worst < 1e-4;
    c.detail = "max relative gap " + num(worst);
  });

  suite.run("residual_consistency", [](CheckOutcome& c) {
    const PdeParams pde;
    const ComplexVal z = pde.diffusion();
    const auto u = [&](std::span<const HD> in) {
      const HD ix = HD(ComplexVal(0.0, 1.0)) * in[0];
      const HD s = (exp(ix) - exp(-ix)) / HD(ComplexVal(0.0, 2.0));
      const HD g = (exp(HD(-pde.gamma) * in[1]) - exp(HD(-z) * in[1])) / HD(z - pde.gamma);
      return s * g;
    };
    const auto f = [](const Point& p) { return ComplexVal(std::sin(p.x)); };
    double worst = 0.0;
    for (int i = 1; i < 20; ++i)
      for (int k = 1; k <= 10; ++k)
        worst = std::max(worst, std::abs(residual_interior(u, f, pde, {kPi * i / 20.0, 0.0}, 0.1 * k, 1)));
    c.passed = worst < 1e-6;
    c.detail = "max |R_int| " + num(worst);
  });

  suite.run("training_determinism", [](CheckOutcome& c) {
    PinnProblem pb;
    pb.loss = small_problem(1, 43, 16);
    pb.f_exact = [](const Point& p) { return ComplexVal(std::sin(p.x)); };
    pb.u_exact = [](const Point& p, double t) { return exact_reference_1d(PdeParams{}, p.x, t); };
    TrainConfig tc;
    tc.epochs = 40;
    tc.history_every = 10;
    tc.seed = 3;
    const TrainResult a = train(tc, pb);
    const TrainResult b = train(tc, pb);
    bool same = a.params.flatten() == b.params.flatten() && a.history.size() == b.history.size();
    for (std::size_t k = 0; same && k < a.history.size(); ++k)
      same = a.history[k].loss == b.history[k].loss && a.history[k].re_f == b.history[k].re_f;
    c.passed = same;
    c.detail = same ? "bit-identical histories" : "histories differ";
  });

  suite.run("loss_permutation", [](CheckOutcome& c) {
    double worst = 0.0;
    for (int dim : {1, 2}) {
      const LossProblem lp = small_problem(dim, 47, 32);
      const CPinnParams params = random_network(dim, 20, 53);
      LossProblem shuffled = lp;
      std::mt19937_64 rng(59);
      std::shuffle(shuffled.sets.interior.begin(), shuffled.sets.interior.end(), rng);
      std::shuffle(shuffled.sets.boundary.begin(), shuffled.sets.boundary.end(), rng);
      std::shuffle(shuffled.sets.initial.begin(), shuffled.sets.initial.end(), rng);
      std::vector<std::size_t> order(lp.sets.data.size());
      for (std::size_t k = 0; k < order.size(); ++k) order[k] = k;
      std::shuffle(order.begin(), order.end(), rng);
      for (std::size_t k = 0; k < order.size(); ++k) {
        shuffled.sets.data[k] = lp.sets.data[order[k]];
        for (std::size_t j = 0; j < lp.data.values.size(); ++j) shuffled.data.values[j][k] = lp.data.values[j][order[k]];
      }
      const double a = loss(params, lp).total, b = loss(params, shuffled).total;
      worst = std::max(worst, std::abs(a - b) / a);
    }
    c.passed = worst < 1e-12;
    c.detail = "max relative change " + num(worst);
  });
}

}  // namespace

std::vector<CheckOutcome> run_invariant_checks() {
  Suite suite;
  spectral_checks(suite);
  forward_checks(suite);
  inverse_checks(suite);
  autodiff_checks(suite);
  cpinn_checks(suite);
  return suite.out;
}

}  // namespace glinv
