#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <limits>
#include <numbers>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "glinv/autodiff.hpp"
#include "glinv/cpinn.hpp"
#include "glinv/experiment.hpp"
#include "glinv/forward_solver.hpp"
#include "glinv/inverse_local.hpp"
#include "glinv/inverse_spectral.hpp"

using namespace glinv;
namespace fs = std::filesystem;

namespace {

constexpr double kPi = std::numbers::pi;
using HD = HyperDual<ComplexVal>;
using Clock = std::chrono::steady_clock;

struct Verdict {
  bool passed = false;
  std::string detail;
};

std::string num(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.4g", v);
  return buf;
}

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

fs::path out_root() { return fs::current_path() / "acceptance_out"; }

DomainSpec line() { return DomainSpec::interval(kPi); }
DomainSpec square() { return DomainSpec::rectangle(kPi, kPi); }

CoefficientVector random_coefficients(const DomainSpec& d, std::size_t n, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  CoefficientVector c = CoefficientVector::zeros(enumerate_modes(d, n));
  for (auto& v : c.values) v = {u(rng), u(rng)};
  return c;
}

RunOutcome run_config(const std::string& text, const std::string& name) {
  ExperimentConfig c = parse_config(text);
  c.output_dir = out_root() / name;
  fs::remove_all(c.output_dir);
  std::ofstream log_file(out_root() / (name + ".log"), std::ios::binary);
  return run_experiment(c, log_file);
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

Verdict ac1_round_trip() {
  const PdeParams p;
  std::mt19937_64 rng(101);
  double worst = 0.0, sec = 0.0;
  for (int trial = 0; trial < 20; ++trial) {
    const int dim = 1 + trial % 2;
    const DomainSpec d = dim == 1 ? line() : square();
    const std::size_t n = 1 + static_cast<std::size_t>(trial % 8);
    const CoefficientVector f = random_coefficients(d, n, rng);
    const auto t0 = Clock::now();
    const TensorRule rule(d.box(), dim, {dim == 1 ? 32 : 16, 8});
    std::vector<ComplexVal> h(rule.size());
    const CoefficientVector none;
    for (std::size_t k = 0; k < rule.size(); ++k) h[k] = series_eval(none, f, p, rule.node(k), p.T);
    const auto rec = reconstruct_global({rule, h}, d, p, CutoffRule::defaults_for(dim));
    sec += seconds_since(t0);
    // orthonormal basis: the coefficient distance is the L2 distance
    double err = 0.0, norm = 0.0;
    for (std::size_t m = 0; m < rec.f.size(); ++m) {
      const auto it = std::find(f.modes.begin(), f.modes.end(), rec.f.modes[m]);
      const ComplexVal truth = it == f.modes.end() ? 0.0 : f.values[static_cast<std::size_t>(it - f.modes.begin())];
      err += std::norm(rec.f.values[m] - truth);
      norm += std::norm(truth);
    }
    worst = std::max(worst, std::sqrt(err / norm));
  }
  return {worst < 1e-8 && sec < 1.0, "max Re_f " + num(worst) + ", " + num(sec) + " s for 20 round trips"};
}

GridField benchmark_series(const DomainSpec& d, const GridSpec& grid, const PdeParams& p) {
  const auto modes = enumerate_modes(d, 1);
  CoefficientVector f = CoefficientVector::zeros(modes);
  f.values[0] = 1.0 / modes[0].normalization;
  return solve_series(CoefficientVector::zeros(modes), f, p, grid);
}

GridField benchmark_theta(const DomainSpec& d, const GridSpec& grid, const PdeParams& p) {
  const int dim = d.dim();
  const auto f = sample_grid(
      [dim](const Point& x) { return ComplexVal(std::sin(x.x) * (dim == 2 ? std::sin(x.y) : 1.0)); }, d, grid);
  const ComplexVal gamma = p.gamma;
  return solve_theta_scheme(SpatialSamples(f.size()), f, [gamma](double t) { return std::exp(-gamma * t); }, p, d,
                            grid, 0.5);
}

Verdict ac2_oracle_equivalence() {
  const auto t0 = Clock::now();
  const PdeParams p;
  const GridSpec g1{200, 0, 1000}, g2{64, 64, 1000};
  const double gap1 = relative_l2_distance(benchmark_theta(line(), g1, p), benchmark_series(line(), g1, p));
  const double gap2 = relative_l2_distance(benchmark_theta(square(), g2, p), benchmark_series(square(), g2, p));
  bool ratios_ok = true;
  std::string ratios;
  for (int dim : {1, 2}) {
    const DomainSpec d = dim == 1 ? line() : square();
    std::vector<double> errs;
    for (int n : {16, 32, 64}) {
      const GridSpec g{n, dim == 2 ? n : 0, n};
      errs.push_back(relative_l2_distance(benchmark_theta(d, g, p), benchmark_series(d, g, p)));
    }
    for (std::size_t k = 1; k < errs.size(); ++k) {
      const double r = errs[k - 1] / errs[k];
      ratios_ok = ratios_ok && std::abs(r - 4.0) <= 0.5;
      ratios += " " + num(r);
    }
  }
  const double sec = seconds_since(t0);
  return {gap1 < 1e-3 && gap2 < 1e-3 && ratios_ok && sec < 60.0,
          "gap 1D " + num(gap1) + ", 2D " + num(gap2) + "; ratios" + ratios + "; " + num(sec) + " s"};
}

Verdict ac3_kernel_bound() {
  const PdeParams p;
  double lo = std::numeric_limits<double>::infinity();
  std::size_t arg = 0;
  const auto modes = enumerate_modes(line(), 50);
  for (std::size_t n = 0; n < modes.size(); ++n) {
    const double v = modes[n].eigenvalue * std::abs(time_kernel(p, modes[n].eigenvalue, 1.0));
    if (v < lo) {
      lo = v;
      arg = n + 1;
    }
  }
  return {lo >= 0.2, "min lambda_n |I_n(1)| = " + num(lo) + " at n = " + std::to_string(arg)};
}

Verdict ac4_integral_identity() {
  const auto t0 = Clock::now();
  const PdeParams p;
  std::mt19937_64 rng(202);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  double worst = 0.0;
  for (int trial = 0; trial < 50; ++trial) {
    const int dim = trial % 5 == 4 ? 2 : 1;
    const DomainSpec d = dim == 1 ? line() : square();
    const std::size_t n = 1 + static_cast<std::size_t>(u(rng) * 10.0);
    const CoefficientVector f = random_coefficients(d, std::min<std::size_t>(n, 10), rng);
    const double t_end = 0.3 + 0.7 * u(rng);
    IdentityCheck r;
    if (trial % 2 == 0) {
      const double w = 0.2 + 1.5 * u(rng), lo = u(rng) * (kPi - w);
      Box support{{lo, 0.0}, {lo + w, 0.0}};
      if (dim == 2) {
        const double wy = 0.2 + 1.5 * u(rng), ly = u(rng) * (kPi - wy);
        support.lo.y = ly;
        support.hi.y = ly + wy;
      }
      r = integral_identity_check(f, TestFunction{support, 0.5 + u(rng), dim}, p, t_end);
    } else {
      r = integral_identity_check(f, random_coefficients(d, 1 + trial % 10, rng), p, t_end);
    }
    worst = std::max(worst, r.gap);
  }
  const double sec = seconds_since(t0);
  return {worst < 1e-6 && sec < 10.0, "max gap " + num(worst) + ", " + num(sec) + " s"};
}

CPinnParams random_network(int dim, int width, std::uint64_t seed, bool complex_source) {
  NetworkShape shape;
  shape.dim = dim;
  shape.width = width;
  shape.complex_source = complex_source;
  CPinnParams params = CPinnParams::initialize(shape, seed);
  std::mt19937_64 rng(seed * 7 + 1);
  std::uniform_real_distribution<double> u(-0.3, 0.3);
  std::vector<double> flat = params.flatten();
  for (auto& v : flat) v += u(rng) * 0.2;
  params.unflatten(flat);
  return params;
}

LossProblem random_problem(int dim, std::uint64_t seed) {
  LossProblem lp;
  lp.domain = dim == 1 ? line() : square();
  lp.sets = sample_collocation({8, 8, 8, 8}, lp.domain, Region::whole(lp.domain), 1.0, seed);
  lp.data.instants = {0.5, 1.0};
  std::mt19937_64 rng(seed + 5);
  std::uniform_real_distribution<double> u(-0.3, 0.3);
  for (int j = 0; j < 2; ++j) {
    std::vector<ComplexVal> v(lp.sets.data.size());
    for (auto& x : v) x = {u(rng), u(rng)};
    lp.data.values.push_back(v);
  }
  return lp;
}

Verdict ac5_gradients() {
  const auto t0 = Clock::now();
  std::mt19937_64 rng(303);
  std::uniform_real_distribution<double> u(0.2, 2.9);
  std::uniform_int_distribution<int> widths(4, 20);
  double worst_hd = 0.0, worst_param = 0.0;
  for (int trial = 0; trial < 100; ++trial) {
    const int dim = 1 + trial % 2;
    CPinnParams params = random_network(dim, widths(rng), 1000 + static_cast<std::uint64_t>(trial), trial % 3 == 0);

    const Point x{u(rng), u(rng)};
    const double t = u(rng) / 3.0;
    const auto eval = [&](std::span<const HD> in) { return forward_u_generic<HD>(params, in); };
    const auto d = laplacian_and_time(eval, x, t, dim);
    const auto val = [&](double a, double b, double tt) { return forward_u(params, {a, b}, tt); };
    const double h = 1e-4;
    const ComplexVal u0 = val(x.x, x.y, t);
    const ComplexVal ut = (val(x.x, x.y, t + h) - val(x.x, x.y, t - h)) / (2 * h);
    ComplexVal lap = (val(x.x + h, x.y, t) - 2.0 * u0 + val(x.x - h, x.y, t)) / (h * h);
    if (dim == 2) lap += (val(x.x, x.y + h, t) - 2.0 * u0 + val(x.x, x.y - h, t)) / (h * h);
    const double scale = std::max({std::abs(u0), std::abs(d.u_t), std::abs(d.laplacian), 1e-2});
    worst_hd = std::max({worst_hd, std::abs(d.u_t - ut) / scale, std::abs(d.laplacian - lap) / scale});

    const LossProblem lp = random_problem(dim, 2000 + static_cast<std::uint64_t>(trial));
    const GradientRecord g = param_gradient(params, lp);
    std::vector<double> flat = params.flatten();
    double gmax = 0.0;
    for (double v : g.flat) gmax = std::max(gmax, std::abs(v));
    const std::size_t stride = std::max<std::size_t>(1, flat.size() / 40);
    for (std::size_t k = trial % stride; k < flat.size(); k += stride) {
      const double step = 1e-6 * std::max(1.0, std::abs(flat[k]));
      const double x0 = flat[k];
      flat[k] = x0 + step;
      params.unflatten(flat);
      const double up = loss(params, lp).total;
      flat[k] = x0 - step;
      params.unflatten(flat);
      const double dn = loss(params, lp).total;
      flat[k] = x0;
      const double fd = (up - dn) / (2.0 * step);
      worst_param = std::max(worst_param, std::abs(fd - g.flat[k]) /
                                              std::max({std::abs(fd), std::abs(g.flat[k]), 1e-3 * gmax}));
    }
    params.unflatten(flat);
  }
  const double sec = seconds_since(t0);
  return {worst_hd < 1e-4 && worst_param < 1e-4 && sec < 30.0,
          "hyper-dual gap " + num(worst_hd) + ", parameter gap " + num(worst_param) + ", " + num(sec) + " s"};
}

Verdict ac6_layers() {
  std::mt19937_64 rng(404);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  std::uniform_int_distribution<int> size(1, 24);
  double worst = 0.0;
  for (int k = 0; k < 1000; ++k) {
    const int in = size(rng), out = size(rng);
    ComplexLinearLayer layer{Eigen::MatrixXd(out, in), Eigen::MatrixXd(out, in), Eigen::VectorXd(out),
                             Eigen::VectorXd(out)};
    Eigen::MatrixXcd w(out, in);
    Eigen::VectorXcd b(out), z(in);
    std::vector<ComplexVal> zs(static_cast<std::size_t>(in));
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
    for (int j = 0; j < in; ++j) zs[static_cast<std::size_t>(j)] = z[j] = {u(rng), u(rng)};
    const Eigen::VectorXcd ref = w * z + b;
    const auto got = layer_apply(layer, zs);
    for (int i = 0; i < out; ++i) {
      double scale = std::abs(b[i]);
      for (int j = 0; j < in; ++j) scale += std::abs(w(i, j)) * std::abs(z[j]);
      worst = std::max(worst, std::abs(got[static_cast<std::size_t>(i)] - ref[i]) / scale);
    }
  }
  const double eps = std::numeric_limits<double>::epsilon();
  return {worst < 10.0 * eps, "max gap " + num(worst / eps) + " eps"};
}

std::string medians_text(const std::vector<SummaryRow>& rows) {
  std::string s;
  for (const auto& r : rows) s += (s.empty() ? "" : ", ") + r.region + "@" + num(r.delta) + ": " + num(100.0 * r.re_f_median) + "%";
  return s;
}

Verdict ac7_pinn_1d() {
  const auto t0 = Clock::now();
  const RunOutcome out = run_config(
      "kind = train-pinn\nseeds = 5\n[data]\ndelta = 0, 0.001, 0.01, 0.1\n[train]\nepochs = 20000\n", "ac7");
  const double sec = seconds_since(t0);
  const auto& s = out.summary;
  bool ok = s.size() == 4 && s[0].re_f_median <= 0.05 && s[3].re_f_median <= 0.10 && sec <= 900.0;
  for (std::size_t k = 1; ok && k < s.size(); ++k) ok = s[k].re_f_median >= s[k - 1].re_f_median;
  return {ok, "median Re_f " + medians_text(s) + "; " + num(sec / 60.0) + " min"};
}

Verdict ac8_local_lsq() {
  const auto t0 = Clock::now();
  const std::string base =
      "kind = invert-local\n[data]\nregions = 0:0.5pi; 0:0.1pi; 0.3pi:0.5pi; 0:0.1pi|0.9pi:pi\n"
      "instants = 0.3, 0.5\n";
  const RunOutcome clean = run_config(base, "ac8_clean");
  const RunOutcome noisy = run_config(base + "delta = 0.01\n[experiment]\nseeds = 20\n", "ac8_noisy");
  const double sec = seconds_since(t0);
  bool ok = clean.summary.size() == 4 && noisy.summary.size() == 4 && sec < 30.0;
  double worst_clean = 0.0, worst_noisy = 0.0;
  for (const auto& r : clean.summary) worst_clean = std::max(worst_clean, r.re_f_median);
  for (const auto& r : noisy.summary) worst_noisy = std::max(worst_noisy, r.re_f_median);
  ok = ok && worst_clean < 1e-4 && worst_noisy < 0.05;
  return {ok, "noiseless max Re_f " + num(worst_clean) + "; delta 0.01 medians " + medians_text(noisy.summary) + "; " +
                  num(sec) + " s"};
}

Verdict ac9_pinn_2d() {
  const auto t0 = Clock::now();
  const RunOutcome global = run_config(
      "kind = train-pinn\nseeds = 3\n[domain]\ndim = 2\n[data]\ndelta = 0, 0.01, 0.1\n[train]\nepochs = 20000\n",
      "ac9_global");
  const RunOutcome local = run_config(
      "kind = train-pinn\nseeds = 3\n[domain]\ndim = 2\n[data]\ndelta = 0.001\ninstants = 0.5, 1\n"
      "regions = 0:0.5pix0:0.5pi; 0:0.2pix0:0.2pi; 0.3pi:0.5pix0.3pi:0.5pi; 0:0.1pix0:0.1pi|0.9pi:pix0.9pi:pi\n"
      "[train]\nepochs = 20000\n",
      "ac9_local");
  const double sec = seconds_since(t0);
  bool ok = global.summary.size() == 3 && local.summary.size() == 4 && sec <= 2700.0;
  for (const auto& r : global.summary) ok = ok && r.re_f_median <= 0.10;
  for (const auto& r : local.summary) ok = ok && r.re_f_median <= 0.15;
  return {ok, "global " + medians_text(global.summary) + "; local " + medians_text(local.summary) + "; " +
                  num(sec / 60.0) + " min"};
}

Verdict ac10_determinism() {
  const std::vector<std::pair<std::string, std::string>> configs{
      {"global", "kind = invert-global\nseeds = 6\n[data]\ndelta = 0, 0.01, 0.1\n"},
      {"local", "kind = invert-local\nseeds = 4\n[domain]\ndim = 2\n[data]\ndelta = 0, 0.01\n"
                "regions = 0:0.5pix0:0.5pi; 0:0.1pix0:0.1pi|0.9pi:pix0.9pi:pi\n"},
      {"pinn", "kind = train-pinn\nseeds = 3\n[data]\ndelta = 0, 0.1\n[collocation]\nn_int = 64\nn_sb = 32\n"
               "n_tb = 32\nn_d = 32\n[train]\nepochs = 200\n"},
      {"pinn2d", "kind = train-pinn\nseeds = 2\n[domain]\ndim = 2\n[data]\ndelta = 0.01\nregions = 0:0.5pix0:pi\n"
                 "[collocation]\nn_int = 32\nn_sb = 32\nn_tb = 32\nn_d = 32\n[train]\nepochs = 100\n"},
  };
  const char* saved = std::getenv("GLINV_THREADS");
  const std::string restore = saved ? saved : "";
  bool same = true;
  std::string detail;
  for (const auto& [name, text] : configs) {
    std::vector<std::string> bytes;
    for (const char* threads : {"1", "2", "4"}) {
      ::setenv("GLINV_THREADS", threads, 1);
      const std::string dir = "ac10_" + name + "_" + threads;
      run_config(text, dir);
      bytes.push_back(slurp(out_root() / dir / "results.csv") + slurp(out_root() / dir / "runs.csv"));
    }
    const bool ok = bytes[0] == bytes[1] && bytes[0] == bytes[2] && !bytes[0].empty();
    same = same && ok;
    detail += (detail.empty() ? "" : ", ") + name + (ok ? " identical" : " differs");
  }
  if (saved)
    ::setenv("GLINV_THREADS", restore.c_str(), 1);
  else
    ::unsetenv("GLINV_THREADS");
  return {same, detail + " across 1, 2 and 4 workers"};
}

}  // namespace

int main(int argc, char** argv) {
  const std::vector<std::pair<std::string, std::function<Verdict()>>> criteria{
      {"AC1", ac1_round_trip},  {"AC2", ac2_oracle_equivalence}, {"AC3", ac3_kernel_bound},
      {"AC4", ac4_integral_identity}, {"AC5", ac5_gradients},    {"AC6", ac6_layers},
      {"AC7", ac7_pinn_1d},     {"AC8", ac8_local_lsq},          {"AC9", ac9_pinn_2d},
      {"AC10", ac10_determinism},
  };
  const std::set<std::string> selected(argv + 1, argv + argc);
  fs::create_directories(out_root());

  int failures = 0;
  for (const auto& [name, fn] : criteria) {
    if (!selected.empty() && selected.count(name) == 0) continue;
    Verdict v;
    try {
      v = fn();
    } catch (const std::exception& e) {
      v = {false, std::string("exception: ") + e.what()};
    }
    if (!v.passed) ++failures;
    std::printf("%s %s: %s\n", name.c_str(), v.passed ? "PASS" : "FAIL", v.detail.c_str());
    std::fflush(stdout);
  }
  return failures == 0 ? 0 : 1;
}
