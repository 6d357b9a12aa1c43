#include <random>
#include <sstream>

#include "doctest.h"
#include "glinv/error.hpp"
#include "glinv/forward_solver.hpp"
#include "glinv/inverse_spectral.hpp"
#include "support.hpp"

using namespace glinv;
using glinv::test::kPi;

namespace {

// Independent value of I_n(t) for the default parameters.
ComplexVal kernel_oracle(const PdeParams& p, double lambda, double t) {
  const ComplexVal c = p.diffusion();
  return glinv::test::integrate([&](double s) { return std::exp(-c * lambda * (t - s)) * std::exp(-p.gamma * s); },
                                0.0, t);
}

SampledField sampled(const std::function<ComplexVal(const Point&)>& h, const DomainSpec& d, int panels) {
  return sample(h, TensorRule(d.box(), d.dim(), {panels, 8}));
}

}  // namespace

TEST_CASE("add_noise") {
  const std::vector<ComplexVal> h{{1.0, 2.0}, {-0.5, 0.1}, {3.0, 0.0}};
  const auto same = add_noise(h, {0.0, 42});
  CHECK(same == h);

  const auto a = add_noise(h, {0.01, 7});
  const auto b = add_noise(h, {0.01, 7});
  CHECK(a == b);
  CHECK(a != add_noise(h, {0.01, 8}));
  // one real multiplier per sample acts on re and im alike
  for (std::size_t k = 0; k < h.size(); ++k) {
    const ComplexVal ratio = a[k] / h[k];
    CHECK(std::abs(ratio.imag()) < 1e-15);
  }
  CHECK_THROWS_AS(add_noise(h, {-0.1, 1}), InvalidInput);
}

TEST_CASE("noise has zero mean and unit variance") {
  const std::size_t n = 100000;
  const std::vector<ComplexVal> h(n, ComplexVal(2.0, -1.0));
  const double delta = 0.01;
  const auto noisy = add_noise(h, {delta, 2024});
  double mean = 0.0, sq = 0.0;
  for (std::size_t k = 0; k < n; ++k) {
    const double xi = ((noisy[k] / h[k]).real() - 1.0) / delta;
    mean += xi;
    sq += xi * xi;
  }
  mean /= static_cast<double>(n);
  sq /= static_cast<double>(n);
  CHECK(std::abs(mean) < 0.01);
  CHECK(sq == doctest::Approx(1.0).epsilon(0.02));
}

TEST_CASE("reconstruct_global on zero data") {
  const DomainSpec d = glinv::test::unit_interval();
  const auto rec = reconstruct_global(sampled([](const Point&) { return ComplexVal(0.0); }, d, 32), d, PdeParams{},
                                      CutoffRule::defaults_for(1));
  REQUIRE(rec.f.size() == 8);
  for (const auto& c : rec.f.values) CHECK(c == ComplexVal(0.0));
}

TEST_CASE("reconstruct_global recovers the benchmark source") {
  const PdeParams p;
  const DomainSpec d = glinv::test::unit_interval();
  const auto rec = reconstruct_global(sampled([&](const Point& x) { return exact_reference_1d(p, x.x, 1.0); }, d, 32),
                                      d, p, CutoffRule::defaults_for(1));
  CHECK(std::abs(rec.f.values[0] - std::sqrt(kPi / 2.0)) < 1e-9);
  for (std::size_t n = 1; n < rec.f.size(); ++n) CHECK(std::abs(rec.f.values[n]) < 1e-9);
  CHECK(rec.dropped.empty());

  const DomainSpec sq = glinv::test::unit_square();
  const auto rec2 = reconstruct_global(
      sampled([&](const Point& x) { return exact_reference_2d(p, x.x, x.y, 1.0); }, sq, 16), sq, p,
      CutoffRule::defaults_for(2));
  CHECK(rec2.f.size() == 64);
  CHECK(std::abs(rec2.f.values[0] - kPi / 2.0) < 1e-9);
  for (std::size_t n = 1; n < rec2.f.size(); ++n) CHECK(std::abs(rec2.f.values[n]) < 1e-9);
}

TEST_CASE("reconstruct_global recovers two modes") {
  const PdeParams p;
  const DomainSpec d = glinv::test::unit_interval();
  const ComplexVal i1 = kernel_oracle(p, 1.0, 1.0), i3 = kernel_oracle(p, 9.0, 1.0);
  const auto h = [&](const Point& x) { return i1 * std::sin(x.x) + 0.5 * i3 * std::sin(3.0 * x.x); };
  const auto rec = reconstruct_global(sampled(h, d, 32), d, p, CutoffRule::defaults_for(1));
  const double c = std::sqrt(kPi / 2.0);
  const std::vector<ComplexVal> expected{c, 0.0, 0.5 * c, 0.0, 0.0, 0.0, 0.0, 0.0};
  for (std::size_t n = 0; n < expected.size(); ++n) CHECK(std::abs(rec.f.values[n] - expected[n]) < 1e-8);
}

TEST_CASE("cutoff floor zeroes and reports small kernels") {
  PdeParams p;
  const DomainSpec d = glinv::test::unit_interval();
  const auto h = sampled([&](const Point& x) { return exact_reference_1d(p, x.x, 1.0); }, d, 32);
  const double floor = 0.02;
  const auto rec = reconstruct_global(h, d, p, {8, floor, 0});
  REQUIRE_FALSE(rec.dropped.empty());
  for (std::size_t n : rec.dropped) {
    CHECK(std::abs(time_kernel(p, rec.f.modes[n].eigenvalue, 1.0)) <= floor);
    CHECK(rec.f.values[n] == ComplexVal(0.0));
  }
  CHECK(rec.dropped.front() > 0);

  // the 2D cap keeps only modes with both indices <= 2
  const DomainSpec sq = glinv::test::unit_square();
  const auto rec2 = reconstruct_global(sampled([](const Point&) { return ComplexVal(0.0); }, sq, 8), sq, p, {64, 1e-8, 2});
  CHECK(rec2.f.size() == 4);
  for (const auto& m : rec2.f.modes) CHECK(std::max(m.index[0], m.index[1]) <= 2);
}

TEST_CASE("reconstruct_global rejects resonant gamma") {
  PdeParams p;
  p.gamma = {1.0, 1.0 - 2.0 * kPi};  // I_1(1) = 0
  const DomainSpec d = glinv::test::unit_interval();
  CHECK(std::abs(kernel_oracle(p, 1.0, 1.0)) < 1e-12);
  const auto h = sampled([](const Point& x) { return ComplexVal(std::sin(x.x)); }, d, 16);
  CHECK_THROWS_AS(reconstruct_global(h, d, p, CutoffRule::defaults_for(1)), NumericalError);
}

TEST_CASE("relative_error_f") {
  const DomainSpec d = glinv::test::unit_interval();
  const auto f = [](const Point& x) { return ComplexVal(std::sin(x.x)); };
  CHECK(relative_error_f(f, f, d) == 0.0);
  CHECK(relative_error_f([&](const Point& x) { return 2.0 * f(x); }, f, d) == doctest::Approx(1.0).epsilon(1e-14));

  const auto phi5 = enumerate_modes(d, 5).back();
  const double norm = std::sqrt(kPi / 2.0);
  const auto est = [&](const Point& x) { return f(x) + phi5.value(x) * 1e-2 * norm; };
  CHECK(std::abs(relative_error_f(est, f, d) - 1e-2) < 1e-6);

  CHECK_THROWS_AS(relative_error_f(f, [](const Point&) { return ComplexVal(0.0); }, d), InvalidInput);
}

TEST_CASE("relative_error_u") {
  const PdeParams p;
  const DomainSpec d = glinv::test::unit_interval();
  GridField truth(d, {20, 0, 10}, 1.0), twice(d, {20, 0, 10}, 1.0);
  for (int k = 0; k < truth.nt(); ++k)
    for (int i = 0; i < truth.nx(); ++i) {
      truth.at(k, i) = exact_reference_1d(p, truth.x(i), truth.t(k));
      twice.at(k, i) = 2.0 * truth.at(k, i);
    }
  CHECK(relative_error_u(truth, truth) == 0.0);
  CHECK(relative_error_u(twice, truth) == doctest::Approx(1.0).epsilon(1e-14));
}

TEST_CASE("stability diagnostic") {
  CHECK(stability_diagnostic(0.0, 0.0, 1.0).ratio == 0.0);

  const PdeParams p;
  const DomainSpec d = glinv::test::unit_interval();
  const auto modes = enumerate_modes(d, 8);
  std::vector<double> ratios;
  for (double amp : {0.5, 1.0, 2.0}) {
    auto f = CoefficientVector::zeros(modes);
    f.values[0] = amp * std::sqrt(kPi / 2.0);
    const double h_norm = std::abs(f.values[0] * time_kernel(p, 1.0, 1.0));
    ratios.push_back(stability_diagnostic(f.l2_norm(), h_norm, f.lambda2_norm()).ratio);
  }
  CHECK(std::abs(ratios[0] - ratios[1]) < 1e-6);
  CHECK(std::abs(ratios[2] - ratios[1]) < 1e-6);

  ratios.clear();
  for (std::size_t n = 0; n < 3; ++n) {
    auto f = CoefficientVector::zeros(modes);
    f.values[n] = 1.0;
    // h = u(., T) computed independently per mode
    const double h_norm = std::abs(kernel_oracle(p, modes[n].eigenvalue, 1.0));
    const double r = stability_diagnostic(f.l2_norm(), h_norm, f.lambda2_norm()).ratio;
    CHECK(std::isfinite(r));
    ratios.push_back(r);
  }
  CHECK(*std::max_element(ratios.begin(), ratios.end()) / *std::min_element(ratios.begin(), ratios.end()) < 10.0);
}

TEST_CASE("global results csv round trip") {
  const std::vector<GlobalResultRow> rows{{0.0, 1, 1.25e-14}, {0.001, 2, 0.00641}, {0.1, 20, 0.6437}};
  std::stringstream s;
  write_global_results_csv(s, rows);
  CHECK(s.str().rfind("delta,seed,Re_f\n", 0) == 0);
  const auto back = read_global_results_csv(s);
  REQUIRE(back.size() == rows.size());
  for (std::size_t k = 0; k < rows.size(); ++k) {
    CHECK(back[k].delta == doctest::Approx(rows[k].delta).epsilon(1e-6));
    CHECK(back[k].seed == rows[k].seed);
    CHECK(back[k].re_f == doctest::Approx(rows[k].re_f).epsilon(1e-6));
  }
  std::istringstream bad("delta,seed\n");
  CHECK_THROWS_AS(read_global_results_csv(bad), InvalidInput);
}
