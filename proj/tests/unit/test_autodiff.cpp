#include <random>

#include "doctest.h"
#include "glinv/autodiff.hpp"
#include "glinv/cpinn.hpp"
#include "support.hpp"

using namespace glinv;
using HD = HyperDual<ComplexVal>;
using HR = HyperDual<double>;

namespace {

HD sin_hd(const HD& x) { return chain(x, std::sin(x.value), std::cos(x.value), -std::sin(x.value)); }

HD random_hd(std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  return HD({u(rng), u(rng)}, {u(rng), u(rng)}, {u(rng), u(rng)});
}

}  // namespace

TEST_CASE("seeded polynomials") {
  const HR x = seed(2.0, true);
  const HR cube = x * x * x;
  CHECK(cube.value == 8.0);
  CHECK(cube.d1 == 12.0);
  CHECK(cube.d2 == 12.0);

  const HD z = seed(ComplexVal(1.0, 1.0), true);
  const HD sq = z * z;
  CHECK(sq.value == ComplexVal(0.0, 2.0));
  CHECK(sq.d1 == ComplexVal(2.0, 2.0));
  CHECK(sq.d2 == ComplexVal(2.0, 0.0));

  const HD c = seed(ComplexVal(0.3, -0.7), false);
  const HD r = exp(tanh(c * c + HD(ComplexVal(1.0))) / (c + HD(ComplexVal(2.0))));
  CHECK(r.d1 == ComplexVal(0.0));
  CHECK(r.d2 == ComplexVal(0.0));
}

TEST_CASE("elementary functions") {
  const HR s0 = sigma(seed(0.0, true));
  CHECK(s0.value == 0.0);
  CHECK(s0.d1 == 0.0);
  CHECK(s0.d2 == doctest::Approx(2.0));

  const HR s1 = sigma(seed(1.0, true));
  const double h = 1e-6;
  const double fd = (sigma(1.0 + h) - sigma(1.0 - h)) / (2 * h);
  CHECK(s1.d1 == doctest::Approx(1.181568).epsilon(1e-6));
  CHECK(std::abs(s1.d1 - fd) < 1e-6);

  const HR t0 = tanh(seed(0.0, true));
  CHECK(t0.value == 0.0);
  CHECK(t0.d1 == 1.0);
  CHECK(t0.d2 == 0.0);

  const HR e = exp(seed(0.5, true));
  CHECK(e.d1 == doctest::Approx(std::exp(0.5)));
  CHECK(e.d2 == doctest::Approx(std::exp(0.5)));

  const HR q = HR(1.0) / seed(2.0, true);
  CHECK(q.value == 0.5);
  CHECK(q.d1 == doctest::Approx(-0.25));
  CHECK(q.d2 == doctest::Approx(0.25));
  CHECK_THROWS_AS(HR(1.0) / HR(0.0), InvalidInput);
}

TEST_CASE("algebra identities on random inputs") {
  std::mt19937_64 rng(1);
  for (int k = 0; k < 500; ++k) {
    const HD a = random_hd(rng), b = random_hd(rng), c = random_hd(rng);
    const HD l = (a * b) * c, r = a * (b * c);
    CHECK(std::abs(l.d2 - r.d2) < 1e-13);
    CHECK(std::abs((a + b).d2 - (b + a).d2) == 0.0);
    const HD p = a * b;
    CHECK(std::abs(p.d2 - (a.d2 * b.value + 2.0 * a.d1 * b.d1 + a.value * b.d2)) < 1e-14);
    const HD dist = a * (b + c) - (a * b + a * c);
    CHECK(std::abs(dist.value) + std::abs(dist.d1) + std::abs(dist.d2) < 1e-13);
    if (std::abs(b.value) > 0.1) {
      const HD back = (a / b) * b - a;
      CHECK(std::abs(back.value) + std::abs(back.d1) + std::abs(back.d2) < 1e-10);
    }
  }
}

TEST_CASE("compositions match central differences") {
  std::mt19937_64 rng(2);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  for (int k = 0; k < 100; ++k) {
    const ComplexVal w(u(rng), u(rng)), s(u(rng), u(rng));
    const auto fn = [&](const HD& x) {
      const HD inner = x * HD(w) + HD(s);
      return make_complex(sigma(real_part(inner)), sigma(imag_part(inner))) * exp(inner) /
             (tanh(inner) + HD(ComplexVal(3.0)));
    };
    const double x0 = u(rng);
    const HD r = fn(seed(ComplexVal(x0), true));
    const auto val = [&](double x) { return fn(HD(ComplexVal(x))).value; };
    const double h1 = 1e-6, h2 = 1e-4;
    const ComplexVal fd1 = (val(x0 + h1) - val(x0 - h1)) / (2 * h1);
    const ComplexVal fd2 = (val(x0 + h2) - 2.0 * val(x0) + val(x0 - h2)) / (h2 * h2);
    const double scale = std::max({1.0, std::abs(r.value), std::abs(r.d1), std::abs(r.d2)});
    CHECK(std::abs(r.d1 - fd1) / scale < 1e-5);
    CHECK(std::abs(r.d2 - fd2) / scale < 1e-5);
  }
}

TEST_CASE("laplacian_and_time on analytic evaluators") {
  const auto wave = [](std::span<const HD> in) { return sin_hd(in[0]) * exp(-in[1]); };
  const auto d = laplacian_and_time(wave, Point{0.7}, 0.4, 1);
  const double expected = -std::sin(0.7) * std::exp(-0.4);
  CHECK(std::abs(d.u - ComplexVal(-expected)) < 1e-15);
  CHECK(std::abs(d.laplacian - ComplexVal(expected)) < 1e-15);
  CHECK(std::abs(d.u_t - ComplexVal(expected)) < 1e-15);

  const auto poly = [](std::span<const HD> in) { return in[0] * in[0] + in[1]; };
  const auto q = laplacian_and_time(poly, Point{1.5}, 0.25, 1);
  CHECK(q.u == ComplexVal(1.5 * 1.5 + 0.25));
  CHECK(q.u_t == ComplexVal(1.0));
  CHECK(q.laplacian == ComplexVal(2.0));

  const auto poly2 = [](std::span<const HD> in) { return in[0] * in[0] * in[1] + in[1] * in[1] * in[1] + in[2]; };
  const auto q2 = laplacian_and_time(poly2, Point{2.0, 3.0}, 0.5, 2);
  CHECK(q2.laplacian == ComplexVal(2.0 * 3.0 + 6.0 * 3.0));
  CHECK(q2.u_t == ComplexVal(1.0));
}

TEST_CASE("network derivatives match central differences") {
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> u(0.2, 2.8);
  for (int trial = 0; trial < 20; ++trial) {
    const int dim = 1 + trial % 2;
    NetworkShape shape;
    shape.dim = dim;
    shape.width = 6;
    const CPinnParams params = CPinnParams::initialize(shape, 100 + static_cast<std::uint64_t>(trial));
    const Point p{u(rng), u(rng)};
    const double t = u(rng) / 3.0;
    const auto eval = [&](std::span<const HD> in) { return forward_u_generic<HD>(params, in); };
    const auto d = laplacian_and_time(eval, p, t, dim);
    const auto val = [&](double x, double y, double tt) { return forward_u(params, {x, y}, tt); };
    const double h = 1e-4;
    const ComplexVal u0 = val(p.x, p.y, t);
    const ComplexVal ut = (val(p.x, p.y, t + h) - val(p.x, p.y, t - h)) / (2 * h);
    ComplexVal lap = (val(p.x + h, p.y, t) - 2.0 * u0 + val(p.x - h, p.y, t)) / (h * h);
    if (dim == 2) lap += (val(p.x, p.y + h, t) - 2.0 * u0 + val(p.x, p.y - h, t)) / (h * h);
    const double scale = std::max({1.0, std::abs(u0)});
    CHECK(std::abs(d.u - u0) < 1e-14 * scale);
    CHECK(std::abs(d.u_t - ut) / scale < 1e-5);
    CHECK(std::abs(d.laplacian - lap) / scale < 1e-5);
  }
}

TEST_CASE("inactive passes equal plain complex evaluation") {
  NetworkShape shape;
  shape.dim = 2;
  const CPinnParams params = CPinnParams::initialize(shape, 9);
  const std::array<double, 3> in{0.4, 1.9, 0.3};
  std::array<HD, 3> hd;
  for (int k = 0; k < 3; ++k) hd[k] = seed(ComplexVal(in[k]), false);
  const HD r = forward_u_generic<HD>(params, std::span<const HD>(hd));
  const ComplexVal plain = forward_u(params, {in[0], in[1]}, in[2]);
  CHECK(r.value == plain);
  CHECK(r.d1 == ComplexVal(0.0));
  CHECK(r.d2 == ComplexVal(0.0));
}
