#include "glinv/quadrature.hpp"

#include <cmath>
#include <numbers>

#include "glinv/error.hpp"

namespace glinv {

AxisRule gauss_legendre(int order) {
  if (order < 1) throw InvalidInput("gauss_legendre: order must be >= 1");
  AxisRule rule;
  rule.nodes.resize(order);
  rule.weights.resize(order);
  const int half = (order + 1) / 2;
  for (int i = 0; i < half; ++i) {
    // Tricomi initial guess, then Newton on P_order.
    double x = std::cos(std::numbers::pi * (i + 0.75) / (order + 0.5));
    double dp = 1.0;
    for (int iter = 0; iter < 100; ++iter) {
      double p0 = 1.0, p1 = x;
      for (int k = 2; k <= order; ++k) {
        const double pk = ((2.0 * k - 1.0) * x * p1 - (k - 1.0) * p0) / k;
        p0 = p1;
        p1 = pk;
      }
      const double pn = order == 1 ? x : p1;
      const double pnm1 = order == 1 ? 1.0 : p0;
      dp = order * (x * pn - pnm1) / (x * x - 1.0);
      const double dx = pn / dp;
      x -= dx;
      if (std::abs(dx) < 1e-16) break;
    }
    const double w = 2.0 / ((1.0 - x * x) * dp * dp);
    rule.nodes[i] = -x;
    rule.nodes[order - 1 - i] = x;
    rule.weights[i] = w;
    rule.weights[order - 1 - i] = w;
  }
  if (order % 2 == 1) rule.nodes[order / 2] = 0.0;
  return rule;
}

AxisRule composite_gauss_legendre(double lo, double hi, int panels, int order) {
  if (panels < 1) throw InvalidInput("composite_gauss_legendre: panels must be >= 1");
  if (!(hi > lo)) throw InvalidInput("composite_gauss_legendre: empty interval");
  const AxisRule base = gauss_legendre(order);
  AxisRule rule;
  rule.nodes.reserve(static_cast<std::size_t>(panels) * order);
  rule.weights.reserve(static_cast<std::size_t>(panels) * order);
  const double h = (hi - lo) / panels;
  for (int p = 0; p < panels; ++p) {
    const double a = lo + p * h;
    for (int q = 0; q < order; ++q) {
      rule.nodes.push_back(a + 0.5 * h * (base.nodes[q] + 1.0));
      rule.weights.push_back(0.5 * h * base.weights[q]);
    }
  }
  return rule;
}

double pairwise_sum(const double* data, std::size_t n) {
  if (n <= 8) {
    double s = 0.0;
    for (std::size_t i = 0; i < n; ++i) s += data[i];
    return s;
  }
  const std::size_t m = n / 2;
  return pairwise_sum(data, m) + pairwise_sum(data + m, n - m);
}

}  // namespace glinv
