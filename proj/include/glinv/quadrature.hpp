#pragma once

#include <array>
#include <cstddef>
#include <vector>

namespace glinv {

/// Nodes and weights of a one-dimensional rule.
struct AxisRule {
  std::vector<double> nodes;
  std::vector<double> weights;

  std::size_t size() const { return nodes.size(); }
};

/// Gauss-Legendre rule of the given order on [-1, 1].
AxisRule gauss_legendre(int order);

/// Composite Gauss-Legendre on [lo, hi] with `panels` equal panels.
/// Nodes are ordered increasingly.
AxisRule composite_gauss_legendre(double lo, double hi, int panels, int order);

struct QuadratureSpec {
  int panels = 64;
  int order = 8;
};

/// Pairwise (cascade) summation; the result depends only on the order of
/// the input, never on threading.
double pairwise_sum(const double* data, std::size_t n);

}  // namespace glinv
