#pragma once

// Batched evaluation of u_NN and f_eta with forward derivative streams and
// reverse accumulation into parameter gradients. A complex layer acts on
// stacked [re; im] rows through the real block matrix [[W1, -W2], [W2, W1]].
// Columns are grouped in blocks of `points`: block 0 carries values, then one
// block per first derivative and one per second derivative.

#include <Eigen/Dense>
#include <vector>

#include "glinv/cpinn.hpp"

namespace glinv::engine {

using Mat = Eigen::MatrixXd;
using Arr = Eigen::ArrayXXd;

struct Direction {
  int axis = 0;                 // input row seeded with 1; -1 uses per_point
  bool second = false;          // also propagate the second derivative
  std::vector<int> per_point;   // seeded row for each point when axis == -1
};

struct Layout {
  Eigen::Index points = 0;
  std::vector<Direction> dirs;
  std::vector<int> d1_block;
  std::vector<int> d2_block;  // -1 when absent
  int blocks = 1;
  bool any_second = false;

  void set(Eigen::Index n, std::vector<Direction> d);
  Eigen::Index cols() const { return points * blocks; }
};

struct ActCache {
  Arr th, s1, s2, s3;  // tanh, sigma', sigma'', sigma''' on the value block
};

struct UPass {
  Layout layout;
  std::vector<Mat> z;  // layer inputs
  std::vector<Mat> s;  // layer outputs before activation
  std::vector<ActCache> act;
  Mat gw, zbar;

  const Mat& out() const { return s.back(); }
};

struct FPass {
  std::vector<Mat> z;
  std::vector<Mat> s;
  std::vector<Arr> s1;
  Mat zbar;

  const Mat& out() const { return s.back(); }
};

struct UWeights {
  std::vector<Mat> big;
  std::vector<Eigen::VectorXd> bias;
  std::vector<Mat> big_t;  // transposes
};

UWeights prepare(const CPinnParams& params);

void u_forward(const UWeights& w, const Mat& coords, double eps, UPass& pass);
/// Consumes `adj` (2 x cols adjoint of the output rows [re; im]).
void u_backward(const CPinnParams& params, const UWeights& w, UPass& pass, Mat& adj, CPinnParams& grad);

void f_forward(const CPinnParams& params, const Mat& coords, FPass& pass);
void f_backward(const CPinnParams& params, FPass& pass, Mat& adj, CPinnParams& grad);

/// Loss over fixed collocation data; coordinate matrices are built once.
class LossEngine {
 public:
  explicit LossEngine(const LossProblem& problem);

  /// Accumulates into `grad` (assumed zeroed) when non-null.
  LossBreakdown run(const CPinnParams& params, CPinnParams* grad);

 private:
  double mean(const std::vector<double>& terms) const;

  const LossProblem& problem_;
  Mat int_coords_, f_coords_, tb_coords_, sb_coords_, obs_coords_;
  std::vector<ComplexVal> g_;  // e^{-gamma t} at S_int
  UPass int_, tb_, sb_, obs_;
  FPass f_;
  Mat adj_, fadj_;
  mutable std::vector<double> terms_;
};

/// Zeroes every entry of `p` without reallocating.
void set_zero(CPinnParams& p);

}  // namespace glinv::engine
