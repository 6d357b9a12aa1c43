#include "cpinn_engine.hpp"

#include <cmath>

#if defined(__AVX512F__)
#include <immintrin.h>
#endif

#include "glinv/error.hpp"

namespace glinv::engine {

namespace {

// tanh through the vectorised exponential; saturates cleanly at +-1.
void tanh_into(const Arr& v, Arr& th) {
  th = (2.0 * v).exp();
  th = 1.0 - 2.0 / (th + 1.0);
}

#if defined(__AVX512F__)
// Register-blocked products for the hidden layers (rows = 8 * NB, NB <= 5).

template <int NB>
void mul_nn(const double* w, const double* z, double* s, Eigen::Index R, Eigen::Index K, Eigen::Index C) {
  Eigen::Index j = 0;
  for (; j + 4 <= C; j += 4) {
    __m512d acc[NB][4];
    for (int r = 0; r < NB; ++r)
      for (int c = 0; c < 4; ++c) acc[r][c] = _mm512_setzero_pd();
    for (Eigen::Index k = 0; k < K; ++k) {
      __m512d wk[NB];
      for (int r = 0; r < NB; ++r) wk[r] = _mm512_loadu_pd(w + k * R + 8 * r);
      for (int c = 0; c < 4; ++c) {
        const __m512d zc = _mm512_set1_pd(z[(j + c) * K + k]);
        for (int r = 0; r < NB; ++r) acc[r][c] = _mm512_fmadd_pd(wk[r], zc, acc[r][c]);
      }
    }
    for (int r = 0; r < NB; ++r)
      for (int c = 0; c < 4; ++c) _mm512_storeu_pd(s + (j + c) * R + 8 * r, acc[r][c]);
  }
  for (; j < C; ++j) {
    __m512d acc[NB];
    for (int r = 0; r < NB; ++r) acc[r] = _mm512_setzero_pd();
    for (Eigen::Index k = 0; k < K; ++k) {
      const __m512d zc = _mm512_set1_pd(z[j * K + k]);
      for (int r = 0; r < NB; ++r) acc[r] = _mm512_fmadd_pd(_mm512_loadu_pd(w + k * R + 8 * r), zc, acc[r]);
    }
    for (int r = 0; r < NB; ++r) _mm512_storeu_pd(s + j * R + 8 * r, acc[r]);
  }
}

// g = a * z^T with a: R x C, z: K x C.
template <int NB>
void mul_nt(const double* a, const double* z, double* g, Eigen::Index R, Eigen::Index K, Eigen::Index C) {
  Eigen::Index k = 0;
  for (; k + 4 <= K; k += 4) {
    __m512d acc[NB][4];
    for (int r = 0; r < NB; ++r)
      for (int c = 0; c < 4; ++c) acc[r][c] = _mm512_setzero_pd();
    for (Eigen::Index j = 0; j < C; ++j) {
      __m512d aj[NB];
      for (int r = 0; r < NB; ++r) aj[r] = _mm512_loadu_pd(a + j * R + 8 * r);
      for (int c = 0; c < 4; ++c) {
        const __m512d zc = _mm512_set1_pd(z[j * K + k + c]);
        for (int r = 0; r < NB; ++r) acc[r][c] = _mm512_fmadd_pd(aj[r], zc, acc[r][c]);
      }
    }
    for (int r = 0; r < NB; ++r)
      for (int c = 0; c < 4; ++c) _mm512_storeu_pd(g + (k + c) * R + 8 * r, acc[r][c]);
  }
  for (; k < K; ++k) {
    __m512d acc[NB];
    for (int r = 0; r < NB; ++r) acc[r] = _mm512_setzero_pd();
    for (Eigen::Index j = 0; j < C; ++j) {
      const __m512d zc = _mm512_set1_pd(z[j * K + k]);
      for (int r = 0; r < NB; ++r) acc[r] = _mm512_fmadd_pd(_mm512_loadu_pd(a + j * R + 8 * r), zc, acc[r]);
    }
    for (int r = 0; r < NB; ++r) _mm512_storeu_pd(g + k * R + 8 * r, acc[r]);
  }
}

template <template <int> class Op>
bool dispatch(const double* a, const double* b, double* out, Eigen::Index R, Eigen::Index K, Eigen::Index C) {
  switch (R) {
    case 8: Op<1>::run(a, b, out, R, K, C); return true;
    case 16: Op<2>::run(a, b, out, R, K, C); return true;
    case 24: Op<3>::run(a, b, out, R, K, C); return true;
    case 32: Op<4>::run(a, b, out, R, K, C); return true;
    case 40: Op<5>::run(a, b, out, R, K, C); return true;
    default: return false;
  }
}

template <int NB>
struct NN {
  static void run(const double* a, const double* b, double* o, Eigen::Index R, Eigen::Index K, Eigen::Index C) {
    mul_nn<NB>(a, b, o, R, K, C);
  }
};
template <int NB>
struct NT {
  static void run(const double* a, const double* b, double* o, Eigen::Index R, Eigen::Index K, Eigen::Index C) {
    mul_nt<NB>(a, b, o, R, K, C);
  }
};
#endif

// s = w * z
void multiply(const Mat& w, const Mat& z, Mat& s) {
  s.resize(w.rows(), z.cols());
#if defined(__AVX512F__)
  if (dispatch<NN>(w.data(), z.data(), s.data(), w.rows(), w.cols(), z.cols())) return;
#endif
  s.noalias() = w * z;
}

// g = a * z^T
void multiply_nt(const Mat& a, const Mat& z, Mat& g) {
  g.resize(a.rows(), z.rows());
#if defined(__AVX512F__)
  if (dispatch<NT>(a.data(), z.data(), g.data(), a.rows(), z.rows(), a.cols())) return;
#endif
  g.noalias() = a * z.transpose();
}

template <bool Streams, bool Second>
void activation_kernel(const double* __restrict v, double* __restrict th, double* __restrict s1,
                       double* __restrict s2, double* __restrict s3, double* __restrict z, Eigen::Index n) {
  for (Eigen::Index i = 0; i < n; ++i) {
    const double x = v[i];
    const double t = 1.0 - 2.0 / (th[i] + 1.0);
    const double sh = 1.0 - t * t;
    const double om = 1.0 - x * t;
    th[i] = t;
    s1[i] = t + x * sh;
    if constexpr (Streams) s2[i] = 2.0 * sh * om;
    if constexpr (Second) s3[i] = -4.0 * sh * t * om - 2.0 * sh * (t + x * sh);
    z[i] = x * t;
  }
}

void activation_forward(const Mat& s, const Layout& lay, ActCache& c, Mat& z) {
  const Eigen::Index B = lay.points;
  const Eigen::Index R = s.rows();
  const Eigen::Index n = R * B;
  const bool streams = !lay.dirs.empty();
  c.th = (2.0 * s.leftCols(B).array()).exp();
  c.s1.resize(R, B);
  if (streams) c.s2.resize(R, B);
  if (lay.any_second) c.s3.resize(R, B);
  z.resize(R, s.cols());
  if (lay.any_second)
    activation_kernel<true, true>(s.data(), c.th.data(), c.s1.data(), c.s2.data(), c.s3.data(), z.data(), n);
  else if (streams)
    activation_kernel<true, false>(s.data(), c.th.data(), c.s1.data(), c.s2.data(), nullptr, z.data(), n);
  else
    activation_kernel<false, false>(s.data(), c.th.data(), c.s1.data(), nullptr, nullptr, z.data(), n);

  const double* __restrict a1 = c.s1.data();
  const double* __restrict a2 = c.s2.data();
  for (std::size_t k = 0; k < lay.dirs.size(); ++k) {
    const double* __restrict d1 = s.data() + lay.d1_block[k] * n;
    double* __restrict y1 = z.data() + lay.d1_block[k] * n;
    for (Eigen::Index i = 0; i < n; ++i) y1[i] = a1[i] * d1[i];
    if (lay.d2_block[k] >= 0) {
      const double* __restrict d2 = s.data() + lay.d2_block[k] * n;
      double* __restrict y2 = z.data() + lay.d2_block[k] * n;
      for (Eigen::Index i = 0; i < n; ++i) y2[i] = a2[i] * d1[i] * d1[i] + a1[i] * d2[i];
    }
  }
}

void activation_backward(const Mat& s, const Layout& lay, const ActCache& c, const Mat& zbar, Mat& sbar) {
  const Eigen::Index B = lay.points;
  const Eigen::Index n = s.rows() * B;
  sbar.resize(zbar.rows(), zbar.cols());
  const double* __restrict a1 = c.s1.data();
  const double* __restrict a2 = c.s2.data();
  const double* __restrict a3 = c.s3.data();
  double* __restrict vbar = sbar.data();
  const double* __restrict yv = zbar.data();
  for (Eigen::Index i = 0; i < n; ++i) vbar[i] = yv[i] * a1[i];
  for (std::size_t k = 0; k < lay.dirs.size(); ++k) {
    const double* __restrict d1 = s.data() + lay.d1_block[k] * n;
    const double* __restrict y1 = zbar.data() + lay.d1_block[k] * n;
    double* __restrict d1bar = sbar.data() + lay.d1_block[k] * n;
    if (lay.d2_block[k] < 0) {
      for (Eigen::Index i = 0; i < n; ++i) {
        vbar[i] += y1[i] * a2[i] * d1[i];
        d1bar[i] = y1[i] * a1[i];
      }
      continue;
    }
    const double* __restrict d2 = s.data() + lay.d2_block[k] * n;
    const double* __restrict y2 = zbar.data() + lay.d2_block[k] * n;
    double* __restrict d2bar = sbar.data() + lay.d2_block[k] * n;
    for (Eigen::Index i = 0; i < n; ++i) {
      vbar[i] += y1[i] * a2[i] * d1[i] + y2[i] * (a3[i] * d1[i] * d1[i] + a2[i] * d2[i]);
      d1bar[i] = y1[i] * a1[i] + 2.0 * y2[i] * a2[i] * d1[i];
      d2bar[i] = y2[i] * a1[i];
    }
  }
}

}  // namespace

void Layout::set(Eigen::Index n, std::vector<Direction> d) {
  points = n;
  dirs = std::move(d);
  d1_block.assign(dirs.size(), -1);
  d2_block.assign(dirs.size(), -1);
  blocks = 1;
  any_second = false;
  for (std::size_t k = 0; k < dirs.size(); ++k) {
    d1_block[k] = blocks++;
    if (dirs[k].second) {
      d2_block[k] = blocks++;
      any_second = true;
    }
  }
}

UWeights prepare(const CPinnParams& params) {
  UWeights w;
  for (const auto& layer : params.u_layers) {
    const int o = layer.out(), i = layer.in();
    Mat big(2 * o, 2 * i);
    big << layer.w_re, -layer.w_im, layer.w_im, layer.w_re;
    w.big.push_back(std::move(big));
    Eigen::VectorXd b(2 * o);
    b << layer.b_re, layer.b_im;
    w.bias.push_back(std::move(b));
  }
  for (const auto& b : w.big) w.big_t.push_back(b.transpose());
  return w;
}

// The first layer sees seeded inputs: derivative blocks of z0 hold a single 1
// (the seeded row) and second-derivative blocks are zero, so only the value
// block needs a product.
void u_forward(const UWeights& w, const Mat& coords, double eps, UPass& pass) {
  const Layout& lay = pass.layout;
  const Eigen::Index n_in = coords.rows();
  const Eigen::Index B = lay.points;
  const std::size_t L = w.big.size();
  pass.z.resize(L);
  pass.s.resize(L);
  pass.act.resize(L > 0 ? L - 1 : 0);

  Mat& z0 = pass.z[0];
  z0.resize(2 * n_in, B);
  z0.topRows(n_in) = coords;
  z0.bottomRows(n_in).setConstant(eps);

  Mat& s0 = pass.s[0];
  s0.resize(w.big[0].rows(), lay.cols());
  s0.leftCols(B).noalias() = w.big[0].lazyProduct(z0);
  s0.leftCols(B).colwise() += w.bias[0];
  for (std::size_t k = 0; k < lay.dirs.size(); ++k) {
    const auto c1 = lay.d1_block[k] * B;
    const Direction& d = lay.dirs[k];
    if (d.axis >= 0) {
      s0.middleCols(c1, B).colwise() = w.big[0].col(d.axis);
    } else {
      for (Eigen::Index p = 0; p < B; ++p) s0.col(c1 + p) = w.big[0].col(d.per_point[p]);
    }
    if (lay.d2_block[k] >= 0) s0.middleCols(lay.d2_block[k] * B, B).setZero();
  }

  for (std::size_t l = 0; l < L; ++l) {
    if (l > 0) {
      multiply(w.big[l], pass.z[l], pass.s[l]);
      pass.s[l].leftCols(B).colwise() += w.bias[l];
    }
    if (l + 1 < L) activation_forward(pass.s[l], lay, pass.act[l], pass.z[l + 1]);
  }
}

void u_backward(const CPinnParams& params, const UWeights& w, UPass& pass, Mat& adj, CPinnParams& grad) {
  const Layout& lay = pass.layout;
  const Eigen::Index B = lay.points;
  for (std::size_t l = w.big.size(); l-- > 0;) {
    const int o = params.u_layers[l].out(), i = params.u_layers[l].in();
    if (l > 0) {
      multiply_nt(adj, pass.z[l], pass.gw);
    } else {
      pass.gw.noalias() = adj.leftCols(B) * pass.z[0].transpose();
      for (std::size_t k = 0; k < lay.dirs.size(); ++k) {
        const auto c1 = lay.d1_block[k] * B;
        const Direction& d = lay.dirs[k];
        if (d.axis >= 0) {
          pass.gw.col(d.axis) += adj.middleCols(c1, B).rowwise().sum();
        } else {
          for (Eigen::Index p = 0; p < B; ++p) pass.gw.col(d.per_point[p]) += adj.col(c1 + p);
        }
      }
    }
    auto& g = grad.u_layers[l];
    g.w_re += pass.gw.topLeftCorner(o, i) + pass.gw.bottomRightCorner(o, i);
    g.w_im += pass.gw.bottomLeftCorner(o, i) - pass.gw.topRightCorner(o, i);
    g.b_re += adj.topLeftCorner(o, B).rowwise().sum();
    g.b_im += adj.bottomLeftCorner(o, B).rowwise().sum();
    if (l == 0) break;
    if (l + 1 == w.big.size())
      pass.zbar.noalias() = w.big_t[l].lazyProduct(adj);
    else
      multiply(w.big_t[l], adj, pass.zbar);
    activation_backward(pass.s[l - 1], lay, pass.act[l - 1], pass.zbar, adj);
  }
}

void f_forward(const CPinnParams& params, const Mat& coords, FPass& pass) {
  const std::size_t L = params.f_layers.size();
  pass.z.resize(L);
  pass.s.resize(L);
  pass.s1.resize(L > 0 ? L - 1 : 0);
  pass.z[0] = coords;
  for (std::size_t l = 0; l < L; ++l) {
    const auto& layer = params.f_layers[l];
    pass.s[l].noalias() = layer.w * pass.z[l];
    pass.s[l].colwise() += layer.b;
    if (l + 1 < L) {
      const Arr v = pass.s[l].array();
      Arr th;
      tanh_into(v, th);
      pass.s1[l] = th + v * (1.0 - th.square());
      pass.z[l + 1] = (v * th).matrix();
    }
  }
}

void f_backward(const CPinnParams& params, FPass& pass, Mat& adj, CPinnParams& grad) {
  for (std::size_t l = params.f_layers.size(); l-- > 0;) {
    auto& g = grad.f_layers[l];
    g.w.noalias() += adj * pass.z[l].transpose();
    g.b += adj.rowwise().sum();
    if (l == 0) break;
    pass.zbar.noalias() = params.f_layers[l].w.transpose() * adj;
    adj = (pass.zbar.array() * pass.s1[l - 1]).matrix();
  }
}

void set_zero(CPinnParams& p) {
  for (auto& l : p.u_layers) {
    l.w_re.setZero();
    l.w_im.setZero();
    l.b_re.setZero();
    l.b_im.setZero();
  }
  for (auto& l : p.f_layers) {
    l.w.setZero();
    l.b.setZero();
  }
}

LossEngine::LossEngine(const LossProblem& problem) : problem_(problem) {
  problem.validate();
  const int dim = problem.domain.dim();
  const auto& sets = problem.sets;

  const auto n_int = static_cast<Eigen::Index>(sets.interior.size());
  int_coords_.resize(dim + 1, n_int);
  f_coords_.resize(dim, n_int);
  g_.resize(sets.interior.size());
  for (Eigen::Index p = 0; p < n_int; ++p) {
    const auto& q = sets.interior[p];
    for (int a = 0; a < dim; ++a) int_coords_(a, p) = f_coords_(a, p) = q.x[a];
    int_coords_(dim, p) = q.t;
    g_[p] = std::exp(-problem.pde.gamma * q.t);
  }
  std::vector<Direction> dirs;
  for (int a = 0; a < dim; ++a) dirs.push_back({a, true, {}});
  dirs.push_back({dim, false, {}});
  int_.layout.set(n_int, dirs);

  const auto n_tb = static_cast<Eigen::Index>(sets.initial.size());
  tb_coords_.setZero(dim + 1, n_tb);
  for (Eigen::Index p = 0; p < n_tb; ++p)
    for (int a = 0; a < dim; ++a) tb_coords_(a, p) = sets.initial[p][a];
  dirs.clear();
  if (problem.sobolev_tb)
    for (int a = 0; a < dim; ++a) dirs.push_back({a, true, {}});
  tb_.layout.set(n_tb, dirs);

  const auto n_sb = static_cast<Eigen::Index>(sets.boundary.size());
  sb_coords_.resize(dim + 1, n_sb);
  Direction tangent{-1, false, std::vector<int>(sets.boundary.size())};
  for (Eigen::Index p = 0; p < n_sb; ++p) {
    const auto& q = sets.boundary[p];
    for (int a = 0; a < dim; ++a) sb_coords_(a, p) = q.x[a];
    sb_coords_(dim, p) = q.t;
    tangent.per_point[p] = q.tangent_axis;
  }
  dirs.clear();
  if (problem.sobolev_sb) {
    dirs.push_back({dim, false, {}});
    if (dim == 2) dirs.push_back(std::move(tangent));
  }
  sb_.layout.set(n_sb, dirs);

  const auto n_d = static_cast<Eigen::Index>(sets.data.size());
  const auto n_j = static_cast<Eigen::Index>(problem.data.instants.size());
  obs_coords_.resize(dim + 1, n_d * n_j);
  for (Eigen::Index j = 0; j < n_j; ++j)
    for (Eigen::Index p = 0; p < n_d; ++p) {
      for (int a = 0; a < dim; ++a) obs_coords_(a, j * n_d + p) = sets.data[p][a];
      obs_coords_(dim, j * n_d + p) = problem.data.instants[j];
    }
  obs_.layout.set(n_d * n_j, {});
}

double LossEngine::mean(const std::vector<double>& terms) const {
  return terms.empty() ? 0.0 : pairwise_sum(terms.data(), terms.size()) / static_cast<double>(terms.size());
}

LossBreakdown LossEngine::run(const CPinnParams& params, CPinnParams* grad) {
  const LossProblem& P = problem_;
  const int dim = P.domain.dim();
  const ComplexVal zc = P.pde.diffusion();
  const double lambda = P.weights.lambda, beta = P.weights.beta;
  const UWeights w = prepare(params);
  LossBreakdown out;

  if (int_.layout.points > 0) {
    const Eigen::Index B = int_.layout.points;
    u_forward(w, int_coords_, P.eps, int_);
    f_forward(params, f_coords_, f_);
    const Mat& u = int_.out();
    const Mat& f = f_.out();
    const auto tcol = int_.layout.d1_block[dim] * B;
    terms_.resize(B);
    if (grad) {
      adj_.setZero(2, int_.layout.cols());
      fadj_.setZero(f.rows(), B);
    }
    const double scale = 2.0 * lambda / static_cast<double>(B);
    for (Eigen::Index p = 0; p < B; ++p) {
      const ComplexVal ut(u(0, tcol + p), u(1, tcol + p));
      ComplexVal lap;
      for (int a = 0; a < dim; ++a) {
        const auto c = int_.layout.d2_block[a] * B + p;
        lap += ComplexVal(u(0, c), u(1, c));
      }
      const ComplexVal fv(f(0, p), f.rows() > 1 ? f(1, p) : 0.0);
      const ComplexVal r = ut - zc * lap - fv * g_[p];
      terms_[p] = std::norm(r);
      if (grad) {
        const ComplexVal rbar = scale * r;
        adj_(0, tcol + p) = rbar.real();
        adj_(1, tcol + p) = rbar.imag();
        const ComplexVal lbar = -std::conj(zc) * rbar;
        for (int a = 0; a < dim; ++a) {
          const auto c = int_.layout.d2_block[a] * B + p;
          adj_(0, c) = lbar.real();
          adj_(1, c) = lbar.imag();
        }
        const ComplexVal fbar = -std::conj(g_[p]) * rbar;
        fadj_(0, p) = fbar.real();
        if (f.rows() > 1) fadj_(1, p) = fbar.imag();
      }
    }
    out.interior = mean(terms_);
    if (grad) {
      u_backward(params, w, int_, adj_, *grad);
      f_backward(params, f_, fadj_, *grad);
    }
  }

  // Sobolev surrogates: every stream block enters as a mean square, so the
  // adjoint is the output itself scaled by 2 / B.
  auto surrogate = [&](UPass& pass, const Mat& coords, double weight) {
    const Eigen::Index B = pass.layout.points;
    u_forward(w, coords, P.eps, pass);
    const Mat& u = pass.out();
    terms_.assign(B, 0.0);
    for (int b = 0; b < pass.layout.blocks; ++b)
      for (Eigen::Index p = 0; p < B; ++p) {
        const auto c = b * B + p;
        terms_[p] += u(0, c) * u(0, c) + u(1, c) * u(1, c);
      }
    const double value = mean(terms_);
    if (grad && weight != 0.0) {
      adj_ = (2.0 * weight / static_cast<double>(B)) * u;
      u_backward(params, w, pass, adj_, *grad);
    }
    return value;
  };
  out.initial = surrogate(tb_, tb_coords_, 1.0);
  if (sb_.layout.points > 0) out.boundary = surrogate(sb_, sb_coords_, beta);

  {
    const Eigen::Index n_d = static_cast<Eigen::Index>(P.sets.data.size());
    u_forward(w, obs_coords_, P.eps, obs_);
    const Mat& u = obs_.out();
    if (grad) adj_.resize(2, obs_.layout.cols());
    const double scale = 2.0 / static_cast<double>(n_d);
    terms_.resize(n_d);
    for (std::size_t j = 0; j < P.data.instants.size(); ++j) {
      for (Eigen::Index p = 0; p < n_d; ++p) {
        const auto c = static_cast<Eigen::Index>(j) * n_d + p;
        const ComplexVal r = ComplexVal(u(0, c), u(1, c)) - P.data.values[j][p];
        terms_[p] = std::norm(r);
        if (grad) {
          adj_(0, c) = scale * r.real();
          adj_(1, c) = scale * r.imag();
        }
      }
      out.data += mean(terms_);
    }
    if (grad) u_backward(params, w, obs_, adj_, *grad);
  }

  out.total = out.data + lambda * out.interior + out.initial + beta * out.boundary;
  return out;
}

}  // namespace glinv::engine
