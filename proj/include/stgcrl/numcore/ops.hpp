#pragma once

// Differentiable primitives. Each op computes its forward value eagerly and
// records a closure that pushes the upstream gradient into its inputs.

#include <algorithm>
#include <cmath>
#include <limits>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "stgcrl/numcore/errors.hpp"
#include "stgcrl/numcore/tape.hpp"
#include "stgcrl/numcore/tensor.hpp"

namespace stgcrl::ops {

namespace detail {

inline Tape& tape_of(Var v) {
  require(v.valid(), "ops: invalid Var");
  return *v.tape();
}

inline void same_shape(const char* op, Var a, Var b) {
  require(a.shape() == b.shape(), std::string(op) + ": shape mismatch " + shape_str(a.shape()) +
                                      " vs " + shape_str(b.shape()));
}

inline void axpy(std::span<double> dst, std::span<const double> src, double alpha = 1.0) {
  for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += alpha * src[i];
}

}  // namespace detail

inline Var add(Var a, Var b) {
  detail::same_shape("add", a, b);
  Tape& t = detail::tape_of(a);
  Tensor out = a.value();
  detail::axpy(out.data(), b.value().data());
  return t.record("add", std::move(out), {a, b}, [a, b](Tape& tp, const Tensor& g) {
    if (Tensor* ga = tp.grad_buffer(a)) detail::axpy(ga->data(), g.data());
    if (Tensor* gb = tp.grad_buffer(b)) detail::axpy(gb->data(), g.data());
  });
}

inline Var sub(Var a, Var b) {
  detail::same_shape("sub", a, b);
  Tape& t = detail::tape_of(a);
  Tensor out = a.value();
  detail::axpy(out.data(), b.value().data(), -1.0);
  return t.record("sub", std::move(out), {a, b}, [a, b](Tape& tp, const Tensor& g) {
    if (Tensor* ga = tp.grad_buffer(a)) detail::axpy(ga->data(), g.data());
    if (Tensor* gb = tp.grad_buffer(b)) detail::axpy(gb->data(), g.data(), -1.0);
  });
}

inline Var mul(Var a, Var b) {
  detail::same_shape("mul", a, b);
  Tape& t = detail::tape_of(a);
  Tensor out = a.value();
  auto bv = b.value().data();
  auto o = out.data();
  for (std::size_t i = 0; i < o.size(); ++i) o[i] *= bv[i];
  return t.record("mul", std::move(out), {a, b}, [a, b](Tape& tp, const Tensor& g) {
    if (Tensor* ga = tp.grad_buffer(a)) {
      auto bv = b.value().data();
      auto d = ga->data();
      for (std::size_t i = 0; i < d.size(); ++i) d[i] += g[i] * bv[i];
    }
    if (Tensor* gb = tp.grad_buffer(b)) {
      auto av = a.value().data();
      auto d = gb->data();
      for (std::size_t i = 0; i < d.size(); ++i) d[i] += g[i] * av[i];
    }
  });
}

inline Var scale(Var a, double c) {
  Tape& t = detail::tape_of(a);
  Tensor out = a.value();
  for (double& v : out.data()) v *= c;
  return t.record("scale", std::move(out), {a}, [a, c](Tape& tp, const Tensor& g) {
    if (Tensor* ga = tp.grad_buffer(a)) detail::axpy(ga->data(), g.data(), c);
  });
}

inline Var add_scalar(Var a, double c) {
  Tape& t = detail::tape_of(a);
  Tensor out = a.value();
  for (double& v : out.data()) v += c;
  return t.record("add_scalar", std::move(out), {a}, [a](Tape& tp, const Tensor& g) {
    if (Tensor* ga = tp.grad_buffer(a)) detail::axpy(ga->data(), g.data());
  });
}

inline Var exp(Var a) {
  Tape& t = detail::tape_of(a);
  Tensor out = a.value();
  for (double& v : out.data()) v = std::exp(v);
  const std::size_t self = t.size();
  return t.record("exp", std::move(out), {a}, [a, self](Tape& tp, const Tensor& g) {
    if (Tensor* ga = tp.grad_buffer(a)) {
      const Tensor& y = tp.value(self);
      auto d = ga->data();
      for (std::size_t i = 0; i < d.size(); ++i) d[i] += g[i] * y[i];
    }
  });
}

inline Var log(Var a) {
  Tape& t = detail::tape_of(a);
  Tensor out = a.value();
  for (double& v : out.data()) v = std::log(v);
  return t.record("log", std::move(out), {a}, [a](Tape& tp, const Tensor& g) {
    if (Tensor* ga = tp.grad_buffer(a)) {
      auto x = a.value().data();
      auto d = ga->data();
      for (std::size_t i = 0; i < d.size(); ++i) d[i] += g[i] / x[i];
    }
  });
}

inline Var relu(Var a) {
  Tape& t = detail::tape_of(a);
  Tensor out = a.value();
  for (double& v : out.data()) v = v > 0.0 ? v : 0.0;
  return t.record("relu", std::move(out), {a}, [a](Tape& tp, const Tensor& g) {
    if (Tensor* ga = tp.grad_buffer(a)) {
      auto x = a.value().data();
      auto d = ga->data();
      for (std::size_t i = 0; i < d.size(); ++i)
        if (x[i] > 0.0) d[i] += g[i];
    }
  });
}

inline Var sum(Var a) {
  Tape& t = detail::tape_of(a);
  double s = 0.0;
  for (double v : a.value().data()) s += v;
  return t.record("sum", Tensor::scalar(s), {a}, [a](Tape& tp, const Tensor& g) {
    if (Tensor* ga = tp.grad_buffer(a))
      for (double& d : ga->data()) d += g[0];
  });
}

inline Var mean(Var a) { return scale(sum(a), 1.0 / static_cast<double>(a.value().size())); }

inline Var reshape(Var a, Shape shape) {
  Tape& t = detail::tape_of(a);
  Tensor out = a.value().reshaped(std::move(shape));
  return t.record("reshape", std::move(out), {a}, [a](Tape& tp, const Tensor& g) {
    if (Tensor* ga = tp.grad_buffer(a)) detail::axpy(ga->data(), g.data());
  });
}

/// x: (..., C), b: (C). Adds b to every row.
inline Var add_bias(Var x, Var b) {
  const std::size_t c = b.value().size();
  require(b.value().rank() == 1 && x.value().rank() >= 1 && x.shape().back() == c,
          "add_bias: bias " + shape_str(b.shape()) + " incompatible with " + shape_str(x.shape()));
  Tape& t = detail::tape_of(x);
  Tensor out = x.value();
  auto o = out.data();
  auto bv = b.value().data();
  for (std::size_t r = 0; r < o.size(); r += c)
    for (std::size_t j = 0; j < c; ++j) o[r + j] += bv[j];
  return t.record("add_bias", std::move(out), {x, b}, [x, b, c](Tape& tp, const Tensor& g) {
    if (Tensor* gx = tp.grad_buffer(x)) detail::axpy(gx->data(), g.data());
    if (Tensor* gb = tp.grad_buffer(b)) {
      auto d = gb->data();
      for (std::size_t r = 0; r < g.size(); r += c)
        for (std::size_t j = 0; j < c; ++j) d[j] += g[r + j];
    }
  });
}

namespace detail {

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MapC = Eigen::Map<const RowMat>;
using MapM = Eigen::Map<RowMat>;

// out(R×C) += a(R×K) · b(K×C)
inline void gemm_nn(const double* a, const double* b, double* out, std::size_t R, std::size_t K,
                    std::size_t C) {
  const auto r = static_cast<Eigen::Index>(R), k = static_cast<Eigen::Index>(K), c = static_cast<Eigen::Index>(C);
  MapM(out, r, c).noalias() += MapC(a, r, k) * MapC(b, k, c);
}

// out(R×C) += a(R×K) · b(C×K)^T
inline void gemm_nt(const double* a, const double* b, double* out, std::size_t R, std::size_t K,
                    std::size_t C) {
  const auto r = static_cast<Eigen::Index>(R), k = static_cast<Eigen::Index>(K), c = static_cast<Eigen::Index>(C);
  MapM(out, r, c).noalias() += MapC(a, r, k) * MapC(b, c, k).transpose();
}

// out(K×C) += a(R×K)^T · b(R×C)
inline void gemm_tn(const double* a, const double* b, double* out, std::size_t R, std::size_t K,
                    std::size_t C) {
  const auto r = static_cast<Eigen::Index>(R), k = static_cast<Eigen::Index>(K), c = static_cast<Eigen::Index>(C);
  MapM(out, k, c).noalias() += MapC(a, r, k).transpose() * MapC(b, r, c);
}

}  // namespace detail

/// a: (R×K). b: (K×C), or (C×K) when transpose_b. Returns (R×C).
inline Var matmul(Var a, Var b, bool transpose_b = false) {
  const Tensor& av = a.value();
  const Tensor& bv = b.value();
  require(av.rank() == 2 && bv.rank() == 2, "matmul: rank-2 operands required");
  const std::size_t R = av.dim(0), K = av.dim(1);
  const std::size_t C = transpose_b ? bv.dim(0) : bv.dim(1);
  require((transpose_b ? bv.dim(1) : bv.dim(0)) == K,
          "matmul: inner extents differ " + shape_str(av.shape()) + " x " + shape_str(bv.shape()));
  Tensor out({R, C}, 0.0);
  if (transpose_b)
    detail::gemm_nt(av.data().data(), bv.data().data(), out.data().data(), R, K, C);
  else
    detail::gemm_nn(av.data().data(), bv.data().data(), out.data().data(), R, K, C);
  Tape& t = detail::tape_of(a);
  return t.record("matmul", std::move(out), {a, b},
                  [a, b, R, K, C, transpose_b](Tape& tp, const Tensor& g) {
                    const double* gp = g.data().data();
                    if (Tensor* ga = tp.grad_buffer(a)) {
                      // dA = G · B^T  (or G · B when B was transposed)
                      const double* bp = b.value().data().data();
                      if (transpose_b)
                        detail::gemm_nn(gp, bp, ga->data().data(), R, C, K);
                      else
                        detail::gemm_nt(gp, bp, ga->data().data(), R, C, K);
                    }
                    if (Tensor* gb = tp.grad_buffer(b)) {
                      const double* ap = a.value().data().data();
                      if (transpose_b)  // dB (C×K) = G^T · A
                        detail::gemm_tn(gp, ap, gb->data().data(), R, C, K);
                      else  // dB (K×C) = A^T · G
                        detail::gemm_tn(ap, gp, gb->data().data(), R, K, C);
                    }
                  });
}

/// x: (..., C), W: (C×C'). Applies W to the last axis; leading axes are kept.
inline Var linear_last(Var x, Var w) {
  const Tensor& xv = x.value();
  const Tensor& wv = w.value();
  require(wv.rank() == 2 && xv.rank() >= 1 && xv.shape().back() == wv.dim(0),
          "linear_last: " + shape_str(xv.shape()) + " x " + shape_str(wv.shape()));
  const std::size_t C = wv.dim(0), Cout = wv.dim(1), R = xv.size() / C;
  Shape oshape = xv.shape();
  oshape.back() = Cout;
  Tensor out(oshape, 0.0);
  detail::gemm_nn(xv.data().data(), wv.data().data(), out.data().data(), R, C, Cout);
  Tape& t = detail::tape_of(x);
  return t.record("linear_last", std::move(out), {x, w}, [x, w, R, C, Cout](Tape& tp, const Tensor& g) {
    const double* gp = g.data().data();
    if (Tensor* gx = tp.grad_buffer(x))
      detail::gemm_nt(gp, w.value().data().data(), gx->data().data(), R, Cout, C);
    if (Tensor* gw = tp.grad_buffer(w))
      detail::gemm_tn(x.value().data().data(), gp, gw->data().data(), R, C, Cout);
  });
}

/// y[t,i,:] = sum_j A[i,j] x[t,j,:] for x: (T×M×C), A: constant (M×M).
inline Var mix_joints(const Tensor& A, Var x) {
  const Tensor& xv = x.value();
  require(xv.rank() == 3 && A.rank() == 2 && A.dim(0) == xv.dim(1) && A.dim(1) == xv.dim(1),
          "mix_joints: adjacency " + shape_str(A.shape()) + " vs feature " + shape_str(xv.shape()));
  const std::size_t T = xv.dim(0), M = xv.dim(1), C = xv.dim(2);
  Tensor out(xv.shape(), 0.0);
  for (std::size_t t = 0; t < T; ++t)
    detail::gemm_nn(A.data().data(), xv.data().data() + t * M * C, out.data().data() + t * M * C, M,
                    M, C);
  Tape& tp0 = detail::tape_of(x);
  return tp0.record("mix_joints", std::move(out), {x}, [A, x, T, M, C](Tape& tp, const Tensor& g) {
    if (Tensor* gx = tp.grad_buffer(x))
      for (std::size_t t = 0; t < T; ++t)  // dX_t = A^T dY_t
        detail::gemm_tn(A.data().data(), g.data().data() + t * M * C, gx->data().data() + t * M * C,
                        M, M, C);
  });
}

/// y[t,m,c] = (x[t,m,c] - mean[m,c]) * scale[m,c] with constant mean/scale (M×C).
inline Var normalize_joints(Var x, const Tensor& mean, const Tensor& scale) {
  const Tensor& xv = x.value();
  require(xv.rank() == 3 && mean.rank() == 2 && mean.dim(0) == xv.dim(1) && mean.dim(1) == xv.dim(2) &&
              scale.shape() == mean.shape(),
          "normalize_joints: statistics " + shape_str(mean.shape()) + " vs feature " + shape_str(xv.shape()));
  const std::size_t MC = mean.size();
  Tensor out = xv;
  auto o = out.data();
  for (std::size_t i = 0; i < o.size(); ++i) o[i] = (o[i] - mean[i % MC]) * scale[i % MC];
  Tape& t = detail::tape_of(x);
  return t.record("normalize_joints", std::move(out), {x}, [x, scale, MC](Tape& tp, const Tensor& g) {
    if (Tensor* gx = tp.grad_buffer(x)) {
      auto d = gx->data();
      for (std::size_t i = 0; i < d.size(); ++i) d[i] += g[i] * scale[i % MC];
    }
  });
}

inline std::size_t conv_out_len(std::size_t T, std::size_t stride) { return (T + stride - 1) / stride; }

/// Per-joint 1-D convolution along time. x: (T×M×C), w: (K×C×C'), K odd,
/// symmetric zero padding (K-1)/2, output length ceil(T/stride).
inline Var temporal_conv(Var x, Var w, std::size_t stride) {
  const Tensor& xv = x.value();
  const Tensor& wv = w.value();
  require(xv.rank() == 3 && wv.rank() == 3 && wv.dim(1) == xv.dim(2),
          "temporal_conv: input " + shape_str(xv.shape()) + " vs kernel " + shape_str(wv.shape()));
  require(stride >= 1, "temporal_conv: stride must be >= 1");
  const std::size_t K = wv.dim(0);
  require(K % 2 == 1, "temporal_conv: kernel size must be odd");
  const std::size_t T = xv.dim(0), M = xv.dim(1), C = xv.dim(2), Cout = wv.dim(2);
  const std::size_t pad = (K - 1) / 2;
  require(K <= T + 2 * pad, "temporal_conv: kernel larger than padded sequence");
  const std::size_t To = conv_out_len(T, stride);
  // Unfolded input: row (to, m) holds the K taps of joint m around frame
  // to*stride, zero where the window leaves the sequence. One GEMM against
  // w viewed as (K·C)×C' then covers the whole convolution.
  auto unfold = [T, M, C, K, To, stride, pad](const double* xp) {
    std::vector<double> cols(To * M * K * C, 0.0);
    for (std::size_t to = 0; to < To; ++to)
      for (std::size_t k = 0; k < K; ++k) {
        const std::size_t tt = to * stride + k;
        if (tt < pad || tt - pad >= T) continue;
        const double* src = xp + (tt - pad) * M * C;
        for (std::size_t m = 0; m < M; ++m)
          std::copy_n(src + m * C, C, cols.data() + ((to * M + m) * K + k) * C);
      }
    return cols;
  };
  Tensor out({To, M, Cout}, 0.0);
  {
    const std::vector<double> cols = unfold(xv.data().data());
    detail::gemm_nn(cols.data(), wv.data().data(), out.data().data(), To * M, K * C, Cout);
  }
  Tape& t = detail::tape_of(x);
  return t.record("temporal_conv", std::move(out), {x, w},
                  [x, w, stride, K, T, M, C, Cout, To, pad, unfold](Tape& tp, const Tensor& g) {
                    Tensor* gx = tp.grad_buffer(x);
                    Tensor* gw = tp.grad_buffer(w);
                    const double* gp = g.data().data();
                    const std::size_t R = To * M, KC = K * C;
                    if (gw) {
                      const std::vector<double> cols = unfold(x.value().data().data());
                      detail::gemm_tn(cols.data(), gp, gw->data().data(), R, KC, Cout);
                    }
                    if (gx) {
                      std::vector<double> dcols(R * KC, 0.0);
                      detail::gemm_nt(gp, w.value().data().data(), dcols.data(), R, Cout, KC);
                      double* gxp = gx->data().data();
                      for (std::size_t to = 0; to < To; ++to)
                        for (std::size_t k = 0; k < K; ++k) {
                          const std::size_t tt = to * stride + k;
                          if (tt < pad || tt - pad >= T) continue;
                          double* dst = gxp + (tt - pad) * M * C;
                          for (std::size_t m = 0; m < M; ++m) {
                            const double* src = dcols.data() + ((to * M + m) * K + k) * C;
                            for (std::size_t c = 0; c < C; ++c) dst[m * C + c] += src[c];
                          }
                        }
                    }
                  });
}

/// x: (..., C) -> (C), arithmetic mean over all leading positions.
inline Var mean_rows(Var x) {
  const Tensor& xv = x.value();
  require(xv.rank() >= 2, "mean_rows: need rank >= 2");
  const std::size_t C = xv.shape().back(), R = xv.size() / C;
  Tensor out({C}, 0.0);
  for (std::size_t r = 0; r < R; ++r)
    for (std::size_t c = 0; c < C; ++c) out[c] += xv[r * C + c];
  const double inv = 1.0 / static_cast<double>(R);
  for (double& v : out.data()) v *= inv;
  Tape& t = detail::tape_of(x);
  return t.record("mean_rows", std::move(out), {x}, [x, R, C, inv](Tape& tp, const Tensor& g) {
    if (Tensor* gx = tp.grad_buffer(x)) {
      auto d = gx->data();
      for (std::size_t r = 0; r < R; ++r)
        for (std::size_t c = 0; c < C; ++c) d[r * C + c] += g[c] * inv;
    }
  });
}

/// Rows [begin, end) along axis 0.
inline Var slice_rows(Var x, std::size_t begin, std::size_t end) {
  const Tensor& xv = x.value();
  require(xv.rank() >= 1 && begin < end && end <= xv.dim(0), "slice_rows: bad range");
  const std::size_t stride = xv.size() / xv.dim(0);
  Shape s = xv.shape();
  s[0] = end - begin;
  std::vector<double> d(xv.data().begin() + static_cast<std::ptrdiff_t>(begin * stride),
                        xv.data().begin() + static_cast<std::ptrdiff_t>(end * stride));
  Tape& t = detail::tape_of(x);
  return t.record("slice_rows", Tensor(std::move(s), std::move(d)), {x},
                  [x, begin, stride](Tape& tp, const Tensor& g) {
                    if (Tensor* gx = tp.grad_buffer(x)) {
                      auto dst = gx->data().subspan(begin * stride, g.size());
                      detail::axpy(dst, g.data());
                    }
                  });
}

/// x: (T×M×C) -> (T×|joints|×C), selecting joints in the given order.
inline Var gather_joints(Var x, std::vector<std::size_t> joints) {
  const Tensor& xv = x.value();
  require(xv.rank() == 3 && !joints.empty(), "gather_joints: need rank-3 input and nonempty index list");
  const std::size_t T = xv.dim(0), M = xv.dim(1), C = xv.dim(2), J = joints.size();
  for (std::size_t j : joints) require(j < M, "gather_joints: joint index out of range");
  Tensor out({T, J, C}, 0.0);
  for (std::size_t t = 0; t < T; ++t)
    for (std::size_t k = 0; k < J; ++k)
      std::copy_n(xv.data().data() + (t * M + joints[k]) * C, C, out.data().data() + (t * J + k) * C);
  Tape& tp0 = detail::tape_of(x);
  return tp0.record("gather_joints", std::move(out), {x},
                    [x, joints = std::move(joints), T, M, C, J](Tape& tp, const Tensor& g) {
                      if (Tensor* gx = tp.grad_buffer(x))
                        for (std::size_t t = 0; t < T; ++t)
                          for (std::size_t k = 0; k < J; ++k) {
                            double* d = gx->data().data() + (t * M + joints[k]) * C;
                            const double* s = g.data().data() + (t * J + k) * C;
                            for (std::size_t c = 0; c < C; ++c) d[c] += s[c];
                          }
                    });
}

/// Stacks equally shaped values along a new leading axis.
inline Var stack(const std::vector<Var>& xs) {
  require(!xs.empty(), "stack: empty input");
  const Shape& s0 = xs.front().shape();
  Shape s{xs.size()};
  s.insert(s.end(), s0.begin(), s0.end());
  const std::size_t n = xs.front().value().size();
  std::vector<double> d;
  d.reserve(n * xs.size());
  for (const Var& v : xs) {
    require(v.shape() == s0, "stack: shape mismatch");
    require(v.tape() == xs.front().tape(), "stack: inputs on different tapes");
    d.insert(d.end(), v.value().data().begin(), v.value().data().end());
  }
  Tape& t = detail::tape_of(xs.front());
  return t.record("stack", Tensor(std::move(s), std::move(d)), std::span<const Var>(xs),
                  [xs, n](Tape& tp, const Tensor& g) {
                    for (std::size_t k = 0; k < xs.size(); ++k)
                      if (Tensor* gk = tp.grad_buffer(xs[k]))
                        detail::axpy(gk->data(), g.data().subspan(k * n, n));
                  });
}

/// Divides each row of x (R×D) by its Euclidean norm. A zero row is a
/// DegenerateInput error.
inline Var l2_normalize_rows(Var x) {
  const Tensor& xv = x.value();
  require(xv.rank() == 2, "l2_normalize_rows: rank-2 input required");
  const std::size_t R = xv.dim(0), D = xv.dim(1);
  std::vector<double> norms(R);
  Tensor out = xv;
  for (std::size_t r = 0; r < R; ++r) {
    double s = 0.0;
    for (std::size_t d = 0; d < D; ++d) s += xv[r * D + d] * xv[r * D + d];
    const double n = std::sqrt(s);
    if (!(n > 0.0)) throw DegenerateInput("l2_normalize_rows: zero-norm row " + std::to_string(r));
    norms[r] = n;
    for (std::size_t d = 0; d < D; ++d) out[r * D + d] /= n;
  }
  Tape& t = detail::tape_of(x);
  const std::size_t self = t.size();
  return t.record("l2_normalize_rows", std::move(out), {x},
                  [x, self, R, D, norms = std::move(norms)](Tape& tp, const Tensor& g) {
                    Tensor* gx = tp.grad_buffer(x);
                    if (!gx) return;
                    const Tensor& y = tp.value(self);
                    // d(x/|x|) = (g - y (y.g)) / |x|
                    for (std::size_t r = 0; r < R; ++r) {
                      double yg = 0.0;
                      for (std::size_t d = 0; d < D; ++d) yg += y[r * D + d] * g[r * D + d];
                      for (std::size_t d = 0; d < D; ++d)
                        (*gx)[r * D + d] += (g[r * D + d] - y[r * D + d] * yg) / norms[r];
                    }
                  });
}

/// log(sum over entries with mask != 0 of exp(x)). Uses max-subtraction. An
/// all-false mask is a contract violation (log of an empty sum).
inline Var masked_logsumexp(Var x, std::vector<char> mask) {
  const Tensor& xv = x.value();
  require(mask.size() == xv.size(), "masked_logsumexp: mask size mismatch");
  double mx = -std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < mask.size(); ++i)
    if (mask[i]) mx = std::max(mx, xv[i]);
  require(std::isfinite(mx), "masked_logsumexp: empty mask");
  double s = 0.0;
  for (std::size_t i = 0; i < mask.size(); ++i)
    if (mask[i]) s += std::exp(xv[i] - mx);
  const double lse = mx + std::log(s);
  Tape& t = detail::tape_of(x);
  return t.record("masked_logsumexp", Tensor::scalar(lse), {x},
                  [x, lse, mask = std::move(mask)](Tape& tp, const Tensor& g) {
                    if (Tensor* gx = tp.grad_buffer(x)) {
                      const Tensor& xv = x.value();
                      for (std::size_t i = 0; i < mask.size(); ++i)
                        if (mask[i]) (*gx)[i] += g[0] * std::exp(xv[i] - lse);
                    }
                  });
}

/// Mean softmax cross-entropy of logits (B×K) against integer labels.
inline Var softmax_cross_entropy(Var logits, std::vector<std::size_t> labels) {
  const Tensor& z = logits.value();
  require(z.rank() == 2 && z.dim(0) == labels.size(), "softmax_cross_entropy: shape/label mismatch");
  const std::size_t B = z.dim(0), K = z.dim(1);
  Tensor probs({B, K}, 0.0);
  double loss = 0.0;
  for (std::size_t b = 0; b < B; ++b) {
    require(labels[b] < K, "softmax_cross_entropy: label out of range");
    double mx = z[b * K];
    for (std::size_t k = 1; k < K; ++k) mx = std::max(mx, z[b * K + k]);
    double s = 0.0;
    for (std::size_t k = 0; k < K; ++k) s += std::exp(z[b * K + k] - mx);
    const double lse = mx + std::log(s);
    for (std::size_t k = 0; k < K; ++k) probs[b * K + k] = std::exp(z[b * K + k] - lse);
    loss += lse - z[b * K + labels[b]];
  }
  loss /= static_cast<double>(B);
  Tape& t = detail::tape_of(logits);
  return t.record("softmax_cross_entropy", Tensor::scalar(loss), {logits},
                  [logits, B, K, probs = std::move(probs), labels = std::move(labels)](
                      Tape& tp, const Tensor& g) {
                    if (Tensor* gz = tp.grad_buffer(logits)) {
                      const double w = g[0] / static_cast<double>(B);
                      for (std::size_t b = 0; b < B; ++b)
                        for (std::size_t k = 0; k < K; ++k)
                          (*gz)[b * K + k] += w * (probs[b * K + k] - (k == labels[b] ? 1.0 : 0.0));
                    }
                  });
}

}  // namespace stgcrl::ops
