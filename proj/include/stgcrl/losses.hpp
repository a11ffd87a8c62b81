#pragma once

// Multi-view contrastive losses on projected representations.
//
// Global, per example i (ordered view pairs, v1 != v2):
//   l_i = -log [ sum_{v1,v2} exp(sim(G_i^v1, G_i^v2)/tau)
//              / sum_{k != i} sum_{v1,v2} exp(sim(G_i^v1, G_k^v2)/tau) ]
//   L_global = sum_i l_i / (V N)
//
// Local adds the subgraph index s. The numerator pairs equal s; the
// denominator of the literal form requires k != i, s1 != s2 and v1 != v2
// together; the stated-count form drops the s1 != s2 condition.
//   L_local = sum_i l_i / (S V N)
//
// Positives are not part of the denominators, so both losses can go
// negative. An all-identical batch gives, per example, log of the
// denominator/numerator term ratio: log(N-1) globally, log((N-1)(S-1)) for the
// literal local form; the reported losses divide those by V and S V.

#include <cmath>
#include <span>
#include <string>
#include <vector>

#include "stgcrl/numcore/errors.hpp"
#include "stgcrl/numcore/ops.hpp"
#include "stgcrl/numcore/tape.hpp"

namespace stgcrl {

inline double cosine_sim(std::span<const double> u, std::span<const double> v) {
  require(u.size() == v.size(), "cosine_sim: dimension mismatch");
  double uv = 0.0, uu = 0.0, vv = 0.0;
  for (std::size_t i = 0; i < u.size(); ++i) {
    uv += u[i] * v[i];
    uu += u[i] * u[i];
    vv += v[i] * v[i];
  }
  if (!(uu > 0.0) || !(vv > 0.0)) throw DegenerateInput("cosine_sim: zero-norm vector");
  return uv / (std::sqrt(uu) * std::sqrt(vv));
}

/// G: N x V x D.
struct GlobalBatch {
  Tensor G;
  double tau = 0.07;

  void validate() const {
    require(G.rank() == 3, "GlobalBatch: G must be N x V x D");
    require(G.dim(0) >= 2, "GlobalBatch: need N >= 2 (empty denominator)");
    require(G.dim(1) >= 2, "GlobalBatch: need V >= 2");
    require(tau > 0.0, "GlobalBatch: tau must be positive");
    require(G.all_finite(), "GlobalBatch: non-finite representation");
  }
};

/// L: N x S x V x D.
struct LocalBatch {
  Tensor L;
  double tau = 0.07;

  void validate() const {
    require(L.rank() == 4, "LocalBatch: L must be N x S x V x D");
    require(L.dim(0) >= 2, "LocalBatch: need N >= 2 (empty denominator)");
    require(L.dim(1) >= 1, "LocalBatch: need S >= 1");
    require(L.dim(2) >= 2, "LocalBatch: need V >= 2");
    require(tau > 0.0, "LocalBatch: tau must be positive");
    require(L.all_finite(), "LocalBatch: non-finite representation");
  }
};

enum class LocalMode { literal, stated_count };

struct LossReport {
  double global_loss = 0.0;
  double local_loss = 0.0;
  double combined_loss = 0.0;
  double weight_global = 1.0;  // 1 / sigma1^2
  double weight_local = 1.0;   // 1 / sigma2^2
};

namespace detail {

// Scaled cosine-similarity matrix of the rows of X (R x D).
inline Var similarity_logits(Var rows, double tau) {
  Var z = ops::l2_normalize_rows(rows);
  return ops::scale(ops::matmul(z, z, true), 1.0 / tau);
}

// sum_i (lse(den_i) - lse(num_i)) over index groups; masks over an R x R matrix.
template <class NumPred, class DenPred>
Var contrastive_sum(Var logits, std::size_t N, std::size_t R, NumPred num, DenPred den) {
  Var total;
  for (std::size_t i = 0; i < N; ++i) {
    std::vector<char> num_mask(R * R, 0), den_mask(R * R, 0);
    for (std::size_t a = 0; a < R; ++a)
      for (std::size_t b = 0; b < R; ++b) {
        num_mask[a * R + b] = num(i, a, b);
        den_mask[a * R + b] = den(i, a, b);
      }
    Var li = ops::sub(ops::masked_logsumexp(logits, std::move(den_mask)),
                      ops::masked_logsumexp(logits, std::move(num_mask)));
    total = total.valid() ? ops::add(total, li) : li;
  }
  return total;
}

}  // namespace detail

/// G on the tape: N*V rows (example-major) of dimension D, or N x V x D.
inline Var global_loss(Var G, std::size_t N, std::size_t V, double tau) {
  require(N >= 2, "global_loss: need N >= 2 (empty denominator)");
  require(V >= 2, "global_loss: need V >= 2");
  require(tau > 0.0, "global_loss: tau must be positive");
  const std::size_t R = N * V;
  require(G.value().size() % R == 0, "global_loss: size not divisible by N*V");
  const std::size_t D = G.value().size() / R;
  Var rows = G.value().rank() == 2 && G.value().dim(0) == R ? G : ops::reshape(G, {R, D});
  Var logits = detail::similarity_logits(rows, tau);
  auto ex = [V](std::size_t r) { return r / V; };
  auto vw = [V](std::size_t r) { return r % V; };
  Var total = detail::contrastive_sum(
      logits, N, R,
      [&](std::size_t i, std::size_t a, std::size_t b) { return ex(a) == i && ex(b) == i && vw(a) != vw(b); },
      [&](std::size_t i, std::size_t a, std::size_t b) { return ex(a) == i && ex(b) != i && vw(a) != vw(b); });
  return ops::scale(total, 1.0 / static_cast<double>(V * N));
}

inline double global_loss(const GlobalBatch& batch) {
  batch.validate();
  Tape tape(false);
  const std::size_t N = batch.G.dim(0), V = batch.G.dim(1);
  return global_loss(tape.constant(batch.G), N, V, batch.tau).value().item();
}

/// L on the tape: N*S*V rows ordered (example, subgraph, view), or N x S x V x D.
inline Var local_loss(Var L, std::size_t N, std::size_t S, std::size_t V, double tau, LocalMode mode) {
  require(N >= 2, "local_loss: need N >= 2 (empty denominator)");
  require(S >= 1 && V >= 2, "local_loss: need S >= 1 and V >= 2");
  require(tau > 0.0, "local_loss: tau must be positive");
  require(!(mode == LocalMode::literal && S == 1),
          "local_loss: literal mode needs S >= 2 (s1 != s2 leaves the denominator empty)");
  const std::size_t R = N * S * V;
  require(L.value().size() % R == 0, "local_loss: size not divisible by N*S*V");
  const std::size_t D = L.value().size() / R;
  Var rows = L.value().rank() == 2 && L.value().dim(0) == R ? L : ops::reshape(L, {R, D});
  Var logits = detail::similarity_logits(rows, tau);
  auto ex = [S, V](std::size_t r) { return r / (S * V); };
  auto sg = [S, V](std::size_t r) { return (r / V) % S; };
  auto vw = [V](std::size_t r) { return r % V; };
  const bool literal = mode == LocalMode::literal;
  Var total = detail::contrastive_sum(
      logits, N, R,
      [&](std::size_t i, std::size_t a, std::size_t b) {
        return ex(a) == i && ex(b) == i && sg(a) == sg(b) && vw(a) != vw(b);
      },
      [&](std::size_t i, std::size_t a, std::size_t b) {
        return ex(a) == i && ex(b) != i && vw(a) != vw(b) && (!literal || sg(a) != sg(b));
      });
  return ops::scale(total, 1.0 / static_cast<double>(S * V * N));
}

inline double local_loss(const LocalBatch& batch, LocalMode mode) {
  batch.validate();
  Tape tape(false);
  const std::size_t N = batch.L.dim(0), S = batch.L.dim(1), V = batch.L.dim(2);
  return local_loss(tape.constant(batch.L), N, S, V, batch.tau, mode).value().item();
}

/// exp(-s1) Lg + exp(-s2) Ll + s1 + s2 with s = log sigma^2.
inline Var combine_uncertainty(Var lg, Var ll, Var log_sigma1_sq, Var log_sigma2_sq) {
  auto as_vec = [](Var v) { return v.value().rank() == 1 ? v : ops::reshape(v, {1}); };
  lg = as_vec(lg);
  ll = as_vec(ll);
  Var s1 = as_vec(log_sigma1_sq), s2 = as_vec(log_sigma2_sq);
  Var wg = ops::exp(ops::scale(s1, -1.0));
  Var wl = ops::exp(ops::scale(s2, -1.0));
  Var total = ops::add(ops::add(ops::mul(wg, lg), ops::mul(wl, ll)), ops::add(s1, s2));
  return ops::sum(total);
}

inline double combine_uncertainty(double lg, double ll, double log_sigma1_sq, double log_sigma2_sq) {
  return std::exp(-log_sigma1_sq) * lg + std::exp(-log_sigma2_sq) * ll + log_sigma1_sq + log_sigma2_sq;
}

inline Var combine_linear(Var lg, Var ll, double w1, double w2) {
  return ops::add(ops::scale(ops::sum(lg), w1), ops::scale(ops::sum(ll), w2));
}

inline double combine_linear(double lg, double ll, double w1, double w2) { return w1 * lg + w2 * ll; }

}  // namespace stgcrl
