#pragma once

// Stochastic skeleton augmentations. All functions are pure in
// (input, config, rng state): the same seed reproduces the same output bit
// for bit.

#include <array>
#include <cmath>
#include <numbers>
#include <string>
#include <vector>

#include "stgcrl/numcore/errors.hpp"
#include "stgcrl/numcore/rng.hpp"
#include "stgcrl/numcore/tensor.hpp"
#include "stgcrl/skelgraph.hpp"

namespace stgcrl {

/// One view of one action: T x M x 3 joint coordinates.
struct SkeletonSequence {
  Tensor coords;
  const SkeletonTopology* topology = nullptr;  // non-owning, may be null

  std::size_t frames() const { return coords.dim(0); }
  std::size_t joints() const { return coords.dim(1); }

  void validate() const {
    require(coords.rank() == 3 && coords.dim(2) == 3, "SkeletonSequence: coords must be T x M x 3");
    require(coords.dim(0) >= 2, "SkeletonSequence: need at least two frames");
    require(topology == nullptr || topology->num_joints == coords.dim(1),
            "SkeletonSequence: joint count differs from topology");
    require(coords.all_finite(), "SkeletonSequence: non-finite coordinate");
  }
};

enum class AugKind { none, temporal_subgraph, node_drop, node_perturb, view_rotate, shear };

inline std::string to_string(AugKind k) {
  switch (k) {
    case AugKind::none: return "none";
    case AugKind::temporal_subgraph: return "temporal-subgraph";
    case AugKind::node_drop: return "node-drop";
    case AugKind::node_perturb: return "node-perturb";
    case AugKind::view_rotate: return "view-rotate";
    case AugKind::shear: return "shear";
  }
  return "none";
}

inline AugKind aug_kind_from_string(const std::string& s) {
  for (AugKind k : {AugKind::none, AugKind::temporal_subgraph, AugKind::node_drop, AugKind::node_perturb,
                    AugKind::view_rotate, AugKind::shear})
    if (to_string(k) == s) return k;
  throw ContractViolation("unknown augmentation '" + s + "'");
}

struct AugmentationConfig {
  AugKind kind = AugKind::temporal_subgraph;
  std::size_t crop_len = 95;
  std::size_t target_len = 100;
  double drop_apply_prob = 0.5;
  double drop_frac = 0.1;
  double perturb_sigma = 0.05;
  double rotate_range_deg = 17.0;
  double shear_lo = 0.01;
  double shear_hi = 0.1;

  void validate() const {
    require(crop_len > 0 && crop_len <= target_len, "augment: need 0 < crop_len <= target_len");
    require(target_len >= 2, "augment: target_len must be >= 2");
    require(drop_apply_prob >= 0.0 && drop_apply_prob <= 1.0, "augment: drop_apply_prob outside [0,1]");
    require(drop_frac >= 0.0 && drop_frac <= 1.0, "augment: drop_frac outside [0,1]");
    require(perturb_sigma >= 0.0, "augment: perturb_sigma must be non-negative");
    require(rotate_range_deg >= 0.0, "augment: rotate_range_deg must be non-negative");
    require(shear_lo <= shear_hi, "augment: shear_lo must not exceed shear_hi");
  }
};

/// Piecewise-linear resampling along time; first and last frames map to the
/// first and last output frames.
inline SkeletonSequence linear_interpolate_time(const SkeletonSequence& seq, std::size_t new_len) {
  seq.validate();
  require(new_len >= 2, "linear_interpolate_time: new_len must be >= 2");
  const std::size_t T = seq.frames(), row = seq.joints() * 3;
  if (new_len == T) return seq;
  Tensor out({new_len, seq.joints(), 3}, 0.0);
  const double scale = static_cast<double>(T - 1) / static_cast<double>(new_len - 1);
  for (std::size_t t = 0; t < new_len; ++t) {
    const double u = static_cast<double>(t) * scale;
    std::size_t i0 = static_cast<std::size_t>(std::floor(u));
    if (i0 >= T - 1) i0 = T - 2;
    const double w = u - static_cast<double>(i0);
    const double* a = seq.coords.data().data() + i0 * row;
    const double* b = a + row;
    double* o = out.data().data() + t * row;
    for (std::size_t k = 0; k < row; ++k) o[k] = a[k] + w * (b[k] - a[k]);
  }
  return {std::move(out), seq.topology};
}

/// Random crop of crop_len consecutive frames, stretched back to target_len.
inline SkeletonSequence temporal_subgraph(const SkeletonSequence& seq, const AugmentationConfig& cfg, Rng& rng) {
  cfg.validate();
  seq.validate();
  require(seq.frames() >= cfg.crop_len, "temporal_subgraph: sequence shorter than crop_len");
  const std::size_t row = seq.joints() * 3;
  const std::size_t offset = static_cast<std::size_t>(rng.below(seq.frames() - cfg.crop_len + 1));
  std::vector<double> d(seq.coords.data().begin() + static_cast<std::ptrdiff_t>(offset * row),
                        seq.coords.data().begin() + static_cast<std::ptrdiff_t>((offset + cfg.crop_len) * row));
  SkeletonSequence crop{Tensor({cfg.crop_len, seq.joints(), 3}, std::move(d)), seq.topology};
  if (cfg.crop_len < 2) {
    // a single frame cannot be interpolated; repeat it
    Tensor rep({cfg.target_len, seq.joints(), 3}, 0.0);
    for (std::size_t t = 0; t < cfg.target_len; ++t)
      std::copy_n(crop.coords.data().data(), row, rep.data().data() + t * row);
    return {std::move(rep), seq.topology};
  }
  return linear_interpolate_time(crop, cfg.target_len);
}

/// With probability drop_apply_prob, zeroes floor(drop_frac * T * M)
/// spatio-temporal vertices chosen without replacement.
inline SkeletonSequence node_drop(const SkeletonSequence& seq, const AugmentationConfig& cfg, Rng& rng) {
  cfg.validate();
  seq.validate();
  SkeletonSequence out = seq;
  if (!rng.bernoulli(cfg.drop_apply_prob)) return out;
  const std::size_t n = seq.frames() * seq.joints();
  const auto k = static_cast<std::size_t>(std::floor(cfg.drop_frac * static_cast<double>(n)));
  std::vector<std::size_t> idx(n);
  for (std::size_t i = 0; i < n; ++i) idx[i] = i;
  for (std::size_t i = 0; i < k; ++i) {  // partial Fisher-Yates
    const std::size_t j = i + static_cast<std::size_t>(rng.below(n - i));
    std::swap(idx[i], idx[j]);
    for (std::size_t c = 0; c < 3; ++c) out.coords[idx[i] * 3 + c] = 0.0;
  }
  return out;
}

/// Adds N(0, perturb_sigma^2) noise to every coordinate.
inline SkeletonSequence node_perturb(const SkeletonSequence& seq, const AugmentationConfig& cfg, Rng& rng) {
  cfg.validate();
  seq.validate();
  SkeletonSequence out = seq;
  if (cfg.perturb_sigma == 0.0) return out;
  for (double& v : out.coords.data()) v += cfg.perturb_sigma * rng.normal();
  return out;
}

using Mat3 = std::array<std::array<double, 3>, 3>;

inline Mat3 matmul3(const Mat3& a, const Mat3& b) {
  Mat3 c{};
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j)
      for (int k = 0; k < 3; ++k) c[i][j] += a[i][k] * b[k][j];
  return c;
}

/// R_X(alpha) R_Y(beta) R_Z(gamma) with the basic matrices laid out for the
/// row-vector convention (coordinate row times matrix).
inline Mat3 rotation_matrix(double alpha, double beta, double gamma) {
  const double ca = std::cos(alpha), sa = std::sin(alpha);
  const double cb = std::cos(beta), sb = std::sin(beta);
  const double cg = std::cos(gamma), sg = std::sin(gamma);
  const Mat3 rx{{{1, 0, 0}, {0, ca, sa}, {0, -sa, ca}}};
  const Mat3 ry{{{cb, 0, -sb}, {0, 1, 0}, {sb, 0, cb}}};
  const Mat3 rz{{{cg, sg, 0}, {-sg, cg, 0}, {0, 0, 1}}};
  return matmul3(matmul3(rx, ry), rz);
}

/// [[1, s_xy, s_xz], [s_yx, 1, s_yz], [s_zx, s_zy, 1]]
inline Mat3 shear_matrix(const std::array<double, 6>& f) {
  return Mat3{{{1.0, f[0], f[1]}, {f[2], 1.0, f[3]}, {f[4], f[5], 1.0}}};
}

/// Every joint coordinate (as a row vector) right-multiplied by m.
inline SkeletonSequence apply_linear(const SkeletonSequence& seq, const Mat3& m) {
  SkeletonSequence out = seq;
  auto src = seq.coords.data();
  auto dst = out.coords.data();
  for (std::size_t p = 0; p < src.size(); p += 3)
    for (int c = 0; c < 3; ++c) dst[p + c] = src[p] * m[0][c] + src[p + 1] * m[1][c] + src[p + 2] * m[2][c];
  return out;
}

inline double deg_to_rad(double deg) { return deg * std::numbers::pi / 180.0; }

/// One rotation per sequence, angles uniform in +-rotate_range_deg.
inline SkeletonSequence view_rotate(const SkeletonSequence& seq, const AugmentationConfig& cfg, Rng& rng) {
  cfg.validate();
  seq.validate();
  const double r = deg_to_rad(cfg.rotate_range_deg);
  const double a = rng.uniform(-r, r);
  const double b = rng.uniform(-r, r);
  const double g = rng.uniform(-r, r);
  return apply_linear(seq, rotation_matrix(a, b, g));
}

/// One shear per sequence, six factors uniform in [shear_lo, shear_hi].
inline SkeletonSequence shear(const SkeletonSequence& seq, const AugmentationConfig& cfg, Rng& rng) {
  cfg.validate();
  seq.validate();
  std::array<double, 6> f{};
  for (double& x : f) x = rng.uniform(cfg.shear_lo, cfg.shear_hi);
  return apply_linear(seq, shear_matrix(f));
}

/// Dispatches on cfg.kind.
inline SkeletonSequence augment(const SkeletonSequence& seq, const AugmentationConfig& cfg, Rng& rng) {
  switch (cfg.kind) {
    case AugKind::none: return seq;
    case AugKind::temporal_subgraph: return temporal_subgraph(seq, cfg, rng);
    case AugKind::node_drop: return node_drop(seq, cfg, rng);
    case AugKind::node_perturb: return node_perturb(seq, cfg, rng);
    case AugKind::view_rotate: return view_rotate(seq, cfg, rng);
    case AugKind::shear: return shear(seq, cfg, rng);
  }
  return seq;
}

}  // namespace stgcrl
