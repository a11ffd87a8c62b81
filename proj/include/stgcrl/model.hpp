#pragma once

// ST-GCN encoder: stacked blocks of spatial graph convolution over the three
// adjacency partitions followed by a strided temporal convolution and ReLU.
// Global mean pooling gives the representation H; two one-hidden-layer MLP
// heads map pooled features into the contrastive spaces.

#include <cmath>
#include <string>
#include <vector>

#include "stgcrl/augment.hpp"
#include "stgcrl/numcore/errors.hpp"
#include "stgcrl/numcore/ops.hpp"
#include "stgcrl/numcore/rng.hpp"
#include "stgcrl/numcore/tape.hpp"
#include "stgcrl/skelgraph.hpp"

namespace stgcrl {

struct BlockConfig {
  std::size_t in_channels = 3;
  std::size_t out_channels = 64;
  std::size_t temporal_stride = 1;
};

struct EncoderConfig {
  std::vector<BlockConfig> blocks{{3, 64, 1}, {64, 64, 1}, {64, 128, 2}, {128, 256, 2}};
  std::size_t temporal_kernel = 9;
  std::size_t output_dim = 256;
  std::size_t projection_hidden = 256;
  std::size_t projection_out = 512;

  void validate() const {
    require(!blocks.empty(), "EncoderConfig: need at least one block");
    require(temporal_kernel % 2 == 1, "EncoderConfig: temporal kernel must be odd");
    require(blocks.front().in_channels == 3, "EncoderConfig: first block must take 3 input channels");
    for (std::size_t i = 0; i < blocks.size(); ++i) {
      require(blocks[i].temporal_stride >= 1, "EncoderConfig: stride must be >= 1");
      require(blocks[i].in_channels >= 1 && blocks[i].out_channels >= 1, "EncoderConfig: empty channel count");
      if (i > 0)
        require(blocks[i].in_channels == blocks[i - 1].out_channels, "EncoderConfig: channel chain broken");
    }
    require(blocks.back().out_channels == output_dim, "EncoderConfig: last block must emit output_dim channels");
    require(projection_hidden >= 1 && projection_out >= 1, "EncoderConfig: empty projection head");
  }

  std::size_t total_stride() const {
    std::size_t s = 1;
    for (const auto& b : blocks) s *= b.temporal_stride;
    return s;
  }

  std::size_t output_frames(std::size_t T) const {
    for (const auto& b : blocks) T = ops::conv_out_len(T, b.temporal_stride);
    return T;
  }
};

struct GcnBlock {
  Parameter w_root, w_centripetal, w_centrifugal;  // C x C'
  Parameter b_spatial;                             // C'
  Parameter w_temporal;                            // K x C' x C'
  Parameter b_temporal;                            // C'
  std::size_t stride = 1;

  Parameter& spatial_weight(Partition p) {
    switch (p) {
      case Partition::root: return w_root;
      case Partition::centripetal: return w_centripetal;
      default: return w_centrifugal;
    }
  }
};

/// out = W2 relu(W1 x + b1) + b2, with W1: hidden x in and W2: out x hidden.
struct ProjectionHead {
  Parameter w1, b1, w2, b2;

  std::size_t in_dim() const { return w1.value.dim(1); }
  std::size_t hidden_dim() const { return w1.value.dim(0); }
  std::size_t out_dim() const { return w2.value.dim(0); }
};

/// All learnable state: encoder blocks, both projection heads and the two
/// log-variance weights of the uncertainty combination.
struct EncoderState {
  EncoderConfig config;
  std::vector<GcnBlock> blocks;
  ProjectionHead global_head;
  ProjectionHead local_head;
  Parameter log_sigma1_sq{"uncertainty/log_sigma1_sq", Tensor({1}, 0.0)};
  Parameter log_sigma2_sq{"uncertainty/log_sigma2_sq", Tensor({1}, 0.0)};
  // Fixed input statistics (M x 3), not trained. Empty means no normalization.
  Tensor input_mean, input_scale;

  bool has_input_norm() const { return !input_mean.empty(); }

  std::vector<Parameter*> encoder_parameters() {
    std::vector<Parameter*> out;
    for (auto& b : blocks)
      for (Parameter* p : {&b.w_root, &b.w_centripetal, &b.w_centrifugal, &b.b_spatial, &b.w_temporal,
                           &b.b_temporal})
        out.push_back(p);
    return out;
  }

  static void append_head(std::vector<Parameter*>& out, ProjectionHead& h) {
    for (Parameter* p : {&h.w1, &h.b1, &h.w2, &h.b2}) out.push_back(p);
  }

  /// Encoder, global head, local head, then the two uncertainty scalars.
  std::vector<Parameter*> all_parameters() {
    auto out = encoder_parameters();
    append_head(out, global_head);
    append_head(out, local_head);
    out.push_back(&log_sigma1_sq);
    out.push_back(&log_sigma2_sq);
    return out;
  }

  std::size_t parameter_count() {
    std::size_t n = 0;
    for (Parameter* p : all_parameters()) n += p->value.size();
    return n;
  }
};

namespace detail {

inline Tensor glorot(Shape shape, std::size_t fan_in, std::size_t fan_out, Rng& rng) {
  Tensor t(std::move(shape), 0.0);
  const double a = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
  for (double& v : t.data()) v = rng.uniform(-a, a);
  return t;
}

inline ProjectionHead make_head(const std::string& prefix, std::size_t in, std::size_t hidden, std::size_t out,
                                Rng& rng) {
  return ProjectionHead{{prefix + "/w1", glorot({hidden, in}, in, hidden, rng)},
                        {prefix + "/b1", Tensor({hidden}, 0.0)},
                        {prefix + "/w2", glorot({out, hidden}, hidden, out, rng)},
                        {prefix + "/b2", Tensor({out}, 0.0)}};
}

}  // namespace detail

/// Weights uniform in +-sqrt(6 / (fan_in + fan_out)); biases zero; both
/// log-variances zero (unit weights).
inline EncoderState init_encoder(const EncoderConfig& cfg, std::uint64_t seed) {
  cfg.validate();
  Rng rng(seed);
  EncoderState st;
  st.config = cfg;
  const std::size_t K = cfg.temporal_kernel;
  for (std::size_t i = 0; i < cfg.blocks.size(); ++i) {
    const auto& bc = cfg.blocks[i];
    const std::string pre = "encoder/block" + std::to_string(i) + "/";
    const std::size_t C = bc.in_channels, Co = bc.out_channels;
    GcnBlock b;
    b.w_root = {pre + "w_root", detail::glorot({C, Co}, C, Co, rng)};
    b.w_centripetal = {pre + "w_centripetal", detail::glorot({C, Co}, C, Co, rng)};
    b.w_centrifugal = {pre + "w_centrifugal", detail::glorot({C, Co}, C, Co, rng)};
    b.b_spatial = {pre + "b_spatial", Tensor({Co}, 0.0)};
    b.w_temporal = {pre + "w_temporal", detail::glorot({K, Co, Co}, K * Co, K * Co, rng)};
    b.b_temporal = {pre + "b_temporal", Tensor({Co}, 0.0)};
    b.stride = bc.temporal_stride;
    st.blocks.push_back(std::move(b));
  }
  st.global_head = detail::make_head("global_head", cfg.output_dim, cfg.projection_hidden, cfg.projection_out, rng);
  st.local_head = detail::make_head("local_head", cfg.output_dim, cfg.projection_hidden, cfg.projection_out, rng);
  return st;
}

/// sum_p A_p F W_p at every frame. F: T x M x C (a single frame is T = 1).
inline Var spatial_gcn_forward(Var f, const SpatialPartitions& parts, const std::array<Var, 3>& weights) {
  Var out;
  for (std::size_t p = 0; p < 3; ++p) {
    Var term = ops::linear_last(ops::mix_joints(parts.normalized[p], f), weights[p]);
    out = out.valid() ? ops::add(out, term) : term;
  }
  return out;
}

/// Value-level form for one frame: F is M x C, weights are C x C'.
inline Tensor spatial_gcn_forward(const Tensor& f, const SpatialPartitions& parts,
                                  const std::array<Tensor, 3>& weights) {
  require(f.rank() == 2, "spatial_gcn_forward: F must be M x C");
  Tape tape(false);
  Var x = tape.constant(f.reshaped({1, f.dim(0), f.dim(1)}));
  std::array<Var, 3> w{tape.constant(weights[0]), tape.constant(weights[1]), tape.constant(weights[2])};
  const Tensor& y = spatial_gcn_forward(x, parts, w).value();
  return y.reshaped({y.dim(1), y.dim(2)});
}

/// Temporal convolution plus bias.
inline Var temporal_conv_forward(Var f, Var kernel, Var bias, std::size_t stride) {
  return ops::add_bias(ops::temporal_conv(f, kernel, stride), bias);
}

/// h = blocks of (spatial gcn -> temporal conv -> relu). x: T x M x 3.
inline Var encode(Tape& tape, Var x, EncoderState& st, const SpatialPartitions& parts) {
  require(x.value().rank() == 3 && x.value().dim(1) == parts.root.dim(0),
          "encode: input " + shape_str(x.shape()) + " does not match the skeleton");
  Var h = st.has_input_norm() ? ops::normalize_joints(x, st.input_mean, st.input_scale) : x;
  for (GcnBlock& b : st.blocks) {
    std::array<Var, 3> w{tape.param(b.w_root), tape.param(b.w_centripetal), tape.param(b.w_centrifugal)};
    Var s = ops::add_bias(spatial_gcn_forward(h, parts, w), tape.param(b.b_spatial));
    h = ops::relu(temporal_conv_forward(s, tape.param(b.w_temporal), tape.param(b.b_temporal), b.stride));
  }
  return h;
}

/// Inference-mode encode of one sequence.
inline STGraphFeature encode(const SkeletonSequence& seq, EncoderState& st, const SpatialPartitions& parts) {
  seq.validate();
  Tape tape(false);
  Var h = encode(tape, tape.constant(seq.coords), st, parts);
  return STGraphFeature{h.value(), seq.topology, st.config.total_stride(), 0};
}

/// Sets the fixed input statistics from raw sequences: a per-joint mean of
/// each coordinate, and one scale per coordinate from the spread left after
/// removing those means (pooled over joints so that nearly static joints are
/// not blown up).
inline void fit_input_normalization(EncoderState& st, const std::vector<const SkeletonSequence*>& seqs) {
  require(!seqs.empty(), "fit_input_normalization: no sequences");
  const std::size_t M = seqs.front()->coords.dim(1);
  Tensor mean({M, 3}, 0.0);
  double rows = 0.0;
  for (const SkeletonSequence* s : seqs) {
    require(s->coords.dim(1) == M, "fit_input_normalization: joint count differs across sequences");
    for (std::size_t i = 0; i < s->coords.size(); ++i) mean[i % (M * 3)] += s->coords[i];
    rows += static_cast<double>(s->coords.dim(0));
  }
  for (double& v : mean.data()) v /= rows;
  std::array<double, 3> var{0.0, 0.0, 0.0};
  for (const SkeletonSequence* s : seqs)
    for (std::size_t i = 0; i < s->coords.size(); ++i) {
      const double d = s->coords[i] - mean[i % (M * 3)];
      var[i % 3] += d * d;
    }
  Tensor scale({M, 3}, 1.0);
  for (std::size_t c = 0; c < 3; ++c) {
    const double sd = std::sqrt(var[c] / (rows * static_cast<double>(M)));
    const double inv = sd > 1e-12 ? 1.0 / sd : 1.0;
    for (std::size_t m = 0; m < M; ++m) scale[m * 3 + c] = inv;
  }
  st.input_mean = std::move(mean);
  st.input_scale = std::move(scale);
}

/// Mean over all T' x M vertices per channel.
inline Var global_pool(Var h) { return ops::mean_rows(h); }

inline Tensor global_pool(const STGraphFeature& h) {
  Tape tape(false);
  return ops::mean_rows(tape.constant(h.values)).value();
}

/// Applies the head to a vector (D) or to each row of a matrix (R x D).
inline Var project(Tape& tape, ProjectionHead& head, Var pooled) {
  const Tensor& pv = pooled.value();
  require((pv.rank() == 1 || pv.rank() == 2) && pv.shape().back() == head.in_dim(),
          "project: input " + shape_str(pv.shape()) + " vs head input " + std::to_string(head.in_dim()));
  const bool vec = pv.rank() == 1;
  Var x = vec ? ops::reshape(pooled, {1, pv.dim(0)}) : pooled;
  Var hid = ops::relu(ops::add_bias(ops::matmul(x, tape.param(head.w1), true), tape.param(head.b1)));
  Var out = ops::add_bias(ops::matmul(hid, tape.param(head.w2), true), tape.param(head.b2));
  return vec ? ops::reshape(out, {head.out_dim()}) : out;
}

inline Tensor project(ProjectionHead& head, const Tensor& pooled) {
  Tape tape(false);
  return project(tape, head, tape.constant(pooled)).value();
}

}  // namespace stgcrl
