#pragma once

// Contrastive pretraining, frozen-encoder linear evaluation, transfer
// evaluation and embedding export.

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <functional>
#include <limits>
#include <map>
#include <memory>
#include <numeric>
#include <string>
#include <thread>
#include <vector>

#include "stgcrl/augment.hpp"
#include "stgcrl/checkpoint.hpp"
#include "stgcrl/dataio.hpp"
#include "stgcrl/losses.hpp"
#include "stgcrl/model.hpp"
#include "stgcrl/numcore/optim.hpp"
#include "stgcrl/numcore/rng.hpp"
#include "stgcrl/numcore/tape.hpp"
#include "stgcrl/skelgraph.hpp"

namespace stgcrl {

enum class PretrainMode { multi_view, single_view };
enum class LocalBranch { none, temporal, spatial, both };
enum class CombineMode { uncertainty, linear };

struct PretrainConfig {
  int epochs = 40;
  std::size_t batch_size = 16;
  LrSchedule lr_schedule{0.1, {20, 30, 35}, 10.0};
  double momentum = 0.9;
  double tau = 0.07;
  std::size_t S = 5;
  std::size_t V = 2;
  PretrainMode mode = PretrainMode::multi_view;
  bool use_global = true;
  LocalBranch local = LocalBranch::temporal;
  LocalMode local_mode = LocalMode::literal;
  CombineMode combine = CombineMode::uncertainty;
  double w_global = 1.0;  // linear combination weights
  double w_local = 1.0;
  // Feed the uncertainty combination losses measured from their analytic
  // lower bound, so the objective stays bounded below (see README).
  bool shift_uncertainty = true;
  // Single-view mode: every physical view is its own sequence unless this
  // picks one view index.
  std::int64_t single_view_index = -1;
  AugmentationConfig aug;
  EncoderConfig encoder;
  double adjacency_alpha = 0.001;
  bool normalize_input = true;  // fit fixed per-joint input statistics before training
  std::uint64_t seed = 0;
  std::size_t workers = 1;

  void validate() const {
    require(epochs >= 0, "PretrainConfig: epochs must be non-negative");
    require(batch_size >= 2, "PretrainConfig: batch_size must be >= 2");
    require(V == 2, "PretrainConfig: V must be 2");
    require(tau > 0.0, "PretrainConfig: tau must be positive");
    require(S >= 1, "PretrainConfig: S must be >= 1");
    require(use_global || local != LocalBranch::none, "PretrainConfig: no loss selected");
    require(!(local != LocalBranch::none && local_mode == LocalMode::literal && S < 2),
            "PretrainConfig: literal local loss needs S >= 2");
    require(workers >= 1, "PretrainConfig: workers must be >= 1");
    aug.validate();
    encoder.validate();
  }
};

struct EpochMetrics {
  int epoch = 0;
  double lr = 0.0;
  double global_loss = 0.0;
  double local_loss = 0.0;
  double combined_loss = 0.0;
  double weight_global = 0.0;
  double weight_local = 0.0;
};

inline std::string metrics_csv_header() {
  return "epoch,lr,global_loss,local_loss,combined_loss,weight_global,weight_local";
}

inline std::string metrics_csv_line(const EpochMetrics& m) {
  char buf[256];
  std::snprintf(buf, sizeof buf, "%d,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g", m.epoch, m.lr, m.global_loss,
                m.local_loss, m.combined_loss, m.weight_global, m.weight_local);
  return buf;
}

// ------------------------------------------------------------ parallelism

/// Runs fn(k) for k in [0, n). Work is split by index, so results written to
/// per-index slots are independent of the worker count.
inline void parallel_for(std::size_t n, std::size_t workers, const std::function<void(std::size_t)>& fn) {
  workers = std::max<std::size_t>(1, std::min(workers, n));
  if (workers == 1) {
    for (std::size_t k = 0; k < n; ++k) fn(k);
    return;
  }
  std::vector<std::exception_ptr> errors(workers);
  std::vector<std::thread> pool;
  for (std::size_t w = 0; w < workers; ++w)
    pool.emplace_back([&, w] {
      try {
        for (std::size_t k = w; k < n; k += workers) fn(k);
      } catch (...) {
        errors[w] = std::current_exception();
      }
    });
  for (auto& t : pool) t.join();
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
}

// --------------------------------------------------------------- losses

/// Infimum of the global loss: every positive at similarity 1, every
/// negative at -1.
inline double global_loss_floor(std::size_t N, std::size_t V, double tau) {
  return (std::log(static_cast<double>(N - 1)) - 2.0 / tau) / static_cast<double>(V);
}

inline double local_loss_floor(std::size_t N, std::size_t S, std::size_t V, double tau, LocalMode mode) {
  const double negatives_per_positive =
      static_cast<double>(N - 1) * static_cast<double>(mode == LocalMode::literal ? S - 1 : S);
  return (std::log(negatives_per_positive) - 2.0 / tau) / static_cast<double>(S * V);
}

namespace detail {

// One (sample, view) forward pass kept alive until its backward.
struct ViewPass {
  std::unique_ptr<Tape> tape;
  Var g;                 // projected global representation (P)
  std::vector<Var> loc;  // per local branch: S x P
};

inline std::vector<PartitionAxis> local_axes(LocalBranch b) {
  switch (b) {
    case LocalBranch::none: return {};
    case LocalBranch::temporal: return {PartitionAxis::temporal};
    case LocalBranch::spatial: return {PartitionAxis::spatial};
    case LocalBranch::both: return {PartitionAxis::temporal, PartitionAxis::spatial};
  }
  return {};
}

inline ViewPass forward_view(const SkeletonSequence& seq, EncoderState& st, const SpatialPartitions& parts,
                             const PretrainConfig& cfg) {
  ViewPass p;
  p.tape = std::make_unique<Tape>();
  Tape& t = *p.tape;
  Var h = encode(t, t.constant(seq.coords), st, parts);
  if (cfg.use_global) p.g = project(t, st.global_head, global_pool(h));
  for (PartitionAxis axis : local_axes(cfg.local)) {
    std::vector<Var> pooled;
    for (Var part : partition_stgraph(h, *seq.topology, axis, cfg.S)) pooled.push_back(global_pool(part));
    p.loc.push_back(project(t, st.local_head, ops::stack(pooled)));
  }
  return p;
}

}  // namespace detail

/// One optimisation step's worth of work on an explicit batch: views[i][v]
/// are the already-augmented inputs. Returns the loss report and, when
/// `grads` is non-null, fills it with one gradient per st.all_parameters().
inline LossReport contrastive_batch(EncoderState& st, const SpatialPartitions& parts,
                                    const std::vector<std::array<SkeletonSequence, 2>>& views,
                                    const PretrainConfig& cfg, std::vector<Tensor>* grads) {
  const std::size_t N = views.size(), V = 2, S = cfg.S;
  require(N >= 2, "contrastive_batch: need at least two samples");
  const std::size_t tasks = N * V;
  std::vector<detail::ViewPass> passes(tasks);
  parallel_for(tasks, cfg.workers,
               [&](std::size_t k) { passes[k] = detail::forward_view(views[k / V][k % V], st, parts, cfg); });

  // Loss tape over the projected representations.
  Tape lt;
  LossReport rep;
  Var G, lg, ll;
  std::vector<Var> L;
  if (cfg.use_global) {
    const std::size_t P = passes[0].g.value().size();
    Tensor gv({tasks, P}, 0.0);
    for (std::size_t k = 0; k < tasks; ++k)
      std::copy_n(passes[k].g.value().data().begin(), P, gv.data().begin() + k * P);
    G = lt.input(std::move(gv));
    lg = global_loss(G, N, V, cfg.tau);
    rep.global_loss = lg.value().item();
  }
  const std::size_t branches = detail::local_axes(cfg.local).size();
  for (std::size_t b = 0; b < branches; ++b) {
    const std::size_t P = passes[0].loc[b].value().dim(1);
    Tensor lv({N * S * V, P}, 0.0);
    for (std::size_t k = 0; k < tasks; ++k) {
      const std::size_t i = k / V, v = k % V;
      const Tensor& x = passes[k].loc[b].value();
      for (std::size_t s = 0; s < S; ++s)
        std::copy_n(x.data().begin() + s * P, P, lv.data().begin() + ((i * S + s) * V + v) * P);
    }
    L.push_back(lt.input(std::move(lv)));
    Var term = local_loss(L.back(), N, S, V, cfg.tau, cfg.local_mode);
    ll = ll.valid() ? ops::add(ll, term) : term;
  }
  if (ll.valid()) rep.local_loss = ll.value().item();

  Var total;
  if (lg.valid() && ll.valid()) {
    if (cfg.combine == CombineMode::uncertainty) {
      Var g_in = lg, l_in = ll;
      if (cfg.shift_uncertainty) {
        g_in = ops::add_scalar(lg, -global_loss_floor(N, V, cfg.tau));
        l_in = ops::add_scalar(ll, -static_cast<double>(branches) * local_loss_floor(N, S, V, cfg.tau, cfg.local_mode));
      }
      total = combine_uncertainty(g_in, l_in, lt.param(st.log_sigma1_sq), lt.param(st.log_sigma2_sq));
      rep.weight_global = std::exp(-st.log_sigma1_sq.value[0]);
      rep.weight_local = std::exp(-st.log_sigma2_sq.value[0]);
    } else {
      total = combine_linear(lg, ll, cfg.w_global, cfg.w_local);
      rep.weight_global = cfg.w_global;
      rep.weight_local = cfg.w_local;
    }
  } else if (lg.valid()) {
    total = lg;
    rep.weight_global = 1.0;
    rep.weight_local = 0.0;
  } else {
    total = ll;
    rep.weight_global = 0.0;
    rep.weight_local = 1.0;
  }
  rep.combined_loss = total.value().item();
  if (!grads) return rep;

  Gradients lgr = lt.backward(total);
  auto params = st.all_parameters();
  std::vector<Gradients> per_task(tasks);
  parallel_for(tasks, cfg.workers, [&](std::size_t k) {
    const std::size_t i = k / V, v = k % V;
    std::vector<Var> outs;
    std::vector<Tensor> seeds;
    if (G.valid()) {
      const Tensor& gg = lgr[G];
      const std::size_t P = passes[k].g.value().size();
      Tensor s({P}, 0.0);
      std::copy_n(gg.data().begin() + k * P, P, s.data().begin());
      outs.push_back(passes[k].g);
      seeds.push_back(std::move(s));
    }
    for (std::size_t b = 0; b < L.size(); ++b) {
      const Tensor& gl = lgr[L[b]];
      const std::size_t P = gl.dim(1);
      Tensor s({S, P}, 0.0);
      for (std::size_t sg = 0; sg < S; ++sg)
        std::copy_n(gl.data().begin() + ((i * S + sg) * V + v) * P, P, s.data().begin() + sg * P);
      outs.push_back(passes[k].loc[b]);
      seeds.push_back(std::move(s));
    }
    per_task[k] = passes[k].tape->backward(outs, seeds);
    passes[k].tape.reset();
  });

  grads->clear();
  for (Parameter* p : params) {
    Tensor acc(p->value.shape(), 0.0);
    for (const Gradients& g : per_task)
      if (const Tensor* t = g.find(*p)) ops::detail::axpy(acc.data(), t->data());
    if (const Tensor* t = lgr.find(*p)) ops::detail::axpy(acc.data(), t->data());
    grads->push_back(std::move(acc));
  }
  return rep;
}

// ------------------------------------------------------------ pretraining

struct PretrainOptions {
  std::string checkpoint_dir;  // empty: no per-epoch state file
  bool resume = false;
  std::vector<std::size_t> samples;  // subset of dataset indices; empty = all
  std::function<void(const EpochMetrics&)> on_epoch;
};

struct PretrainResult {
  EncoderState state;  // heads and uncertainty weights included; export with encoder_checkpoint()
  std::vector<EpochMetrics> history;
};

inline constexpr const char* kPretrainStateFile = "pretrain_state.stgc";

namespace detail {

inline Tensor u64_tensor(std::uint64_t x) {
  return Tensor({2}, std::vector<double>{static_cast<double>(x >> 32), static_cast<double>(x & 0xFFFFFFFFULL)});
}

inline std::uint64_t tensor_u64(const Tensor& t) {
  return (static_cast<std::uint64_t>(t[0]) << 32) | static_cast<std::uint64_t>(t[1]);
}

inline NamedTensors training_state(EncoderState& st, const OptimizerState& opt, int next_epoch, std::uint64_t seed,
                                   const std::vector<EpochMetrics>& history) {
  NamedTensors out = encoder_checkpoint(st);
  for (Parameter* p : {&st.global_head.w1, &st.global_head.b1, &st.global_head.w2, &st.global_head.b2,
                       &st.local_head.w1, &st.local_head.b1, &st.local_head.w2, &st.local_head.b2,
                       &st.log_sigma1_sq, &st.log_sigma2_sq})
    out.emplace_back(p->name, p->value);
  auto params = st.all_parameters();
  for (std::size_t k = 0; k < params.size(); ++k) out.emplace_back("optim/" + params[k]->name, opt.buffers[k]);
  out.emplace_back("meta/next_epoch", Tensor({1}, static_cast<double>(next_epoch)));
  out.emplace_back("meta/seed", u64_tensor(seed));
  if (!history.empty()) {
    Tensor h({history.size(), 7}, 0.0);
    for (std::size_t e = 0; e < history.size(); ++e) {
      const auto& m = history[e];
      const double row[7] = {static_cast<double>(m.epoch), m.lr, m.global_loss, m.local_loss,
                             m.combined_loss, m.weight_global, m.weight_local};
      std::copy_n(row, 7, h.data().begin() + e * 7);
    }
    out.emplace_back("meta/history", std::move(h));
  }
  return out;
}

}  // namespace detail

/// Training items: one per sample in multi-view mode, one per (sample,
/// physical view) in single-view mode.
inline std::vector<ViewRef> pretrain_items(const Dataset& ds, const std::vector<std::size_t>& pool,
                                           const PretrainConfig& cfg) {
  std::vector<ViewRef> items;
  for (std::size_t i : pool) {
    if (cfg.mode == PretrainMode::multi_view)
      items.emplace_back(i, 0);
    else if (cfg.single_view_index >= 0)
      items.emplace_back(i, static_cast<std::size_t>(cfg.single_view_index));
    else
      for (std::size_t v = 0; v < ds.num_views(); ++v) items.emplace_back(i, v);
  }
  return items;
}

/// Dataset sequence behind logical view l (0 or 1) of a training item.
inline const SkeletonSequence& pretrain_source(const Dataset& ds, ViewRef item, std::size_t l,
                                               const PretrainConfig& cfg) {
  return cfg.mode == PretrainMode::multi_view ? ds.sequences[item.first][l] : ds.sequences[item.first][item.second];
}

inline void check_pretrain_inputs(const Dataset& ds, const PretrainConfig& cfg) {
  cfg.validate();
  if (cfg.mode == PretrainMode::multi_view)
    require(ds.num_views() >= 2, "pretrain: multi-view mode needs a dataset with at least two views");
  else
    require(cfg.single_view_index < static_cast<std::int64_t>(ds.num_views()),
            "pretrain: single_view_index out of range");
  if (cfg.local == LocalBranch::spatial || cfg.local == LocalBranch::both)
    require(cfg.S <= ds.topology().num_joints, "pretrain: S exceeds the number of joints");
}

/// Contrastive pretraining. Sample order is reshuffled every epoch and each
/// augmentation draw comes from a stream keyed by (seed, epoch, sample id,
/// view), so the trajectory depends only on (seed, config, dataset).
inline PretrainResult pretrain(const Dataset& ds, const PretrainConfig& cfg, const PretrainOptions& opts = {}) {
  check_pretrain_inputs(ds, cfg);
  std::vector<std::size_t> pool = opts.samples;
  if (pool.empty()) {
    pool.resize(ds.size());
    std::iota(pool.begin(), pool.end(), std::size_t{0});
  }
  for (std::size_t i : pool) require(i < ds.size(), "pretrain: sample index out of range");
  const std::vector<ViewRef> items = pretrain_items(ds, pool, cfg);
  require(items.size() >= cfg.batch_size, "pretrain: fewer samples than one batch");

  const SpatialPartitions parts = build_partitions(ds.topology(), cfg.adjacency_alpha);
  PretrainResult res;
  res.state = init_encoder(cfg.encoder, derive_seed(cfg.seed, {0x1417}));
  if (cfg.normalize_input) {
    std::vector<const SkeletonSequence*> raw;
    for (ViewRef item : items)
      for (std::size_t l = 0; l < 2; ++l) raw.push_back(&pretrain_source(ds, item, l, cfg));
    fit_input_normalization(res.state, raw);
  }
  auto params = res.state.all_parameters();
  OptimizerState opt = OptimizerState::for_params(params, cfg.momentum, true);
  int start_epoch = 0;

  const std::string state_path =
      opts.checkpoint_dir.empty() ? "" : (std::filesystem::path(opts.checkpoint_dir) / kPretrainStateFile).string();
  if (opts.resume && !state_path.empty() && std::filesystem::exists(state_path)) {
    const NamedTensors saved = load_checkpoint(state_path);
    std::map<std::string, const Tensor*> by;
    for (const auto& [n, t] : saved) by[n] = &t;
    auto get = [&](const std::string& n) -> const Tensor& {
      auto it = by.find(n);
      if (it == by.end()) throw DataError("resume: state file lacks '" + n + "'");
      return *it->second;
    };
    if (detail::tensor_u64(get("meta/seed")) != cfg.seed) throw DataError("resume: state was written with another seed");
    for (std::size_t k = 0; k < params.size(); ++k) {
      const Tensor& v = get(params[k]->name);
      const Tensor& b = get("optim/" + params[k]->name);
      if (v.shape() != params[k]->value.shape() || b.shape() != params[k]->value.shape())
        throw DataError("resume: shape mismatch for '" + params[k]->name + "'");
      params[k]->value = v;
      opt.buffers[k] = b;
    }
    start_epoch = static_cast<int>(get("meta/next_epoch")[0]);
    if (by.count("meta/history")) {
      const Tensor& h = *by["meta/history"];
      for (std::size_t e = 0; e < h.dim(0); ++e)
        res.history.push_back({static_cast<int>(h.at(e, 0)), h.at(e, 1), h.at(e, 2), h.at(e, 3), h.at(e, 4),
                               h.at(e, 5), h.at(e, 6)});
    }
  }

  const std::size_t B = cfg.batch_size;
  const std::size_t batches = items.size() / B;  // final partial batch dropped
  std::vector<Tensor> grads;
  for (int epoch = start_epoch; epoch < cfg.epochs; ++epoch) {
    std::vector<ViewRef> order = items;
    Rng shuffle(derive_seed(cfg.seed, {0x5eed, static_cast<std::uint64_t>(epoch)}));
    for (std::size_t k = order.size(); k > 1; --k) std::swap(order[k - 1], order[shuffle.below(k)]);

    const double lr = cfg.lr_schedule.lr_at_epoch(epoch);
    EpochMetrics m;
    m.epoch = epoch;
    m.lr = lr;
    for (std::size_t b = 0; b < batches; ++b) {
      std::vector<std::array<SkeletonSequence, 2>> views(B);
      for (std::size_t j = 0; j < B; ++j) {
        const ViewRef item = order[b * B + j];
        const std::uint64_t id = ds.manifest.samples[item.first].id, e = static_cast<std::uint64_t>(epoch);
        for (std::size_t l = 0; l < 2; ++l) {
          Rng rng(cfg.mode == PretrainMode::multi_view ? derive_seed(cfg.seed, {0xa09, e, id, l})
                                                       : derive_seed(cfg.seed, {0xa0a, e, id, item.second, l}));
          views[j][l] = augment(pretrain_source(ds, item, l, cfg), cfg.aug, rng);
        }
      }
      const LossReport rep = contrastive_batch(res.state, parts, views, cfg, &grads);
      sgd_nesterov_step(params, grads, opt, lr);
      m.global_loss += rep.global_loss / static_cast<double>(batches);
      m.local_loss += rep.local_loss / static_cast<double>(batches);
      m.combined_loss += rep.combined_loss / static_cast<double>(batches);
      m.weight_global = rep.weight_global;
      m.weight_local = rep.weight_local;
    }
    for (Parameter* p : params)
      if (!p->value.all_finite()) throw NumericFailure("pretrain: parameter '" + p->name + "' diverged");
    if (cfg.use_global && cfg.local != LocalBranch::none && cfg.combine == CombineMode::uncertainty) {
      m.weight_global = std::exp(-res.state.log_sigma1_sq.value[0]);
      m.weight_local = std::exp(-res.state.log_sigma2_sq.value[0]);
    }
    res.history.push_back(m);
    if (opts.on_epoch) opts.on_epoch(m);
    if (!state_path.empty()) {
      std::filesystem::create_directories(opts.checkpoint_dir);
      save_checkpoint(state_path, detail::training_state(res.state, opt, epoch + 1, cfg.seed, res.history));
    }
  }
  return res;
}

// -------------------------------------------------------------- embedding

/// H for every sequence, one row each, in input order. No augmentation.
inline Tensor embed(EncoderState& encoder, const std::vector<const SkeletonSequence*>& seqs, std::size_t workers = 1,
                    double adjacency_alpha = 0.001) {
  const std::size_t D = encoder.config.output_dim;
  require(!seqs.empty(), "embed: no sequences");
  const SkeletonTopology* topo = seqs.front()->topology;
  require(topo != nullptr, "embed: sequence without topology");
  for (const auto* s : seqs) {
    s->validate();
    require(s->joints() == topo->num_joints, "embed: sequences disagree on the joint count");
  }
  const SpatialPartitions parts = build_partitions(*topo, adjacency_alpha);
  Tensor out({seqs.size(), D}, 0.0);
  parallel_for(seqs.size(), workers, [&](std::size_t k) {
    Tape t(false);
    const Tensor& h = global_pool(encode(t, t.constant(seqs[k]->coords), encoder, parts)).value();
    std::copy_n(h.data().begin(), D, out.data().begin() + k * D);
  });
  return out;
}

inline std::vector<const SkeletonSequence*> sequences_of(const Dataset& ds, const std::vector<ViewRef>& refs) {
  std::vector<const SkeletonSequence*> out;
  for (auto [i, v] : refs) out.push_back(&ds.sequences.at(i).at(v));
  return out;
}

/// Mean cosine similarity of H between the views of one sample minus the
/// mean over pairs of different samples seen from different views.
inline double view_invariance_margin(EncoderState& encoder, const Dataset& ds, std::size_t workers = 1) {
  require(ds.num_views() >= 2, "view_invariance_margin: need two views");
  std::vector<ViewRef> refs;
  for (std::size_t i = 0; i < ds.size(); ++i) refs.emplace_back(i, 0), refs.emplace_back(i, 1);
  const Tensor H = embed(encoder, sequences_of(ds, refs), workers);
  const std::size_t n = ds.size(), D = H.dim(1);
  auto row = [&](std::size_t r) { return std::span<const double>(H.data().data() + r * D, D); };
  double same = 0.0, cross = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    same += cosine_sim(row(2 * i), row(2 * i + 1));
    for (std::size_t k = 0; k < n; ++k)
      if (k != i) cross += cosine_sim(row(2 * i), row(2 * k + 1));
  }
  return same / static_cast<double>(n) - cross / static_cast<double>(n * (n - 1));
}

// ------------------------------------------------------- linear evaluation

struct LinearEvalConfig {
  int epochs = 45;
  std::size_t batch_size = 16;
  LrSchedule lr_schedule{0.1, {25, 35, 40}, 10.0};
  double momentum = 0.9;
  bool standardize = true;  // z-score H with training-split statistics
  std::uint64_t seed = 0;
  std::size_t workers = 1;

  void validate() const {
    require(epochs >= 0, "LinearEvalConfig: epochs must be non-negative");
    require(batch_size >= 1, "LinearEvalConfig: batch_size must be >= 1");
    require(workers >= 1, "LinearEvalConfig: workers must be >= 1");
  }
};

/// logits = ((H - mean) * scale) W^T + b
struct LinearClassifier {
  Tensor mean, scale;  // D
  Parameter W{"linear/W", Tensor()};
  Parameter b{"linear/b", Tensor()};

  Tensor standardized(const Tensor& H) const {
    Tensor Z = H;
    const std::size_t D = mean.size();
    for (std::size_t r = 0; r < H.dim(0); ++r)
      for (std::size_t d = 0; d < D; ++d) Z[r * D + d] = (H[r * D + d] - mean[d]) * scale[d];
    return Z;
  }

  Tensor logits(const Tensor& H) const {
    Tape t(false);
    return ops::add_bias(ops::matmul(t.constant(standardized(H)), t.constant(W.value), true), t.constant(b.value))
        .value();
  }
};

struct EvalResult {
  double top1 = 0.0;
  std::vector<double> per_class;  // NaN where the test split has no example
  std::vector<std::size_t> per_class_count;
  std::size_t count = 0;
  std::vector<std::size_t> predictions;
  std::vector<std::size_t> labels;
  std::vector<std::string> warnings;
};

/// Which (sample, view) pairs the classifier optimizer read, and how often.
struct AccessAudit {
  std::map<ViewRef, std::size_t> optimizer_reads;
};

struct LinearEvalOutcome {
  EvalResult result;
  LinearClassifier classifier;
};

inline EvalResult score(const Tensor& logits, const std::vector<std::size_t>& labels, std::size_t K) {
  EvalResult r;
  r.count = labels.size();
  r.per_class.assign(K, 0.0);
  r.per_class_count.assign(K, 0);
  std::vector<std::size_t> hits(K, 0);
  std::size_t correct = 0;
  for (std::size_t n = 0; n < labels.size(); ++n) {
    std::size_t best = 0;
    for (std::size_t k = 1; k < K; ++k)
      if (logits.at(n, k) > logits.at(n, best)) best = k;
    r.predictions.push_back(best);
    r.labels.push_back(labels[n]);
    ++r.per_class_count[labels[n]];
    if (best == labels[n]) ++correct, ++hits[labels[n]];
  }
  r.top1 = labels.empty() ? 0.0 : static_cast<double>(correct) / static_cast<double>(labels.size());
  for (std::size_t k = 0; k < K; ++k)
    r.per_class[k] = r.per_class_count[k] ? static_cast<double>(hits[k]) / static_cast<double>(r.per_class_count[k])
                                          : std::numeric_limits<double>::quiet_NaN();
  return r;
}

/// Trains a softmax linear classifier on train-split features, then scores
/// the test split. Works on precomputed features so callers can reuse them.
inline LinearEvalOutcome train_linear_classifier(const Tensor& Htrain, const std::vector<std::size_t>& ytrain,
                                                 const std::vector<ViewRef>& train_refs, const Tensor& Htest,
                                                 const std::vector<std::size_t>& ytest, std::size_t K,
                                                 const LinearEvalConfig& cfg, AccessAudit* audit = nullptr) {
  cfg.validate();
  require(Htrain.rank() == 2 && Htrain.dim(0) == ytrain.size() && !ytrain.empty(),
          "linear eval: train features/labels mismatch");
  require(Htest.rank() == 2 && Htest.dim(0) == ytest.size() && Htest.dim(1) == Htrain.dim(1),
          "linear eval: test features/labels mismatch");
  const std::size_t n = Htrain.dim(0), D = Htrain.dim(1);
  LinearEvalOutcome out;
  LinearClassifier& clf = out.classifier;
  clf.mean = Tensor({D}, 0.0);
  clf.scale = Tensor({D}, 1.0);
  if (cfg.standardize) {
    for (std::size_t r = 0; r < n; ++r)
      for (std::size_t d = 0; d < D; ++d) clf.mean[d] += Htrain.at(r, d) / static_cast<double>(n);
    for (std::size_t d = 0; d < D; ++d) {
      double var = 0.0;
      for (std::size_t r = 0; r < n; ++r) var += (Htrain.at(r, d) - clf.mean[d]) * (Htrain.at(r, d) - clf.mean[d]);
      const double sd = std::sqrt(var / static_cast<double>(n));
      clf.scale[d] = sd > 1e-12 ? 1.0 / sd : 0.0;
    }
  }
  clf.W.value = Tensor({K, D}, 0.0);
  clf.b.value = Tensor({K}, 0.0);
  std::vector<std::size_t> seen(K, 0);
  for (std::size_t y : ytrain) {
    require(y < K, "linear eval: label out of range");
    ++seen[y];
  }
  for (std::size_t k = 0; k < K; ++k)
    if (!seen[k]) out.result.warnings.push_back("class " + std::to_string(k) + " has no training examples");

  const Tensor Z = clf.standardized(Htrain);
  std::vector<Parameter*> params{&clf.W, &clf.b};
  OptimizerState opt = OptimizerState::for_params(params, cfg.momentum, true);
  std::vector<std::size_t> order(n);
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    std::iota(order.begin(), order.end(), std::size_t{0});
    Rng shuffle(derive_seed(cfg.seed, {0x11e, static_cast<std::uint64_t>(epoch)}));
    for (std::size_t k = n; k > 1; --k) std::swap(order[k - 1], order[shuffle.below(k)]);
    const double lr = cfg.lr_schedule.lr_at_epoch(epoch);
    for (std::size_t start = 0; start < n; start += cfg.batch_size) {
      const std::size_t bs = std::min(cfg.batch_size, n - start);
      Tensor xb({bs, D}, 0.0);
      std::vector<std::size_t> yb(bs);
      for (std::size_t j = 0; j < bs; ++j) {
        const std::size_t r = order[start + j];
        std::copy_n(Z.data().begin() + r * D, D, xb.data().begin() + j * D);
        yb[j] = ytrain[r];
        if (audit && r < train_refs.size()) ++audit->optimizer_reads[train_refs[r]];
      }
      Tape t;
      Var logits = ops::add_bias(ops::matmul(t.constant(std::move(xb)), t.param(clf.W), true), t.param(clf.b));
      Gradients g = t.backward(ops::softmax_cross_entropy(logits, std::move(yb)));
      const std::vector<Tensor> gs{g[clf.W], g[clf.b]};
      sgd_nesterov_step(params, gs, opt, lr);
    }
  }
  auto warnings = std::move(out.result.warnings);
  out.result = score(clf.logits(Htest), ytest, K);
  out.result.warnings = std::move(warnings);
  return out;
}

/// Frozen-encoder linear evaluation on a split of `ds`.
inline LinearEvalOutcome linear_eval(EncoderState& encoder, const Dataset& ds, const Split& split,
                                     const LinearEvalConfig& cfg, AccessAudit* audit = nullptr) {
  cfg.validate();
  auto labels_of = [&](const std::vector<ViewRef>& refs) {
    std::vector<std::size_t> y;
    for (auto [i, v] : refs) y.push_back(ds.manifest.samples.at(i).label);
    return y;
  };
  const Tensor Htr = embed(encoder, sequences_of(ds, split.train), cfg.workers);
  const Tensor Hte = embed(encoder, sequences_of(ds, split.test), cfg.workers);
  return train_linear_classifier(Htr, labels_of(split.train), split.train, Hte, labels_of(split.test),
                                 ds.num_classes(), cfg, audit);
}

/// Untrained encoder with the given architecture.
inline EncoderState random_encoder(const EncoderConfig& cfg, std::uint64_t seed) {
  return init_encoder(cfg, derive_seed(seed, {0x1417}));
}

/// Untrained encoder whose input statistics are fitted on every sequence of
/// `ds`, as pretraining does, so the baseline sees the same input scaling.
inline EncoderState random_encoder(const EncoderConfig& cfg, std::uint64_t seed, const Dataset& ds) {
  EncoderState st = random_encoder(cfg, seed);
  std::vector<const SkeletonSequence*> raw;
  for (const auto& views : ds.sequences)
    for (const auto& seq : views) raw.push_back(&seq);
  fit_input_normalization(st, raw);
  return st;
}

/// Pretrains on `source` and linearly evaluates on `target`.
inline EvalResult transfer_eval(const Dataset& source, const Dataset& target, const PretrainConfig& pcfg,
                                const LinearEvalConfig& ecfg, Protocol protocol = Protocol::cross_subject,
                                const SplitParams& params = {}) {
  require(source.topology().num_joints == target.topology().num_joints,
          "transfer_eval: source and target skeletons differ in joint count");
  PretrainResult pre = pretrain(source, pcfg);
  return linear_eval(pre.state, target, split_dataset(target.manifest, protocol, params), ecfg).result;
}

}  // namespace stgcrl
