// Acceptance run: one PASS/FAIL line per criterion, exit status 0 only when
// every criterion passes. `acceptance 1 4 10` runs a subset.

#include <chrono>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <set>
#include <sstream>
#include <string>

#include "oracles.hpp"
#include "stgcrl/augment.hpp"
#include "stgcrl/cli.hpp"
#include "stgcrl/numcore/gradcheck.hpp"
#include "stgcrl/pipeline.hpp"

using namespace stgcrl;
using namespace stgcrl::testing;
namespace fs = std::filesystem;

namespace {

struct Verdict {
  bool pass = true;
  std::string detail;
};

// Collects failures without stopping at the first one.
struct Check {
  bool ok = true;
  std::ostringstream why;
  void expect(bool cond, const std::string& what) {
    if (!cond && ok) why << what;
    ok = ok && cond;
  }
};

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

std::string fmt(const char* f, double a) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, a);
  return buf;
}

// ---------------------------------------------------------------- 1

// Central differences against contrastive_batch's analytic gradient on a
// handful of coordinates per parameter.
double composite_error(std::uint64_t seed) {
  const auto topo = SkeletonTopology::chain(4, 1);
  const auto parts = build_partitions(topo);
  PretrainConfig cfg;
  cfg.encoder.blocks = {{3, 4, 1}, {4, 5, 2}};
  cfg.encoder.temporal_kernel = 3;
  cfg.encoder.output_dim = 5;
  cfg.encoder.projection_hidden = 6;
  cfg.encoder.projection_out = 4;
  cfg.S = 2;
  cfg.tau = 0.5;
  cfg.normalize_input = false;
  EncoderState st = init_encoder(cfg.encoder, 40 + seed);
  for (auto& b : st.blocks) {
    for (double& v : b.b_spatial.value.data()) v = 0.05;
    for (double& v : b.b_temporal.value.data()) v = 0.05;
  }
  for (ProjectionHead* h : {&st.global_head, &st.local_head}) {
    for (double& v : h->b1.value.data()) v = 0.05;
    for (double& v : h->b2.value.data()) v = 0.05;
  }
  st.log_sigma1_sq.value[0] = 0.3;
  st.log_sigma2_sq.value[0] = -0.2;
  Rng rng(50 + seed);
  std::vector<std::array<SkeletonSequence, 2>> views(3);
  for (auto& pair : views)
    for (auto& s : pair) s = SkeletonSequence{random_tensor({8, 4, 3}, rng), &topo};

  std::vector<Tensor> grads;
  contrastive_batch(st, parts, views, cfg, &grads);
  const auto params = st.all_parameters();
  const double eps = 1e-6;
  double worst = 0.0;
  for (std::size_t p = 0; p < params.size(); ++p) {
    Tensor& w = params[p]->value;
    for (int probe = 0; probe < 4; ++probe) {
      const std::size_t k = rng.below(w.size());
      const double orig = w[k];
      w[k] = orig + eps;
      const double up = contrastive_batch(st, parts, views, cfg, nullptr).combined_loss;
      w[k] = orig - eps;
      const double down = contrastive_batch(st, parts, views, cfg, nullptr).combined_loss;
      w[k] = orig;
      const double numeric = (up - down) / (2 * eps);
      worst = std::max(worst, std::abs(grads[p][k] - numeric) / std::max(1.0, std::abs(numeric)));
    }
  }
  return worst;
}

Verdict gradients() {
  const auto t0 = std::chrono::steady_clock::now();
  double op_worst = 0.0, composite_worst = 0.0;
  std::string worst_op;
  for (const auto& c : primitive_cases())
    for (std::uint64_t seed = 0; seed < 10; ++seed) {
      Rng rng(1000 + seed);
      const Tensor x = random_tensor(c.shape, rng, c.lo, c.hi);
      TensorFn f = [&](Tape& t, Var v) { return probe(t, c.op(t, v), 77 + seed); };
      const double e = grad_check(f, x, 1e-5);
      if (e > op_worst) op_worst = e, worst_op = c.name;
    }
  for (std::uint64_t seed = 0; seed < 10; ++seed) composite_worst = std::max(composite_worst, composite_error(seed));
  const double secs = seconds_since(t0);
  Verdict v;
  v.pass = op_worst < 1e-4 && composite_worst < 1e-3 && secs < 60.0;
  v.detail = std::to_string(primitive_cases().size()) + " ops, worst " + fmt("%.2e", op_worst) + " (" + worst_op +
             "); encoder+combine " + fmt("%.2e", composite_worst) + "; " + fmt("%.1f s", secs);
  return v;
}

// ---------------------------------------------------------------- 2

Verdict loss_oracles() {
  const auto t0 = std::chrono::steady_clock::now();
  double worst = 0.0;
  for (std::uint64_t seed = 0; seed < 100; ++seed) {
    Rng rng(3000 + seed);
    const std::size_t N = 2 + rng.below(3), S = 1 + rng.below(3), D = 2 + rng.below(5);
    const double tau = rng.uniform(0.07, 1.0);
    const GlobalBatch g{random_tensor({N, 2, D}, rng), tau};
    worst = std::max(worst, std::abs(global_loss(g) - global_oracle(g.G, tau)));
    const LocalBatch l{random_tensor({N, S, 2, D}, rng), tau};
    worst = std::max(worst, std::abs(local_loss(l, LocalMode::stated_count) - local_oracle(l.L, tau, false)));
    if (S >= 2) worst = std::max(worst, std::abs(local_loss(l, LocalMode::literal) - local_oracle(l.L, tau, true)));
  }
  const double secs = seconds_since(t0);
  return {worst < 1e-10 && secs < 10.0, "100 batches, max |diff| " + fmt("%.2e", worst) + "; " + fmt("%.2f s", secs)};
}

// ---------------------------------------------------------------- 3

Verdict closed_form() {
  // With N = 2 (and S = 2 for the local loss) each example has exactly as
  // many negative terms as positive ones, so identical rows give log 1.
  const double g = global_loss(GlobalBatch{identical_rows({2, 2, 3}), 0.07});
  const double l = local_loss(LocalBatch{identical_rows({2, 2, 2, 3}), 0.07}, LocalMode::literal);
  return {std::abs(g) <= 1e-12 && std::abs(l) <= 1e-12, "global " + fmt("%.1e", g) + ", local literal " + fmt("%.1e", l)};
}

// ---------------------------------------------------------------- 4

Verdict gcn() {
  double worst = 0.0;
  for (std::uint64_t seed = 0; seed < 50; ++seed) {
    Rng rng(4000 + seed);
    const std::size_t M = 1 + rng.below(6), C = 1 + rng.below(4), Co = 1 + rng.below(4);
    const auto parts = build_partitions(random_graph(M, rng), 0.001);
    const Tensor F = random_tensor({M, C}, rng);
    const std::array<Tensor, 3> W{random_tensor({C, Co}, rng), random_tensor({C, Co}, rng),
                                  random_tensor({C, Co}, rng)};
    worst = std::max(worst, max_abs_diff(spatial_gcn_forward(F, parts, W), gcn_oracle(F, parts, W, 0.001)));
  }
  // identity: every entry 1 / (1 + alpha); single edge: 1 / sqrt(1.001^2)
  Tensor eye({2, 2}, 0.0), edge({2, 2}, 0.0);
  eye.at(0, 0) = eye.at(1, 1) = 1.0;
  edge.at(0, 1) = edge.at(1, 0) = 1.0;
  const Tensor ne = normalize_adjacency(eye, 0.001), nd = normalize_adjacency(edge, 0.001);
  const double h = 1.0 / 1.001;
  double adj = 0.0;
  for (std::size_t i = 0; i < 2; ++i)
    for (std::size_t j = 0; j < 2; ++j) {
      adj = std::max(adj, std::abs(ne.at(i, j) - (i == j ? h : 0.0)));
      adj = std::max(adj, std::abs(nd.at(i, j) - (i != j ? h : 0.0)));
    }
  return {worst <= 1e-12 && adj <= 1e-9,
          "50 graphs M<=6, max |diff| " + fmt("%.1e", worst) + "; adjacency hand values " + fmt("%.1e", adj)};
}

// ---------------------------------------------------------------- 5

Verdict augmentation() {
  Check c;
  Rng rng(5000);
  const double r = deg_to_rad(17.0);
  double orth = 0.0, det = 0.0;
  for (int n = 0; n < 100; ++n) {
    const Mat3 m = rotation_matrix(rng.uniform(-r, r), rng.uniform(-r, r), rng.uniform(-r, r));
    for (int i = 0; i < 3; ++i)
      for (int j = 0; j < 3; ++j) {
        double dot = 0.0;
        for (int k = 0; k < 3; ++k) dot += m[k][i] * m[k][j];
        orth = std::max(orth, std::abs(dot - (i == j ? 1.0 : 0.0)));
      }
    const double d = m[0][0] * (m[1][1] * m[2][2] - m[1][2] * m[2][1]) -
                     m[0][1] * (m[1][0] * m[2][2] - m[1][2] * m[2][0]) +
                     m[0][2] * (m[1][0] * m[2][1] - m[1][1] * m[2][0]);
    det = std::max(det, std::abs(d - 1.0));
  }
  c.expect(orth <= 1e-9 && det <= 1e-9, "rotation not orthonormal; ");

  const auto topo = SkeletonTopology::ntu25();
  const SkeletonSequence seq{random_tensor({100, 25, 3}, rng), &topo};
  const Mat3 s0 = shear_matrix({0, 0, 0, 0, 0, 0});
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j) c.expect(s0[i][j] == (i == j ? 1.0 : 0.0), "zero shear is not the identity; ");
  AugmentationConfig zero;
  zero.shear_lo = zero.shear_hi = 0.0;
  c.expect(max_abs_diff(shear(seq, zero, rng).coords, seq.coords) == 0.0, "zero shear moved the sequence; ");

  AugmentationConfig cfg;
  for (int n = 0; n < 20; ++n)
    c.expect(temporal_subgraph(seq, cfg, rng).coords.shape() == Shape{100, 25, 3}, "crop changed the length; ");
  cfg.crop_len = 100;
  c.expect(max_abs_diff(temporal_subgraph(seq, cfg, rng).coords, seq.coords) == 0.0, "full crop is not identity; ");
  return {c.ok, c.ok ? "100 rotations: |RtR - I| " + fmt("%.1e", orth) + ", |det - 1| " + fmt("%.1e", det) +
                           "; zero shear and full crop exact"
                     : c.why.str()};
}

// ---------------------------------------------------------------- 6

Verdict partitions() {
  Check c;
  const auto topo = SkeletonTopology::chain(3, 0);
  Rng rng(6000);
  for (std::size_t T : {7, 25, 100})
    for (std::size_t S : {1, 3, 5}) {
      const std::string tag = "T'=" + std::to_string(T) + " S=" + std::to_string(S) + ": ";
      const auto seg = temporal_segments(T, S);
      std::vector<int> hits(T, 0);
      std::size_t lo = T, hi = 0;
      for (auto [a, b] : seg) {
        for (std::size_t t = a; t < b; ++t) ++hits[t];
        lo = std::min(lo, b - a);
        hi = std::max(hi, b - a);
      }
      c.expect(seg.size() == S, tag + "wrong count; ");
      c.expect(std::all_of(hits.begin(), hits.end(), [](int h) { return h == 1; }), tag + "not a partition; ");
      c.expect(hi - lo <= 1, tag + "unbalanced; ");

      const STGraphFeature f{random_tensor({T, 3, 2}, rng), &topo, 3, 0};
      std::vector<double> joined;
      for (const auto& part : partition_stgraph(f, PartitionAxis::temporal, S))
        joined.insert(joined.end(), part.values.data().begin(), part.values.data().end());
      c.expect(std::equal(joined.begin(), joined.end(), f.values.data().begin(), f.values.data().end()), tag + "blocks do not concatenate back; ");
    }
  return {c.ok, c.ok ? "9 (T', S) pairs disjoint, covering, balanced, concatenating" : c.why.str()};
}

// ---------------------------------------------------------------- 7, 8

struct Scores {
  double mv_cs = 0, mv_cv = 0, sv_cs = 0, rand_cs = 0, rand_cv = 0, global_cs = 0, local_cs = 0, linear_cs = 0;
  std::vector<double> margins;
};

// The desk-scale recipe every ablation shares; only the switch under test
// differs between runs.
PretrainConfig desk_recipe(std::uint64_t seed) {
  PretrainConfig p = desk_pretrain_config();
  p.seed = seed;
  return p;
}

double cs_top1(EncoderState& st, const Dataset& ds, const Split& split, std::uint64_t seed) {
  LinearEvalConfig lc;
  lc.seed = seed;
  return linear_eval(st, ds, split, lc).result.top1;
}

// Same-sample cross-view cosine of H minus the cross-sample mean, from
// embeddings and plain loops.
double margin_of(EncoderState& st, const Dataset& ds) {
  std::vector<ViewRef> refs;
  for (std::size_t i = 0; i < ds.size(); ++i) refs.emplace_back(i, 0), refs.emplace_back(i, 1);
  const Tensor H = embed(st, sequences_of(ds, refs));
  const std::size_t n = ds.size(), D = H.dim(1);
  double same = 0.0, cross = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    same += loop_cosine(H, 2 * i, H, 2 * i + 1, D);
    for (std::size_t k = 0; k < n; ++k)
      if (k != i) cross += loop_cosine(H, 2 * i, H, 2 * k + 1, D);
  }
  return same / static_cast<double>(n) - cross / static_cast<double>(n * (n - 1));
}

Scores& ordering_scores() {
  static Scores s;
  static bool done = false;
  if (done) return s;
  done = true;
  const Dataset ds = synth_generate(SynthConfig{});
  const Split cs = split_dataset(ds.manifest, Protocol::cross_subject);
  const Split cv = split_dataset(ds.manifest, Protocol::cross_view);
  const double n = 3.0;
  for (std::uint64_t seed = 0; seed < 3; ++seed) {
    auto run = [&](const std::function<void(PretrainConfig&)>& tweak) {
      PretrainConfig p = desk_recipe(seed);
      tweak(p);
      return pretrain(ds, p).state;
    };
    EncoderState mv = run([](PretrainConfig&) {});
    const double mcs = cs_top1(mv, ds, cs, seed), mcv = cs_top1(mv, ds, cv, seed);
    s.margins.push_back(margin_of(mv, ds));
    EncoderState sv = run([](PretrainConfig& p) { p.mode = PretrainMode::single_view; });
    EncoderState gl = run([](PretrainConfig& p) { p.local = LocalBranch::none; });
    EncoderState lo = run([](PretrainConfig& p) { p.use_global = false; });
    EncoderState li = run([](PretrainConfig& p) { p.combine = CombineMode::linear; });
    EncoderState rnd = random_encoder(desk_recipe(seed).encoder, seed, ds);
    const double scs = cs_top1(sv, ds, cs, seed), gcs = cs_top1(gl, ds, cs, seed), lcs = cs_top1(lo, ds, cs, seed),
                 lics = cs_top1(li, ds, cs, seed), rcs = cs_top1(rnd, ds, cs, seed), rcv = cs_top1(rnd, ds, cv, seed);
    std::printf("  seed %llu  CS: mv %.3f sv %.3f rand %.3f global %.3f temlocal %.3f linear %.3f | CV: mv %.3f rand %.3f"
                " | margin %.3f\n",
                static_cast<unsigned long long>(seed), mcs, scs, rcs, gcs, lcs, lics, mcv, rcv, s.margins.back());
    std::fflush(stdout);
    s.mv_cs += mcs / n, s.mv_cv += mcv / n, s.sv_cs += scs / n, s.rand_cs += rcs / n, s.rand_cv += rcv / n;
    s.global_cs += gcs / n, s.local_cs += lcs / n, s.linear_cs += lics / n;
  }
  return s;
}

Verdict ordering() {
  const auto t0 = std::chrono::steady_clock::now();
  const Scores& s = ordering_scores();
  const double secs = seconds_since(t0);
  const bool a = s.mv_cs > s.sv_cs && s.sv_cs > s.rand_cs && s.mv_cs - s.rand_cs >= 0.20;
  const bool b = s.mv_cs > s.global_cs && s.mv_cs > s.local_cs;
  const bool c = s.mv_cs > s.linear_cs;
  const bool d = s.mv_cv - s.rand_cv >= 0.15;
  std::ostringstream out;
  out << "(a " << (a ? "ok" : "FAIL") << ") MV " << fmt("%.3f", s.mv_cs) << " SV " << fmt("%.3f", s.sv_cs) << " Rand "
      << fmt("%.3f", s.rand_cs) << "; (b " << (b ? "ok" : "FAIL") << ") global " << fmt("%.3f", s.global_cs)
      << " temlocal " << fmt("%.3f", s.local_cs) << "; (c " << (c ? "ok" : "FAIL") << ") linear "
      << fmt("%.3f", s.linear_cs) << "; (d " << (d ? "ok" : "FAIL") << ") CV MV " << fmt("%.3f", s.mv_cv) << " Rand "
      << fmt("%.3f", s.rand_cv) << "; " << fmt("%.0f s", secs);
  return {a && b && c && d && secs < 3600.0, out.str()};
}

Verdict view_invariance() {
  const Scores& s = ordering_scores();
  bool ok = !s.margins.empty();
  std::string detail = "margins";
  for (double m : s.margins) {
    ok = ok && m >= 0.1;
    detail += " " + fmt("%.3f", m);
  }
  return {ok, detail};
}

// ---------------------------------------------------------------- 9

Verdict protocol_integrity() {
  SynthConfig sc;
  sc.samples_per_class = 6;
  const Dataset ds = synth_generate(sc);
  PretrainConfig p = desk_recipe(3);
  p.epochs = 1;
  EncoderState st = pretrain(ds, p).state;
  std::vector<Tensor> before;
  for (Parameter* q : st.all_parameters()) before.push_back(q->value);
  Check c;
  for (Protocol proto : {Protocol::cross_subject, Protocol::cross_view}) {
    const Split split = split_dataset(ds.manifest, proto);
    AccessAudit audit;
    LinearEvalConfig lc;
    lc.epochs = 5;
    linear_eval(st, ds, split, lc, &audit);
    const std::set<ViewRef> train(split.train.begin(), split.train.end());
    std::size_t reads = 0;
    for (const auto& [ref, count] : audit.optimizer_reads) {
      c.expect(train.count(ref) == 1, "classifier read a non-training view; ");
      reads += count;
    }
    c.expect(reads == split.train.size() * 5, "unexpected number of classifier reads; ");
  }
  const auto after = st.all_parameters();
  for (std::size_t k = 0; k < after.size(); ++k)
    c.expect(after[k]->value.shape() == before[k].shape() &&
                 std::memcmp(after[k]->value.data().data(), before[k].data().data(), before[k].size() * sizeof(double)) == 0,
             "encoder parameter changed; ");
  return {c.ok, c.ok ? "encoder bit-identical; classifier reads only training views (CS and CV)" : c.why.str()};
}

// ---------------------------------------------------------------- 10

int cli(std::vector<std::string> args) {
  args.insert(args.begin(), "stgcrl");
  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  std::ostringstream out, err;
  return run_cli(static_cast<int>(argv.size()), argv.data(), out, err);
}

std::string slurp(const fs::path& p) {
  std::ifstream f(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(f), {}};
}

Verdict reproducibility() {
  const fs::path root = fs::temp_directory_path() / "stgcrl_acceptance_repro";
  fs::remove_all(root);
  Check c;
  auto run_all = [&](const fs::path& dir) {
    const std::string d = dir.string();
    c.expect(cli({"synth", "--classes", "4", "--per-class", "4", "--subjects", "4", "--seed", "5", "-o", d + "/data"}) == 0,
             "synth failed; ");
    for (const char* mode : {"mv", "sv"})
      c.expect(cli({"pretrain", "--data", d + "/data", "-o", d + "/" + mode, "--mode", mode, "--encoder", "desk",
                    "--epochs", "2", "--workers", "2", "--seed", "9"}) == 0,
               "pretrain failed; ");
    c.expect(cli({"linear-eval", "--data", d + "/data", "--checkpoint", d + "/mv/encoder.stgc", "--epochs", "3", "-o",
                  d + "/eval.json"}) == 0,
             "linear-eval failed; ");
    c.expect(cli({"linear-eval", "--data", d + "/data", "--random-encoder", "--encoder", "desk", "--seed", "9",
                  "--epochs", "3", "-o", d + "/rand.json"}) == 0,
             "random linear-eval failed; ");
    c.expect(cli({"embed", "--data", d + "/data", "--checkpoint", d + "/mv/encoder.stgc", "-o", d + "/emb.csv"}) == 0,
             "embed failed; ");
  };
  // Same paths both times, since the recorded configs name their inputs.
  for (const char* copy : {"a", "b"}) {
    run_all(root / "run");
    fs::rename(root / "run", root / copy);
  }
  std::size_t compared = 0;
  for (const auto& e : fs::recursive_directory_iterator(root / "a")) {
    if (!e.is_regular_file()) continue;
    const fs::path rel = fs::relative(e.path(), root / "a");
    c.expect(slurp(e.path()) == slurp(root / "b" / rel), rel.string() + " differs; ");
    ++compared;
  }
  fs::remove_all(root);
  return {c.ok && compared > 0, c.ok ? std::to_string(compared) + " artifacts byte-identical across two runs" : c.why.str()};
}

}  // namespace

int main(int argc, char** argv) {
  const std::vector<std::pair<int, std::function<Verdict()>>> criteria{
      {1, gradients},  {2, loss_oracles},    {3, closed_form},        {4, gcn},
      {5, augmentation}, {6, partitions},    {7, ordering},           {8, view_invariance},
      {9, protocol_integrity}, {10, reproducibility}};
  std::set<int> only;
  for (int k = 1; k < argc; ++k) only.insert(std::atoi(argv[k]));
  bool all = true;
  for (const auto& [id, fn] : criteria) {
    if (!only.empty() && !only.count(id)) continue;
    Verdict v;
    try {
      v = fn();
    } catch (const std::exception& e) {
      v = {false, std::string("threw: ") + e.what()};
    }
    all = all && v.pass;
    std::printf("%s criterion %d: %s\n", v.pass ? "PASS" : "FAIL", id, v.detail.c_str());
    std::fflush(stdout);
  }
  return all ? 0 : 1;
}
