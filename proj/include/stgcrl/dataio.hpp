#pragma once

// Multi-view skeleton dataset: JSON manifest + "STGD" binary blob.
//
// Blob layout: magic "STGD" | u32 version | records. Each record is one view
// of one sample, a row-major T x M x 3 block of little-endian f64 located at
// the byte offset the manifest declares, guarded by a CRC-32 of its bytes.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>
#include <numbers>
#include <filesystem>
#include <map>
#include <memory>
#include <set>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>
#include <zlib.h>

#include "stgcrl/augment.hpp"
#include "stgcrl/io/binary.hpp"
#include "stgcrl/numcore/errors.hpp"
#include "stgcrl/skelgraph.hpp"

namespace stgcrl {

inline constexpr char kDatasetMagic[4] = {'S', 'T', 'G', 'D'};
inline constexpr std::uint32_t kDatasetVersion = 1;
inline constexpr const char* kManifestFile = "manifest.json";
inline constexpr const char* kBlobFile = "data.stgd";

enum class Protocol { cross_subject, cross_view };

struct SplitParams {
  std::vector<std::size_t> train_subjects;  // cross-subject; empty -> lower half of subject ids
  std::size_t test_view = 0;                // cross-view
};

inline std::string to_string(Protocol p) { return p == Protocol::cross_subject ? "cross-subject" : "cross-view"; }

inline Protocol protocol_from_string(const std::string& s) {
  if (s == "cross-subject") return Protocol::cross_subject;
  if (s == "cross-view") return Protocol::cross_view;
  throw ContractViolation("unknown protocol '" + s + "'");
}

struct ViewRecord {
  std::uint64_t offset = 0;
  std::size_t frames = 0;
  std::uint32_t crc32 = 0;
  double yaw_deg = 0.0;    // camera orientation used by the generator (informational)
  double pitch_deg = 0.0;
  std::int64_t offset_frames = 0;  // temporal shift of this view
};

struct SampleRecord {
  std::uint64_t id = 0;
  std::size_t label = 0;
  std::size_t subject = 0;
  std::vector<ViewRecord> views;
};

struct DatasetManifest {
  std::string name;
  std::shared_ptr<const SkeletonTopology> topology;
  std::size_t num_views = 0;
  std::vector<std::string> class_names;
  std::vector<SampleRecord> samples;
  Protocol protocol = Protocol::cross_subject;  // default evaluation split
  SplitParams split;

  std::size_t num_joints() const { return topology ? topology->num_joints : 0; }

  void validate() const {
    require(topology != nullptr, "manifest: missing topology");
    topology->validate();
    require(num_views >= 1, "manifest: need at least one view");
    require(!class_names.empty(), "manifest: no classes");
    std::set<std::uint64_t> ids;
    for (const auto& s : samples) {
      if (!ids.insert(s.id).second) throw DataError("manifest: duplicate sample id " + std::to_string(s.id));
      if (s.label >= class_names.size())
        throw DataError("manifest: sample " + std::to_string(s.id) + " has label out of range");
      if (s.views.size() != num_views)
        throw DataError("manifest: sample " + std::to_string(s.id) + " has " + std::to_string(s.views.size()) +
                        " views, expected " + std::to_string(num_views));
    }
  }
};

/// Manifest plus sequences[sample][view].
struct Dataset {
  DatasetManifest manifest;
  std::vector<std::vector<SkeletonSequence>> sequences;

  std::size_t size() const { return manifest.samples.size(); }
  std::size_t num_views() const { return manifest.num_views; }
  std::size_t num_classes() const { return manifest.class_names.size(); }
  const SkeletonTopology& topology() const { return *manifest.topology; }
};

// ---------------------------------------------------------------- storage

inline std::uint32_t crc32_of(const char* data, std::size_t n) {
  return static_cast<std::uint32_t>(::crc32(::crc32(0L, Z_NULL, 0), reinterpret_cast<const Bytef*>(data),
                                             static_cast<uInt>(n)));
}

inline nlohmann::json topology_to_json(const SkeletonTopology& t) {
  nlohmann::json j;
  j["num_joints"] = t.num_joints;
  j["center_joint"] = t.center_joint;
  j["edges"] = nlohmann::json::array();
  for (auto [a, b] : t.edges) j["edges"].push_back({a, b});
  j["body_part_groups"] = t.body_part_groups;
  return j;
}

inline SkeletonTopology topology_from_json(const nlohmann::json& j) {
  SkeletonTopology t;
  t.num_joints = j.at("num_joints").get<std::size_t>();
  t.center_joint = j.at("center_joint").get<std::size_t>();
  for (const auto& e : j.at("edges")) t.edges.emplace_back(e.at(0).get<std::size_t>(), e.at(1).get<std::size_t>());
  t.body_part_groups = j.at("body_part_groups").get<std::vector<std::vector<std::size_t>>>();
  return t;
}

/// Writes manifest.json and data.stgd into `dir` (created if needed). Record
/// offsets and checksums in the manifest are recomputed from the sequences.
inline void save_dataset(const std::string& dir, Dataset& ds) {
  ds.manifest.validate();
  require(ds.sequences.size() == ds.size(), "save_dataset: sequence table size mismatch");
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw DataError("cannot create directory '" + dir + "': " + ec.message());

  io::ByteWriter blob;
  blob.bytes(kDatasetMagic, 4);
  blob.u32(kDatasetVersion);
  const std::size_t M = ds.manifest.num_joints();
  for (std::size_t i = 0; i < ds.size(); ++i) {
    require(ds.sequences[i].size() == ds.num_views(), "save_dataset: view count mismatch");
    for (std::size_t v = 0; v < ds.num_views(); ++v) {
      const SkeletonSequence& seq = ds.sequences[i][v];
      seq.validate();
      require(seq.joints() == M, "save_dataset: joint count mismatch");
      ViewRecord& rec = ds.manifest.samples[i].views[v];
      rec.offset = blob.size();
      rec.frames = seq.frames();
      const std::size_t start = blob.size();
      for (double x : seq.coords.data()) blob.f64(x);
      rec.crc32 = crc32_of(blob.buffer().data() + start, blob.size() - start);
    }
  }

  nlohmann::json j;
  j["format"] = "STGD";
  j["version"] = kDatasetVersion;
  j["name"] = ds.manifest.name;
  j["blob"] = kBlobFile;
  j["num_views"] = ds.manifest.num_views;
  j["class_names"] = ds.manifest.class_names;
  j["topology"] = topology_to_json(*ds.manifest.topology);
  j["split"] = {{"protocol", to_string(ds.manifest.protocol)},
                {"train_subjects", ds.manifest.split.train_subjects},
                {"test_view", ds.manifest.split.test_view}};
  j["samples"] = nlohmann::json::array();
  for (const auto& s : ds.manifest.samples) {
    nlohmann::json js{{"id", s.id}, {"label", s.label}, {"subject", s.subject}};
    js["views"] = nlohmann::json::array();
    for (const auto& v : s.views)
      js["views"].push_back({{"offset", v.offset},
                             {"frames", v.frames},
                             {"crc32", v.crc32},
                             {"yaw_deg", v.yaw_deg},
                             {"pitch_deg", v.pitch_deg},
                             {"offset_frames", v.offset_frames}});
    j["samples"].push_back(std::move(js));
  }
  io::write_file((std::filesystem::path(dir) / kBlobFile).string(), blob.buffer());
  io::write_text((std::filesystem::path(dir) / kManifestFile).string(), j.dump(1) + "\n");
}

/// Loads and validates a dataset directory. Any corruption raises DataError
/// naming the offending sample.
inline Dataset load_dataset(const std::string& dir) {
  const auto mpath = (std::filesystem::path(dir) / kManifestFile).string();
  const auto mbytes = io::read_file(mpath);
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(mbytes.begin(), mbytes.end());
  } catch (const nlohmann::json::exception& e) {
    throw DataError("manifest '" + mpath + "' is not valid JSON: " + e.what());
  }
  Dataset ds;
  try {
    if (j.at("format").get<std::string>() != "STGD") throw DataError("manifest: format is not STGD");
    if (j.at("version").get<std::uint32_t>() != kDatasetVersion) throw DataError("manifest: unsupported version");
    ds.manifest.name = j.at("name").get<std::string>();
    ds.manifest.num_views = j.at("num_views").get<std::size_t>();
    ds.manifest.class_names = j.at("class_names").get<std::vector<std::string>>();
    ds.manifest.topology = std::make_shared<const SkeletonTopology>(topology_from_json(j.at("topology")));
    if (j.contains("split")) {
      const auto& js = j.at("split");
      ds.manifest.protocol = protocol_from_string(js.at("protocol").get<std::string>());
      ds.manifest.split.train_subjects = js.value("train_subjects", std::vector<std::size_t>{});
      ds.manifest.split.test_view = js.value("test_view", std::size_t{0});
    }
    for (const auto& js : j.at("samples")) {
      SampleRecord s;
      s.id = js.at("id").get<std::uint64_t>();
      s.label = js.at("label").get<std::size_t>();
      s.subject = js.at("subject").get<std::size_t>();
      for (const auto& jv : js.at("views"))
        s.views.push_back({jv.at("offset").get<std::uint64_t>(), jv.at("frames").get<std::size_t>(),
                           jv.at("crc32").get<std::uint32_t>(), jv.value("yaw_deg", 0.0),
                           jv.value("pitch_deg", 0.0), jv.value("offset_frames", std::int64_t{0})});
      ds.manifest.samples.push_back(std::move(s));
    }
  } catch (const nlohmann::json::exception& e) {
    throw DataError("manifest '" + mpath + "' is malformed: " + e.what());
  } catch (const ContractViolation& e) {
    throw DataError("manifest '" + mpath + "': " + e.what());
  }
  try {
    ds.manifest.validate();
  } catch (const ContractViolation& e) {
    throw DataError(std::string("manifest: ") + e.what());
  }

  const auto blob = io::read_file((std::filesystem::path(dir) / j.value("blob", kBlobFile)).string());
  io::ByteReader r(blob);
  if (blob.size() < 8 || r.str(4, "blob magic") != std::string(kDatasetMagic, 4))
    throw DataError("blob: bad magic (expected STGD)");
  if (r.u32("blob version") != kDatasetVersion) throw DataError("blob: unsupported version");

  const std::size_t M = ds.manifest.num_joints();
  for (const auto& s : ds.manifest.samples) {
    std::vector<SkeletonSequence> views;
    for (std::size_t v = 0; v < s.views.size(); ++v) {
      const ViewRecord& rec = s.views[v];
      const std::string where = "sample " + std::to_string(s.id) + " view " + std::to_string(v);
      if (rec.frames < 2) throw DataError(where + ": fewer than two frames");
      const std::size_t n = rec.frames * M * 3;
      if (rec.offset < 8 || rec.offset + n * 8 > blob.size())
        throw DataError(where + ": payload truncated or out of range");
      if (crc32_of(blob.data() + rec.offset, n * 8) != rec.crc32) throw DataError(where + ": checksum mismatch");
      r.seek(rec.offset);
      std::vector<double> d(n);
      for (double& x : d) x = r.f64(where);
      SkeletonSequence seq{Tensor({rec.frames, M, 3}, std::move(d)), ds.manifest.topology.get()};
      if (!seq.coords.all_finite()) throw DataError(where + ": non-finite coordinate");
      views.push_back(std::move(seq));
    }
    ds.sequences.push_back(std::move(views));
  }
  return ds;
}

/// Linear resampling of a sequence to exactly `target` frames.
inline SkeletonSequence resample_to_length(const SkeletonSequence& seq, std::size_t target = 100) {
  return linear_interpolate_time(seq, target);
}

// ----------------------------------------------------------------- splits

/// (sample index, view index) pairs.
using ViewRef = std::pair<std::size_t, std::size_t>;

struct Split {
  std::vector<ViewRef> train;
  std::vector<ViewRef> test;
};

inline Split split_dataset(const DatasetManifest& m, Protocol protocol, const SplitParams& params = {}) {
  Split out;
  if (protocol == Protocol::cross_subject) {
    std::set<std::size_t> train(params.train_subjects.begin(), params.train_subjects.end());
    if (train.empty()) {
      std::set<std::size_t> all;
      for (const auto& s : m.samples) all.insert(s.subject);
      std::size_t k = 0;
      for (std::size_t sub : all)
        if (k++ < (all.size() + 1) / 2) train.insert(sub);
    }
    for (std::size_t i = 0; i < m.samples.size(); ++i)
      for (std::size_t v = 0; v < m.num_views; ++v)
        (train.count(m.samples[i].subject) ? out.train : out.test).emplace_back(i, v);
  } else {
    require(m.num_views >= 2, "split_dataset: cross-view protocol needs at least two views");
    require(params.test_view < m.num_views, "split_dataset: test view out of range");
    for (std::size_t i = 0; i < m.samples.size(); ++i)
      for (std::size_t v = 0; v < m.num_views; ++v)
        (v == params.test_view ? out.test : out.train).emplace_back(i, v);
  }
  require(!out.train.empty(), "split_dataset: empty training split");
  require(!out.test.empty(), "split_dataset: empty test split");
  return out;
}

// ------------------------------------------------------------- importing

/// Hook for external skeleton formats. Implementations return raw sequences;
/// import_dataset resamples them to the common length and validates.
class DatasetImporter {
 public:
  virtual ~DatasetImporter() = default;
  virtual std::string format() const = 0;
  virtual Dataset read(const std::string& path) const = 0;
};

inline Dataset import_dataset(const DatasetImporter& importer, const std::string& path, std::size_t frames = 100) {
  Dataset ds = importer.read(path);
  try {
    ds.manifest.validate();
  } catch (const ContractViolation& e) {
    throw DataError(importer.format() + " import: " + e.what());
  }
  for (auto& views : ds.sequences)
    for (auto& seq : views) {
      seq.topology = ds.manifest.topology.get();
      seq.validate();
      if (seq.frames() != frames) seq = resample_to_length(seq, frames);
    }
  return ds;
}

// -------------------------------------------------------------- synthesis

struct SynthConfig {
  std::size_t num_classes = 8;
  std::size_t samples_per_class = 25;
  std::size_t num_subjects = 10;
  std::size_t num_views = 2;
  std::size_t T = 100;
  std::size_t M = 25;  // 25 uses the NTU skeleton, anything else a chain
  // Camera yaw per view; empty spreads the views evenly over yaw_span_deg.
  std::vector<double> view_yaw_deg;
  double yaw_span_deg = 90.0;
  double yaw_jitter_deg = 15.0;
  // Actor facing, drawn per sample from +-actor_yaw_deg and shared by every
  // view. Without it a single camera pins down the body orientation.
  double actor_yaw_deg = 90.0;
  double pitch_jitter_deg = 10.0;
  // Per-view probability of losing a joint for the whole sequence; a single
  // entry applies to every view.
  std::vector<double> occlusion_prob{0.1};
  double noise_sigma = 0.02;
  std::size_t max_temporal_offset = 3;
  std::uint64_t seed = 0;

  double occlusion_for_view(std::size_t v) const {
    if (occlusion_prob.empty()) return 0.0;
    return occlusion_prob.size() == 1 ? occlusion_prob[0] : occlusion_prob.at(v);
  }

  double yaw_center_deg(std::size_t v) const {
    if (!view_yaw_deg.empty()) return view_yaw_deg.at(v);
    if (num_views == 1) return 0.0;
    return -yaw_span_deg / 2.0 + yaw_span_deg * static_cast<double>(v) / static_cast<double>(num_views - 1);
  }

  void validate() const {
    require(num_classes >= 1 && samples_per_class >= 1 && num_subjects >= 1, "SynthConfig: counts must be positive");
    require(num_views >= 1, "SynthConfig: need at least one view");
    require(T >= 2, "SynthConfig: T must be >= 2");
    require(M >= 2, "SynthConfig: M must be >= 2");
    require(view_yaw_deg.empty() || view_yaw_deg.size() == num_views, "SynthConfig: one yaw per view");
    require(occlusion_prob.size() <= 1 || occlusion_prob.size() == num_views,
            "SynthConfig: occlusion_prob needs one entry or one per view");
    for (double p : occlusion_prob) require(p >= 0.0 && p <= 1.0, "SynthConfig: occlusion_prob outside [0,1]");
    require(yaw_span_deg >= 0.0 && yaw_jitter_deg >= 0.0 && actor_yaw_deg >= 0.0 && pitch_jitter_deg >= 0.0 && noise_sigma >= 0.0,
            "SynthConfig: ranges must be non-negative");
  }
};

namespace detail {

// Approximate standing pose in metres, y up, for the 25 NTU joints.
inline const double kNtuRest[25][3] = {
    {0.00, 0.00, 0.00},   {0.00, 0.30, 0.00},   {0.00, 0.55, 0.00},   {0.00, 0.70, 0.00},   {-0.18, 0.50, 0.00},
    {-0.25, 0.25, 0.00},  {-0.28, 0.02, 0.00},  {-0.29, -0.05, 0.00}, {0.18, 0.50, 0.00},   {0.25, 0.25, 0.00},
    {0.28, 0.02, 0.00},   {0.29, -0.05, 0.00},  {-0.10, -0.02, 0.00}, {-0.11, -0.45, 0.00}, {-0.11, -0.85, 0.00},
    {-0.11, -0.90, 0.10}, {0.10, -0.02, 0.00},  {0.11, -0.45, 0.00},  {0.11, -0.85, 0.00},  {0.11, -0.90, 0.10},
    {0.00, 0.50, 0.00},   {-0.30, -0.10, 0.00}, {-0.27, -0.07, 0.03}, {0.30, -0.10, 0.00},  {0.27, -0.07, 0.03}};

struct GroupProgram {
  bool active = false;
  double freq = 1.0;  // cycles per sequence
  double amp = 0.0;
  double phase = 0.0;
  std::array<double, 3> dir{}, dir2{};
};

inline std::array<double, 3> random_unit(Rng& rng) {
  for (;;) {
    std::array<double, 3> d{rng.normal(), rng.normal(), rng.normal()};
    const double n = std::sqrt(d[0] * d[0] + d[1] * d[1] + d[2] * d[2]);
    if (n > 1e-6) return {d[0] / n, d[1] / n, d[2] / n};
  }
}

inline std::vector<GroupProgram> class_program(std::size_t groups, Rng& rng) {
  std::vector<GroupProgram> prog(groups);
  bool any = false;
  for (auto& g : prog) {
    g.active = rng.bernoulli(0.5);
    any = any || g.active;
    g.freq = 1.0 + static_cast<double>(rng.below(3));
    g.amp = rng.uniform(0.15, 0.35);
    g.phase = rng.uniform(0.0, 2.0 * std::numbers::pi);
    g.dir = random_unit(rng);
    // second axis orthogonal to the first, giving elliptical paths
    auto e = random_unit(rng);
    const double dot = e[0] * g.dir[0] + e[1] * g.dir[1] + e[2] * g.dir[2];
    for (int k = 0; k < 3; ++k) e[k] -= dot * g.dir[k];
    const double n = std::sqrt(e[0] * e[0] + e[1] * e[1] + e[2] * e[2]);
    for (int k = 0; k < 3; ++k) g.dir2[k] = n > 1e-9 ? e[k] / n : 0.0;
  }
  if (!any) prog[rng.below(groups)].active = true;
  return prog;
}

}  // namespace detail

/// Deterministic multi-view synthetic dataset. Every class is a motion
/// program over body-part groups; subjects scale limbs and amplitudes; each
/// camera sees the sample under its own rotation, occlusions, noise and
/// temporal offset.
inline Dataset synth_generate(const SynthConfig& cfg) {
  cfg.validate();
  Dataset ds;
  ds.manifest.name = "synthetic";
  ds.manifest.topology = std::make_shared<const SkeletonTopology>(
      cfg.M == 25 ? SkeletonTopology::ntu25() : SkeletonTopology::chain(cfg.M, cfg.M / 2));
  const SkeletonTopology& topo = *ds.manifest.topology;
  ds.manifest.num_views = cfg.num_views;
  for (std::size_t c = 0; c < cfg.num_classes; ++c) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "class_%02zu", c);
    ds.manifest.class_names.emplace_back(buf);
  }

  const std::size_t M = cfg.M, T = cfg.T;
  std::vector<std::array<double, 3>> rest(M);
  for (std::size_t j = 0; j < M; ++j) {
    if (M == 25)
      rest[j] = {detail::kNtuRest[j][0], detail::kNtuRest[j][1], detail::kNtuRest[j][2]};
    else
      rest[j] = {0.0, 0.8 - 1.6 * static_cast<double>(j) / static_cast<double>(M - 1), 0.0};
  }
  const auto groups = spatial_segments(topo, std::min<std::size_t>(5, M));
  std::vector<std::size_t> group_of(M, 0);
  std::vector<double> reach(M, 0.0);  // distal joints swing further
  const auto hops = topo.hop_distances();
  for (std::size_t g = 0; g < groups.size(); ++g) {
    std::size_t lo = SIZE_MAX, hi = 0;
    for (std::size_t j : groups[g]) lo = std::min(lo, hops[j]), hi = std::max(hi, hops[j]);
    for (std::size_t j : groups[g]) {
      group_of[j] = g;
      reach[j] = (static_cast<double>(hops[j] - lo) + 1.0) / (static_cast<double>(hi - lo) + 1.0);
    }
  }

  std::vector<std::vector<detail::GroupProgram>> programs;
  for (std::size_t c = 0; c < cfg.num_classes; ++c) {
    Rng r(derive_seed(cfg.seed, {1, c}));
    programs.push_back(detail::class_program(groups.size(), r));
  }
  std::vector<double> limb_scale(cfg.num_subjects), subject_amp(cfg.num_subjects);
  for (std::size_t s = 0; s < cfg.num_subjects; ++s) {
    Rng r(derive_seed(cfg.seed, {2, s}));
    limb_scale[s] = r.uniform(0.85, 1.15);
    subject_amp[s] = r.uniform(0.8, 1.2);
  }

  const double two_pi = 2.0 * std::numbers::pi;
  for (std::size_t k = 0; k < cfg.samples_per_class; ++k)
    for (std::size_t c = 0; c < cfg.num_classes; ++c) {
      SampleRecord rec;
      rec.id = k * cfg.num_classes + c;
      rec.label = c;
      rec.subject = k % cfg.num_subjects;
      Rng sr(derive_seed(cfg.seed, {3, rec.id}));
      const double amp = subject_amp[rec.subject] * sr.uniform(0.9, 1.1);
      const double phase_jitter = sr.uniform(-0.3, 0.3);
      const double actor_yaw = sr.uniform(-cfg.actor_yaw_deg, cfg.actor_yaw_deg);
      const auto& prog = programs[c];

      // pose at (possibly shifted) time t
      auto pose = [&](double t, std::size_t j) {
        std::array<double, 3> p;
        for (int a = 0; a < 3; ++a) p[a] = rest[j][a] * limb_scale[rec.subject];
        const auto& g = prog[group_of[j]];
        if (g.active) {
          const double w = two_pi * g.freq * t / static_cast<double>(T) + g.phase + phase_jitter;
          const double r1 = g.amp * amp * reach[j] * std::sin(w), r2 = 0.5 * g.amp * amp * reach[j] * std::cos(w);
          for (int a = 0; a < 3; ++a) p[a] += r1 * g.dir[a] + r2 * g.dir2[a];
        }
        return p;
      };

      std::vector<SkeletonSequence> views;
      for (std::size_t v = 0; v < cfg.num_views; ++v) {
        Rng vr(derive_seed(cfg.seed, {4, rec.id, v}));
        ViewRecord view;
        view.yaw_deg = actor_yaw + cfg.yaw_center_deg(v) + vr.uniform(-cfg.yaw_jitter_deg, cfg.yaw_jitter_deg);
        view.pitch_deg = vr.uniform(-cfg.pitch_jitter_deg, cfg.pitch_jitter_deg);
        const Mat3 R = rotation_matrix(deg_to_rad(view.pitch_deg), deg_to_rad(view.yaw_deg), 0.0);
        const auto span = static_cast<std::int64_t>(cfg.max_temporal_offset);
        view.offset_frames = static_cast<std::int64_t>(vr.below(2 * span + 1)) - span;
        const auto offset = static_cast<double>(view.offset_frames);
        std::vector<char> occluded(M, 0);
        const double p_occ = cfg.occlusion_for_view(v);
        for (std::size_t j = 0; j < M; ++j) occluded[j] = vr.bernoulli(p_occ);

        Tensor x({T, M, 3}, 0.0);
        for (std::size_t t = 0; t < T; ++t)
          for (std::size_t j = 0; j < M; ++j) {
            if (occluded[j]) continue;
            const auto p = pose(static_cast<double>(t) + offset, j);
            for (std::size_t b = 0; b < 3; ++b) {
              double y = p[0] * R[0][b] + p[1] * R[1][b] + p[2] * R[2][b];
              if (cfg.noise_sigma > 0.0) y += vr.normal(0.0, cfg.noise_sigma);
              x.at(t, j, b) = y;
            }
          }
        views.push_back({std::move(x), ds.manifest.topology.get()});
        rec.views.push_back(view);
      }
      ds.manifest.samples.push_back(std::move(rec));
      ds.sequences.push_back(std::move(views));
    }
  ds.manifest.validate();
  return ds;
}

}  // namespace stgcrl
