#pragma once

// JSON form of every run configuration, with strict key checking, plus the
// config hash embedded in experiment outputs.

#include <cstdio>
#include <set>
#include <string>

#include <nlohmann/json.hpp>

#include "stgcrl/augment.hpp"
#include "stgcrl/dataio.hpp"
#include "stgcrl/model.hpp"
#include "stgcrl/numcore/optim.hpp"
#include "stgcrl/pipeline.hpp"

namespace stgcrl {

using nlohmann::json;

/// FNV-1a (64 bit) of the canonical dump; object keys are sorted by the
/// json type, so equal configurations hash equally.
inline std::string config_hash(const json& j) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : j.dump()) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

namespace detail {

inline void check_keys(const json& j, std::initializer_list<const char*> allowed, const std::string& where) {
  if (!j.is_object()) throw ContractViolation(where + ": expected an object");
  std::set<std::string> ok(allowed.begin(), allowed.end());
  for (const auto& [k, v] : j.items())
    if (!ok.count(k)) throw ContractViolation(where + ": unknown key '" + k + "'");
}

template <class T>
void take(const json& j, const char* key, T& out) {
  if (j.contains(key)) out = j.at(key).get<T>();
}

}  // namespace detail

// ------------------------------------------------------------------ enums

inline std::string to_string(PretrainMode m) { return m == PretrainMode::multi_view ? "mv" : "sv"; }

inline PretrainMode pretrain_mode_from_string(const std::string& s) {
  if (s == "mv") return PretrainMode::multi_view;
  if (s == "sv") return PretrainMode::single_view;
  throw ContractViolation("unknown mode '" + s + "' (expected mv or sv)");
}

inline std::string to_string(CombineMode c) { return c == CombineMode::uncertainty ? "uncertainty" : "linear"; }

inline CombineMode combine_from_string(const std::string& s) {
  if (s == "uncertainty") return CombineMode::uncertainty;
  if (s == "linear") return CombineMode::linear;
  throw ContractViolation("unknown combine mode '" + s + "' (expected uncertainty or linear)");
}

inline std::string to_string(LocalMode m) { return m == LocalMode::literal ? "literal" : "stated-count"; }

inline LocalMode local_mode_from_string(const std::string& s) {
  if (s == "literal") return LocalMode::literal;
  if (s == "stated-count") return LocalMode::stated_count;
  throw ContractViolation("unknown local mode '" + s + "' (expected literal or stated-count)");
}

/// Loss selection as named on the command line: "global", "temlocal",
/// "spalocal", "global+temlocal", "global+spalocal", "global+temlocal+spalocal".
inline std::string loss_set_string(bool use_global, LocalBranch local) {
  std::string s = use_global ? "global" : "";
  auto add = [&](const char* part) { s += (s.empty() ? "" : "+") + std::string(part); };
  if (local == LocalBranch::temporal || local == LocalBranch::both) add("temlocal");
  if (local == LocalBranch::spatial || local == LocalBranch::both) add("spalocal");
  return s;
}

inline void parse_loss_set(const std::string& s, bool& use_global, LocalBranch& local) {
  bool g = false, t = false, sp = false;
  std::size_t pos = 0;
  while (pos <= s.size()) {
    const std::size_t end = std::min(s.find('+', pos), s.size());
    const std::string part = s.substr(pos, end - pos);
    if (part == "global" && !g) g = true;
    else if (part == "temlocal" && !t) t = true;
    else if (part == "spalocal" && !sp) sp = true;
    else throw ContractViolation("unknown loss set '" + s + "'");
    pos = end + 1;
  }
  use_global = g;
  local = t && sp ? LocalBranch::both : t ? LocalBranch::temporal : sp ? LocalBranch::spatial : LocalBranch::none;
  if (!g && local == LocalBranch::none) throw ContractViolation("loss set selects nothing");
}

// ---------------------------------------------------------------- structs

inline json to_json(const LrSchedule& s) {
  return {{"base_lr", s.base_lr}, {"drop_epochs", s.drop_epochs}, {"drop_factor", s.drop_factor}};
}

inline void from_json(const json& j, LrSchedule& s) {
  detail::check_keys(j, {"base_lr", "drop_epochs", "drop_factor"}, "lr_schedule");
  detail::take(j, "base_lr", s.base_lr);
  detail::take(j, "drop_epochs", s.drop_epochs);
  detail::take(j, "drop_factor", s.drop_factor);
}

inline json to_json(const AugmentationConfig& a) {
  return {{"kind", to_string(a.kind)},         {"crop_len", a.crop_len},
          {"target_len", a.target_len},        {"drop_apply_prob", a.drop_apply_prob},
          {"drop_frac", a.drop_frac},          {"perturb_sigma", a.perturb_sigma},
          {"rotate_range_deg", a.rotate_range_deg}, {"shear_lo", a.shear_lo},
          {"shear_hi", a.shear_hi}};
}

inline void from_json(const json& j, AugmentationConfig& a) {
  detail::check_keys(j,
                     {"kind", "crop_len", "target_len", "drop_apply_prob", "drop_frac", "perturb_sigma",
                      "rotate_range_deg", "shear_lo", "shear_hi"},
                     "aug");
  if (j.contains("kind")) a.kind = aug_kind_from_string(j.at("kind").get<std::string>());
  detail::take(j, "crop_len", a.crop_len);
  detail::take(j, "target_len", a.target_len);
  detail::take(j, "drop_apply_prob", a.drop_apply_prob);
  detail::take(j, "drop_frac", a.drop_frac);
  detail::take(j, "perturb_sigma", a.perturb_sigma);
  detail::take(j, "rotate_range_deg", a.rotate_range_deg);
  detail::take(j, "shear_lo", a.shear_lo);
  detail::take(j, "shear_hi", a.shear_hi);
}

inline json to_json(const EncoderConfig& e) {
  json blocks = json::array();
  for (const auto& b : e.blocks) blocks.push_back({b.in_channels, b.out_channels, b.temporal_stride});
  return {{"blocks", blocks},
          {"temporal_kernel", e.temporal_kernel},
          {"output_dim", e.output_dim},
          {"projection_hidden", e.projection_hidden},
          {"projection_out", e.projection_out}};
}

/// Blocks are [in, out, stride] triples.
inline void from_json(const json& j, EncoderConfig& e) {
  detail::check_keys(j, {"blocks", "temporal_kernel", "output_dim", "projection_hidden", "projection_out"},
                     "encoder");
  if (j.contains("blocks")) {
    e.blocks.clear();
    for (const auto& b : j.at("blocks")) {
      if (!b.is_array() || b.size() != 3) throw ContractViolation("encoder.blocks: expected [in, out, stride]");
      e.blocks.push_back({b[0].get<std::size_t>(), b[1].get<std::size_t>(), b[2].get<std::size_t>()});
    }
    if (!j.contains("output_dim") && !e.blocks.empty()) e.output_dim = e.blocks.back().out_channels;
  }
  detail::take(j, "temporal_kernel", e.temporal_kernel);
  detail::take(j, "output_dim", e.output_dim);
  detail::take(j, "projection_hidden", e.projection_hidden);
  detail::take(j, "projection_out", e.projection_out);
}

inline json to_json(const PretrainConfig& c) {
  return {{"epochs", c.epochs},
          {"batch_size", c.batch_size},
          {"lr_schedule", to_json(c.lr_schedule)},
          {"momentum", c.momentum},
          {"tau", c.tau},
          {"S", c.S},
          {"V", c.V},
          {"mode", to_string(c.mode)},
          {"loss", loss_set_string(c.use_global, c.local)},
          {"local_mode", to_string(c.local_mode)},
          {"combine", to_string(c.combine)},
          {"w_global", c.w_global},
          {"w_local", c.w_local},
          {"shift_uncertainty", c.shift_uncertainty},
          {"single_view_index", c.single_view_index},
          {"aug", to_json(c.aug)},
          {"encoder", to_json(c.encoder)},
          {"adjacency_alpha", c.adjacency_alpha},
          {"normalize_input", c.normalize_input},
          {"seed", c.seed},
          {"workers", c.workers}};
}

inline void from_json(const json& j, PretrainConfig& c) {
  detail::check_keys(j,
                     {"epochs", "batch_size", "lr_schedule", "momentum", "tau", "S", "V", "mode", "loss",
                      "local_mode", "combine", "w_global", "w_local", "shift_uncertainty", "single_view_index",
                      "aug", "encoder", "adjacency_alpha", "normalize_input", "seed", "workers"},
                     "pretrain");
  detail::take(j, "epochs", c.epochs);
  detail::take(j, "batch_size", c.batch_size);
  if (j.contains("lr_schedule")) from_json(j.at("lr_schedule"), c.lr_schedule);
  detail::take(j, "momentum", c.momentum);
  detail::take(j, "tau", c.tau);
  detail::take(j, "S", c.S);
  detail::take(j, "V", c.V);
  if (j.contains("mode")) c.mode = pretrain_mode_from_string(j.at("mode").get<std::string>());
  if (j.contains("loss")) parse_loss_set(j.at("loss").get<std::string>(), c.use_global, c.local);
  if (j.contains("local_mode")) c.local_mode = local_mode_from_string(j.at("local_mode").get<std::string>());
  if (j.contains("combine")) c.combine = combine_from_string(j.at("combine").get<std::string>());
  detail::take(j, "w_global", c.w_global);
  detail::take(j, "w_local", c.w_local);
  detail::take(j, "shift_uncertainty", c.shift_uncertainty);
  detail::take(j, "single_view_index", c.single_view_index);
  if (j.contains("aug")) from_json(j.at("aug"), c.aug);
  if (j.contains("encoder")) from_json(j.at("encoder"), c.encoder);
  detail::take(j, "adjacency_alpha", c.adjacency_alpha);
  detail::take(j, "normalize_input", c.normalize_input);
  detail::take(j, "seed", c.seed);
  detail::take(j, "workers", c.workers);
}

inline json to_json(const LinearEvalConfig& c) {
  return {{"epochs", c.epochs},       {"batch_size", c.batch_size}, {"lr_schedule", to_json(c.lr_schedule)},
          {"momentum", c.momentum},   {"standardize", c.standardize}, {"seed", c.seed},
          {"workers", c.workers}};
}

inline void from_json(const json& j, LinearEvalConfig& c) {
  detail::check_keys(j, {"epochs", "batch_size", "lr_schedule", "momentum", "standardize", "seed", "workers"},
                     "linear_eval");
  detail::take(j, "epochs", c.epochs);
  detail::take(j, "batch_size", c.batch_size);
  if (j.contains("lr_schedule")) from_json(j.at("lr_schedule"), c.lr_schedule);
  detail::take(j, "momentum", c.momentum);
  detail::take(j, "standardize", c.standardize);
  detail::take(j, "seed", c.seed);
  detail::take(j, "workers", c.workers);
}

inline json to_json(const SynthConfig& c) {
  return {{"num_classes", c.num_classes},
          {"samples_per_class", c.samples_per_class},
          {"num_subjects", c.num_subjects},
          {"num_views", c.num_views},
          {"T", c.T},
          {"M", c.M},
          {"view_yaw_deg", c.view_yaw_deg},
          {"yaw_span_deg", c.yaw_span_deg},
          {"yaw_jitter_deg", c.yaw_jitter_deg},
          {"actor_yaw_deg", c.actor_yaw_deg},
          {"pitch_jitter_deg", c.pitch_jitter_deg},
          {"occlusion_prob", c.occlusion_prob},
          {"noise_sigma", c.noise_sigma},
          {"max_temporal_offset", c.max_temporal_offset},
          {"seed", c.seed}};
}

inline void from_json(const json& j, SynthConfig& c) {
  detail::check_keys(j,
                     {"num_classes", "samples_per_class", "num_subjects", "num_views", "T", "M", "view_yaw_deg",
                      "yaw_span_deg", "yaw_jitter_deg", "actor_yaw_deg", "pitch_jitter_deg", "occlusion_prob", "noise_sigma",
                      "max_temporal_offset", "seed"},
                     "synth");
  detail::take(j, "num_classes", c.num_classes);
  detail::take(j, "samples_per_class", c.samples_per_class);
  detail::take(j, "num_subjects", c.num_subjects);
  detail::take(j, "num_views", c.num_views);
  detail::take(j, "T", c.T);
  detail::take(j, "M", c.M);
  detail::take(j, "view_yaw_deg", c.view_yaw_deg);
  detail::take(j, "yaw_span_deg", c.yaw_span_deg);
  detail::take(j, "yaw_jitter_deg", c.yaw_jitter_deg);
  detail::take(j, "actor_yaw_deg", c.actor_yaw_deg);
  detail::take(j, "pitch_jitter_deg", c.pitch_jitter_deg);
  detail::take(j, "occlusion_prob", c.occlusion_prob);
  detail::take(j, "noise_sigma", c.noise_sigma);
  detail::take(j, "max_temporal_offset", c.max_temporal_offset);
  detail::take(j, "seed", c.seed);
}

/// Evaluation report: {top1, per_class, count, config_hash, seed}. Classes
/// without test examples appear as null.
inline json eval_report(const EvalResult& r, const std::string& hash, std::uint64_t seed) {
  json pc = json::array();
  for (double a : r.per_class) pc.push_back(std::isnan(a) ? json(nullptr) : json(a));
  return {{"top1", r.top1}, {"per_class", pc}, {"count", r.count}, {"config_hash", hash}, {"seed", seed}};
}

}  // namespace stgcrl
