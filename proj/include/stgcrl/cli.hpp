#pragma once

// Command-line front end: synth | pretrain | linear-eval | embed.
// run_cli() is the whole program; tools/stgcrl.cpp only forwards argv.

#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "stgcrl/checkpoint.hpp"
#include "stgcrl/config.hpp"
#include "stgcrl/dataio.hpp"
#include "stgcrl/pipeline.hpp"

namespace stgcrl {

enum ExitCode : int { kExitOk = 0, kExitUsage = 2, kExitData = 3, kExitNumeric = 4 };

/// Small encoder used for desk-scale runs (the default is the full
/// 3-64-64-128-256 stack).
inline EncoderConfig desk_encoder_config() {
  EncoderConfig e;
  e.blocks = {{3, 16, 2}, {16, 32, 2}, {32, 64, 1}};
  e.temporal_kernel = 5;
  e.output_dim = 64;
  e.projection_hidden = 64;
  e.projection_out = 64;
  return e;
}

/// Pretraining recipe for desk-scale runs: the desk encoder, a shortened
/// schedule and the stated-count local loss (the literal form lets the
/// local branch match segments by position alone; see README).
inline PretrainConfig desk_pretrain_config() {
  PretrainConfig p;
  p.encoder = desk_encoder_config();
  p.epochs = 30;
  p.lr_schedule = {0.1, {18, 24}, 10.0};
  p.local_mode = LocalMode::stated_count;
  return p;
}

inline EncoderConfig encoder_preset(const std::string& name) {
  if (name == "default") return EncoderConfig{};
  if (name == "desk") return desk_encoder_config();
  throw ContractViolation("unknown encoder preset '" + name + "' (expected default or desk)");
}

namespace cli_detail {

struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

inline json read_config_file(const std::string& path, const char* section) {
  if (path.empty()) return json::object();
  std::ifstream in(path);
  if (!in) throw DataError("cannot open config file '" + path + "'");
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    throw UsageError("config file '" + path + "' is not valid JSON: " + e.what());
  }
  if (!j.is_object()) throw UsageError("config file '" + path + "' must hold a JSON object");
  // Either a bare section or {"<section>": {...}}.
  if (j.contains(section)) return j.at(section);
  return j;
}

inline void write_resolved(const std::filesystem::path& path, const std::string& command, const json& config,
                           const json& inputs, std::uint64_t seed) {
  json r{{"command", command},
         {"config", config},
         {"config_hash", config_hash(config)},
         {"seed", seed},
         {"inputs", inputs}};
  io::write_text(path.string(), r.dump(2) + "\n");
}

inline void ensure_dir(const std::string& dir) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw DataError("cannot create directory '" + dir + "': " + ec.message());
}

// Flags are applied over the config file only when given on the command line.
template <class T>
void override(CLI::Option* opt, const T& value, T& target) {
  if (opt->count() > 0) target = value;
}

inline std::vector<std::size_t> parse_index_list(const std::string& s) {
  std::vector<std::size_t> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (item.empty()) continue;
    std::size_t pos = 0;
    unsigned long v = 0;
    try {
      v = std::stoul(item, &pos);
    } catch (const std::exception&) {
      pos = 0;
    }
    if (pos != item.size()) throw UsageError("invalid index list '" + s + "'");
    out.push_back(v);
  }
  return out;
}

inline EncoderState load_encoder(const std::string& path, const Dataset& ds) {
  const NamedTensors entries = load_checkpoint(path);
  for (const auto& [name, t] : entries)
    if (name == "meta/num_joints" && static_cast<std::size_t>(t[0]) != ds.topology().num_joints)
      throw UsageError("checkpoint '" + path + "' was trained on " + std::to_string(static_cast<std::size_t>(t[0])) +
                       " joints but the dataset has " + std::to_string(ds.topology().num_joints));
  try {
    return encoder_from_checkpoint(entries);
  } catch (const ContractViolation& e) {
    throw UsageError("checkpoint '" + path + "': " + e.what());
  }
}

}  // namespace cli_detail

inline int run_cli(int argc, const char* const* argv, std::ostream& out = std::cout, std::ostream& err = std::cerr) {
  using namespace cli_detail;
  CLI::App app{"Multi-view spatial-temporal graph contrastive learning for skeleton sequences", "stgcrl"};
  app.require_subcommand(1);
  app.set_version_flag("--version", "stgcrl 1.0");

  // ---- synth
  auto* synth = app.add_subcommand("synth", "Generate a synthetic multi-view skeleton dataset");
  std::string s_out, s_config;
  SynthConfig sc;
  synth->add_option("-o,--out", s_out, "Output directory")->required();
  synth->add_option("--config", s_config, "JSON config file (section \"synth\" or a bare object)");
  auto* o_classes = synth->add_option("--classes", sc.num_classes, "Number of classes")->capture_default_str();
  auto* o_per = synth->add_option("--per-class", sc.samples_per_class, "Samples per class")->capture_default_str();
  auto* o_subj = synth->add_option("--subjects", sc.num_subjects, "Number of subjects")->capture_default_str();
  auto* o_views = synth->add_option("--views", sc.num_views, "Views per sample")->capture_default_str();
  auto* o_frames = synth->add_option("--frames", sc.T, "Frames per sequence (T)")->capture_default_str();
  auto* o_joints = synth->add_option("--joints", sc.M, "Joints (25 = NTU skeleton, else a chain)")->capture_default_str();
  auto* o_span = synth->add_option("--yaw-span", sc.yaw_span_deg, "Yaw spread of the cameras (deg)")->capture_default_str();
  auto* o_yj = synth->add_option("--yaw-jitter", sc.yaw_jitter_deg, "Per-sample yaw jitter (deg)")->capture_default_str();
  auto* o_ay = synth->add_option("--actor-yaw", sc.actor_yaw_deg, "Actor facing range, shared by all views (deg)")->capture_default_str();
  auto* o_pj = synth->add_option("--pitch-jitter", sc.pitch_jitter_deg, "Per-sample pitch jitter (deg)")->capture_default_str();
  std::vector<double> s_occ;
  auto* o_occ = synth->add_option("--occlusion", s_occ, "Joint occlusion probability (one value or one per view)");
  auto* o_noise = synth->add_option("--noise", sc.noise_sigma, "Sensor noise sigma")->capture_default_str();
  auto* o_off = synth->add_option("--offset", sc.max_temporal_offset, "Max temporal offset (frames)")->capture_default_str();
  auto* o_sseed = synth->add_option("--seed", sc.seed, "Random seed")->capture_default_str();

  // ---- pretrain
  auto* pre = app.add_subcommand("pretrain", "Contrastive pretraining; writes encoder.stgc and metrics.csv");
  std::string p_data, p_out, p_config, p_mode = "mv", p_loss = "global+temlocal", p_combine = "uncertainty",
                                       p_local_mode = "literal", p_aug = "temporal-subgraph", p_encoder = "default",
                                       p_recipe = "full";
  PretrainConfig pc;
  double p_lr = pc.lr_schedule.base_lr;
  std::vector<int> p_drops = pc.lr_schedule.drop_epochs;
  bool p_resume = false, p_train_only = false;
  pre->add_option("--data", p_data, "Dataset directory")->required();
  pre->add_option("-o,--out", p_out, "Output directory")->required();
  pre->add_option("--config", p_config, "JSON config file (section \"pretrain\" or a bare object)");
  pre->add_option("--recipe", p_recipe, "Base settings: full (40 epochs, full encoder) or desk")
      ->check(CLI::IsMember({"full", "desk"}))
      ->capture_default_str();
  auto* o_epochs = pre->add_option("--epochs", pc.epochs, "Epochs")->capture_default_str();
  auto* o_bs = pre->add_option("--batch-size", pc.batch_size, "Samples per batch (N)")->capture_default_str();
  auto* o_lr = pre->add_option("--lr", p_lr, "Base learning rate")->capture_default_str();
  auto* o_drops = pre->add_option("--lr-drops", p_drops, "Epochs at which the lr is divided by 10")->capture_default_str();
  auto* o_mom = pre->add_option("--momentum", pc.momentum, "Nesterov momentum")->capture_default_str();
  auto* o_tau = pre->add_option("--tau", pc.tau, "Temperature")->capture_default_str();
  auto* o_S = pre->add_option("--S", pc.S, "Subgraphs per sequence")->capture_default_str();
  auto* o_mode = pre->add_option("--mode", p_mode, "mv (multi-view) or sv (single-view)")
                     ->check(CLI::IsMember({"mv", "sv"}))
                     ->capture_default_str();
  auto* o_loss = pre->add_option("--loss", p_loss, "global, temlocal, spalocal or a '+'-joined set")->capture_default_str();
  auto* o_comb = pre->add_option("--combine", p_combine, "uncertainty or linear")
                     ->check(CLI::IsMember({"uncertainty", "linear"}))
                     ->capture_default_str();
  auto* o_lmode = pre->add_option("--local-mode", p_local_mode, "literal or stated-count")
                      ->check(CLI::IsMember({"literal", "stated-count"}))
                      ->capture_default_str();
  auto* o_aug = pre->add_option("--aug", p_aug, "none, temporal-subgraph, node-drop, node-perturb, view-rotate, shear")
                    ->check(CLI::IsMember({"none", "temporal-subgraph", "node-drop", "node-perturb", "view-rotate", "shear"}))
                    ->capture_default_str();
  auto* o_enc = pre->add_option("--encoder", p_encoder, "Encoder preset: default or desk")
                    ->check(CLI::IsMember({"default", "desk"}))
                    ->capture_default_str();
  auto* o_pseed = pre->add_option("--seed", pc.seed, "Random seed")->capture_default_str();
  auto* o_pworkers = pre->add_option("--workers", pc.workers, "Worker threads")->capture_default_str();
  pre->add_flag("--resume", p_resume, "Continue from <out>/pretrain_state.stgc if present");
  pre->add_flag("--train-only", p_train_only, "Pretrain on the manifest's cross-subject training subjects only");

  // ---- linear-eval
  auto* lin = app.add_subcommand("linear-eval", "Frozen-encoder linear evaluation; prints a JSON report");
  std::string l_data, l_ckpt, l_out, l_config, l_protocol, l_subjects, l_encoder = "default";
  LinearEvalConfig lc;
  double l_lr = lc.lr_schedule.base_lr;
  std::vector<int> l_drops = lc.lr_schedule.drop_epochs;
  std::size_t l_test_view = 0;
  bool l_random = false;
  lin->add_option("--data", l_data, "Dataset directory")->required();
  lin->add_option("--checkpoint", l_ckpt, "Encoder checkpoint (encoder.stgc)");
  lin->add_option("-o,--out", l_out, "Write the JSON report to this file");
  lin->add_option("--config", l_config, "JSON config file (section \"linear_eval\" or a bare object)");
  auto* o_lep = lin->add_option("--epochs", lc.epochs, "Epochs")->capture_default_str();
  auto* o_lbs = lin->add_option("--batch-size", lc.batch_size, "Batch size")->capture_default_str();
  auto* o_llr = lin->add_option("--lr", l_lr, "Base learning rate")->capture_default_str();
  auto* o_ldrops = lin->add_option("--lr-drops", l_drops, "Epochs at which the lr is divided by 10")->capture_default_str();
  auto* o_lseed = lin->add_option("--seed", lc.seed, "Random seed (also seeds --random-encoder)")->capture_default_str();
  auto* o_lworkers = lin->add_option("--workers", lc.workers, "Worker threads")->capture_default_str();
  lin->add_option("--protocol", l_protocol, "cross-subject or cross-view (default: the manifest's)")
      ->check(CLI::IsMember({"cross-subject", "cross-view"}));
  auto* o_tv = lin->add_option("--test-view", l_test_view, "Held-out view for cross-view");
  lin->add_option("--train-subjects", l_subjects, "Comma-separated training subject ids for cross-subject");
  lin->add_flag("--random-encoder", l_random, "Evaluate a randomly initialised encoder (no checkpoint)");
  lin->add_option("--encoder", l_encoder, "Encoder preset for --random-encoder: default or desk")
      ->check(CLI::IsMember({"default", "desk"}))
      ->capture_default_str();

  // ---- embed
  auto* emb = app.add_subcommand("embed", "Export H for every (sample, view) as CSV");
  std::string e_data, e_ckpt, e_out;
  std::size_t e_workers = 1;
  emb->add_option("--data", e_data, "Dataset directory")->required();
  emb->add_option("--checkpoint", e_ckpt, "Encoder checkpoint")->required();
  emb->add_option("-o,--out", e_out, "Output CSV file")->required();
  emb->add_option("--workers", e_workers, "Worker threads")->capture_default_str();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    out << app.help("", CLI::AppFormatMode::All);
    return kExitOk;
  } catch (const CLI::CallForAllHelp& e) {
    out << app.help("", CLI::AppFormatMode::All);
    return kExitOk;
  } catch (const CLI::CallForVersion& e) {
    out << app.version() << "\n";
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << "\n";
    return kExitUsage;
  }

  try {
    if (*synth) {
      SynthConfig file;
      from_json(read_config_file(s_config, "synth"), file);
      SynthConfig r = file;
      override(o_classes, sc.num_classes, r.num_classes);
      override(o_per, sc.samples_per_class, r.samples_per_class);
      override(o_subj, sc.num_subjects, r.num_subjects);
      override(o_views, sc.num_views, r.num_views);
      override(o_frames, sc.T, r.T);
      override(o_joints, sc.M, r.M);
      override(o_span, sc.yaw_span_deg, r.yaw_span_deg);
      override(o_yj, sc.yaw_jitter_deg, r.yaw_jitter_deg);
      override(o_ay, sc.actor_yaw_deg, r.actor_yaw_deg);
      override(o_pj, sc.pitch_jitter_deg, r.pitch_jitter_deg);
      override(o_occ, s_occ, r.occlusion_prob);
      override(o_noise, sc.noise_sigma, r.noise_sigma);
      override(o_off, sc.max_temporal_offset, r.max_temporal_offset);
      override(o_sseed, sc.seed, r.seed);
      try {
        r.validate();
      } catch (const ContractViolation& e) {
        throw UsageError(e.what());
      }
      Dataset ds = synth_generate(r);
      save_dataset(s_out, ds);
      write_resolved(std::filesystem::path(s_out) / "resolved_config.json", "synth", to_json(r), json::object(),
                     r.seed);
      out << "wrote " << ds.size() << " samples x " << ds.num_views() << " views to " << s_out << "\n";
      return kExitOk;
    }

    if (*pre) {
      PretrainConfig r = p_recipe == "desk" ? desk_pretrain_config() : PretrainConfig{};
      if (o_enc->count()) r.encoder = encoder_preset(p_encoder);
      from_json(read_config_file(p_config, "pretrain"), r);
      override(o_epochs, pc.epochs, r.epochs);
      override(o_bs, pc.batch_size, r.batch_size);
      override(o_lr, p_lr, r.lr_schedule.base_lr);
      override(o_drops, p_drops, r.lr_schedule.drop_epochs);
      override(o_mom, pc.momentum, r.momentum);
      override(o_tau, pc.tau, r.tau);
      override(o_S, pc.S, r.S);
      if (o_mode->count()) r.mode = pretrain_mode_from_string(p_mode);
      if (o_loss->count()) {
        try {
          parse_loss_set(p_loss, r.use_global, r.local);
        } catch (const ContractViolation& e) {
          throw UsageError(e.what());
        }
      }
      if (o_comb->count()) r.combine = combine_from_string(p_combine);
      if (o_lmode->count()) r.local_mode = local_mode_from_string(p_local_mode);
      if (o_aug->count()) r.aug.kind = aug_kind_from_string(p_aug);
      if (o_enc->count()) r.encoder = encoder_preset(p_encoder);
      override(o_pseed, pc.seed, r.seed);
      override(o_pworkers, pc.workers, r.workers);
      if (r.combine == CombineMode::linear) r.w_global = r.w_local = 1.0;

      Dataset ds = load_dataset(p_data);
      try {
        check_pretrain_inputs(ds, r);
      } catch (const ContractViolation& e) {
        throw UsageError(e.what());
      }
      PretrainOptions opts;
      opts.checkpoint_dir = p_out;
      opts.resume = p_resume;
      if (p_train_only) {
        const Split sp = split_dataset(ds.manifest, Protocol::cross_subject, ds.manifest.split);
        for (auto [i, v] : sp.train)
          if (v == 0) opts.samples.push_back(i);
      }
      if (!p_train_only) {
        const std::size_t n = ds.size();
        if (n < r.batch_size) throw UsageError("dataset has fewer samples than one batch");
      } else if (opts.samples.size() < r.batch_size) {
        throw UsageError("training split has fewer samples than one batch");
      }
      ensure_dir(p_out);
      const json cfg = to_json(r);
      write_resolved(std::filesystem::path(p_out) / "resolved_config.json", "pretrain", cfg,
                     {{"data", p_data}, {"train_only", p_train_only}}, r.seed);
      const auto metrics_path = (std::filesystem::path(p_out) / "metrics.csv").string();
      PretrainResult res = pretrain(ds, r, opts);
      std::string csv = metrics_csv_header() + "\n";
      for (const auto& m : res.history) csv += metrics_csv_line(m) + "\n";
      io::write_text(metrics_path, csv);
      NamedTensors ck = encoder_checkpoint(res.state);
      ck.emplace_back("meta/num_joints", Tensor({1}, static_cast<double>(ds.topology().num_joints)));
      save_checkpoint((std::filesystem::path(p_out) / "encoder.stgc").string(), ck);
      out << csv;
      return kExitOk;
    }

    if (*lin) {
      LinearEvalConfig r;
      from_json(read_config_file(l_config, "linear_eval"), r);
      override(o_lep, lc.epochs, r.epochs);
      override(o_lbs, lc.batch_size, r.batch_size);
      override(o_llr, l_lr, r.lr_schedule.base_lr);
      override(o_ldrops, l_drops, r.lr_schedule.drop_epochs);
      override(o_lseed, lc.seed, r.seed);
      override(o_lworkers, lc.workers, r.workers);
      if (l_random == !l_ckpt.empty())
        throw UsageError(l_random ? "--random-encoder and --checkpoint are mutually exclusive"
                                  : "--checkpoint is required unless --random-encoder is given");
      try {
        r.validate();
      } catch (const ContractViolation& e) {
        throw UsageError(e.what());
      }
      Dataset ds = load_dataset(l_data);
      Protocol protocol = l_protocol.empty() ? ds.manifest.protocol : protocol_from_string(l_protocol);
      SplitParams sp = ds.manifest.split;
      if (!l_subjects.empty()) sp.train_subjects = parse_index_list(l_subjects);
      if (o_tv->count()) sp.test_view = l_test_view;
      Split split;
      try {
        split = split_dataset(ds.manifest, protocol, sp);
      } catch (const ContractViolation& e) {
        throw UsageError(e.what());
      }
      EncoderState enc = l_random ? random_encoder(encoder_preset(l_encoder), r.seed, ds) : load_encoder(l_ckpt, ds);
      LinearEvalOutcome res = linear_eval(enc, ds, split, r);
      for (const auto& w : res.result.warnings) err << "warning: " << w << "\n";
      json cfg = to_json(r);
      cfg["protocol"] = to_string(protocol);
      cfg["random_encoder"] = l_random;
      if (l_random) cfg["encoder"] = to_json(enc.config);
      json report = eval_report(res.result, config_hash(cfg), r.seed);
      report["protocol"] = to_string(protocol);
      const std::string text = report.dump(2) + "\n";
      if (!l_out.empty()) {
        io::write_text(l_out, text);
        write_resolved(l_out + ".config.json", "linear-eval", cfg,
                       {{"data", l_data}, {"checkpoint", l_ckpt}}, r.seed);
      }
      out << text;
      return kExitOk;
    }

    if (*emb) {
      if (e_workers < 1) throw UsageError("--workers must be >= 1");
      Dataset ds = load_dataset(e_data);
      EncoderState enc = load_encoder(e_ckpt, ds);
      std::vector<std::size_t> order(ds.size());
      std::iota(order.begin(), order.end(), std::size_t{0});
      std::sort(order.begin(), order.end(),
                [&](std::size_t a, std::size_t b) { return ds.manifest.samples[a].id < ds.manifest.samples[b].id; });
      std::vector<ViewRef> refs;
      for (std::size_t i : order)
        for (std::size_t v = 0; v < ds.num_views(); ++v) refs.emplace_back(i, v);
      const Tensor H = embed(enc, sequences_of(ds, refs), e_workers);
      std::string csv = "id,view,label";
      for (std::size_t d = 0; d < H.dim(1); ++d) csv += ",h" + std::to_string(d);
      csv += "\n";
      char buf[32];
      for (std::size_t r = 0; r < refs.size(); ++r) {
        const auto& s = ds.manifest.samples[refs[r].first];
        csv += std::to_string(s.id) + "," + std::to_string(refs[r].second) + "," + std::to_string(s.label);
        for (std::size_t d = 0; d < H.dim(1); ++d) {
          std::snprintf(buf, sizeof buf, ",%.17g", H.at(r, d));
          csv += buf;
        }
        csv += "\n";
      }
      if (auto parent = std::filesystem::path(e_out).parent_path(); !parent.empty()) ensure_dir(parent.string());
      io::write_text(e_out, csv);
      write_resolved(e_out + ".config.json", "embed", json{{"encoder", to_json(enc.config)}},
                     {{"data", e_data}, {"checkpoint", e_ckpt}}, 0);
      out << "wrote " << refs.size() << " rows to " << e_out << "\n";
      return kExitOk;
    }
  } catch (const UsageError& e) {
    err << "usage error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const DataError& e) {
    err << "data error: " << e.what() << "\n";
    return kExitData;
  } catch (const NumericFailure& e) {
    err << "numeric failure: " << e.what() << "\n";
    return kExitNumeric;
  } catch (const DegenerateInput& e) {
    err << "numeric failure: " << e.what() << "\n";
    return kExitNumeric;
  } catch (const ContractViolation& e) {
    err << "usage error: " << e.what() << "\n";
    return kExitUsage;
  }
  return kExitUsage;
}

}  // namespace stgcrl
