#pragma once

// "STGC" checkpoint container:
//   magic "STGC" | u32 version | repeated { u16 name_len | name | u8 rank |
//   u32 extent * rank | f64 payload (row-major) } until end of file.
// All integers and doubles little-endian.

#include <map>
#include <string>
#include <utility>
#include <vector>

#include "stgcrl/io/binary.hpp"
#include "stgcrl/model.hpp"
#include "stgcrl/numcore/errors.hpp"
#include "stgcrl/numcore/tensor.hpp"

namespace stgcrl {

inline constexpr char kCheckpointMagic[4] = {'S', 'T', 'G', 'C'};
inline constexpr std::uint32_t kCheckpointVersion = 1;

using NamedTensors = std::vector<std::pair<std::string, Tensor>>;

inline std::vector<char> encode_checkpoint(const NamedTensors& entries) {
  io::ByteWriter w;
  w.bytes(kCheckpointMagic, 4);
  w.u32(kCheckpointVersion);
  for (const auto& [name, t] : entries) {
    require(name.size() <= 0xFFFF, "checkpoint: parameter name too long");
    require(t.rank() <= 0xFF, "checkpoint: rank too large");
    w.u16(static_cast<std::uint16_t>(name.size()));
    w.str(name);
    w.u8(static_cast<std::uint8_t>(t.rank()));
    for (std::size_t e : t.shape()) w.u32(static_cast<std::uint32_t>(e));
    for (double v : t.data()) w.f64(v);
  }
  return w.buffer();
}

inline NamedTensors decode_checkpoint(const std::vector<char>& bytes) {
  io::ByteReader r(bytes);
  if (r.str(4, "checkpoint magic") != std::string(kCheckpointMagic, 4))
    throw DataError("checkpoint: bad magic (expected STGC)");
  const std::uint32_t version = r.u32("checkpoint version");
  if (version != kCheckpointVersion)
    throw DataError("checkpoint: unsupported version " + std::to_string(version));
  NamedTensors out;
  while (!r.at_end()) {
    const std::uint16_t len = r.u16("parameter name length");
    std::string name = r.str(len, "parameter name");
    const std::uint8_t rank = r.u8("rank of '" + name + "'");
    Shape shape;
    for (std::uint8_t i = 0; i < rank; ++i) {
      const std::uint32_t e = r.u32("extents of '" + name + "'");
      if (e == 0) throw DataError("checkpoint: zero extent in '" + name + "'");
      shape.push_back(e);
    }
    std::vector<double> data(shape_numel(shape));
    for (double& v : data) v = r.f64("payload of '" + name + "'");
    out.emplace_back(std::move(name), Tensor(std::move(shape), std::move(data)));
  }
  return out;
}

inline void save_checkpoint(const std::string& path, const NamedTensors& entries) {
  io::write_file(path, encode_checkpoint(entries));
}

inline NamedTensors load_checkpoint(const std::string& path) { return decode_checkpoint(io::read_file(path)); }

inline NamedTensors named_values(const std::vector<Parameter*>& params) {
  NamedTensors out;
  for (const Parameter* p : params) out.emplace_back(p->name, p->value);
  return out;
}

/// Encoder-only checkpoint: block strides as metadata plus every encoder
/// parameter. Projection heads and uncertainty weights are left out.
inline NamedTensors encoder_checkpoint(EncoderState& st) {
  NamedTensors out;
  Tensor strides({st.blocks.size()}, 0.0);
  for (std::size_t i = 0; i < st.blocks.size(); ++i) strides[i] = static_cast<double>(st.blocks[i].stride);
  out.emplace_back("meta/strides", std::move(strides));
  for (auto& e : named_values(st.encoder_parameters())) out.push_back(std::move(e));
  if (st.has_input_norm()) {
    out.emplace_back("encoder/input_mean", st.input_mean);
    out.emplace_back("encoder/input_scale", st.input_scale);
  }
  return out;
}

/// Rebuilds an encoder from checkpoint entries. The block layout is read back
/// from the stored shapes and strides; heads are restored when present and
/// freshly zero-shaped otherwise.
inline EncoderState encoder_from_checkpoint(const NamedTensors& entries) {
  std::map<std::string, const Tensor*> by_name;
  for (const auto& [n, t] : entries) by_name[n] = &t;
  auto get = [&](const std::string& n) -> const Tensor& {
    auto it = by_name.find(n);
    if (it == by_name.end()) throw ContractViolation("checkpoint: missing entry '" + n + "'");
    return *it->second;
  };
  const Tensor& strides = get("meta/strides");
  EncoderConfig cfg;
  cfg.blocks.clear();
  for (std::size_t i = 0; i < strides.size(); ++i) {
    const Tensor& w = get("encoder/block" + std::to_string(i) + "/w_root");
    require(w.rank() == 2, "checkpoint: malformed w_root");
    cfg.blocks.push_back({w.dim(0), w.dim(1), static_cast<std::size_t>(strides[i])});
  }
  require(!cfg.blocks.empty(), "checkpoint: no encoder blocks");
  cfg.temporal_kernel = get("encoder/block0/w_temporal").dim(0);
  cfg.output_dim = cfg.blocks.back().out_channels;
  if (by_name.count("global_head/w1")) {
    cfg.projection_hidden = get("global_head/w1").dim(0);
    cfg.projection_out = get("global_head/w2").dim(0);
  }
  EncoderState st = init_encoder(cfg, 0);
  for (Parameter* p : st.all_parameters()) {
    auto it = by_name.find(p->name);
    if (it == by_name.end()) continue;
    require(it->second->shape() == p->value.shape(),
            "checkpoint: shape mismatch for '" + p->name + "': " + shape_str(it->second->shape()) + " vs " +
                shape_str(p->value.shape()));
    p->value = *it->second;
  }
  for (Parameter* p : st.encoder_parameters())
    require(by_name.count(p->name) == 1, "checkpoint: missing encoder parameter '" + p->name + "'");
  if (by_name.count("encoder/input_mean")) {
    st.input_mean = get("encoder/input_mean");
    st.input_scale = get("encoder/input_scale");
    require(st.input_mean.rank() == 2 && st.input_scale.shape() == st.input_mean.shape(),
            "checkpoint: malformed input normalization");
  }
  return st;
}

}  // namespace stgcrl
