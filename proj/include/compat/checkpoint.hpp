#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <string_view>
#include <vector>

#include "compat/binary_io.hpp"
#include "compat/dataset.hpp"
#include "compat/error.hpp"
#include "compat/optimizer.hpp"
#include "compat/tensor.hpp"

namespace compat {

// Layout (little-endian):
//   "CKPT" u16 version u32 count, then per parameter:
//     u16 name length, name, u8 rank, rank x u32 dims, f64 payload
//   "META" u32 count, then per entry: u16 key length, key, u32 value length, value
//   "OPTM" u32 count, then tensors in the parameter layout
//     (names "m/<param>" and "v/<param>"; the step counter lives in META)
inline constexpr std::string_view kCheckpointMagic = "CKPT";
inline constexpr std::uint16_t kCheckpointVersion = 1;

struct NamedTensor {
  std::string name;
  Tensor tensor;
};

struct Checkpoint {
  std::vector<NamedTensor> params;
  std::map<std::string, std::string> metadata;
  std::vector<NamedTensor> optimizer;

  const std::string& meta(const std::string& key) const {
    auto it = metadata.find(key);
    if (it == metadata.end())
      throw FormatError("checkpoint metadata lacks key '" + key + "'");
    return it->second;
  }
};

namespace detail {

inline void put_tensors(std::string& out, const std::vector<NamedTensor>& tensors) {
  bin::put<std::uint32_t>(out, static_cast<std::uint32_t>(tensors.size()));
  for (const auto& [name, t] : tensors) {
    bin::put_string16(out, name);
    const auto shape = t.shape();
    bin::put<std::uint8_t>(out, static_cast<std::uint8_t>(shape.size()));
    for (auto d : shape) bin::put<std::uint32_t>(out, static_cast<std::uint32_t>(d));
    for (double x : t.data()) bin::put<double>(out, x);
  }
}

inline std::vector<NamedTensor> get_tensors(bin::Reader& rd, const char* section) {
  const auto count = rd.get<std::uint32_t>("tensor count");
  std::vector<NamedTensor> out;
  out.reserve(count);
  for (std::uint32_t k = 0; k < count; ++k) {
    try {
      NamedTensor nt;
      nt.name = rd.string16("tensor name");
      const auto rank = rd.get<std::uint8_t>("tensor rank");
      if (rank != 1 && rank != 2) throw FormatError("rank " + std::to_string(rank));
      std::vector<std::size_t> shape;
      for (std::uint8_t r = 0; r < rank; ++r) shape.push_back(rd.get<std::uint32_t>("dim"));
      nt.tensor = make_tensor(shape);
      for (auto& x : nt.tensor.data()) x = rd.get<double>("tensor payload");
      out.push_back(std::move(nt));
    } catch (const Error& e) {
      throw FormatError(std::string(section) + " record " + std::to_string(k) + ": " +
                        e.what());
    }
  }
  return out;
}

}  // namespace detail

inline std::string serialize_checkpoint(const Checkpoint& ckpt) {
  std::string out;
  out.append(kCheckpointMagic);
  bin::put<std::uint16_t>(out, kCheckpointVersion);
  detail::put_tensors(out, ckpt.params);

  out.append("META");
  bin::put<std::uint32_t>(out, static_cast<std::uint32_t>(ckpt.metadata.size()));
  for (const auto& [k, v] : ckpt.metadata) {
    bin::put_string16(out, k);
    bin::put<std::uint32_t>(out, static_cast<std::uint32_t>(v.size()));
    out.append(v);
  }

  out.append("OPTM");
  detail::put_tensors(out, ckpt.optimizer);
  return out;
}

inline Checkpoint deserialize_checkpoint(std::string_view data) {
  bin::Reader rd(data);
  if (data.size() < 4 || rd.bytes(4, "magic") != kCheckpointMagic)
    throw FormatError("not a checkpoint (bad magic)");
  const auto version = rd.get<std::uint16_t>("version");
  if (version != kCheckpointVersion)
    throw FormatError("unsupported checkpoint version " + std::to_string(version));

  Checkpoint ckpt;
  ckpt.params = detail::get_tensors(rd, "parameter");
  if (rd.bytes(4, "section tag") != "META") throw FormatError("missing META section");
  const auto n_meta = rd.get<std::uint32_t>("metadata count");
  for (std::uint32_t k = 0; k < n_meta; ++k) {
    std::string key = rd.string16("metadata key");
    const auto len = rd.get<std::uint32_t>("metadata value length");
    ckpt.metadata[std::move(key)] = std::string(rd.bytes(len, "metadata value"));
  }
  if (rd.bytes(4, "section tag") != "OPTM") throw FormatError("missing OPTM section");
  ckpt.optimizer = detail::get_tensors(rd, "optimizer");
  if (!rd.at_end()) throw FormatError("trailing bytes after checkpoint");
  return ckpt;
}

inline void write_checkpoint(const Checkpoint& ckpt, const std::string& path) {
  write_text_file(path, serialize_checkpoint(ckpt));
}

inline Checkpoint read_checkpoint(const std::string& path) {
  return deserialize_checkpoint(read_text_file(path));
}

// --- ParamSet / optimizer state <-> checkpoint sections --------------------

inline std::vector<NamedTensor> to_named(const ParamSet& params) {
  std::vector<NamedTensor> out;
  for (std::size_t i = 0; i < params.size(); ++i)
    out.push_back({params.name(i), params.tensor(i)});
  return out;
}

// Copies tensors into `params` by name; every parameter must be present
// with its exact shape.
inline void load_named(ParamSet& params, const std::vector<NamedTensor>& tensors) {
  if (tensors.size() != params.size())
    throw FormatError("checkpoint holds " + std::to_string(tensors.size()) +
                      " parameters, model expects " + std::to_string(params.size()));
  for (const auto& [name, t] : tensors) {
    auto idx = params.find(name);
    if (!idx) throw FormatError("checkpoint parameter '" + name + "' unknown to the model");
    if (!params.tensor(*idx).same_shape(t))
      throw FormatError("checkpoint parameter '" + name + "' has the wrong shape");
    params.mutable_tensor(*idx) = t;
  }
}

inline void store_optimizer(Checkpoint& ckpt, const ParamSet& params,
                            const OptimizerState& state) {
  ckpt.metadata["optimizer"] = std::string(to_string(state.config.kind));
  ckpt.metadata["optimizer.step"] = std::to_string(state.step);
  for (std::size_t i = 0; i < params.size(); ++i) {
    if (!state.first.empty()) ckpt.optimizer.push_back({"m/" + params.name(i), state.first[i]});
    ckpt.optimizer.push_back({"v/" + params.name(i), state.second[i]});
  }
}

inline OptimizerState restore_optimizer(const Checkpoint& ckpt, const ParamSet& params,
                                        OptimizerConfig config) {
  config.kind = parse_optimizer(ckpt.meta("optimizer"));
  OptimizerState state = OptimizerState::fresh(params, config);
  state.step = std::stoull(ckpt.meta("optimizer.step"));
  for (const auto& [name, t] : ckpt.optimizer) {
    const bool is_m = name.starts_with("m/");
    if (!is_m && !name.starts_with("v/"))
      throw FormatError("bad optimizer tensor name '" + name + "'");
    const auto idx = params.find(std::string_view(name).substr(2));
    if (!idx) throw FormatError("optimizer tensor '" + name + "' unknown to the model");
    if (is_m && state.first.empty())
      throw FormatError("first-moment tensor '" + name + "' in an RMSProp checkpoint");
    auto& slot = is_m ? state.first.at(*idx) : state.second.at(*idx);
    if (!slot.same_shape(t)) throw FormatError("optimizer tensor '" + name + "' has wrong shape");
    slot = t;
  }
  return state;
}

}  // namespace compat
