#pragma once

// Checkpoint = directory with `manifest.txt` (text) and `params.bin`
// (little-endian float32, tensors back to back in manifest order).
//
// manifest.txt:
//   duin-checkpoint 1
//   seed <u64>
//   config_hash <hex>
//   adam_step <u64>
//   vocabulary <items> <attrs> <context> <profile> <context_fields> <profile_fields>
//   tensor <kind> <name> <d0,d1,..> <offset>      (kind: param | adam.m | adam.v)

#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "duin/model.hpp"
#include "duin/optim.hpp"

namespace duin {

struct CheckpointInfo {
  std::uint64_t seed = 0;
  std::uint64_t config_hash = 0;
  std::uint64_t adam_step = 0;
  Vocabulary vocabulary;
};

namespace detail {

inline void put_f32(std::ostream& out, float v) {
  std::uint32_t bits = std::bit_cast<std::uint32_t>(v);
  if constexpr (std::endian::native == std::endian::big) bits = __builtin_bswap32(bits);
  char buf[4];
  std::memcpy(buf, &bits, 4);
  out.write(buf, 4);
}

inline float get_f32(const char* p) {
  std::uint32_t bits;
  std::memcpy(&bits, p, 4);
  if constexpr (std::endian::native == std::endian::big) bits = __builtin_bswap32(bits);
  return std::bit_cast<float>(bits);
}

inline std::string shape_csv(const Shape& s) {
  std::string out;
  for (std::size_t i = 0; i < s.size(); ++i) out += (i ? "," : "") + std::to_string(s[i]);
  return out;
}

}  // namespace detail

template <class Real>
void save_checkpoint(const std::string& dir, const ParameterStore<Real>& store, const Adam<Real>* adam,
                     const CheckpointInfo& info) {
  std::filesystem::create_directories(dir);
  std::ofstream manifest(dir + "/manifest.txt", std::ios::binary);
  std::ofstream blob(dir + "/params.bin", std::ios::binary);
  manifest << "duin-checkpoint 1\n";
  manifest << "seed " << info.seed << '\n';
  manifest << "config_hash " << std::hex << info.config_hash << std::dec << '\n';
  manifest << "adam_step " << (adam ? adam->steps() : 0) << '\n';
  const auto& v = info.vocabulary;
  manifest << "vocabulary " << v.items << ' ' << v.attrs << ' ' << v.context << ' ' << v.profile << ' '
           << v.context_fields << ' ' << v.profile_fields << '\n';
  std::size_t offset = 0;
  auto emit = [&](const std::string& kind, const std::string& name, const Shape& shape, std::span<const Real> values) {
    manifest << "tensor " << kind << ' ' << name << ' ' << detail::shape_csv(shape) << ' ' << offset << '\n';
    for (auto x : values) detail::put_f32(blob, static_cast<float>(x));
    offset += values.size();
  };
  for (const auto& [name, t] : store.entries()) emit("param", name, t.shape(), t.data());
  if (adam) {
    for (const auto& [name, t] : store.entries()) {
      const auto& m = adam->moments(name);
      emit("adam.m", name, t.shape(), m.m);
      emit("adam.v", name, t.shape(), m.v);
    }
  }
  if (!manifest || !blob) throw DataError("cannot write checkpoint to " + dir);
}

inline CheckpointInfo read_checkpoint_info(const std::string& dir) {
  std::ifstream in(dir + "/manifest.txt");
  if (!in) throw DataError("missing checkpoint manifest in " + dir);
  std::string line;
  std::getline(in, line);
  if (line != "duin-checkpoint 1") throw DataError("unrecognized checkpoint header in " + dir);
  CheckpointInfo info;
  while (std::getline(in, line)) {
    std::istringstream ls(line);
    std::string key;
    ls >> key;
    if (key == "seed") ls >> info.seed;
    else if (key == "config_hash") ls >> std::hex >> info.config_hash;
    else if (key == "adam_step") ls >> info.adam_step;
    else if (key == "vocabulary") {
      auto& v = info.vocabulary;
      ls >> v.items >> v.attrs >> v.context >> v.profile >> v.context_fields >> v.profile_fields;
    }
    if (!ls && key != "tensor") throw DataError("malformed checkpoint manifest line: " + line);
  }
  return info;
}

/// Restores parameter values (and Adam state when given) in place. Every stored
/// parameter must exist in `store` with the same shape and vice versa.
template <class Real>
CheckpointInfo load_checkpoint(const std::string& dir, ParameterStore<Real>& store, Adam<Real>* adam = nullptr) {
  CheckpointInfo info = read_checkpoint_info(dir);
  std::ifstream blob_in(dir + "/params.bin", std::ios::binary);
  if (!blob_in) throw DataError("missing params.bin in " + dir);
  std::vector<char> blob((std::istreambuf_iterator<char>(blob_in)), std::istreambuf_iterator<char>());

  std::ifstream in(dir + "/manifest.txt");
  std::string line;
  std::map<std::string, bool> restored;
  while (std::getline(in, line)) {
    std::istringstream ls(line);
    std::string key, kind, name, shape_text;
    std::size_t offset = 0;
    ls >> key;
    if (key != "tensor") continue;
    ls >> kind >> name >> shape_text >> offset;
    if (!ls) throw DataError("malformed tensor line: " + line);
    Tensor<Real> t = store.get(name);
    if (detail::shape_csv(t.shape()) != shape_text) {
      throw DataError("checkpoint shape mismatch for " + name + ": " + shape_text + " vs " + shape_str(t.shape()));
    }
    if ((offset + t.size()) * 4 > blob.size()) throw DataError("params.bin too short for " + name);
    const char* p = blob.data() + offset * 4;
    std::span<Real> dst;
    if (kind == "param") {
      dst = t.data();
      restored[name] = true;
    } else if (kind == "adam.m" || kind == "adam.v") {
      if (!adam) continue;
      auto& m = adam->moments(name);
      dst = kind == "adam.m" ? std::span<Real>(m.m) : std::span<Real>(m.v);
    } else {
      throw DataError("unknown tensor kind " + kind);
    }
    for (std::size_t i = 0; i < dst.size(); ++i) dst[i] = static_cast<Real>(detail::get_f32(p + 4 * i));
  }
  for (const auto& [name, _] : store.entries()) {
    if (!restored.count(name)) throw DataError("checkpoint lacks parameter " + name);
  }
  if (adam) adam->set_steps(info.adam_step);
  return info;
}

}  // namespace duin
