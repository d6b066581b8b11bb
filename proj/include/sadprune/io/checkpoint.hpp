#pragma once

#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <map>
#include <string>
#include <type_traits>
#include <vector>

#include <nlohmann/json.hpp>

#include "sadprune/core/error.hpp"
#include "sadprune/core/tensor.hpp"
#include "sadprune/model_zoo/zoo.hpp"
#include "sadprune/prune/mask_set.hpp"

namespace sadprune {

// Archive layout: 8-byte magic, little-endian u64 header length, JSON header, then the raw
// tensor payload in header order. The header records dtype, shapes, offsets and an FNV-1a
// checksum of the payload.

inline constexpr char checkpoint_magic[8] = {'S', 'A', 'D', 'C', 'K', 'P', 'T', '1'};

inline std::uint64_t fnv1a(const void* data, std::size_t bytes, std::uint64_t h = 0xcbf29ce484222325ULL) {
  const auto* p = static_cast<const unsigned char*>(data);
  for (std::size_t i = 0; i < bytes; ++i) {
    h ^= p[i];
    h *= 0x100000001b3ULL;
  }
  return h;
}

template <typename T>
constexpr const char* dtype_name() {
  static_assert(std::is_same_v<T, float> || std::is_same_v<T, double>);
  return std::is_same_v<T, float> ? "float32" : "float64";
}

template <typename T>
struct tensor_archive {
  nlohmann::json meta = nlohmann::json::object();
  std::map<std::string, tensor<T>> tensors;

  const tensor<T>& get(const std::string& name) const {
    auto it = tensors.find(name);
    if (it == tensors.end()) throw ingestion_error("checkpoint has no tensor '" + name + "'");
    return it->second;
  }
  bool has(const std::string& name) const { return tensors.count(name) > 0; }
};

template <typename T>
void save_archive(const std::filesystem::path& path, const tensor_archive<T>& a) {
  nlohmann::json entries = nlohmann::json::array();
  std::uint64_t offset = 0, checksum = 0xcbf29ce484222325ULL;
  for (const auto& [name, t] : a.tensors) {
    entries.push_back({{"name", name}, {"shape", t.shape()}, {"offset", offset}});
    offset += t.size() * sizeof(T);
    checksum = fnv1a(t.data(), t.size() * sizeof(T), checksum);
  }
  const nlohmann::json header{{"format", 1},           {"dtype", dtype_name<T>()}, {"tensors", entries},
                              {"payload_bytes", offset}, {"checksum", checksum},  {"meta", a.meta}};
  const std::string text = header.dump();
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  auto tmp = path;
  tmp += ".tmp";
  {
    std::ofstream os(tmp, std::ios::binary | std::ios::trunc);
    if (!os) throw ingestion_error("cannot write checkpoint " + tmp.string());
    os.write(checkpoint_magic, sizeof checkpoint_magic);
    const std::uint64_t len = text.size();
    unsigned char le[8];
    for (int i = 0; i < 8; ++i) le[i] = static_cast<unsigned char>(len >> (8 * i));
    os.write(reinterpret_cast<const char*>(le), 8);
    os.write(text.data(), static_cast<std::streamsize>(text.size()));
    for (const auto& [_, t] : a.tensors) {
      os.write(reinterpret_cast<const char*>(t.data()), static_cast<std::streamsize>(t.size() * sizeof(T)));
    }
    if (!os) throw ingestion_error("short write to " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

inline nlohmann::json read_archive_header(std::istream& is, const std::string& name) {
  char magic[8];
  if (!is.read(magic, 8) || std::memcmp(magic, checkpoint_magic, 8) != 0) {
    throw ingestion_error(name + ": not a checkpoint archive");
  }
  unsigned char le[8];
  if (!is.read(reinterpret_cast<char*>(le), 8)) throw ingestion_error(name + ": truncated header");
  std::uint64_t len = 0;
  for (int i = 0; i < 8; ++i) len |= static_cast<std::uint64_t>(le[i]) << (8 * i);
  if (len > (std::uint64_t{1} << 32)) throw ingestion_error(name + ": implausible header length");
  std::string text(len, '\0');
  if (!is.read(text.data(), static_cast<std::streamsize>(len))) throw ingestion_error(name + ": truncated header");
  try {
    return nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw ingestion_error(name + ": bad header JSON (" + e.what() + ")");
  }
}

template <typename T>
tensor_archive<T> load_archive(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw ingestion_error("cannot open checkpoint " + path.string());
  const auto header = read_archive_header(is, path.string());
  if (header.at("dtype").get<std::string>() != dtype_name<T>()) {
    throw ingestion_error(path.string() + ": dtype " + header.at("dtype").get<std::string>() + ", expected " +
                          dtype_name<T>());
  }
  tensor_archive<T> a;
  a.meta = header.at("meta");
  std::uint64_t checksum = 0xcbf29ce484222325ULL;
  for (const auto& e : header.at("tensors")) {
    tensor<T> t(e.at("shape").get<shape_t>());
    if (!is.read(reinterpret_cast<char*>(t.data()), static_cast<std::streamsize>(t.size() * sizeof(T)))) {
      throw ingestion_error(path.string() + ": payload truncated at '" + e.at("name").get<std::string>() + "'");
    }
    checksum = fnv1a(t.data(), t.size() * sizeof(T), checksum);
    a.tensors.emplace(e.at("name").get<std::string>(), std::move(t));
  }
  if (checksum != header.at("checksum").get<std::uint64_t>()) throw ingestion_error(path.string() + ": checksum mismatch");
  return a;
}

/// Stores parameters and buffers under `prefix`.
template <typename T>
void put_model(tensor_archive<T>& a, const std::string& prefix, model<T>& m) {
  for (auto* p : m.parameters()) a.tensors[prefix + p->name] = p->value;
  for (auto* b : m.buffers()) a.tensors[prefix + b->name] = b->value;
}

template <typename T>
void get_model(const tensor_archive<T>& a, const std::string& prefix, model<T>& m) {
  for (auto* p : m.parameters()) {
    const auto& t = a.get(prefix + p->name);
    p->value.require_same_shape(t, "checkpoint");
    p->value = t;
  }
  for (auto* b : m.buffers()) {
    const auto& t = a.get(prefix + b->name);
    b->value.require_same_shape(t, "checkpoint");
    b->value = t;
  }
}

template <typename T>
void put_snapshot(tensor_archive<T>& a, const std::string& prefix, const weight_snapshot<T>& s) {
  for (const auto& [name, t] : s.entries()) a.tensors[prefix + "p/" + name] = t;
  for (const auto& [name, t] : s.buffer_entries()) a.tensors[prefix + "b/" + name] = t;
}

template <typename T>
weight_snapshot<T> get_snapshot(const tensor_archive<T>& a, const std::string& prefix, snapshot_tag tag) {
  std::map<std::string, tensor<T>> params, buffers;
  for (const auto& [name, t] : a.tensors) {
    if (name.rfind(prefix + "p/", 0) == 0) params.emplace(name.substr(prefix.size() + 2), t);
    else if (name.rfind(prefix + "b/", 0) == 0) buffers.emplace(name.substr(prefix.size() + 2), t);
  }
  return weight_snapshot<T>::from_entries(tag, std::move(params), std::move(buffers));
}

/// Model checkpoint: weights, masks and spec in one archive.
template <typename T>
void save_model_checkpoint(const std::filesystem::path& path, model<T>& m, const mask_set& masks,
                           nlohmann::json extra = nlohmann::json::object()) {
  tensor_archive<T> a;
  a.meta = std::move(extra);
  a.meta["kind"] = "model";
  a.meta["spec"] = to_json_value(m.spec());
  a.meta["masks"] = to_json_value(masks);
  put_model(a, "model/", m);
  save_archive(path, a);
}

/// Loads weights into `m` (whose spec must match) and returns the stored masks.
template <typename T>
mask_set load_model_checkpoint(const std::filesystem::path& path, model<T>& m) {
  const auto a = load_archive<T>(path);
  if (model_spec_from_json(a.meta.at("spec")) != m.spec()) {
    throw structural_error(path.string() + ": checkpoint spec does not match the model");
  }
  get_model(a, "model/", m);
  auto masks = mask_set_from_json(a.meta.at("masks"));
  masks.require_matches(m.prunable_layers());
  return masks;
}

inline void save_mask_file(const std::filesystem::path& path, const mask_set& masks) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream os(path);
  if (!os) throw ingestion_error("cannot write " + path.string());
  os << to_json_value(masks).dump(2) << '\n';
}

inline mask_set load_mask_file(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) throw ingestion_error("cannot open " + path.string());
  try {
    const auto j = nlohmann::json::parse(is);
    if (j.value("format", "") != "sadprune-masks") throw ingestion_error(path.string() + ": not a mask file");
    return mask_set_from_json(j);
  } catch (const nlohmann::json::exception& e) {
    throw ingestion_error(path.string() + ": " + e.what());
  }
}

/// Hash of all parameter and buffer bytes; used to prove the teacher stays frozen.
template <typename T>
std::uint64_t parameter_hash(model<T>& m) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (auto* p : m.parameters()) h = fnv1a(p->value.data(), p->value.size() * sizeof(T), h);
  for (auto* b : m.buffers()) h = fnv1a(b->value.data(), b->value.size() * sizeof(T), h);
  return h;
}

}  // namespace sadprune
