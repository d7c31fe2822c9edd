#pragma once

#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "p3m/nn/layers.hpp"

namespace p3m {

// Binary archive: "P3MCKPT1", u64 little-endian header length, JSON header,
// then raw float32 tensor data at the offsets listed in the header.
struct NamedTensor {
  std::string name;
  nn::Tensor<float> data;
};

struct Checkpoint {
  nlohmann::json meta = nlohmann::json::object();
  std::vector<NamedTensor> tensors;

  const nn::Tensor<float>& get(const std::string& name) const {
    for (const auto& t : tensors)
      if (t.name == name) return t.data;
    throw FormatError("checkpoint has no tensor '" + name + "'");
  }
  bool has(const std::string& name) const {
    for (const auto& t : tensors)
      if (t.name == name) return true;
    return false;
  }
};

inline constexpr char kCheckpointMagic[8] = {'P', '3', 'M', 'C', 'K', 'P', 'T', '1'};

inline void write_checkpoint(const std::filesystem::path& path, const Checkpoint& ck) {
  nlohmann::json header = ck.meta;
  nlohmann::json dir = nlohmann::json::array();
  std::uint64_t offset = 0;
  for (const auto& t : ck.tensors) {
    dir.push_back({{"name", t.name},
                   {"shape", {t.data.n(), t.data.c(), t.data.h(), t.data.w()}},
                   {"offset", offset}});
    offset += t.data.size() * sizeof(float);
  }
  header["tensors"] = dir;
  const std::string text = header.dump();
  if (!path.parent_path().empty()) std::filesystem::create_directories(path.parent_path());
  auto tmp = path;
  tmp += ".tmp";
  {
    std::ofstream f(tmp, std::ios::binary | std::ios::trunc);
    if (!f) throw StateError("cannot write " + tmp.string());
    f.write(kCheckpointMagic, 8);
    const std::uint64_t len = text.size();
    f.write(reinterpret_cast<const char*>(&len), sizeof len);
    f.write(text.data(), static_cast<std::streamsize>(text.size()));
    for (const auto& t : ck.tensors)
      f.write(reinterpret_cast<const char*>(t.data.data()), static_cast<std::streamsize>(t.data.size() * sizeof(float)));
    if (!f) throw StateError("short write to " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

inline Checkpoint read_checkpoint(const std::filesystem::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw NotFound("checkpoint not found: " + path.string());
  char magic[8];
  std::uint64_t len = 0;
  if (!f.read(magic, 8) || std::memcmp(magic, kCheckpointMagic, 8) != 0)
    throw FormatError(path.string() + " is not a checkpoint");
  if (!f.read(reinterpret_cast<char*>(&len), sizeof len) || len > (1ull << 30)) throw FormatError("bad checkpoint header");
  std::string text(len, '\0');
  if (!f.read(text.data(), static_cast<std::streamsize>(len))) throw FormatError("truncated checkpoint header");
  Checkpoint ck;
  try {
    ck.meta = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("checkpoint header: ") + e.what());
  }
  const auto base = f.tellg();
  for (const auto& e : ck.meta.at("tensors")) {
    const auto s = e.at("shape");
    NamedTensor t{e.at("name").get<std::string>(),
                  nn::Tensor<float>(s[0].get<int>(), s[1].get<int>(), s[2].get<int>(), s[3].get<int>())};
    f.seekg(base + static_cast<std::streamoff>(e.at("offset").get<std::uint64_t>()));
    if (!f.read(reinterpret_cast<char*>(t.data.data()), static_cast<std::streamsize>(t.data.size() * sizeof(float))))
      throw FormatError("truncated checkpoint data for " + t.name);
    ck.tensors.push_back(std::move(t));
  }
  ck.meta.erase("tensors");
  return ck;
}

// Parameters as "param/<name>", buffers as "buffer/<name>".
template <class T>
void pack_store(const nn::ParameterStore<T>& store, Checkpoint& ck) {
  for (const auto& p : store.parameters()) ck.tensors.push_back({"param/" + p.name, p.var.value().template cast<float>()});
  for (const auto& b : store.buffers()) ck.tensors.push_back({"buffer/" + b.name, b.var.value().template cast<float>()});
}

template <class T>
void unpack_store(const Checkpoint& ck, nn::ParameterStore<T>& store) {
  auto load = [&](const std::string& key, nn::Var<T> v) {
    const auto& src = ck.get(key);
    const auto& cur = v.value();
    if (src.n() != cur.n() || src.c() != cur.c() || src.h() != cur.h() || src.w() != cur.w())
      throw ShapeError("checkpoint tensor " + key + " has shape " + src.shape_str() + ", model expects " +
                       v.value().shape_str());
    v.mutable_value() = src.template cast<T>();
  };
  for (const auto& p : store.parameters()) load("param/" + p.name, p.var);
  for (const auto& b : store.buffers()) load("buffer/" + b.name, b.var);
}

}  // namespace p3m
