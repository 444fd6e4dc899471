#pragma once

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <string>
#include <vector>

#include "isoplane/engine/adam.hpp"
#include "isoplane/engine/tensor.hpp"
#include "isoplane/error.hpp"
#include "isoplane/volume_io.hpp"

namespace isoplane::engine {

struct NamedArray {
  std::string name;
  Shape shape;
  std::vector<float> data;
};

// Named-parameter table plus string metadata. Binary layout (little endian):
//   "ISOPCKPT" u32 version
//   u32 meta_count   { str key, str value }*
//   u32 array_count  { str name, u32 rank, u64 dims[rank], f32 data[prod dims] }*
// where str = u32 length + bytes.
struct Checkpoint {
  std::map<std::string, std::string> meta;
  std::vector<NamedArray> arrays;

  const NamedArray* find(const std::string& name) const {
    for (const auto& a : arrays)
      if (a.name == name) return &a;
    return nullptr;
  }
  const NamedArray& get(const std::string& name) const {
    if (const auto* a = find(name)) return *a;
    throw LoadError("checkpoint has no entry '" + name + "'");
  }
  const std::string& meta_value(const std::string& key) const {
    const auto it = meta.find(key);
    if (it == meta.end()) throw LoadError("checkpoint metadata '" + key + "' missing");
    return it->second;
  }
};

namespace detail {

inline constexpr char kMagic[8] = {'I', 'S', 'O', 'P', 'C', 'K', 'P', 'T'};
inline constexpr std::uint32_t kVersion = 1;

inline void put_u32(std::ostream& os, std::uint32_t v) {
  v = isoplane::detail::to_little_endian(v);
  os.write(reinterpret_cast<const char*>(&v), 4);
}
inline void put_u64(std::ostream& os, std::uint64_t v) {
  put_u32(os, static_cast<std::uint32_t>(v & 0xffffffffu));
  put_u32(os, static_cast<std::uint32_t>(v >> 32));
}
inline void put_str(std::ostream& os, const std::string& s) {
  put_u32(os, static_cast<std::uint32_t>(s.size()));
  os.write(s.data(), static_cast<std::streamsize>(s.size()));
}
inline std::uint32_t get_u32(std::istream& is) {
  std::uint32_t v = 0;
  is.read(reinterpret_cast<char*>(&v), 4);
  if (!is) throw LoadError("checkpoint truncated");
  return isoplane::detail::to_little_endian(v);
}
inline std::uint64_t get_u64(std::istream& is) {
  const std::uint64_t lo = get_u32(is);
  const std::uint64_t hi = get_u32(is);
  return lo | (hi << 32);
}
inline std::string get_str(std::istream& is) {
  const auto n = get_u32(is);
  if (n > (1u << 24)) throw LoadError("checkpoint string length implausible");
  std::string s(n, '\0');
  is.read(s.data(), n);
  if (!is) throw LoadError("checkpoint truncated");
  return s;
}

}  // namespace detail

inline void write_checkpoint(const Checkpoint& ck, const std::filesystem::path& path) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  const auto tmp = std::filesystem::path(path.string() + ".tmp");
  {
    std::ofstream os(tmp, std::ios::binary | std::ios::trunc);
    if (!os) throw LoadError("cannot write checkpoint " + path.string());
    os.write(detail::kMagic, 8);
    detail::put_u32(os, detail::kVersion);
    detail::put_u32(os, static_cast<std::uint32_t>(ck.meta.size()));
    for (const auto& [k, v] : ck.meta) {
      detail::put_str(os, k);
      detail::put_str(os, v);
    }
    detail::put_u32(os, static_cast<std::uint32_t>(ck.arrays.size()));
    for (const auto& a : ck.arrays) {
      if (numel(a.shape) != a.data.size()) throw ShapeError("checkpoint entry '" + a.name + "' shape/data mismatch");
      detail::put_str(os, a.name);
      detail::put_u32(os, static_cast<std::uint32_t>(a.shape.size()));
      for (auto d : a.shape) detail::put_u64(os, d);
      isoplane::detail::write_f32_le(os, a.data);
    }
    if (!os) throw LoadError("failed writing checkpoint " + path.string());
  }
  std::filesystem::rename(tmp, path);
}

inline Checkpoint read_checkpoint(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw LoadError("cannot open checkpoint " + path.string());
  char magic[8];
  is.read(magic, 8);
  if (!is || !std::equal(magic, magic + 8, detail::kMagic)) throw LoadError("not a checkpoint: " + path.string());
  if (detail::get_u32(is) != detail::kVersion) throw LoadError("unsupported checkpoint version");
  Checkpoint ck;
  const auto nmeta = detail::get_u32(is);
  for (std::uint32_t i = 0; i < nmeta; ++i) {
    auto k = detail::get_str(is);
    ck.meta[k] = detail::get_str(is);
  }
  const auto narr = detail::get_u32(is);
  for (std::uint32_t i = 0; i < narr; ++i) {
    NamedArray a;
    a.name = detail::get_str(is);
    const auto rank = detail::get_u32(is);
    if (rank > 8) throw LoadError("checkpoint entry '" + a.name + "' has implausible rank");
    for (std::uint32_t r = 0; r < rank; ++r) a.shape.push_back(static_cast<std::size_t>(detail::get_u64(is)));
    a.data.resize(numel(a.shape));
    isoplane::detail::read_f32_le(is, a.data);
    if (!is) throw LoadError("checkpoint truncated in entry '" + a.name + "'");
    ck.arrays.push_back(std::move(a));
  }
  return ck;
}

template <class T>
NamedArray to_named(const std::string& name, const Shape& shape, std::span<const T> values) {
  NamedArray a{name, shape, std::vector<float>(values.size())};
  for (std::size_t i = 0; i < values.size(); ++i) a.data[i] = static_cast<float>(values[i]);
  return a;
}

// Optimizer moments are stored as "<prefix>/m/<i>" and "<prefix>/v/<i>".
template <class T>
void store_optimizer(Checkpoint& ck, const std::string& prefix, const Adam<T>& opt) {
  const auto& st = opt.state();
  ck.meta[prefix + ".step"] = std::to_string(st.step);
  ck.meta[prefix + ".lr"] = isoplane::detail::exact(st.lr);
  for (std::size_t i = 0; i < st.m.size(); ++i) {
    const auto& shape = opt.params()[i].shape();
    ck.arrays.push_back(to_named<T>(prefix + "/m/" + std::to_string(i), shape, st.m[i]));
    ck.arrays.push_back(to_named<T>(prefix + "/v/" + std::to_string(i), shape, st.v[i]));
  }
}

template <class T>
void load_optimizer(const Checkpoint& ck, const std::string& prefix, Adam<T>& opt) {
  auto& st = opt.state();
  st.step = std::stol(ck.meta_value(prefix + ".step"));
  st.lr = std::stod(ck.meta_value(prefix + ".lr"));
  st.m.clear();
  st.v.clear();
  if (st.step == 0) return;
  for (std::size_t i = 0; i < opt.params().size(); ++i) {
    const auto& m = ck.get(prefix + "/m/" + std::to_string(i));
    const auto& v = ck.get(prefix + "/v/" + std::to_string(i));
    if (m.shape != opt.params()[i].shape() || v.shape != m.shape)
      throw LoadError("optimizer state shape mismatch for " + prefix + " parameter " + std::to_string(i));
    st.m.emplace_back(m.data.begin(), m.data.end());
    st.v.emplace_back(v.data.begin(), v.data.end());
  }
}

}  // namespace isoplane::engine
