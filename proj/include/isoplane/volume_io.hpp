#pragma once

#include <bit>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "isoplane/error.hpp"
#include "isoplane/volume.hpp"

namespace isoplane {

namespace detail {

inline std::uint32_t to_little_endian(std::uint32_t v) {
  if constexpr (std::endian::native == std::endian::big) {
    return ((v & 0xffu) << 24) | ((v & 0xff00u) << 8) | ((v >> 8) & 0xff00u) | (v >> 24);
  }
  return v;
}

inline void write_f32_le(std::ostream& os, std::span<const float> values) {
  std::vector<std::uint32_t> buf(values.size());
  for (std::size_t i = 0; i < values.size(); ++i) buf[i] = to_little_endian(std::bit_cast<std::uint32_t>(values[i]));
  os.write(reinterpret_cast<const char*>(buf.data()), static_cast<std::streamsize>(buf.size() * 4));
}

inline void read_f32_le(std::istream& is, std::span<float> out) {
  std::vector<std::uint32_t> buf(out.size());
  is.read(reinterpret_cast<char*>(buf.data()), static_cast<std::streamsize>(buf.size() * 4));
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = std::bit_cast<float>(to_little_endian(buf[i]));
}

// Shortest text that parses back to the same double.
inline std::string exact(double x) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", x);
  return buf;
}

inline std::string trim(std::string s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

}  // namespace detail

inline std::filesystem::path header_path(const std::filesystem::path& vol) {
  return std::filesystem::path(vol.string() + ".hdr");
}

// Writes `<path>` (raw float32 LE, axis-0-major) and `<path>.hdr`.
inline void write_volume(const Volume& v, const std::filesystem::path& path) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  {
    std::ofstream hdr(header_path(path), std::ios::trunc);
    if (!hdr) throw FormatError("cannot open header for writing: " + header_path(path).string());
    const auto& d = v.dims();
    const auto& s = v.spacing();
    const auto& o = v.origin();
    hdr << "# isoplane volume\n";
    hdr << "dims = " << d[0] << ' ' << d[1] << ' ' << d[2] << '\n';
    hdr << "spacing = " << detail::exact(s[0]) << ' ' << detail::exact(s[1]) << ' ' << detail::exact(s[2]) << '\n';
    hdr << "origin = " << detail::exact(o[0]) << ' ' << detail::exact(o[1]) << ' ' << detail::exact(o[2]) << '\n';
    hdr << "normalized = " << (v.normalized() ? "true" : "false") << '\n';
  }
  std::ofstream raw(path, std::ios::binary | std::ios::trunc);
  if (!raw) throw FormatError("cannot open payload for writing: " + path.string());
  detail::write_f32_le(raw, v.data());
  if (!raw) throw FormatError("write failed: " + path.string());
}

inline Volume read_volume(const std::filesystem::path& path) {
  std::ifstream hdr(header_path(path));
  if (!hdr) throw FormatError("missing header " + header_path(path).string());
  std::map<std::string, std::string> kv;
  std::string line;
  while (std::getline(hdr, line)) {
    line = detail::trim(line);
    if (line.empty() || line[0] == '#') continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw FormatError("malformed header line '" + line + "'");
    kv[detail::trim(line.substr(0, eq))] = detail::trim(line.substr(eq + 1));
  }
  auto field = [&](const std::string& key) -> const std::string& {
    const auto it = kv.find(key);
    if (it == kv.end()) throw FormatError("header field '" + key + "' missing");
    return it->second;
  };
  auto triple = [&](const std::string& key) {
    std::istringstream is(field(key));
    std::array<double, 3> t{};
    for (auto& x : t)
      if (!(is >> x)) throw FormatError("header field '" + key + "' must hold three numbers");
    std::string extra;
    if (is >> extra) throw FormatError("header field '" + key + "' has trailing content");
    return t;
  };

  Dims dims{};
  {
    std::istringstream is(field("dims"));
    for (auto& n : dims) {
      long long x = 0;
      if (!(is >> x) || x <= 0) throw FormatError("header field 'dims' must hold three positive integers");
      n = static_cast<std::size_t>(x);
    }
  }
  const auto spacing = triple("spacing");
  for (double s : spacing)
    if (!std::isfinite(s) || s <= 0) throw FormatError("header field 'spacing' must be finite and positive");
  const auto origin = triple("origin");
  for (double o : origin)
    if (!std::isfinite(o)) throw FormatError("header field 'origin' must be finite");
  const auto& norm = field("normalized");
  if (norm != "true" && norm != "false") throw FormatError("header field 'normalized' must be true or false");

  Volume v(dims, spacing, origin);
  v.set_normalized(norm == "true");

  std::ifstream raw(path, std::ios::binary);
  if (!raw) throw FormatError("missing payload " + path.string());
  const auto bytes = std::filesystem::file_size(path);
  const auto expected = static_cast<std::uintmax_t>(v.voxel_count()) * 4;
  if (bytes != expected)
    throw FormatError("payload length " + std::to_string(bytes) + " bytes does not match header dims (expected " +
                      std::to_string(expected) + ")");
  detail::read_f32_le(raw, v.data());
  if (!raw) throw FormatError("payload read failed: " + path.string());
  return v;
}

// 8-bit binary PGM; [lo, hi] maps linearly to [0, 255] with clamping.
inline void write_pgm(const Image& img, const std::filesystem::path& path, double lo = -1.0, double hi = 1.0) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw FormatError("cannot open " + path.string());
  os << "P5\n" << img.cols << ' ' << img.rows << "\n255\n";
  std::vector<unsigned char> px(img.size());
  const double span = hi > lo ? hi - lo : 1.0;
  for (std::size_t i = 0; i < img.size(); ++i) {
    const double t = std::clamp((static_cast<double>(img.data[i]) - lo) / span, 0.0, 1.0);
    px[i] = static_cast<unsigned char>(std::lround(t * 255.0));
  }
  os.write(reinterpret_cast<const char*>(px.data()), static_cast<std::streamsize>(px.size()));
}

inline Image read_pgm(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw FormatError("cannot open " + path.string());
  std::string magic;
  std::size_t cols = 0, rows = 0, maxval = 0;
  is >> magic >> cols >> rows >> maxval;
  if (magic != "P5" || maxval != 255 || cols == 0 || rows == 0) throw FormatError("unsupported PGM " + path.string());
  is.get();
  Image img(rows, cols);
  std::vector<unsigned char> px(rows * cols);
  is.read(reinterpret_cast<char*>(px.data()), static_cast<std::streamsize>(px.size()));
  if (!is) throw FormatError("truncated PGM " + path.string());
  for (std::size_t i = 0; i < px.size(); ++i) img.data[i] = static_cast<float>(px[i]);
  return img;
}

}  // namespace isoplane
