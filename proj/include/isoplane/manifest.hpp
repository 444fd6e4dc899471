#pragma once

#include <openssl/evp.h>

#include <chrono>
#include <cstdlib>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <map>
#include <string>
#include <vector>

#include "json.hpp"

#include "isoplane/config.hpp"
#include "isoplane/error.hpp"

namespace isoplane {

inline std::string sha256_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw InvalidArgument("cannot hash missing file " + path.string());
  EVP_MD_CTX* ctx = EVP_MD_CTX_new();
  EVP_DigestInit_ex(ctx, EVP_sha256(), nullptr);
  std::vector<char> buf(1 << 16);
  while (in) {
    in.read(buf.data(), static_cast<std::streamsize>(buf.size()));
    if (in.gcount() > 0) EVP_DigestUpdate(ctx, buf.data(), static_cast<std::size_t>(in.gcount()));
  }
  unsigned char md[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  EVP_DigestFinal_ex(ctx, md, &len);
  EVP_MD_CTX_free(ctx);
  static const char* hex = "0123456789abcdef";
  std::string out;
  for (unsigned int i = 0; i < len; ++i) {
    out += hex[md[i] >> 4];
    out += hex[md[i] & 15];
  }
  return out;
}

// UTC timestamp; SOURCE_DATE_EPOCH pins it for reproducible manifests.
inline std::string manifest_timestamp() {
  std::time_t t = std::time(nullptr);
  if (const char* e = std::getenv("SOURCE_DATE_EPOCH"); e && *e) t = static_cast<std::time_t>(std::strtoll(e, nullptr, 10));
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

#ifndef ISOPLANE_VERSION
#define ISOPLANE_VERSION "0.0.0"
#endif

struct RunManifest {
  std::string command;
  KeyValues config;
  std::uint64_t seed = 0;
  std::vector<std::filesystem::path> inputs;
  std::vector<std::filesystem::path> outputs;
  std::string started;

  // Writes manifest.json into `dir`; paths are recorded relative to `dir`
  // when they live below it.
  void write(const std::filesystem::path& dir) const {
    nlohmann::ordered_json j;
    j["command"] = command;
    j["tool_version"] = ISOPLANE_VERSION;
    j["seed"] = seed;
    nlohmann::ordered_json cfg = nlohmann::ordered_json::object();
    for (const auto& [k, v] : config) cfg[k] = v;
    j["config"] = cfg;
    auto hashes = [&](const std::vector<std::filesystem::path>& files) {
      nlohmann::ordered_json arr = nlohmann::ordered_json::array();
      for (const auto& f : files) {
        auto rel = std::filesystem::relative(f, dir);
        const bool inside = !rel.empty() && rel.native().rfind("..", 0) != 0;
        arr.push_back({{"path", inside ? rel.generic_string() : f.generic_string()}, {"sha256", sha256_file(f)}});
      }
      return arr;
    };
    j["inputs"] = hashes(inputs);
    j["outputs"] = hashes(outputs);
    j["started"] = started;
    j["finished"] = manifest_timestamp();
    std::filesystem::create_directories(dir);
    std::ofstream out(dir / "manifest.json", std::ios::trunc);
    out << j.dump(2) << '\n';
  }
};

}  // namespace isoplane
