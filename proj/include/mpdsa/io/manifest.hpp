#pragma once

#include <nlohmann/json.hpp>

#include <chrono>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <map>
#include <string>
#include <vector>

#include "mpdsa/io/hash.hpp"

namespace mpdsa::io {

inline constexpr const char* kToolVersion = "mpdsa 1.0.0";

struct ManifestEntry {
  std::string file;
  size_t bytes = 0;
  std::string sha256;
};

struct RunManifest {
  std::string command;
  std::string config_hash;
  std::string tool_version = kToolVersion;
  std::string started, finished;  // UTC, ISO 8601
  uint64_t seed = 0;
  unsigned threads = 1;
  std::vector<ManifestEntry> files;

  nlohmann::json to_json() const {
    nlohmann::json j{{"command", command},     {"config_sha256", config_hash}, {"tool_version", tool_version},
                     {"started", started},     {"finished", finished},         {"seed", seed},
                     {"threads", threads},     {"files", nlohmann::json::array()}};
    for (const auto& f : files) j["files"].push_back({{"file", f.file}, {"bytes", f.bytes}, {"sha256", f.sha256}});
    return j;
  }
};

inline std::string utc_now() {
  const std::time_t t = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

/// Writes each named buffer under dir and records its checksum. Names are relative paths.
inline std::vector<ManifestEntry> write_outputs(const std::filesystem::path& dir,
                                                const std::map<std::string, std::string>& files) {
  std::vector<ManifestEntry> out;
  for (const auto& [name, data] : files) {
    const auto path = dir / name;
    std::filesystem::create_directories(path.parent_path());
    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    f.write(data.data(), static_cast<std::streamsize>(data.size()));
    if (!f) throw std::runtime_error("cannot write " + path.string());
    out.push_back({name, data.size(), sha256_hex(data)});
  }
  return out;
}

/// Re-reads every listed file and compares checksums; returns the names that differ.
inline std::vector<std::string> verify_manifest(const std::filesystem::path& dir, const std::vector<ManifestEntry>& files) {
  std::vector<std::string> bad;
  for (const auto& f : files) {
    try {
      if (sha256_file((dir / f.file).string()) != f.sha256) bad.push_back(f.file);
    } catch (const std::exception&) {
      bad.push_back(f.file);
    }
  }
  return bad;
}

}  // namespace mpdsa::io
