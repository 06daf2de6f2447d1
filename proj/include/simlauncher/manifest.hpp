// Run manifests: resolved configuration, seed, format versions and a content hash of inputs.
#pragma once

#include "simlauncher/config.hpp"

#include <json.hpp>
#include <openssl/evp.h>

#include <filesystem>

namespace simlauncher {

inline std::string hex(const unsigned char* p, std::size_t n) {
  static const char* digits = "0123456789abcdef";
  std::string s;
  for (std::size_t i = 0; i < n; ++i) {
    s += digits[p[i] >> 4];
    s += digits[p[i] & 15];
  }
  return s;
}

/// SHA-1 over "blob <size>\0<content>", the object id git assigns to a file.
inline std::string git_blob_hash(std::string_view content) {
  std::string data = "blob " + std::to_string(content.size());
  data.push_back('\0');
  data.append(content);
  unsigned char md[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  if (EVP_Digest(data.data(), data.size(), md, &len, EVP_sha1(), nullptr) != 1)
    throw std::runtime_error("sha1 digest failed");
  return hex(md, len);
}

struct RunManifest {
  std::string command;
  TrainConfig config;
  std::map<std::string, std::string> inputs;  // path -> blob hash
  std::vector<std::string> artifacts;         // paths relative to the run directory
  std::map<std::string, std::string> notes;

  /// Hash over the canonical config, the seed and every input file hash.
  std::string content_hash() const {
    std::string s = serialize_config(config) + "\nseed=" + std::to_string(config.seed) + "\n";
    for (const auto& [path, h] : inputs) s += path + "=" + h + "\n";
    return git_blob_hash(s);
  }

  std::string to_json() const {
    nlohmann::ordered_json j;
    j["command"] = command;
    j["seed"] = config.seed;
    j["config"] = serialize_config(config);
    j["content_hash"] = content_hash();
    j["formats"] = {{"demo_file", "SLDM v" + std::to_string(kDemoFormatVersion)},
                    {"checkpoint", "SLCK v" + std::to_string(kCheckpointFormatVersion)},
                    {"metrics_header", kMetricsHeader}};
    j["inputs"] = inputs;
    j["artifacts"] = artifacts;
    if (!notes.empty()) j["notes"] = notes;
    return j.dump(2) + "\n";
  }
};

inline constexpr const char* kManifestFile = "manifest.json";

/// Written once, before any work starts.
inline void write_manifest(const std::filesystem::path& dir, const RunManifest& m) {
  std::filesystem::create_directories(dir);
  detail::write_file((dir / kManifestFile).string(), m.to_json());
}

inline std::string hash_file(const std::string& path) { return git_blob_hash(detail::read_file(path)); }

}  // namespace simlauncher
