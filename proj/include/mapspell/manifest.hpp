#pragma once

// Reproducibility manifests: what a command read, what it wrote, and the
// SHA-256 of each file. Inputs that a previous command listed as outputs are
// checked against the recorded hash before use.

#include <json.hpp>

#include <chrono>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "mapspell/error.hpp"
#include "mapspell/vocab.hpp"

namespace mapspell {

#ifndef MAPSPELL_VERSION
#define MAPSPELL_VERSION "dev"
#endif

inline std::string file_sha256(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError(path, "cannot open for hashing");
  std::ostringstream ss;
  ss << in.rdbuf();
  return sha256_hex(ss.str());
}

/// Manifest describing `path`: "<path>.manifest.json" for single-file
/// outputs, or "manifest.json" in the same directory.
inline std::vector<std::filesystem::path> manifest_candidates(const std::string& path) {
  const std::filesystem::path p(path);
  return {std::filesystem::path(path + ".manifest.json"), p.parent_path() / "manifest.json"};
}

/// Throws HashMismatch when a manifest records a different hash for `path`.
/// Files no manifest mentions pass unchecked.
inline void verify_against_manifest(const std::string& path) {
  const std::string name = std::filesystem::path(path).filename().string();
  for (const auto& m : manifest_candidates(path)) {
    if (!std::filesystem::exists(m)) continue;
    nlohmann::json j;
    try {
      std::ifstream in(m);
      j = nlohmann::json::parse(in);
    } catch (const nlohmann::json::exception& e) {
      throw ParseError(m.string(), 0, e.what());
    }
    if (!j.contains("outputs")) continue;
    for (const auto& o : j["outputs"]) {
      if (std::filesystem::path(o.at("path").get<std::string>()).filename() != name) continue;
      const std::string want = o.at("sha256").get<std::string>();
      const std::string got = file_sha256(path);
      if (want != got)
        throw HashMismatch(path + ": content hash " + got.substr(0, 12) + "... differs from " + want.substr(0, 12) +
                           "... recorded in " + m.string());
      return;
    }
  }
}

class RunManifest {
 public:
  RunManifest(std::string command_line, nlohmann::ordered_json config)
      : start_(std::chrono::steady_clock::now()) {
    j_["tool"] = "mapspell";
    j_["version"] = MAPSPELL_VERSION;
    j_["command_line"] = std::move(command_line);
    j_["config"] = std::move(config);
    j_["inputs"] = nlohmann::ordered_json::array();
    j_["outputs"] = nlohmann::ordered_json::array();
  }

  /// Verifies `path` against any upstream manifest, then records it.
  void input(const std::string& path) {
    verify_against_manifest(path);
    j_["inputs"].push_back({{"path", path}, {"sha256", file_sha256(path)}});
  }

  void output(const std::string& path) { j_["outputs"].push_back({{"path", path}, {"sha256", file_sha256(path)}}); }

  void set_config(nlohmann::ordered_json config) { j_["config"] = std::move(config); }

  void seed(const std::string& name, std::uint64_t value) { j_["seeds"][name] = value; }

  void write(const std::string& path) {
    j_["wall_seconds"] = std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
    std::ofstream out(path);
    if (!out) throw IoError(path, "cannot open for writing");
    out << j_.dump(2) << "\n";
    if (!out) throw IoError(path, "write failed");
  }

  const nlohmann::ordered_json& json() const { return j_; }

 private:
  nlohmann::ordered_json j_;
  std::chrono::steady_clock::time_point start_;
};

}  // namespace mapspell
