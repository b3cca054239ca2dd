#pragma once

#include <chrono>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>

#include <json.hpp>

#include "diveoff/rng.hpp"

namespace diveoff {

inline uint64_t file_fnv1a(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("hash: cannot open " + path.string());
  uint64_t h = 0xcbf29ce484222325ull;
  char buf[1 << 16];
  while (is) {
    is.read(buf, sizeof(buf));
    h = fnv1a64(buf, static_cast<size_t>(is.gcount()), h);
  }
  return h;
}

inline std::string hex64(uint64_t v) {
  std::ostringstream os;
  os << std::hex << v;
  return os.str();
}

constexpr const char* kToolVersion = "diveoff 0.1.0";

// Collects a run's provenance and is written atomically at run end.
class RunManifest {
 public:
  RunManifest(std::string command, nlohmann::json config, uint64_t seed)
      : start_(std::chrono::steady_clock::now()) {
    doc_["command"] = std::move(command);
    doc_["config"] = std::move(config);
    doc_["seed"] = seed;
    doc_["tool_version"] = kToolVersion;
    doc_["inputs"] = nlohmann::json::array();
    doc_["outputs"] = nlohmann::json::array();
  }

  void add_input(const std::filesystem::path& p) {
    doc_["inputs"].push_back({{"path", p.string()}, {"fnv1a64", hex64(file_fnv1a(p))}});
  }
  void add_output(const std::filesystem::path& p) {
    doc_["outputs"].push_back({{"path", p.string()}, {"fnv1a64", hex64(file_fnv1a(p))}});
  }

  void write(const std::filesystem::path& path) {
    const auto elapsed = std::chrono::steady_clock::now() - start_;
    doc_["duration_sec"] = std::chrono::duration<double>(elapsed).count();
    const std::filesystem::path tmp = path.string() + ".tmp";
    {
      std::ofstream os(tmp, std::ios::trunc);
      if (!os) throw std::runtime_error("manifest: cannot open " + tmp.string());
      os << doc_.dump(2) << "\n";
    }
    std::filesystem::rename(tmp, path);
  }

  const nlohmann::json& doc() const { return doc_; }

 private:
  nlohmann::json doc_;
  std::chrono::steady_clock::time_point start_;
};

// Reads a manifest and recomputes every input hash; mismatches throw.
inline nlohmann::json manifest_read_verified(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) throw std::runtime_error("manifest: cannot open " + path.string());
  nlohmann::json doc = nlohmann::json::parse(is);
  for (const auto& input : doc.at("inputs")) {
    const std::string p = input.at("path").get<std::string>();
    const std::string recorded = input.at("fnv1a64").get<std::string>();
    if (hex64(file_fnv1a(p)) != recorded) {
      throw std::runtime_error("manifest: input hash mismatch for " + p);
    }
  }
  return doc;
}

// DIVEOFF_LOG=debug|info selects verbosity; anything else keeps quiet.
enum class LogLevel { Quiet = 0, Info = 1, Debug = 2 };

inline LogLevel log_level() {
  static const LogLevel level = [] {
    const char* v = std::getenv("DIVEOFF_LOG");
    if (!v) return LogLevel::Quiet;
    const std::string s(v);
    if (s == "debug") return LogLevel::Debug;
    if (s == "info") return LogLevel::Info;
    return LogLevel::Quiet;
  }();
  return level;
}

inline void log_info(const std::string& msg) {
  if (log_level() >= LogLevel::Info) std::cerr << "[info] " << msg << "\n";
}

inline void log_debug(const std::string& msg) {
  if (log_level() >= LogLevel::Debug) std::cerr << "[debug] " << msg << "\n";
}

}  // namespace diveoff
