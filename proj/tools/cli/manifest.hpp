#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "cli/io.hpp"

namespace chasedpo::cli {

/// Record of one command invocation, written beside its outputs.
struct RunManifest {
  std::string command;
  std::vector<std::string> args;  // argv after the program name
  std::string cwd;
  std::vector<std::pair<std::string, std::string>> config;
  std::uint64_t seed = 0;
  std::vector<std::pair<std::string, std::string>> inputs;   // path, sha256
  std::vector<std::pair<std::string, std::string>> outputs;  // path, sha256
  double duration_s = 0.0;
};

/// Lower-case hex SHA-256 of the file's bytes.
std::string sha256_file(const fs::path& path);

std::string manifest_to_json(const RunManifest& m);
RunManifest load_manifest(const fs::path& path);

fs::path manifest_path_for(const fs::path& output);

}  // namespace chasedpo::cli
