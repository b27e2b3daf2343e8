#include "cli/manifest.hpp"

#include <array>
#include <cstdio>

#include <openssl/sha.h>

namespace chasedpo::cli {

std::string sha256_file(const fs::path& path) {
  const auto bytes = read_file(path);
  std::array<unsigned char, SHA256_DIGEST_LENGTH> digest{};
  SHA256(reinterpret_cast<const unsigned char*>(bytes.data()), bytes.size(), digest.data());
  std::string hex;
  hex.reserve(2 * digest.size());
  for (unsigned char c : digest) {
    char buf[3];
    std::snprintf(buf, sizeof buf, "%02x", c);
    hex += buf;
  }
  return hex;
}

namespace {

Json pairs_to_json(const std::vector<std::pair<std::string, std::string>>& pairs) {
  Json j = Json::object();
  for (const auto& [k, v] : pairs) j[k] = v;
  return j;
}

std::vector<std::pair<std::string, std::string>> pairs_from_json(const Json& j) {
  std::vector<std::pair<std::string, std::string>> out;
  for (const auto& [k, v] : j.items()) out.emplace_back(k, v.get<std::string>());
  return out;
}

}  // namespace

std::string manifest_to_json(const RunManifest& m) {
  Json j = Json::object();
  j["command"] = m.command;
  j["args"] = m.args;
  j["cwd"] = m.cwd;
  j["config"] = pairs_to_json(m.config);
  j["seed"] = m.seed;
  j["inputs"] = pairs_to_json(m.inputs);
  j["outputs"] = pairs_to_json(m.outputs);
  j["duration_s"] = m.duration_s;
  return dump(j) + "\n";
}

RunManifest load_manifest(const fs::path& path) {
  const auto text = read_file(path);
  try {
    const auto j = Json::parse(text);
    RunManifest m;
    m.command = j.at("command").get<std::string>();
    m.args = j.at("args").get<std::vector<std::string>>();
    m.cwd = j.at("cwd").get<std::string>();
    m.config = pairs_from_json(j.at("config"));
    m.seed = j.at("seed").get<std::uint64_t>();
    m.inputs = pairs_from_json(j.at("inputs"));
    m.outputs = pairs_from_json(j.at("outputs"));
    m.duration_s = j.at("duration_s").get<double>();
    return m;
  } catch (const std::exception& e) {
    throw CliError(kDataFormat, path.string() + ": malformed manifest (" + e.what() + ")");
  }
}

fs::path manifest_path_for(const fs::path& output) {
  return fs::path(output.string() + ".manifest.json");
}

}  // namespace chasedpo::cli
