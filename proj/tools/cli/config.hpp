#pragma once

#include <cstddef>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "chasedpo/cofs_trainer.hpp"
#include "chasedpo/evalkit.hpp"
#include "chasedpo/ofs_trainer.hpp"
#include "chasedpo/policy.hpp"

namespace chasedpo::cli {

/// Every tunable a command may read. Unset keys keep the library defaults.
struct RunConfig {
  PolicySpec policy;
  TrainConfig train;
  CombineConfig combine;
  OptimumConfig optimum;
  std::size_t prompt_len = 8;
  std::size_t response_len = 12;

  /// Ordered (key, value) pairs covering every key, values canonically formatted.
  std::vector<std::pair<std::string, std::string>> entries() const;
  void validate() const;

  friend bool operator==(const RunConfig& lhs, const RunConfig& rhs) {
    return lhs.entries() == rhs.entries();
  }
};

/// Parses "key = value" lines; '#' starts a comment, blank lines are skipped.
/// Unknown keys, duplicates and malformed values throw CliError(kUsage) with the line number.
RunConfig parse_config(const std::string& text, const std::string& origin = "config");
std::string serialize_config(const RunConfig& cfg);

/// Config from an optional file, then the seed override chain: flag > CHASE_DPO_SEED > file.
RunConfig resolve_config(const std::optional<std::string>& path,
                         const std::optional<std::uint64_t>& seed_flag);

inline constexpr const char* kSeedEnvVar = "CHASE_DPO_SEED";

}  // namespace chasedpo::cli
