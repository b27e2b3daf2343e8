#pragma once

#include <filesystem>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "chasedpo/cofs_trainer.hpp"
#include "chasedpo/objectives.hpp"
#include "chasedpo/ofs_trainer.hpp"
#include "chasedpo/policy.hpp"

namespace chasedpo::cli {

namespace fs = std::filesystem;
using Json = nlohmann::ordered_json;

enum ExitCode : int {
  kOk = 0,
  kCheckFailed = 1,
  kIoError = 2,
  kUsage = 64,
  kDataFormat = 65,
  kMissingFile = 66,
  kDiverged = 70,
};

/// Error carrying the process exit code it maps to.
class CliError : public std::runtime_error {
 public:
  CliError(int code, const std::string& what) : std::runtime_error(what), code_(code) {}
  int code() const { return code_; }

 private:
  int code_;
};

/// "%.17g"; throws on non-finite input since JSON/CSV have no spelling for it.
std::string format_double(double v);

/// Compact JSON with insertion-ordered keys and 17-digit floats.
std::string dump(const Json& j);

std::string read_file(const fs::path& path);
/// Throws CliError(kIoError) when the file cannot be written.
void write_file(const fs::path& path, const std::string& content);
void require_file(const fs::path& path);

// ---- datasets ---------------------------------------------------------------

Json triple_to_json(const PreferenceTriple& t);
std::string triples_to_jsonl(std::span<const PreferenceTriple> triples);
/// Throws CliError(kDataFormat) naming the 1-based line number on bad input.
std::vector<PreferenceTriple> parse_triples(const std::string& text, const fs::path& origin);
std::vector<PreferenceTriple> load_triples(const fs::path& path);
/// Validates every triple against the model; bad lines map to kDataFormat.
void check_triples(const ReferenceModel& model, std::span<const PreferenceTriple> triples,
                   const fs::path& origin);

// ---- checkpoints ------------------------------------------------------------

struct Checkpoint {
  PolicySpec spec;
  AdapterParams adapter;
};

Json matrix_to_json(const Matrix& m);
Matrix matrix_from_json(const Json& j);
std::string checkpoint_to_json(const PolicySpec& spec, const AdapterParams& adapter);
Checkpoint load_checkpoint(const fs::path& path);

/// Trail of parameter snapshots, one JSON object per line.
std::string trail_to_jsonl(std::span<const TrailPoint> trail);
std::vector<TrailPoint> load_trail(const fs::path& path);
fs::path trail_path_for(const fs::path& ckpt);

// ---- metrics ----------------------------------------------------------------

inline constexpr const char* kMetricsHeader =
    "step,swapped,loss_dpo_fast,loss_dpo_slow,loss_fs,grad_norm_fast,grad_norm_slow,lr_fast,"
    "lr_slow";

std::string metrics_to_csv(std::span<const StepLog> logs);
std::vector<StepLog> load_metrics(const fs::path& path);

std::string surface_to_csv(std::span<const SurfacePoint> surface);

}  // namespace chasedpo::cli
