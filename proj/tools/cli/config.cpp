#include "cli/config.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdlib>
#include <functional>
#include <set>
#include <sstream>

#include "cli/io.hpp"

namespace chasedpo::cli {

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

template <typename T>
T parse_uint(const std::string& s) {
  T v{};
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc{} || ptr != s.data() + s.size()) {
    throw std::invalid_argument("expected a non-negative integer, got '" + s + "'");
  }
  return v;
}

double parse_real(const std::string& s) {
  char* end = nullptr;
  const double v = std::strtod(s.c_str(), &end);
  if (s.empty() || end != s.c_str() + s.size() || !std::isfinite(v)) {
    throw std::invalid_argument("expected a finite number, got '" + s + "'");
  }
  return v;
}

bool parse_bool(const std::string& s) {
  if (s == "true" || s == "1") return true;
  if (s == "false" || s == "0") return false;
  throw std::invalid_argument("expected true or false, got '" + s + "'");
}

struct Field {
  const char* key;
  std::function<std::string(const RunConfig&)> get;
  std::function<void(RunConfig&, const std::string&)> set;
};

template <typename T>
Field size_field(const char* key, T RunConfig::*group, std::size_t T::*member) {
  return {key, [=](const RunConfig& c) { return std::to_string(c.*group.*member); },
          [=](RunConfig& c, const std::string& v) {
            c.*group.*member = parse_uint<std::size_t>(v);
          }};
}

template <typename T>
Field real_field(const char* key, T RunConfig::*group, double T::*member) {
  return {key, [=](const RunConfig& c) { return format_double(c.*group.*member); },
          [=](RunConfig& c, const std::string& v) { c.*group.*member = parse_real(v); }};
}

const std::vector<Field>& fields() {
  static const std::vector<Field> table = {
      size_field("vocab_size", &RunConfig::policy, &PolicySpec::vocab_size),
      size_field("feature_dim", &RunConfig::policy, &PolicySpec::feature_dim),
      size_field("rank", &RunConfig::policy, &PolicySpec::rank),
      {"base_seed", [](const RunConfig& c) { return std::to_string(c.policy.base_seed); },
       [](RunConfig& c, const std::string& v) { c.policy.base_seed = parse_uint<std::uint64_t>(v); }},
      size_field("swap_period", &RunConfig::train, &TrainConfig::swap_period),
      real_field("alpha", &RunConfig::train, &TrainConfig::alpha),
      real_field("beta_dpo", &RunConfig::train, &TrainConfig::beta_dpo),
      real_field("lr_slow_base", &RunConfig::train, &TrainConfig::lr_slow_base),
      real_field("lr_scale", &RunConfig::train, &TrainConfig::lr_scale),
      real_field("lr_multiplier", &RunConfig::train, &TrainConfig::lr_multiplier),
      size_field("slow_update_period", &RunConfig::train, &TrainConfig::slow_update_period),
      size_field("batch_size", &RunConfig::train, &TrainConfig::batch_size),
      real_field("adam_beta1", &RunConfig::train, &TrainConfig::adam_beta1),
      real_field("adam_beta2", &RunConfig::train, &TrainConfig::adam_beta2),
      real_field("adam_eps", &RunConfig::train, &TrainConfig::adam_eps),
      real_field("weight_decay", &RunConfig::train, &TrainConfig::weight_decay),
      {"seed", [](const RunConfig& c) { return std::to_string(c.train.seed); },
       [](RunConfig& c, const std::string& v) { c.train.seed = parse_uint<std::uint64_t>(v); }},
      {"shared_init", [](const RunConfig& c) { return std::string(c.train.shared_init ? "true" : "false"); },
       [](RunConfig& c, const std::string& v) { c.train.shared_init = parse_bool(v); }},
      real_field("grid_step", &RunConfig::combine, &CombineConfig::grid_step),
      {"combine_mode",
       [](const RunConfig& c) {
         return std::string(c.combine.mode == CombineMode::constrained ? "constrained" : "independent");
       },
       [](RunConfig& c, const std::string& v) {
         if (v == "independent") {
           c.combine.mode = CombineMode::independent;
         } else if (v == "constrained") {
           c.combine.mode = CombineMode::constrained;
         } else {
           throw std::invalid_argument("combine_mode must be independent or constrained");
         }
       }},
      size_field("memory_capacity", &RunConfig::combine, &CombineConfig::memory_capacity),
      size_field("optimum_epochs", &RunConfig::optimum, &OptimumConfig::epochs),
      real_field("optimum_lr", &RunConfig::optimum, &OptimumConfig::lr),
      {"prompt_len", [](const RunConfig& c) { return std::to_string(c.prompt_len); },
       [](RunConfig& c, const std::string& v) { c.prompt_len = parse_uint<std::size_t>(v); }},
      {"response_len", [](const RunConfig& c) { return std::to_string(c.response_len); },
       [](RunConfig& c, const std::string& v) { c.response_len = parse_uint<std::size_t>(v); }},
  };
  return table;
}

}  // namespace

std::vector<std::pair<std::string, std::string>> RunConfig::entries() const {
  std::vector<std::pair<std::string, std::string>> out;
  for (const auto& f : fields()) out.emplace_back(f.key, f.get(*this));
  return out;
}

void RunConfig::validate() const {
  policy.validate();
  train.validate();
  combine.validate();
  if (optimum.epochs < 1) throw std::invalid_argument("optimum_epochs must be >= 1");
  if (!(optimum.lr > 0.0)) throw std::invalid_argument("optimum_lr must be positive");
  if (prompt_len < 1 || response_len < 1) {
    throw std::invalid_argument("prompt_len and response_len must be >= 1");
  }
}

RunConfig parse_config(const std::string& text, const std::string& origin) {
  RunConfig cfg;
  std::set<std::string> seen;
  std::istringstream in(text);
  std::string raw;
  std::size_t lineno = 0;
  while (std::getline(in, raw)) {
    ++lineno;
    const auto where = origin + ":" + std::to_string(lineno) + ": ";
    auto line = raw.substr(0, raw.find('#'));
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw CliError(kUsage, where + "expected 'key = value'");
    const auto key = trim(line.substr(0, eq));
    const auto value = trim(line.substr(eq + 1));
    const auto& table = fields();
    const auto it = std::find_if(table.begin(), table.end(),
                                 [&](const Field& f) { return key == f.key; });
    if (it == table.end()) throw CliError(kUsage, where + "unknown key '" + key + "'");
    if (!seen.insert(key).second) throw CliError(kUsage, where + "duplicate key '" + key + "'");
    try {
      it->set(cfg, value);
    } catch (const std::exception& e) {
      throw CliError(kUsage, where + key + ": " + e.what());
    }
  }
  return cfg;
}

std::string serialize_config(const RunConfig& cfg) {
  std::string out;
  for (const auto& [k, v] : cfg.entries()) out += k + " = " + v + "\n";
  return out;
}

RunConfig resolve_config(const std::optional<std::string>& path,
                         const std::optional<std::uint64_t>& seed_flag) {
  RunConfig cfg = path ? parse_config(read_file(*path), *path) : RunConfig{};
  if (seed_flag) {
    cfg.train.seed = *seed_flag;
  } else if (const char* env = std::getenv(kSeedEnvVar); env != nullptr && *env != '\0') {
    try {
      cfg.train.seed = parse_uint<std::uint64_t>(env);
    } catch (const std::exception& e) {
      throw CliError(kUsage, std::string(kSeedEnvVar) + ": " + e.what());
    }
  }
  try {
    cfg.validate();
  } catch (const std::invalid_argument& e) {
    throw CliError(kUsage, std::string("invalid config: ") + e.what());
  }
  return cfg;
}

}  // namespace chasedpo::cli
