#include "cli/io.hpp"

#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <sstream>

namespace chasedpo::cli {

std::string format_double(double v) {
  if (!std::isfinite(v)) throw NumericError("non-finite value in output");
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

namespace {

void dump_string(const std::string& s, std::string& out) {
  // nlohmann's escaping is already canonical; reuse it for strings only.
  out += Json(s).dump();
}

void dump_into(const Json& j, std::string& out) {
  switch (j.type()) {
    case Json::value_t::object: {
      out += '{';
      bool first = true;
      for (const auto& [key, value] : j.items()) {
        if (!first) out += ',';
        first = false;
        dump_string(key, out);
        out += ':';
        dump_into(value, out);
      }
      out += '}';
      break;
    }
    case Json::value_t::array: {
      out += '[';
      bool first = true;
      for (const auto& value : j) {
        if (!first) out += ',';
        first = false;
        dump_into(value, out);
      }
      out += ']';
      break;
    }
    case Json::value_t::number_float:
      out += format_double(j.get<double>());
      break;
    case Json::value_t::string:
      dump_string(j.get<std::string>(), out);
      break;
    default:
      out += j.dump();
  }
}

std::vector<std::string> split_lines(const std::string& text) {
  std::vector<std::string> lines;
  std::size_t start = 0;
  while (start < text.size()) {
    const auto nl = text.find('\n', start);
    if (nl == std::string::npos) {
      lines.push_back(text.substr(start));
      break;
    }
    lines.push_back(text.substr(start, nl - start));
    start = nl + 1;
  }
  return lines;
}

TokenSequence tokens_from_json(const Json& j, const char* key) {
  const auto& arr = j.at(key);
  if (!arr.is_array()) throw std::invalid_argument(std::string(key) + " is not an array");
  TokenSequence out;
  out.reserve(arr.size());
  for (const auto& v : arr) {
    if (!v.is_number_integer()) throw std::invalid_argument(std::string(key) + " holds a non-integer");
    out.push_back(v.get<Token>());
  }
  return out;
}

Json tokens_to_json(const TokenSequence& seq) {
  Json arr = Json::array();
  for (Token t : seq) arr.push_back(t);
  return arr;
}

Json adapter_to_json(const AdapterParams& p) {
  Json j = Json::object();
  j["a"] = matrix_to_json(p.a);
  j["b"] = matrix_to_json(p.b);
  return j;
}

AdapterParams adapter_from_json(const Json& j) {
  return {matrix_from_json(j.at("a")), matrix_from_json(j.at("b"))};
}

double parse_number(const std::string& field, const fs::path& origin, std::size_t line) {
  char* end = nullptr;
  const double v = std::strtod(field.c_str(), &end);
  if (field.empty() || end != field.c_str() + field.size() || !std::isfinite(v)) {
    throw CliError(kDataFormat, origin.string() + ":" + std::to_string(line) +
                                    ": bad numeric field '" + field + "'");
  }
  return v;
}

}  // namespace

std::string dump(const Json& j) {
  std::string out;
  dump_into(j, out);
  return out;
}

std::string read_file(const fs::path& path) {
  require_file(path);
  std::ifstream in(path, std::ios::binary);
  if (!in) throw CliError(kIoError, "cannot read " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_file(const fs::path& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw CliError(kIoError, "cannot write " + path.string());
  out << content;
  out.flush();
  if (!out) throw CliError(kIoError, "write failed for " + path.string());
}

void require_file(const fs::path& path) {
  std::error_code ec;
  if (!fs::is_regular_file(path, ec)) throw CliError(kMissingFile, "no such file: " + path.string());
}

Json triple_to_json(const PreferenceTriple& t) {
  Json j = Json::object();
  j["prompt"] = tokens_to_json(t.prompt);
  j["chosen"] = tokens_to_json(t.chosen);
  j["rejected"] = tokens_to_json(t.rejected);
  j["domain"] = t.domain;
  return j;
}

std::string triples_to_jsonl(std::span<const PreferenceTriple> triples) {
  std::string out;
  for (const auto& t : triples) {
    out += dump(triple_to_json(t));
    out += '\n';
  }
  return out;
}

std::vector<PreferenceTriple> parse_triples(const std::string& text, const fs::path& origin) {
  std::vector<PreferenceTriple> out;
  const auto lines = split_lines(text);
  for (std::size_t i = 0; i < lines.size(); ++i) {
    try {
      const auto j = Json::parse(lines[i]);
      if (!j.is_object() || j.size() != 4) throw std::invalid_argument("expected 4 keys");
      PreferenceTriple t;
      t.prompt = tokens_from_json(j, "prompt");
      t.chosen = tokens_from_json(j, "chosen");
      t.rejected = tokens_from_json(j, "rejected");
      if (!j.at("domain").is_number_integer()) throw std::invalid_argument("domain is not an integer");
      t.domain = j.at("domain").get<int>();
      out.push_back(std::move(t));
    } catch (const std::exception& e) {
      throw CliError(kDataFormat, origin.string() + ":" + std::to_string(i + 1) +
                                      ": malformed triple (" + e.what() + ")");
    }
  }
  return out;
}

std::vector<PreferenceTriple> load_triples(const fs::path& path) {
  return parse_triples(read_file(path), path);
}

void check_triples(const ReferenceModel& model, std::span<const PreferenceTriple> triples,
                   const fs::path& origin) {
  for (std::size_t i = 0; i < triples.size(); ++i) {
    try {
      validate_triple(model, triples[i]);
    } catch (const std::exception& e) {
      throw CliError(kDataFormat, origin.string() + ":" + std::to_string(i + 1) +
                                      ": invalid triple (" + e.what() + ")");
    }
  }
}

Json matrix_to_json(const Matrix& m) {
  Json rows = Json::array();
  for (std::size_t r = 0; r < m.rows(); ++r) {
    Json row = Json::array();
    for (double v : m.row(r)) row.push_back(v);
    rows.push_back(std::move(row));
  }
  return rows;
}

Matrix matrix_from_json(const Json& j) {
  if (!j.is_array() || j.empty()) throw std::invalid_argument("matrix must be a nonempty array");
  const std::size_t rows = j.size();
  const std::size_t cols = j.front().size();
  std::vector<double> values;
  values.reserve(rows * cols);
  for (const auto& row : j) {
    if (!row.is_array() || row.size() != cols) throw std::invalid_argument("ragged matrix");
    for (const auto& v : row) {
      if (!v.is_number()) throw std::invalid_argument("matrix entry is not a number");
      values.push_back(v.get<double>());
    }
  }
  return Matrix(rows, cols, std::move(values));
}

std::string checkpoint_to_json(const PolicySpec& spec, const AdapterParams& adapter) {
  Json j = Json::object();
  j["version"] = 1;
  j["vocab"] = spec.vocab_size;
  j["hdim"] = spec.feature_dim;
  j["rank"] = adapter.rank();
  j["base_seed"] = spec.base_seed;
  j["adapter_a"] = matrix_to_json(adapter.a);
  j["adapter_b"] = matrix_to_json(adapter.b);
  return dump(j) + "\n";
}

Checkpoint load_checkpoint(const fs::path& path) {
  const auto text = read_file(path);
  try {
    const auto j = Json::parse(text);
    if (j.at("version").get<int>() != 1) throw std::invalid_argument("unsupported version");
    Checkpoint ck;
    ck.spec.vocab_size = j.at("vocab").get<std::size_t>();
    ck.spec.feature_dim = j.at("hdim").get<std::size_t>();
    ck.spec.rank = j.at("rank").get<std::size_t>();
    ck.spec.base_seed = j.at("base_seed").get<std::uint64_t>();
    ck.spec.validate();
    ck.adapter = {matrix_from_json(j.at("adapter_a")), matrix_from_json(j.at("adapter_b"))};
    if (ck.adapter.a.rows() != ck.spec.rank || ck.adapter.a.cols() != ck.spec.feature_dim ||
        ck.adapter.b.rows() != ck.spec.vocab_size || ck.adapter.b.cols() != ck.spec.rank) {
      throw std::invalid_argument("adapter shape disagrees with header");
    }
    return ck;
  } catch (const CliError&) {
    throw;
  } catch (const std::exception& e) {
    throw CliError(kDataFormat, path.string() + ": malformed checkpoint (" + e.what() + ")");
  }
}

std::string trail_to_jsonl(std::span<const TrailPoint> trail) {
  std::string out;
  for (const auto& p : trail) {
    Json j = Json::object();
    j["step"] = p.step;
    j["fast_is_a"] = p.fast_is_a;
    j["module_a"] = adapter_to_json(p.module_a);
    j["module_b"] = p.module_b ? adapter_to_json(*p.module_b) : Json(nullptr);
    out += dump(j);
    out += '\n';
  }
  return out;
}

std::vector<TrailPoint> load_trail(const fs::path& path) {
  const auto lines = split_lines(read_file(path));
  std::vector<TrailPoint> out;
  for (std::size_t i = 0; i < lines.size(); ++i) {
    try {
      const auto j = Json::parse(lines[i]);
      TrailPoint p;
      p.step = j.at("step").get<std::size_t>();
      p.fast_is_a = j.at("fast_is_a").get<bool>();
      p.module_a = adapter_from_json(j.at("module_a"));
      if (!j.at("module_b").is_null()) p.module_b = adapter_from_json(j.at("module_b"));
      out.push_back(std::move(p));
    } catch (const std::exception& e) {
      throw CliError(kDataFormat, path.string() + ":" + std::to_string(i + 1) +
                                      ": malformed trail entry (" + e.what() + ")");
    }
  }
  return out;
}

fs::path trail_path_for(const fs::path& ckpt) { return fs::path(ckpt.string() + ".trail.jsonl"); }

std::string metrics_to_csv(std::span<const StepLog> logs) {
  std::string out = kMetricsHeader;
  out += '\n';
  const auto opt = [](const std::optional<double>& v) { return v ? format_double(*v) : ""; };
  for (const auto& l : logs) {
    out += std::to_string(l.step) + ',' + (l.swapped ? "1" : "0") + ',' +
           format_double(l.loss_dpo_fast) + ',' + opt(l.loss_dpo_slow) + ',' + opt(l.loss_fs) +
           ',' + format_double(l.grad_norm_fast) + ',' + opt(l.grad_norm_slow) + ',' +
           format_double(l.lr_fast) + ',' + opt(l.lr_slow) + '\n';
  }
  return out;
}

std::vector<StepLog> load_metrics(const fs::path& path) {
  const auto lines = split_lines(read_file(path));
  if (lines.empty() || lines.front() != kMetricsHeader) {
    throw CliError(kDataFormat, path.string() + ":1: unexpected metrics header");
  }
  std::vector<StepLog> out;
  for (std::size_t i = 1; i < lines.size(); ++i) {
    std::vector<std::string> f;
    std::stringstream ss(lines[i]);
    std::string cell;
    while (std::getline(ss, cell, ',')) f.push_back(cell);
    if (!lines[i].empty() && lines[i].back() == ',') f.emplace_back();
    if (f.size() != 9) {
      throw CliError(kDataFormat, path.string() + ":" + std::to_string(i + 1) +
                                      ": expected 9 fields");
    }
    const auto num = [&](const std::string& s) { return parse_number(s, path, i + 1); };
    const auto opt = [&](const std::string& s) -> std::optional<double> {
      if (s.empty()) return std::nullopt;
      return num(s);
    };
    StepLog l;
    l.step = static_cast<std::size_t>(num(f[0]));
    l.swapped = num(f[1]) != 0.0;
    l.loss_dpo_fast = num(f[2]);
    l.loss_dpo_slow = opt(f[3]);
    l.loss_fs = opt(f[4]);
    l.grad_norm_fast = num(f[5]);
    l.grad_norm_slow = opt(f[6]);
    l.lr_fast = num(f[7]);
    l.lr_slow = opt(f[8]);
    out.push_back(l);
  }
  return out;
}

std::string surface_to_csv(std::span<const SurfacePoint> surface) {
  std::string out = "beta1,beta2,loss\n";
  for (const auto& p : surface) {
    out += format_double(p.beta1) + ',' + format_double(p.beta2) + ',' + format_double(p.loss) +
           '\n';
  }
  return out;
}

}  // namespace chasedpo::cli
