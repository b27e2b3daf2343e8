#pragma once

// Helpers for driving the chasedpo executable as a subprocess.

#include <sys/wait.h>

#include <atomic>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <unistd.h>
#include <vector>

namespace harness {

namespace fs = std::filesystem;

/// Scratch directory removed on destruction.
class TempDir {
 public:
  explicit TempDir(const std::string& tag) {
    static std::atomic<int> counter{0};
    path_ = fs::temp_directory_path() /
            ("chasedpo-" + tag + "-" + std::to_string(::getpid()) + "-" + std::to_string(counter++));
    fs::remove_all(path_);
    fs::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    fs::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  const fs::path& path() const { return path_; }
  std::string operator/(const std::string& name) const { return (path_ / name).string(); }

 private:
  fs::path path_;
};

struct RunResult {
  int code = -1;
  std::string out;
  std::string err;
};

inline std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

inline void spit(const fs::path& p, const std::string& text) {
  std::ofstream out(p, std::ios::binary);
  out << text;
}

inline std::string quote(const std::string& s) {
  std::string q = "'";
  for (char c : s) {
    if (c == '\'') {
      q += "'\\''";
    } else {
      q += c;
    }
  }
  return q + "'";
}

/// Runs `binary args...` through the shell with stdout and stderr captured.
/// `env` entries ("NAME=value") are prefixed to the command line.
inline RunResult run(const std::string& binary, const std::vector<std::string>& args,
                     const std::vector<std::string>& env = {}) {
  static std::atomic<int> counter{0};
  const auto stem = fs::temp_directory_path() /
                    ("chasedpo-run-" + std::to_string(::getpid()) + "-" + std::to_string(counter++));
  const auto out_path = stem.string() + ".out";
  const auto err_path = stem.string() + ".err";
  std::string cmd;
  for (const auto& e : env) cmd += e + " ";
  cmd += quote(binary);
  for (const auto& a : args) cmd += " " + quote(a);
  cmd += " >" + quote(out_path) + " 2>" + quote(err_path);
  const int status = std::system(cmd.c_str());
  RunResult r;
  r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  r.out = slurp(out_path);
  r.err = slurp(err_path);
  fs::remove(out_path);
  fs::remove(err_path);
  return r;
}

}  // namespace harness
