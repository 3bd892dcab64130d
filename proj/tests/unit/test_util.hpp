#pragma once

#include <unistd.h>

#include <filesystem>
#include <string>
#include <vector>

#include "tokprobe/common.hpp"

#ifndef TOKPROBE_SOURCE_DIR
#error "TOKPROBE_SOURCE_DIR must be defined"
#endif

namespace testutil {

inline std::string source_path(const std::string& rel) {
  return (std::filesystem::path(TOKPROBE_SOURCE_DIR) / rel).string();
}

// Fresh directory under the system temp dir, removed on destruction.
class TempDir {
 public:
  explicit TempDir(const std::string& tag) {
    static int counter = 0;
    path_ = std::filesystem::temp_directory_path() /
            ("tokprobe_" + tag + "_" + std::to_string(::getpid()) + "_" + std::to_string(counter++));
    std::filesystem::remove_all(path_);
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  std::string file(const std::string& name) const { return (path_ / name).string(); }
  const std::filesystem::path& path() const { return path_; }

 private:
  std::filesystem::path path_;
};

// Random string over `alphabet` with length in [lo, hi].
inline std::string random_string(tokprobe::Rng& rng, const std::string& alphabet, int lo, int hi) {
  const auto len = rng.between(lo, hi);
  std::string s;
  for (int i = 0; i < len; ++i) s += alphabet[rng.below(alphabet.size())];
  return s;
}

inline std::vector<std::string> chars_of(const std::string& s) {
  std::vector<std::string> out;
  for (char c : s) out.emplace_back(1, c);
  return out;
}

}  // namespace testutil
