#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace tokprobe {

// Error taxonomy shared by every module. The CLI maps ConfigError to exit
// status 2 and everything else to 1.
class InvalidInput : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

class ParseError : public std::runtime_error {
 public:
  ParseError(const std::string& what, std::size_t offset)
      : std::runtime_error(what + " (at offset " + std::to_string(offset) + ")"),
        offset_(offset) {}
  std::size_t offset() const { return offset_; }

 private:
  std::size_t offset_;
};

class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class IntegrityError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Splits UTF-8 text into code-point substrings. Invalid lead bytes become
// single-byte pieces so that concatenation always reproduces the input.
std::vector<std::string> split_code_points(std::string_view text);

// Hex-encoded SHA-256 of `data`.
std::string sha256_hex(std::string_view data);

// Joins fields with an unambiguous length prefix before hashing.
std::string stable_key(const std::vector<std::string>& fields);

// SplitMix64-seeded xoshiro256** generator. Used instead of <random>
// distributions because their output differs across standard libraries.
class Rng {
 public:
  explicit Rng(std::uint64_t seed);

  std::uint64_t next();
  // Uniform integer in [0, bound). bound must be > 0.
  std::uint64_t below(std::uint64_t bound);
  // Uniform integer in [lo, hi] inclusive.
  std::int64_t between(std::int64_t lo, std::int64_t hi);
  // Uniform double in [0, 1).
  double unit();
  bool bernoulli(double p) { return unit() < p; }

 private:
  std::uint64_t s_[4];
};

// Derives a child seed from a parent seed and a label.
std::uint64_t derive_seed(std::uint64_t parent, std::string_view label);

}  // namespace tokprobe
