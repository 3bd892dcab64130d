#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include <nlohmann/json.hpp>

namespace tokprobe::taskgen {

enum class TaskType { kCounting, kSorting, kReversing };

struct TaskKind {
  TaskType type = TaskType::kCounting;
  std::string target;  // counting only

  static TaskKind counting(std::string target) { return {TaskType::kCounting, std::move(target)}; }
  static TaskKind sorting() { return {TaskType::kSorting, {}}; }
  static TaskKind reversing() { return {TaskType::kReversing, {}}; }

  // "counting:a", "sorting", "reversing"
  std::string label() const;
  static TaskKind from_label(std::string_view label);
  friend bool operator==(const TaskKind&, const TaskKind&) = default;
};

std::string_view task_type_name(TaskType t);
TaskType task_type_from_name(std::string_view name);

enum class FormatType { kA, kB, kC, kD };

inline constexpr FormatType kAllFormats[] = {FormatType::kA, FormatType::kB, FormatType::kC,
                                             FormatType::kD};

char format_letter(FormatType f);
FormatType format_from_letter(std::string_view s);

// Unit-count range. Counting buckets are closed [lo, hi]; sorting and
// reversing buckets are half-open [lo, hi).
struct LengthBucket {
  int lo = 0;
  int hi = 0;
  bool closed = false;

  int max_len() const { return closed ? hi : hi - 1; }
  bool contains(std::size_t n) const {
    return static_cast<int>(n) >= lo && static_cast<int>(n) <= max_len();
  }
  std::string label() const;  // "10-20"
  friend bool operator==(const LengthBucket&, const LengthBucket&) = default;
};

LengthBucket bucket_for(TaskType task, int lo, int hi);
// [lo, hi] split into half-open `step`-wide buckets: 5..30 step 5 gives
// [5,10) [10,15) [15,20) [20,25) [25,30).
std::vector<LengthBucket> stepped_buckets(int lo, int hi, int step);

using Gold = std::variant<long long, std::string>;

struct Instance {
  std::string id;
  TaskKind task;
  std::string alphabet;
  std::vector<std::string> units;
  FormatType format = FormatType::kA;
  std::string rendered;
  Gold gold;
  LengthBucket length_bucket;
  std::uint64_t seed = 0;
};

enum class Sampler { kUniform, kWordList };

struct AlphabetSpec {
  std::string name;
  std::vector<std::string> units;
  Sampler sampler = Sampler::kUniform;
};

// Built-in alphabets: ab, ez, zbre, random (a-z), letter (a-zA-Z),
// letter_digit (a-zA-Z0-9), digit (0-9), and "chars:XYZ" for an ad-hoc
// single-character set. Word alphabets need a word list; see load_word_list.
AlphabetSpec builtin_alphabet(std::string_view name);

// Word list file: "word<TAB>frequency" per line, most frequent first, '#'
// comments allowed. `word` samples every entry, `hfword` the top `top_n`.
struct WordList {
  std::vector<std::string> words;  // frequency order
};
WordList load_word_list(const std::string& path);
AlphabetSpec word_alphabet(const WordList& list);
AlphabetSpec high_freq_word_alphabet(const WordList& list, std::size_t top_n = 1000);

// Resolves any alphabet name; word alphabets require `words`.
AlphabetSpec resolve_alphabet(std::string_view name, const WordList* words);

std::vector<Instance> generate(const TaskKind& task, const AlphabetSpec& alphabet,
                               const LengthBucket& bucket, std::size_t n, FormatType format,
                               std::uint64_t seed);

std::string render(const std::vector<std::string>& units, FormatType format);
std::vector<std::string> parse_rendered(std::string_view rendered, FormatType format);

long long oracle_count(const std::vector<std::string>& units, const std::string& target);
std::string oracle_sort(const std::vector<std::string>& units);
std::string oracle_reverse(const std::vector<std::string>& units);

Gold gold_for(const TaskKind& task, const std::vector<std::string>& units);

std::string instance_id(const TaskKind& task, std::string_view alphabet, FormatType format,
                        const LengthBucket& bucket, std::uint64_t seed, std::size_t index);

nlohmann::json to_json(const Instance& inst);
Instance instance_from_json(const nlohmann::json& j);

std::vector<Instance> read_instances(const std::string& path);
void write_instances(const std::vector<Instance>& instances, const std::string& path);

}  // namespace tokprobe::taskgen
