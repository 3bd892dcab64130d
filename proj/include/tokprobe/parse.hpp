#pragma once

#include <cstddef>
#include <string>
#include <string_view>
#include <variant>

#include <nlohmann/json.hpp>

#include "tokprobe/taskgen.hpp"

namespace tokprobe::parse {

enum class AnswerKind { kCount, kStringResult, kUnparseable };

struct ParsedAnswer {
  AnswerKind kind = AnswerKind::kUnparseable;
  long long count = 0;       // kCount
  std::string value;         // kStringResult
  std::string reason;        // kUnparseable, never empty
  std::size_t span_begin = 0;  // byte offsets of the matched region
  std::size_t span_end = 0;

  static ParsedAnswer unparseable(std::string why) {
    ParsedAnswer p;
    p.reason = std::move(why);
    return p;
  }
};

// Integer after the last "Result:" (case-insensitive; '*' bold markers and
// whitespace tolerated on either side of the colon). Falls back to the last
// bare integer wrapped in "**...**".
ParsedAnswer parse_count(std::string_view raw);

// Value of the last {'Result': '...'} / {"Result": "..."} literal. Straight,
// typographic and backtick quotes are all accepted.
ParsedAnswer parse_string_result(std::string_view raw);

// Dispatches on the instance's task.
ParsedAnswer parse_for(const taskgen::Instance& instance, std::string_view raw);

enum class VerdictKind { kCorrect, kIncorrect, kUnparseable };

std::string_view verdict_name(VerdictKind v);
VerdictKind verdict_from_name(std::string_view name);

struct Verdict {
  VerdictKind kind = VerdictKind::kUnparseable;
  std::variant<std::monostate, long long, std::string> predicted;
  std::string reason;
};

// Exact match against instance.gold. A parsed answer whose shape does not fit
// the task is unparseable.
Verdict judge(const taskgen::Instance& instance, const ParsedAnswer& parsed);

nlohmann::json to_json(const ParsedAnswer& p);

}  // namespace tokprobe::parse
