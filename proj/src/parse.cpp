#include "tokprobe/parse.hpp"

#include <array>
#include <cctype>
#include <optional>

#include "tokprobe/common.hpp"

namespace tokprobe::parse {

namespace {

constexpr std::size_t kMaxDigits = 18;

constexpr std::array<std::string_view, 7> kQuotes = {
    "'", "\"", "`", "\xE2\x80\x98", "\xE2\x80\x99", "\xE2\x80\x9C", "\xE2\x80\x9D"};

bool is_ws(char c) { return c == ' ' || c == '\t' || c == '\n' || c == '\r'; }
bool is_digit(char c) { return c >= '0' && c <= '9'; }
bool is_alpha(char c) { return (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z'); }

std::size_t quote_at(std::string_view s, std::size_t pos) {
  for (auto q : kQuotes) {
    if (s.substr(pos, q.size()) == q) return q.size();
  }
  return 0;
}

bool iequals_at(std::string_view s, std::size_t pos, std::string_view word) {
  if (pos + word.size() > s.size()) return false;
  for (std::size_t i = 0; i < word.size(); ++i) {
    if (std::tolower(static_cast<unsigned char>(s[pos + i])) != word[i]) return false;
  }
  return true;
}

std::size_t skip(std::string_view s, std::size_t pos, bool allow_stars) {
  while (pos < s.size() && (is_ws(s[pos]) || (allow_stars && s[pos] == '*'))) ++pos;
  return pos;
}

struct Number {
  long long value;
  std::size_t begin;
  std::size_t end;
};

// Reads an unsigned integer at pos that is not glued to a word or a decimal.
std::optional<Number> read_integer(std::string_view s, std::size_t pos) {
  std::size_t end = pos;
  while (end < s.size() && is_digit(s[end])) ++end;
  if (end == pos || end - pos > kMaxDigits) return std::nullopt;
  if (end < s.size() && is_alpha(s[end])) return std::nullopt;
  if (end + 1 < s.size() && s[end] == '.' && is_digit(s[end + 1])) return std::nullopt;
  return Number{std::stoll(std::string(s.substr(pos, end - pos))), pos, end};
}

std::optional<Number> after_result_marker(std::string_view s, std::size_t pos) {
  pos = skip(s, pos + 6, true);
  if (pos >= s.size() || s[pos] != ':') return std::nullopt;
  pos = skip(s, pos + 1, true);
  return read_integer(s, pos);
}

struct StringMatch {
  std::string value;
  std::size_t begin;
  std::size_t end;
};

std::optional<StringMatch> dict_at(std::string_view s, std::size_t brace) {
  std::size_t pos = skip(s, brace + 1, false);
  std::size_t q = quote_at(s, pos);
  if (!q) return std::nullopt;
  pos += q;
  if (!iequals_at(s, pos, "result")) return std::nullopt;
  pos += 6;
  if (!(q = quote_at(s, pos))) return std::nullopt;
  pos = skip(s, pos + q, false);
  if (pos >= s.size() || s[pos] != ':') return std::nullopt;
  pos = skip(s, pos + 1, false);
  if (!(q = quote_at(s, pos))) return std::nullopt;
  const std::size_t value_begin = pos + q;
  for (std::size_t i = value_begin; i < s.size(); ++i) {
    const std::size_t cq = quote_at(s, i);
    if (!cq) continue;
    const std::size_t after = skip(s, i + cq, false);
    if (after < s.size() && s[after] == '}') {
      return StringMatch{std::string(s.substr(value_begin, i - value_begin)), brace, after + 1};
    }
  }
  return std::nullopt;
}

}  // namespace

ParsedAnswer parse_count(std::string_view raw) {
  std::optional<Number> best;
  for (std::size_t pos = 0; pos + 6 <= raw.size(); ++pos) {
    if (!iequals_at(raw, pos, "result")) continue;
    if (auto n = after_result_marker(raw, pos)) best = n;
  }
  if (!best) {
    // Fallback: last "**N**".
    std::size_t pos = 0;
    while ((pos = raw.find("**", pos)) != std::string_view::npos) {
      const std::size_t inner = pos + 2;
      const std::size_t close = raw.find("**", inner);
      if (close == std::string_view::npos) break;
      std::size_t a = inner;
      std::size_t b = close;
      while (a < b && is_ws(raw[a])) ++a;
      while (b > a && is_ws(raw[b - 1])) --b;
      if (auto n = read_integer(raw.substr(0, b), a); n && n->end == b) best = n;
      pos = close + 2;
    }
  }
  if (!best) return ParsedAnswer::unparseable("no 'Result:' integer and no bold integer found");
  ParsedAnswer p;
  p.kind = AnswerKind::kCount;
  p.count = best->value;
  p.span_begin = best->begin;
  p.span_end = best->end;
  return p;
}

ParsedAnswer parse_string_result(std::string_view raw) {
  std::optional<StringMatch> best;
  for (std::size_t pos = raw.find('{'); pos != std::string_view::npos;
       pos = raw.find('{', pos + 1)) {
    if (auto m = dict_at(raw, pos)) best = std::move(m);
  }
  if (!best) return ParsedAnswer::unparseable("no {'Result': ...} dictionary found");
  ParsedAnswer p;
  p.kind = AnswerKind::kStringResult;
  p.value = std::move(best->value);
  p.span_begin = best->begin;
  p.span_end = best->end;
  return p;
}

ParsedAnswer parse_for(const taskgen::Instance& instance, std::string_view raw) {
  return instance.task.type == taskgen::TaskType::kCounting ? parse_count(raw)
                                                             : parse_string_result(raw);
}

std::string_view verdict_name(VerdictKind v) {
  switch (v) {
    case VerdictKind::kCorrect: return "correct";
    case VerdictKind::kIncorrect: return "incorrect";
    case VerdictKind::kUnparseable: return "unparseable";
  }
  return "?";
}

VerdictKind verdict_from_name(std::string_view name) {
  if (name == "correct") return VerdictKind::kCorrect;
  if (name == "incorrect") return VerdictKind::kIncorrect;
  if (name == "unparseable") return VerdictKind::kUnparseable;
  throw InvalidInput("unknown verdict: " + std::string(name));
}

Verdict judge(const taskgen::Instance& instance, const ParsedAnswer& parsed) {
  Verdict v;
  if (parsed.kind == AnswerKind::kUnparseable) {
    v.reason = parsed.reason.empty() ? "unparseable" : parsed.reason;
    return v;
  }
  if (instance.task.type == taskgen::TaskType::kCounting) {
    if (parsed.kind != AnswerKind::kCount || !std::holds_alternative<long long>(instance.gold)) {
      v.reason = "shape mismatch: counting expects an integer answer";
      return v;
    }
    v.predicted = parsed.count;
    v.kind = parsed.count == std::get<long long>(instance.gold) ? VerdictKind::kCorrect
                                                                 : VerdictKind::kIncorrect;
    return v;
  }
  if (parsed.kind != AnswerKind::kStringResult ||
      !std::holds_alternative<std::string>(instance.gold)) {
    v.reason = "shape mismatch: expected a {'Result': ...} string answer";
    return v;
  }
  v.predicted = parsed.value;
  v.kind = parsed.value == std::get<std::string>(instance.gold) ? VerdictKind::kCorrect
                                                                 : VerdictKind::kIncorrect;
  return v;
}

nlohmann::json to_json(const ParsedAnswer& p) {
  nlohmann::json j = {{"span", {p.span_begin, p.span_end}}};
  switch (p.kind) {
    case AnswerKind::kCount:
      j["kind"] = "count";
      j["count"] = p.count;
      break;
    case AnswerKind::kStringResult:
      j["kind"] = "string-result";
      j["value"] = p.value;
      break;
    case AnswerKind::kUnparseable:
      j["kind"] = "unparseable";
      j["reason"] = p.reason;
      break;
  }
  return j;
}

}  // namespace tokprobe::parse
