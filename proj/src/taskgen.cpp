#include "tokprobe/taskgen.hpp"

#include <algorithm>
#include <fstream>
#include <span>
#include <sstream>

#include "tokprobe/common.hpp"
#include "tokprobe/jsonl.hpp"

namespace tokprobe::taskgen {

namespace {

constexpr std::string_view kQuoteOpeners[] = {"'", "`", "\xE2\x80\x98", "\xE2\x80\x99"};
constexpr std::string_view kQuoteClosers[] = {"'", "\xE2\x80\x99", "\xE2\x80\x98", "`"};

std::size_t match_any(std::string_view text, std::size_t pos,
                      std::span<const std::string_view> options) {
  for (auto opt : options) {
    if (text.substr(pos, opt.size()) == opt) return opt.size();
  }
  return 0;
}

bool has_any(const std::string& s, std::string_view chars) {
  return s.find_first_of(chars) != std::string::npos;
}

bool has_quote(const std::string& s) {
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (match_any(s, i, kQuoteOpeners) || s[i] == '"') return true;
  }
  return false;
}

std::vector<std::string> char_range(char lo, char hi) {
  std::vector<std::string> out;
  for (char c = lo; c <= hi; ++c) out.emplace_back(1, c);
  return out;
}

std::vector<std::string> split_on(std::string_view text, std::string_view delim) {
  std::vector<std::string> parts;
  // Items may not contain any delimiter character; render() rejects those.
  auto check_item = [&](std::size_t begin, std::size_t end) {
    for (std::size_t i = begin; i < end; ++i) {
      if (delim.find(text[i]) != std::string_view::npos) throw ParseError("stray delimiter", i);
    }
  };
  std::size_t offset = 0;
  while (true) {
    const std::size_t end = text.find(delim, offset);
    if (end == std::string_view::npos) {
      check_item(offset, text.size());
      parts.emplace_back(text.substr(offset));
      break;
    }
    if (end == offset) throw ParseError("empty item", offset);
    check_item(offset, end);
    parts.emplace_back(text.substr(offset, end - offset));
    offset = end + delim.size();
  }
  if (parts.back().empty()) throw ParseError("empty item", text.size());
  return parts;
}

std::vector<std::string> parse_list(std::string_view text) {
  std::vector<std::string> items;
  std::size_t pos = 0;
  if (text.empty() || text[0] != '[') throw ParseError("expected '['", 0);
  ++pos;
  if (pos < text.size() && text[pos] == ']') throw ParseError("empty list", pos);
  while (true) {
    const std::size_t open = match_any(text, pos, kQuoteOpeners);
    if (!open) throw ParseError("expected opening quote", pos);
    pos += open;
    const std::size_t start = pos;
    std::size_t close = 0;
    while (pos < text.size() && !(close = match_any(text, pos, kQuoteClosers))) ++pos;
    if (pos >= text.size()) throw ParseError("unterminated quoted item", start);
    if (pos == start) throw ParseError("empty item", start);
    items.emplace_back(text.substr(start, pos - start));
    pos += close;
    if (text.substr(pos, 2) == ", ") {
      pos += 2;
    } else if (pos < text.size() && text[pos] == ']') {
      ++pos;
      break;
    } else {
      throw ParseError("expected ', ' or ']'", pos);
    }
  }
  if (pos != text.size()) throw ParseError("trailing characters after ']'", pos);
  return items;
}

}  // namespace

std::string_view task_type_name(TaskType t) {
  switch (t) {
    case TaskType::kCounting: return "counting";
    case TaskType::kSorting: return "sorting";
    case TaskType::kReversing: return "reversing";
  }
  return "?";
}

TaskType task_type_from_name(std::string_view name) {
  if (name == "counting") return TaskType::kCounting;
  if (name == "sorting") return TaskType::kSorting;
  if (name == "reversing") return TaskType::kReversing;
  throw InvalidInput("unknown task: " + std::string(name));
}

std::string TaskKind::label() const {
  std::string s(task_type_name(type));
  if (type == TaskType::kCounting) s += ":" + target;
  return s;
}

TaskKind TaskKind::from_label(std::string_view label) {
  const auto colon = label.find(':');
  const TaskType t = task_type_from_name(label.substr(0, colon));
  if (t == TaskType::kCounting) {
    if (colon == std::string_view::npos || colon + 1 == label.size()) {
      throw InvalidInput("counting task needs a target, e.g. counting:a");
    }
    return counting(std::string(label.substr(colon + 1)));
  }
  if (colon != std::string_view::npos) throw InvalidInput("only counting takes a target");
  return {t, {}};
}

char format_letter(FormatType f) {
  switch (f) {
    case FormatType::kA: return 'a';
    case FormatType::kB: return 'b';
    case FormatType::kC: return 'c';
    case FormatType::kD: return 'd';
  }
  return '?';
}

FormatType format_from_letter(std::string_view s) {
  if (s == "a") return FormatType::kA;
  if (s == "b") return FormatType::kB;
  if (s == "c") return FormatType::kC;
  if (s == "d") return FormatType::kD;
  throw InvalidInput("unknown format '" + std::string(s) + "' (expected a, b, c or d)");
}

std::string LengthBucket::label() const {
  return std::to_string(lo) + "-" + std::to_string(hi);
}

LengthBucket bucket_for(TaskType task, int lo, int hi) {
  LengthBucket b{lo, hi, task == TaskType::kCounting};
  if (lo < 1 || b.max_len() < lo) {
    throw InvalidInput("empty length bucket " + std::to_string(lo) + ":" + std::to_string(hi));
  }
  return b;
}

std::vector<LengthBucket> stepped_buckets(int lo, int hi, int step) {
  if (step < 1) throw InvalidInput("bucket step must be positive");
  std::vector<LengthBucket> out;
  for (int b = lo; b + step <= hi; b += step) out.push_back({b, b + step, false});
  return out;
}

AlphabetSpec builtin_alphabet(std::string_view name) {
  auto letters = [] {
    auto v = char_range('a', 'z');
    auto upper = char_range('A', 'Z');
    v.insert(v.end(), upper.begin(), upper.end());
    return v;
  };
  if (name == "ab") return {"ab", {"a", "b"}, Sampler::kUniform};
  if (name == "ez") return {"ez", {"e", "z"}, Sampler::kUniform};
  if (name == "zbre") return {"zbre", {"z", "b", "r", "e"}, Sampler::kUniform};
  if (name == "random") return {"random", char_range('a', 'z'), Sampler::kUniform};
  if (name == "digit") return {"digit", char_range('0', '9'), Sampler::kUniform};
  if (name == "letter") return {"letter", letters(), Sampler::kUniform};
  if (name == "letter_digit") {
    auto v = letters();
    auto d = char_range('0', '9');
    v.insert(v.end(), d.begin(), d.end());
    return {"letter_digit", v, Sampler::kUniform};
  }
  if (name.starts_with("chars:")) {
    auto cps = split_code_points(name.substr(6));
    if (cps.empty()) throw InvalidInput("chars: alphabet is empty");
    std::sort(cps.begin(), cps.end());
    if (std::adjacent_find(cps.begin(), cps.end()) != cps.end()) {
      throw InvalidInput("chars: alphabet has duplicate characters");
    }
    return {std::string(name), cps, Sampler::kUniform};
  }
  throw InvalidInput("unknown alphabet: " + std::string(name));
}

WordList load_word_list(const std::string& path) {
  std::istringstream in(read_text_file(path));
  WordList list;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty() || line.front() == '#') continue;
    list.words.push_back(line.substr(0, line.find('\t')));
  }
  if (list.words.empty()) throw InvalidInput("word list is empty: " + path);
  return list;
}

AlphabetSpec word_alphabet(const WordList& list) {
  return {"word", list.words, Sampler::kWordList};
}

AlphabetSpec high_freq_word_alphabet(const WordList& list, std::size_t top_n) {
  const std::size_t n = std::min(top_n, list.words.size());
  return {"hfword", {list.words.begin(), list.words.begin() + static_cast<long>(n)},
          Sampler::kWordList};
}

AlphabetSpec resolve_alphabet(std::string_view name, const WordList* words) {
  if (name == "word" || name == "hfword") {
    if (!words) throw InvalidInput("alphabet '" + std::string(name) + "' needs a word list");
    return name == "word" ? word_alphabet(*words) : high_freq_word_alphabet(*words);
  }
  return builtin_alphabet(name);
}

std::string render(const std::vector<std::string>& units, FormatType format) {
  if (units.empty()) throw InvalidInput("render: no units");
  for (const auto& u : units) {
    if (u.empty()) throw InvalidInput("render: empty unit");
    switch (format) {
      case FormatType::kA: break;
      case FormatType::kB:
        if (has_any(u, " \t\n\r")) throw InvalidInput("render(b): unit contains whitespace: " + u);
        break;
      case FormatType::kC:
        if (has_any(u, ", \t\n\r")) {
          throw InvalidInput("render(c): unit contains a delimiter: " + u);
        }
        break;
      case FormatType::kD:
        if (has_any(u, "[],") || has_quote(u)) {
          throw InvalidInput("render(d): unit contains a quote, bracket or comma: " + u);
        }
        break;
    }
  }
  std::string out;
  if (format == FormatType::kD) out += "[";
  for (std::size_t i = 0; i < units.size(); ++i) {
    if (i > 0) {
      if (format == FormatType::kB) out += " ";
      if (format == FormatType::kC || format == FormatType::kD) out += ", ";
    }
    if (format == FormatType::kD) {
      out += "'" + units[i] + "'";
    } else {
      out += units[i];
    }
  }
  if (format == FormatType::kD) out += "]";
  return out;
}

std::vector<std::string> parse_rendered(std::string_view rendered, FormatType format) {
  if (rendered.empty()) throw ParseError("empty rendering", 0);
  switch (format) {
    case FormatType::kA: return split_code_points(rendered);
    case FormatType::kB: return split_on(rendered, " ");
    case FormatType::kC: return split_on(rendered, ", ");
    case FormatType::kD: return parse_list(rendered);
  }
  return {};
}

long long oracle_count(const std::vector<std::string>& units, const std::string& target) {
  return std::count(units.begin(), units.end(), target);
}

std::string oracle_sort(const std::vector<std::string>& units) {
  for (const auto& u : units) {
    if (split_code_points(u).size() != 1) {
      throw InvalidInput("oracle_sort: unit is not a single character: '" + u + "'");
    }
  }
  // UTF-8 byte order equals code-point order.
  std::vector<std::string> sorted = units;
  std::sort(sorted.begin(), sorted.end());
  std::string out;
  for (const auto& u : sorted) out += u;
  return out;
}

std::string oracle_reverse(const std::vector<std::string>& units) {
  std::string out;
  for (auto it = units.rbegin(); it != units.rend(); ++it) out += *it;
  return out;
}

Gold gold_for(const TaskKind& task, const std::vector<std::string>& units) {
  switch (task.type) {
    case TaskType::kCounting: return oracle_count(units, task.target);
    case TaskType::kSorting: return oracle_sort(units);
    case TaskType::kReversing: return oracle_reverse(units);
  }
  return {};
}

std::string instance_id(const TaskKind& task, std::string_view alphabet, FormatType format,
                        const LengthBucket& bucket, std::uint64_t seed, std::size_t index) {
  return sha256_hex(stable_key({task.label(), std::string(alphabet),
                                std::string(1, format_letter(format)), bucket.label(),
                                std::to_string(seed), std::to_string(index)}))
      .substr(0, 16);
}

std::vector<Instance> generate(const TaskKind& task, const AlphabetSpec& alphabet,
                               const LengthBucket& bucket, std::size_t n, FormatType format,
                               std::uint64_t seed) {
  if (n < 1) throw InvalidInput("generate: n must be >= 1");
  if (alphabet.units.empty()) throw InvalidInput("generate: alphabet has no units");
  if (bucket.lo < 1 || bucket.max_len() < bucket.lo) throw InvalidInput("generate: empty bucket");
  if (task.type == TaskType::kCounting) {
    if (split_code_points(task.target).size() != 1) {
      throw InvalidInput("counting target must be a single character: '" + task.target + "'");
    }
    if (std::find(alphabet.units.begin(), alphabet.units.end(), task.target) ==
        alphabet.units.end()) {
      throw InvalidInput("counting target '" + task.target + "' is not in alphabet " +
                         alphabet.name);
    }
  }
  if (task.type == TaskType::kSorting) {
    for (const auto& u : alphabet.units) {
      if (split_code_points(u).size() != 1) {
        throw InvalidInput("sorting needs a single-character alphabet, got " + alphabet.name);
      }
    }
  }

  // Draws depend only on (alphabet, bucket, n, seed), so the same seed yields
  // the same unit lists under every format and every counting target.
  Rng rng(seed);
  std::vector<Instance> out;
  out.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    const auto len = static_cast<std::size_t>(rng.between(bucket.lo, bucket.max_len()));
    Instance inst;
    inst.units.reserve(len);
    for (std::size_t k = 0; k < len; ++k) {
      inst.units.push_back(alphabet.units[rng.below(alphabet.units.size())]);
    }
    inst.id = instance_id(task, alphabet.name, format, bucket, seed, i);
    inst.task = task;
    inst.alphabet = alphabet.name;
    inst.format = format;
    inst.rendered = render(inst.units, format);
    inst.gold = gold_for(task, inst.units);
    inst.length_bucket = bucket;
    inst.seed = seed;
    out.push_back(std::move(inst));
  }
  return out;
}

nlohmann::json to_json(const Instance& inst) {
  nlohmann::json task = {{"kind", task_type_name(inst.task.type)}};
  if (inst.task.type == TaskType::kCounting) task["target"] = inst.task.target;
  nlohmann::json gold;
  std::visit([&](const auto& g) { gold = g; }, inst.gold);
  return {
      {"id", inst.id},
      {"task", task},
      {"alphabet", inst.alphabet},
      {"units", inst.units},
      {"format", std::string(1, format_letter(inst.format))},
      {"rendered", inst.rendered},
      {"gold", gold},
      {"length_bucket",
       {{"lo", inst.length_bucket.lo},
        {"hi", inst.length_bucket.hi},
        {"closed", inst.length_bucket.closed}}},
      {"seed", inst.seed},
  };
}

Instance instance_from_json(const nlohmann::json& j) {
  try {
    Instance inst;
    inst.id = j.at("id").get<std::string>();
    const auto& task = j.at("task");
    inst.task.type = task_type_from_name(task.at("kind").get<std::string>());
    if (inst.task.type == TaskType::kCounting) inst.task.target = task.at("target");
    inst.alphabet = j.value("alphabet", "");
    inst.units = j.at("units").get<std::vector<std::string>>();
    inst.format = format_from_letter(j.at("format").get<std::string>());
    inst.rendered = j.at("rendered").get<std::string>();
    const auto& gold = j.at("gold");
    if (gold.is_number_integer()) {
      inst.gold = gold.get<long long>();
    } else {
      inst.gold = gold.get<std::string>();
    }
    const auto& b = j.at("length_bucket");
    inst.length_bucket = {b.at("lo").get<int>(), b.at("hi").get<int>(),
                          b.value("closed", inst.task.type == TaskType::kCounting)};
    inst.seed = j.at("seed").get<std::uint64_t>();
    return inst;
  } catch (const nlohmann::json::exception& e) {
    throw InvalidInput(std::string("malformed instance record: ") + e.what());
  }
}

std::vector<Instance> read_instances(const std::string& path) {
  std::vector<Instance> out;
  for (const auto& row : read_jsonl(path)) out.push_back(instance_from_json(row));
  return out;
}

void write_instances(const std::vector<Instance>& instances, const std::string& path) {
  std::vector<nlohmann::json> rows;
  rows.reserve(instances.size());
  for (const auto& inst : instances) rows.push_back(to_json(inst));
  write_jsonl(rows, path);
}

}  // namespace tokprobe::taskgen
