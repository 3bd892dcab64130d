#include "tokprobe/tokenizer.hpp"

#include <algorithm>
#include <fstream>
#include <sstream>
#include <tuple>
#include <unordered_map>

#include "tokprobe/common.hpp"

namespace tokprobe::tokenizer {

namespace {

constexpr std::string_view kPretokenizePragma = "# pretokenize: whitespace";

bool is_space(char c) {
  return c == ' ' || c == '\t' || c == '\n' || c == '\r' || c == '\f' || c == '\v';
}

bool is_single_code_point(const std::string& s) {
  return !s.empty() && split_code_points(s).size() == 1;
}

// Word = one pretokenized piece of the corpus with its multiplicity, held as a
// sequence of interned symbol ids.
struct Word {
  std::vector<int> symbols;
  long long count = 0;
};

class Trainer {
 public:
  Trainer(const std::vector<std::string>& corpus, bool pretokenize_ws) {
    std::map<std::string, long long> piece_counts;
    for (const auto& text : corpus) {
      for (const auto& cp : split_code_points(text)) base_.insert(cp);
      if (pretokenize_ws) {
        for (auto& piece : pretokenize(text)) {
          if (!is_space(piece.front())) ++piece_counts[piece];
        }
      } else if (!text.empty()) {
        ++piece_counts[text];
      }
    }
    for (const auto& [piece, count] : piece_counts) {
      Word w;
      w.count = count;
      for (const auto& cp : split_code_points(piece)) w.symbols.push_back(intern(cp));
      words_.push_back(std::move(w));
    }
    for (std::size_t i = 0; i < words_.size(); ++i) add_word_pairs(i, +1);
  }

  std::vector<Merge> run(std::size_t num_merges) {
    std::vector<Merge> merges;
    while (merges.size() < num_merges && !queue_.empty()) {
      const auto [neg_count, left_str, right_str, left, right] = *queue_.begin();
      merges.push_back({left_str, right_str});
      apply(left, right, intern(left_str + right_str));
    }
    return merges;
  }

  const std::set<std::string>& base() const { return base_; }

 private:
  using PairKey = std::pair<int, int>;
  // Ordered so that begin() is the highest count, then smallest (left, right).
  using QueueEntry = std::tuple<long long, std::string, std::string, int, int>;

  int intern(const std::string& s) {
    auto [it, inserted] = ids_.try_emplace(s, static_cast<int>(names_.size()));
    if (inserted) names_.push_back(s);
    return it->second;
  }

  void bump(PairKey key, long long delta, std::size_t word) {
    long long& c = counts_[key];
    if (c > 0) queue_.erase({-c, names_[key.first], names_[key.second], key.first, key.second});
    c += delta;
    if (c > 0) {
      queue_.insert({-c, names_[key.first], names_[key.second], key.first, key.second});
      if (delta > 0) where_[key].insert(word);
    }
  }

  void add_word_pairs(std::size_t i, int sign) {
    const Word& w = words_[i];
    for (std::size_t k = 0; k + 1 < w.symbols.size(); ++k) {
      bump({w.symbols[k], w.symbols[k + 1]}, sign * w.count, i);
    }
  }

  void apply(int left, int right, int product) {
    const PairKey key{left, right};
    const std::set<std::size_t> affected = where_[key];
    for (std::size_t i : affected) {
      Word& w = words_[i];
      bool present = false;
      for (std::size_t k = 0; k + 1 < w.symbols.size(); ++k) {
        if (w.symbols[k] == left && w.symbols[k + 1] == right) {
          present = true;
          break;
        }
      }
      if (!present) continue;
      add_word_pairs(i, -1);
      std::vector<int> merged;
      merged.reserve(w.symbols.size());
      for (std::size_t k = 0; k < w.symbols.size(); ++k) {
        if (k + 1 < w.symbols.size() && w.symbols[k] == left && w.symbols[k + 1] == right) {
          merged.push_back(product);
          ++k;
        } else {
          merged.push_back(w.symbols[k]);
        }
      }
      w.symbols = std::move(merged);
      add_word_pairs(i, +1);
    }
    where_.erase(key);
  }

  std::vector<Word> words_;
  std::set<std::string> base_;
  std::unordered_map<std::string, int> ids_;
  std::vector<std::string> names_;
  std::map<PairKey, long long> counts_;
  std::map<PairKey, std::set<std::size_t>> where_;
  std::set<QueueEntry> queue_;
};

void encode_piece(const MergeTable& table, std::vector<std::string> symbols,
                  std::vector<std::string>& out) {
  while (symbols.size() > 1) {
    std::optional<std::size_t> best;
    for (std::size_t k = 0; k + 1 < symbols.size(); ++k) {
      auto r = table.rank(symbols[k], symbols[k + 1]);
      if (r && (!best || *r < *best)) best = r;
    }
    if (!best) break;
    const Merge& m = table.merges()[*best];
    std::vector<std::string> next;
    next.reserve(symbols.size());
    for (std::size_t k = 0; k < symbols.size(); ++k) {
      if (k + 1 < symbols.size() && symbols[k] == m.left && symbols[k + 1] == m.right) {
        next.push_back(m.left + m.right);
        ++k;
      } else {
        next.push_back(std::move(symbols[k]));
      }
    }
    symbols = std::move(next);
  }
  for (auto& s : symbols) out.push_back(std::move(s));
}

}  // namespace

MergeTable::MergeTable(std::vector<Merge> merges, bool pretokenize_whitespace,
                       const std::set<std::string>& base_symbols)
    : merges_(std::move(merges)), pretokenize_whitespace_(pretokenize_whitespace) {
  for (const auto& b : base_symbols) {
    if (!is_single_code_point(b)) throw InvalidInput("base symbol is not one character: " + b);
    vocab_.insert(b);
  }
  std::set<std::string> products;
  for (std::size_t r = 0; r < merges_.size(); ++r) {
    const Merge& m = merges_[r];
    for (const std::string* side : {&m.left, &m.right}) {
      if (is_single_code_point(*side)) {
        vocab_.insert(*side);
      } else if (!products.count(*side)) {
        throw InvalidInput("merge " + std::to_string(r) + " uses symbol '" + *side +
                           "' that no earlier merge produces");
      }
    }
    if (!ranks_.emplace(std::make_pair(m.left, m.right), r).second) {
      throw InvalidInput("duplicate merge pair at rank " + std::to_string(r));
    }
    products.insert(m.product());
    vocab_.insert(m.product());
  }
}

std::optional<std::size_t> MergeTable::rank(const std::string& left,
                                            const std::string& right) const {
  auto it = ranks_.find({left, right});
  if (it == ranks_.end()) return std::nullopt;
  return it->second;
}

std::vector<std::string> pretokenize(std::string_view text) {
  std::vector<std::string> pieces;
  std::size_t i = 0;
  while (i < text.size()) {
    const bool ws = is_space(text[i]);
    std::size_t j = i;
    while (j < text.size() && is_space(text[j]) == ws) ++j;
    pieces.emplace_back(text.substr(i, j - i));
    i = j;
  }
  return pieces;
}

MergeTable train_bpe(const std::vector<std::string>& corpus, std::size_t num_merges,
                     bool pretokenize_on_whitespace) {
  if (corpus.empty()) throw InvalidInput("train_bpe: corpus is empty");
  Trainer trainer(corpus, pretokenize_on_whitespace);
  auto merges = trainer.run(num_merges);
  return MergeTable(std::move(merges), pretokenize_on_whitespace, trainer.base());
}

TokenizationView encode(const MergeTable& table, std::string_view text) {
  TokenizationView view;
  view.source = std::string(text);
  if (table.pretokenize_whitespace()) {
    for (const auto& piece : pretokenize(text)) {
      encode_piece(table, split_code_points(piece), view.tokens);
    }
  } else {
    encode_piece(table, split_code_points(text), view.tokens);
  }
  std::size_t pos = 0;
  view.boundaries.reserve(view.tokens.size());
  for (const auto& t : view.tokens) {
    const std::size_t len = split_code_points(t).size();
    view.boundaries.push_back({pos, pos + len});
    pos += len;
  }
  return view;
}

std::vector<Span> locate_units(std::string_view source, const std::vector<std::string>& units) {
  const auto chars = split_code_points(source);
  std::vector<Span> spans;
  spans.reserve(units.size());
  std::size_t cursor = 0;
  for (std::size_t u = 0; u < units.size(); ++u) {
    const auto unit_chars = split_code_points(units[u]);
    if (unit_chars.empty()) throw InvalidInput("empty unit at index " + std::to_string(u));
    std::size_t found = chars.size();
    for (std::size_t s = cursor; s + unit_chars.size() <= chars.size(); ++s) {
      if (std::equal(unit_chars.begin(), unit_chars.end(), chars.begin() + s)) {
        found = s;
        break;
      }
    }
    if (found == chars.size()) {
      throw InvalidInput("unit " + std::to_string(u) + " ('" + units[u] +
                         "') not found in source after offset " + std::to_string(cursor));
    }
    spans.push_back({found, found + unit_chars.size()});
    cursor = found + unit_chars.size();
  }
  return spans;
}

AlignmentReport alignment_report(const TokenizationView& view,
                                 const std::vector<std::string>& units) {
  const std::size_t n_chars = split_code_points(view.source).size();
  // unit_of[c] = index of the unit covering character c, or -1 for delimiters.
  std::vector<long> unit_of(n_chars, -1);
  const auto spans = locate_units(view.source, units);
  for (std::size_t u = 0; u < spans.size(); ++u) {
    for (std::size_t c = spans[u].start; c < spans[u].end; ++c) unit_of[c] = static_cast<long>(u);
  }

  AlignmentReport report;
  report.per_unit_aligned.assign(units.size(), true);
  std::vector<std::size_t> tokens_per_unit(units.size(), 0);
  for (const auto& span : view.boundaries) {
    std::vector<long> covered;
    for (std::size_t c = span.start; c < span.end && c < n_chars; ++c) {
      if (unit_of[c] >= 0 && (covered.empty() || covered.back() != unit_of[c])) {
        covered.push_back(unit_of[c]);
      }
    }
    for (long u : covered) ++tokens_per_unit[u];
    if (covered.size() > 1) {
      for (long u : covered) report.per_unit_aligned[u] = false;
    }
  }
  for (std::size_t u = 0; u < units.size(); ++u) {
    if (!report.per_unit_aligned[u]) ++report.merged_unit_count;
    if (tokens_per_unit[u] > 1) ++report.split_unit_count;
  }
  return report;
}

MergeTable parse_merges(std::string_view text) {
  std::vector<Merge> merges;
  bool pretok = false;
  std::size_t offset = 0;
  while (offset <= text.size()) {
    std::size_t end = text.find('\n', offset);
    if (end == std::string_view::npos) end = text.size();
    std::string_view line = text.substr(offset, end - offset);
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    if (line == kPretokenizePragma) {
      pretok = true;
    } else if (!line.empty() && line.front() != '#') {
      const std::size_t sp = line.find(' ');
      if (sp == std::string_view::npos || sp == 0 || sp + 1 >= line.size() ||
          line.find(' ', sp + 1) != std::string_view::npos) {
        throw ParseError("merges: expected 'LEFT RIGHT'", offset);
      }
      merges.push_back({std::string(line.substr(0, sp)), std::string(line.substr(sp + 1))});
    }
    if (end == text.size()) break;
    offset = end + 1;
  }
  return MergeTable(std::move(merges), pretok);
}

MergeTable read_merges(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw InvalidInput("cannot open merges file: " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse_merges(ss.str());
}

std::string format_merges(const MergeTable& table) {
  std::string out;
  if (table.pretokenize_whitespace()) {
    out += kPretokenizePragma;
    out += '\n';
  }
  for (const auto& m : table.merges()) {
    for (const std::string* side : {&m.left, &m.right}) {
      if (std::any_of(side->begin(), side->end(), is_space)) {
        throw InvalidInput("merge symbol contains whitespace and cannot be written: '" +
                           *side + "'");
      }
    }
    if (m.left.front() == '#') {
      throw InvalidInput("merge symbol starting with '#' cannot be written: '" + m.left + "'");
    }
    out += m.left;
    out += ' ';
    out += m.right;
    out += '\n';
  }
  return out;
}

void write_merges(const MergeTable& table, const std::string& path) {
  const std::string text = format_merges(table);
  std::ofstream out(path, std::ios::binary);
  if (!out) throw InvalidInput("cannot write merges file: " + path);
  out << text;
}

}  // namespace tokprobe::tokenizer
