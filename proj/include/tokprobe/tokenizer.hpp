#pragma once

#include <cstddef>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace tokprobe::tokenizer {

struct Merge {
  std::string left;
  std::string right;

  std::string product() const { return left + right; }
  friend bool operator==(const Merge&, const Merge&) = default;
};

// Ranked merge rules of a character-level BPE model. Immutable once built.
//
// Every merge operand is either a single code point (a base symbol) or the
// product of an earlier-ranked merge, and no pair appears twice. The
// constructor enforces both and throws InvalidInput otherwise.
class MergeTable {
 public:
  MergeTable() = default;
  MergeTable(std::vector<Merge> merges, bool pretokenize_whitespace,
             const std::set<std::string>& base_symbols = {});

  const std::vector<Merge>& merges() const { return merges_; }
  const std::set<std::string>& vocab() const { return vocab_; }
  bool pretokenize_whitespace() const { return pretokenize_whitespace_; }
  std::size_t size() const { return merges_.size(); }

  std::optional<std::size_t> rank(const std::string& left, const std::string& right) const;

 private:
  std::vector<Merge> merges_;
  std::set<std::string> vocab_;
  std::map<std::pair<std::string, std::string>, std::size_t> ranks_;
  bool pretokenize_whitespace_ = false;
};

struct Span {
  std::size_t start = 0;  // code-point offsets, half-open
  std::size_t end = 0;
  friend bool operator==(const Span&, const Span&) = default;
};

struct TokenizationView {
  std::string source;
  std::vector<std::string> tokens;
  std::vector<Span> boundaries;
};

struct AlignmentReport {
  std::vector<bool> per_unit_aligned;
  std::size_t merged_unit_count = 0;
  // Units whose characters are spread over more than one token. Informational;
  // a split unit still counts as aligned.
  std::size_t split_unit_count = 0;
};

// Greedy pair-frequency training. Ties on frequency go to the
// lexicographically smallest (left, right). Stops early when no adjacent pair
// remains. With `pretokenize_on_whitespace`, whitespace runs are excluded from
// training and merges never cross a whitespace boundary.
MergeTable train_bpe(const std::vector<std::string>& corpus, std::size_t num_merges,
                     bool pretokenize_on_whitespace);

// Applies merges lowest-rank first until none applies. Characters unknown to
// the table stay single-character tokens.
TokenizationView encode(const MergeTable& table, std::string_view text);

// Code-point span of each unit occurrence, found greedily left to right with
// arbitrary delimiter characters allowed in between. Throws InvalidInput if a
// unit cannot be located.
std::vector<Span> locate_units(std::string_view source, const std::vector<std::string>& units);

// A unit occurrence is aligned iff no token covers characters of that unit and
// of another unit. Delimiter characters glued to a unit do not break
// alignment. Throws InvalidInput if the units cannot be located in order.
AlignmentReport alignment_report(const TokenizationView& view,
                                 const std::vector<std::string>& units);

// Whitespace pretokenization: maximal runs of whitespace / non-whitespace.
std::vector<std::string> pretokenize(std::string_view text);

// Merges file: "LEFT RIGHT" per line, rank = line order; blank lines and lines
// starting with '#' are skipped. The comment "# pretokenize: whitespace" marks a
// table trained with whitespace pretokenization.
MergeTable parse_merges(std::string_view text);
MergeTable read_merges(const std::string& path);
std::string format_merges(const MergeTable& table);
void write_merges(const MergeTable& table, const std::string& path);

}  // namespace tokprobe::tokenizer
