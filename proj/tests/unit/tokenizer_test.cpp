#include <gtest/gtest.h>

#include <algorithm>
#include <map>
#include <optional>

#include "test_util.hpp"
#include "tokprobe/common.hpp"
#include "tokprobe/taskgen.hpp"
#include "tokprobe/tokenizer.hpp"

using namespace tokprobe;
using namespace tokprobe::tokenizer;

namespace {

// Exhaustive-recount reference trainer: counts every adjacent pair of every
// word from scratch before each merge.
std::vector<Merge> reference_train(const std::vector<std::string>& corpus, std::size_t num_merges,
                                   bool pretokenize_ws) {
  std::vector<std::vector<std::string>> words;
  for (const auto& s : corpus) {
    const auto pieces = pretokenize_ws ? pretokenize(s) : std::vector<std::string>{s};
    for (const auto& p : pieces) {
      if (pretokenize_ws && std::isspace(static_cast<unsigned char>(p[0]))) continue;
      words.push_back(split_code_points(p));
    }
  }
  std::vector<Merge> merges;
  while (merges.size() < num_merges) {
    std::map<std::pair<std::string, std::string>, long> counts;
    for (const auto& w : words) {
      for (std::size_t i = 0; i + 1 < w.size(); ++i) ++counts[{w[i], w[i + 1]}];
    }
    if (counts.empty()) break;
    auto best = counts.begin();
    for (auto it = counts.begin(); it != counts.end(); ++it) {
      if (it->second > best->second) best = it;  // map order gives the lexicographic tie-break
    }
    const auto [l, r] = best->first;
    merges.push_back({l, r});
    for (auto& w : words) {
      std::vector<std::string> next;
      for (std::size_t i = 0; i < w.size(); ++i) {
        if (i + 1 < w.size() && w[i] == l && w[i + 1] == r) {
          next.push_back(l + r);
          ++i;
        } else {
          next.push_back(w[i]);
        }
      }
      w = std::move(next);
    }
  }
  return merges;
}

// Reference encoder: repeatedly merge every occurrence of the lowest-ranked
// adjacent pair, scanning left to right.
std::vector<std::string> reference_encode(const MergeTable& table, const std::string& text) {
  std::vector<std::string> out;
  const auto pieces =
      table.pretokenize_whitespace() ? pretokenize(text) : std::vector<std::string>{text};
  for (const auto& piece : pieces) {
    auto syms = split_code_points(piece);
    while (true) {
      std::optional<std::size_t> best;
      for (std::size_t i = 0; i + 1 < syms.size(); ++i) {
        auto r = table.rank(syms[i], syms[i + 1]);
        if (r && (!best || *r < *best)) best = r;
      }
      if (!best) break;
      const auto& m = table.merges()[*best];
      std::vector<std::string> next;
      for (std::size_t i = 0; i < syms.size(); ++i) {
        if (i + 1 < syms.size() && syms[i] == m.left && syms[i + 1] == m.right) {
          next.push_back(m.product());
          ++i;
        } else {
          next.push_back(syms[i]);
        }
      }
      syms = std::move(next);
    }
    out.insert(out.end(), syms.begin(), syms.end());
  }
  return out;
}

std::string concat(const std::vector<std::string>& v) {
  std::string s;
  for (const auto& x : v) s += x;
  return s;
}

}  // namespace

TEST(TrainBpe, PicksMostFrequentPair) {
  const auto t = train_bpe({"abab", "abab"}, 1, false);
  ASSERT_EQ(t.size(), 1u);
  EXPECT_EQ(t.merges()[0], (Merge{"a", "b"}));
}

TEST(TrainBpe, ZeroMergesGivesEmptyTable) {
  EXPECT_EQ(train_bpe({"a"}, 0, false).size(), 0u);
}

TEST(TrainBpe, OverlappingPairsThenMergedPair) {
  const auto t = train_bpe({"aaaa"}, 2, false);
  ASSERT_EQ(t.size(), 2u);
  EXPECT_EQ(t.merges()[0], (Merge{"a", "a"}));
  EXPECT_EQ(t.merges()[1], (Merge{"aa", "aa"}));
}

TEST(TrainBpe, StopsWhenNoPairsRemain) {
  const auto t = train_bpe({"ab"}, 10, false);
  EXPECT_EQ(t.size(), 1u);
}

TEST(TrainBpe, TiesBreakLexicographically) {
  // "ba" and "ab" occur once each; (a,b) < (b,a).
  const auto t = train_bpe({"ab", "ba"}, 1, false);
  EXPECT_EQ(t.merges()[0], (Merge{"a", "b"}));
}

TEST(TrainBpe, EmptyCorpusIsRejected) {
  EXPECT_THROW(train_bpe({}, 3, false), InvalidInput);
}

TEST(TrainBpe, WhitespacePretokenizationNeverMergesAcrossSpaces) {
  const auto t = train_bpe({"a b a b a b"}, 5, true);
  for (const auto& m : t.merges()) {
    EXPECT_EQ(m.product().find(' '), std::string::npos);
  }
  EXPECT_TRUE(t.pretokenize_whitespace());
}

TEST(TrainBpe, MatchesExhaustiveRecountOnRandomCorpora) {
  Rng rng(42);
  for (int trial = 0; trial < 300; ++trial) {
    std::vector<std::string> corpus;
    const auto n = rng.between(1, 20);
    const std::string alphabet = trial % 3 == 0 ? "ab" : (trial % 3 == 1 ? "abc" : "ab c");
    for (int i = 0; i < n; ++i) corpus.push_back(testutil::random_string(rng, alphabet, 1, 8));
    const bool ws = trial % 2 == 0;
    const auto merges = static_cast<std::size_t>(rng.between(0, 12));
    const auto got = train_bpe(corpus, merges, ws);
    const auto want = reference_train(corpus, merges, ws);
    ASSERT_EQ(got.merges(), want) << "trial " << trial;
  }
}

TEST(MergeTableTest, RejectsOperandsThatAreNotYetDefined) {
  EXPECT_THROW(MergeTable({{"ab", "c"}}, false), InvalidInput);
  EXPECT_NO_THROW(MergeTable({{"a", "b"}, {"ab", "c"}}, false));
}

TEST(MergeTableTest, RejectsDuplicatePairs) {
  EXPECT_THROW(MergeTable({{"a", "b"}, {"a", "b"}}, false), InvalidInput);
}

TEST(MergeTableTest, VocabHoldsBaseSymbolsAndProducts) {
  MergeTable t({{"a", "b"}, {"ab", "c"}}, false);
  for (const char* s : {"a", "b", "c", "ab", "abc"}) EXPECT_TRUE(t.vocab().count(s)) << s;
  EXPECT_EQ(t.rank("ab", "c"), 1u);
  EXPECT_FALSE(t.rank("b", "c").has_value());
}

TEST(Encode, AppliesMergeToEveryOccurrence) {
  MergeTable t({{"a", "b"}}, false);
  const auto v = encode(t, "abab");
  EXPECT_EQ(v.tokens, (std::vector<std::string>{"ab", "ab"}));
  EXPECT_EQ(v.boundaries, (std::vector<Span>{{0, 2}, {2, 4}}));
}

TEST(Encode, EmptyTableGivesCharacters) {
  const auto v = encode(MergeTable{}, "abc");
  EXPECT_EQ(v.tokens, (std::vector<std::string>{"a", "b", "c"}));
}

TEST(Encode, DelimitersBlockAdjacency) {
  MergeTable t({{"a", "b"}}, false);
  const auto v = encode(t, "a, b");
  for (const auto& tok : v.tokens) {
    EXPECT_LE(std::count_if(tok.begin(), tok.end(), [](char c) { return c == 'a' || c == 'b'; }), 1)
        << tok;
  }
}

TEST(Encode, UnknownCharactersStaySingle) {
  MergeTable t({{"a", "b"}}, false);
  const auto v = encode(t, "xaby\xC3\xA9");
  EXPECT_EQ(v.tokens, (std::vector<std::string>{"x", "ab", "y", "\xC3\xA9"}));
  EXPECT_EQ(v.boundaries.back(), (Span{4, 5}));  // code-point offsets
}

TEST(Encode, LowerRankWinsOverLeftmost) {
  // "bc" outranks "ab", so "abc" becomes a + bc.
  MergeTable t({{"b", "c"}, {"a", "b"}}, false);
  EXPECT_EQ(encode(t, "abc").tokens, (std::vector<std::string>{"a", "bc"}));
}

TEST(Encode, MatchesReferenceEncoderAndRoundTrips) {
  Rng rng(7);
  std::vector<std::string> corpus;
  for (int i = 0; i < 200; ++i) corpus.push_back(testutil::random_string(rng, "abc ,'[]", 5, 30));
  for (bool ws : {false, true}) {
    const auto table = train_bpe(corpus, 80, ws);
    for (int i = 0; i < 500; ++i) {
      const auto text = testutil::random_string(rng, "abcd ,'[]", 1, 40);
      const auto v = encode(table, text);
      ASSERT_EQ(concat(v.tokens), text);
      ASSERT_EQ(v.tokens, reference_encode(table, text)) << text;
      // Boundaries are contiguous and cover the source.
      std::size_t pos = 0;
      for (std::size_t k = 0; k < v.tokens.size(); ++k) {
        ASSERT_EQ(v.boundaries[k].start, pos);
        pos = v.boundaries[k].end;
      }
      ASSERT_EQ(pos, split_code_points(text).size());
      // Determinism.
      ASSERT_EQ(encode(table, text).tokens, v.tokens);
    }
  }
}

TEST(Alignment, EveryTokenSpanningTwoUnitsMergesBoth) {
  MergeTable t({{"a", "b"}}, false);
  const auto rep = alignment_report(encode(t, "abab"), {"a", "b", "a", "b"});
  EXPECT_EQ(rep.merged_unit_count, 4u);
  EXPECT_EQ(rep.per_unit_aligned, (std::vector<bool>{false, false, false, false}));
}

TEST(Alignment, DelimiterTokensDoNotBreakAlignment) {
  MergeTable t({{",", " "}}, false);
  const auto v = encode(t, "a, b");
  EXPECT_EQ(v.tokens, (std::vector<std::string>{"a", ", ", "b"}));
  EXPECT_EQ(alignment_report(v, {"a", "b"}).merged_unit_count, 0u);
}

TEST(Alignment, DelimiterGluedToUnitStillAligned) {
  MergeTable t({{",", " "}, {", ", "b"}}, false);
  const auto v = encode(t, "a, b");
  EXPECT_EQ(v.tokens, (std::vector<std::string>{"a", ", b"}));
  EXPECT_EQ(alignment_report(v, {"a", "b"}).merged_unit_count, 0u);
}

TEST(Alignment, ListRenderingWithLetterTableHasNoMergedUnits) {
  Rng rng(3);
  std::vector<std::string> corpus;
  for (int i = 0; i < 300; ++i) corpus.push_back(testutil::random_string(rng, "ab", 10, 30));
  const auto table = train_bpe(corpus, 100, true);
  const auto v = encode(table, "['a', 'b']");
  EXPECT_EQ(alignment_report(v, {"a", "b"}).merged_unit_count, 0u);
}

TEST(Alignment, SplitWordUnitsAreCountedSeparately) {
  const auto v = encode(MergeTable{}, "cat dog");
  const auto rep = alignment_report(v, {"cat", "dog"});
  EXPECT_EQ(rep.merged_unit_count, 0u);
  EXPECT_EQ(rep.split_unit_count, 2u);
}

TEST(Alignment, UnlocatableUnitsAreRejected) {
  const auto v = encode(MergeTable{}, "ab");
  EXPECT_THROW(alignment_report(v, {"a", "c"}), InvalidInput);
  EXPECT_THROW(alignment_report(v, {"b", "a"}), InvalidInput);
}

TEST(Alignment, FlagsAndCountAgree) {
  Rng rng(11);
  std::vector<std::string> corpus;
  for (int i = 0; i < 200; ++i) corpus.push_back(testutil::random_string(rng, "ab", 10, 30));
  const auto table = train_bpe(corpus, 60, true);
  for (int i = 0; i < 200; ++i) {
    const auto units = testutil::chars_of(testutil::random_string(rng, "ab", 5, 30));
    for (auto f : taskgen::kAllFormats) {
      const auto rep = alignment_report(encode(table, taskgen::render(units, f)), units);
      const auto unaligned = std::count(rep.per_unit_aligned.begin(), rep.per_unit_aligned.end(), false);
      ASSERT_EQ(static_cast<std::size_t>(unaligned), rep.merged_unit_count);
      ASSERT_EQ(rep.per_unit_aligned.size(), units.size());
    }
  }
}

TEST(Alignment, PretokenizedDelimitedFormatsNeverMergeUnits) {
  // Any table, even one trained on delimited renderings: once merges cannot
  // cross whitespace, formats (b)-(d) keep every unit in its own token.
  Rng rng(5);
  std::vector<std::string> corpus;
  for (int i = 0; i < 300; ++i) {
    auto s = testutil::random_string(rng, "ab", 5, 30);
    corpus.push_back(i % 2 ? s : taskgen::render(testutil::chars_of(s), taskgen::FormatType::kD));
  }
  const auto table = train_bpe(corpus, 120, true);
  for (int i = 0; i < 300; ++i) {
    const auto units = testutil::chars_of(testutil::random_string(rng, "ab", 2, 30));
    for (auto f : {taskgen::FormatType::kB, taskgen::FormatType::kC, taskgen::FormatType::kD}) {
      ASSERT_EQ(alignment_report(encode(table, taskgen::render(units, f)), units).merged_unit_count, 0u);
    }
  }
}

TEST(Alignment, MergesAcrossDelimitersAreDetected) {
  // Without pretokenization a merge may span ", " and glue two units.
  MergeTable t({{"a", ","}, {"a,", " "}, {"a, ", "b"}}, false);
  const auto v = encode(t, "a, b");
  EXPECT_EQ(v.tokens, (std::vector<std::string>{"a, b"}));
  EXPECT_EQ(alignment_report(v, {"a", "b"}).merged_unit_count, 2u);
}

TEST(MergesFile, RoundTripsThroughText) {
  Rng rng(9);
  std::vector<std::string> corpus;
  for (int i = 0; i < 100; ++i) corpus.push_back(testutil::random_string(rng, "abc,'[]", 5, 20));
  const auto table = train_bpe(corpus, 50, true);
  const auto text = format_merges(table);
  const auto back = parse_merges(text);
  EXPECT_EQ(back.merges(), table.merges());
  EXPECT_TRUE(back.pretokenize_whitespace());

  testutil::TempDir dir("merges");
  write_merges(table, dir.file("m.txt"));
  EXPECT_EQ(read_merges(dir.file("m.txt")).merges(), table.merges());
}

TEST(MergesFile, SkipsCommentsAndBlankLines) {
  const auto t = parse_merges("# a comment\n\na b\n\nab c\n");
  EXPECT_EQ(t.size(), 2u);
  EXPECT_FALSE(t.pretokenize_whitespace());
}

TEST(MergesFile, MalformedLinesReportTheirOffset) {
  try {
    parse_merges("a b\nabc\n");
    FAIL() << "expected ParseError";
  } catch (const ParseError& e) {
    EXPECT_EQ(e.offset(), 4u);
  }
  EXPECT_THROW(parse_merges("a  b\n"), ParseError);
  EXPECT_THROW(parse_merges("ab c\n"), InvalidInput);  // "ab" undefined
}

TEST(MergesFile, UnwritableSymbolsAreRejected) {
  MergeTable spaced({{"a", " "}}, false);
  EXPECT_THROW(format_merges(spaced), InvalidInput);
  MergeTable hashed({{"#", "a"}}, false);
  EXPECT_THROW(format_merges(hashed), InvalidInput);
}

TEST(MergesFile, MissingFileIsReported) {
  EXPECT_THROW(read_merges("/nonexistent/merges.txt"), InvalidInput);
}

TEST(Pretokenize, SplitsWhitespaceRuns) {
  EXPECT_EQ(pretokenize("a  b\tc"), (std::vector<std::string>{"a", "  ", "b", "\t", "c"}));
  EXPECT_TRUE(pretokenize("").empty());
}
