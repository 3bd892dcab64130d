#pragma once

#include <cstddef>
#include <map>
#include <optional>
#include <string>
#include <variant>
#include <vector>

#include <nlohmann/json.hpp>

#include "tokprobe/parse.hpp"
#include "tokprobe/prompts.hpp"
#include "tokprobe/runner.hpp"
#include "tokprobe/taskgen.hpp"

namespace tokprobe::metrics {

// One judged run: the unit of the verdicts file.
struct ScoredRecord {
  std::string instance_id;
  prompts::PromptVariant variant = prompts::PromptVariant::kBase;
  std::string backend;
  std::string model;
  parse::Verdict verdict;
};

nlohmann::json to_json(const ScoredRecord& r);
ScoredRecord scored_record_from_json(const nlohmann::json& j);
std::vector<ScoredRecord> read_verdicts(const std::string& path);
void write_verdicts(const std::vector<ScoredRecord>& records, const std::string& path);

using InstanceIndex = std::map<std::string, taskgen::Instance>;
InstanceIndex index_instances(const std::vector<taskgen::Instance>& instances);

// Parses and judges every run. Failed requests become unparseable verdicts.
// Throws IntegrityError when a run names an unknown instance.
std::vector<ScoredRecord> score(const std::vector<runner::RunRecord>& runs,
                                const InstanceIndex& instances);

// Synthetic backends identify themselves through their model name.
bool is_synthetic(const std::string& model);

struct AccuracyCell {
  std::string backend;
  std::string task;      // TaskKind label
  std::string alphabet;
  taskgen::FormatType format = taskgen::FormatType::kA;
  std::string bucket;    // "lo-hi"
  prompts::PromptVariant variant = prompts::PromptVariant::kBase;
  std::size_t n = 0;
  std::size_t n_correct = 0;
  std::size_t n_unparseable = 0;

  // Unparseable answers count as wrong.
  double accuracy() const { return n ? 100.0 * n_correct / n : 0.0; }
  // Unparseable answers excluded; absent when nothing parsed.
  std::optional<double> accuracy_parsed() const;
};

// Keys dropped from the grouping collapse to "*".
struct GroupBy {
  bool task = true;
  bool alphabet = true;
  bool format = true;
  bool bucket = true;
  bool variant = true;
};

// One cell per distinct key tuple, ordered by (backend, task, alphabet,
// format, bucket, variant). Throws IntegrityError on a dangling verdict.
std::vector<AccuracyCell> accuracy_matrix(const std::vector<ScoredRecord>& records,
                                          const InstanceIndex& instances,
                                          const GroupBy& group_by = {});

struct DeltaTok {
  std::string backend;
  std::string task;
  std::string alphabet;
  std::string bucket;  // "all" for pooled values
  prompts::PromptVariant variant = prompts::PromptVariant::kBase;
  taskgen::FormatType atomic_format = taskgen::FormatType::kD;
  taskgen::FormatType merged_format = taskgen::FormatType::kA;
  double value = 0.0;
};

// |acc(atomic) - acc(merged)| per (backend, task, alphabet, bucket, variant).
// Groups lacking either format are skipped and described in `warnings`.
std::vector<DeltaTok> delta_tok(const std::vector<AccuracyCell>& cells,
                                taskgen::FormatType atomic_format,
                                taskgen::FormatType merged_format,
                                std::vector<std::string>* warnings = nullptr);

// Best minus worst format per group; atomic_format names the best format and
// merged_format the worst. Groups with fewer than two formats are skipped.
std::vector<DeltaTok> delta_tok_max(const std::vector<AccuracyCell>& cells);

// Like delta_tok, with counts pooled over all buckets before dividing.
std::vector<DeltaTok> delta_tok_pooled(const std::vector<AccuracyCell>& cells,
                                       taskgen::FormatType atomic_format,
                                       taskgen::FormatType merged_format,
                                       std::vector<std::string>* warnings = nullptr);

struct ErrorShift {
  std::map<long long, std::size_t> histogram;  // predicted - gold, never 0

  std::size_t total() const;
  std::optional<double> mean() const;
};

// Over incorrect, parseable counting verdicts; other records are ignored.
// With `format` set, only instances rendered in that format contribute.
ErrorShift error_shift(const std::vector<ScoredRecord>& records, const InstanceIndex& instances,
                       std::optional<taskgen::FormatType> format = std::nullopt);

using FrequencyTable = std::map<std::string, double>;

// "letter<TAB>percentage" per line; '#' comments and blank lines skipped.
FrequencyTable parse_frequency_table(std::string_view text);
FrequencyTable load_frequency_table(const std::string& path);

struct Correlation {
  std::size_t n = 0;
  std::optional<double> pearson;   // absent when either side is constant
  std::optional<double> spearman;  // average ranks for ties
};

// Correlates frequency with error rate (100 - accuracy) over the letters
// present in both maps. Throws InvalidInput when fewer than 3 are shared.
Correlation frequency_correlation(const std::map<std::string, double>& per_letter_accuracy,
                                  const FrequencyTable& freq);

std::optional<double> pearson(const std::vector<double>& x, const std::vector<double>& y);
std::optional<double> spearman(const std::vector<double>& x, const std::vector<double>& y);

// Percentages as printed in reports: two decimals, half away from zero.
std::string format_pct(double value);

struct Report {
  std::vector<AccuracyCell> cells;
  std::vector<DeltaTok> delta_max;
  std::vector<DeltaTok> delta_pair;    // (d) vs (a), per bucket
  std::vector<DeltaTok> delta_pooled;  // (d) vs (a), pooled over buckets
  std::map<taskgen::FormatType, ErrorShift> error_shifts;
  // Per (alphabet, format) of counting cells: letter -> accuracy pooled over
  // buckets and variants.
  using LetterKey = std::pair<std::string, taskgen::FormatType>;
  std::map<LetterKey, std::map<std::string, double>> per_letter_accuracy;
  std::map<LetterKey, Correlation> correlations;
  std::vector<std::string> warnings;
  std::map<std::string, bool> backends;  // label -> synthetic
};

Report build_report(const std::vector<ScoredRecord>& records, const InstanceIndex& instances,
                    const FrequencyTable* freq = nullptr);

enum class ReportFormat { kTableText, kCsv, kJson };
ReportFormat report_format_from_name(std::string_view name);

// Throws InvalidInput for a report without cells.
std::string render_report(const Report& report, ReportFormat format);

// A column of printed accuracies (in percent, two decimals) plus the gap
// printed for it, as found in a published accuracy grid.
struct PrintedColumn {
  std::string label;
  std::map<taskgen::FormatType, std::string> accuracy;
  std::string printed_delta_max;
};

struct DeltaCheck {
  std::string label;
  std::string printed;
  std::string recomputed;
  bool matches = false;
};

// Rebuilds cells of `instances_per_cell` instances from the printed values,
// runs delta_tok_max on them and compares at two decimals. Throws InvalidInput
// when a printed accuracy is not a whole number of instances.
std::vector<DeltaCheck> check_printed_deltas(const std::vector<PrintedColumn>& columns,
                                             std::size_t instances_per_cell);

}  // namespace tokprobe::metrics
