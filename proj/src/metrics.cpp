#include "tokprobe/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>
#include <set>
#include <sstream>
#include <tuple>

#include "tokprobe/common.hpp"
#include "tokprobe/jsonl.hpp"

namespace tokprobe::metrics {

using prompts::PromptVariant;
using taskgen::FormatType;

namespace {

const taskgen::Instance& lookup(const InstanceIndex& instances, const std::string& id) {
  auto it = instances.find(id);
  if (it == instances.end()) throw IntegrityError("verdict refers to unknown instance " + id);
  return it->second;
}

nlohmann::json predicted_to_json(const parse::Verdict& v) {
  if (const auto* n = std::get_if<long long>(&v.predicted)) return *n;
  if (const auto* s = std::get_if<std::string>(&v.predicted)) return *s;
  return nullptr;
}

std::string fmt_name(FormatType f) { return std::string(1, taskgen::format_letter(f)); }

// Key shared by every cell of one Δ_tok group.
using GroupKey = std::tuple<std::string, std::string, std::string, std::string, PromptVariant>;

GroupKey group_of(const AccuracyCell& c) {
  return {c.backend, c.task, c.alphabet, c.bucket, c.variant};
}

struct Counts {
  std::size_t n = 0;
  std::size_t correct = 0;
};

// |c1/n1 - c2/n2| in percent, from integer counts.
double gap(const Counts& x, const Counts& y) {
  const long double num = static_cast<long double>(x.correct) * y.n -
                          static_cast<long double>(y.correct) * x.n;
  return static_cast<double>(100.0L * std::fabs(num) / (static_cast<long double>(x.n) * y.n));
}

std::vector<DeltaTok> pair_deltas(const std::map<GroupKey, std::map<FormatType, Counts>>& groups,
                                  FormatType atomic, FormatType merged,
                                  std::vector<std::string>* warnings) {
  std::vector<DeltaTok> out;
  for (const auto& [key, by_format] : groups) {
    const auto a = by_format.find(atomic);
    const auto m = by_format.find(merged);
    const auto& [backend, task, alphabet, bucket, variant] = key;
    if (a == by_format.end() || m == by_format.end()) {
      if (warnings) {
        warnings->push_back("delta_tok: group " + task + "/" + alphabet + "/" + bucket + "/" +
                            std::string(prompts::variant_name(variant)) + " lacks format (" +
                            fmt_name(a == by_format.end() ? atomic : merged) + "), skipped");
      }
      continue;
    }
    out.push_back({backend, task, alphabet, bucket, variant, atomic, merged, gap(a->second, m->second)});
  }
  return out;
}

std::vector<double> average_ranks(const std::vector<double>& v) {
  std::vector<std::size_t> order(v.size());
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](auto i, auto j) { return v[i] < v[j]; });
  std::vector<double> ranks(v.size());
  for (std::size_t i = 0; i < order.size();) {
    std::size_t j = i;
    while (j + 1 < order.size() && v[order[j + 1]] == v[order[i]]) ++j;
    const double r = (static_cast<double>(i) + static_cast<double>(j)) / 2.0 + 1.0;
    for (std::size_t k = i; k <= j; ++k) ranks[order[k]] = r;
    i = j + 1;
  }
  return ranks;
}

// Printed percentage "56.10" -> 5610.
long long centi_from_printed(const std::string& s) {
  const auto dot = s.find('.');
  if (s.empty() || dot == std::string::npos || s.size() - dot != 3) {
    throw InvalidInput("printed percentage must have two decimals: " + s);
  }
  long long v = 0;
  for (char c : s) {
    if (c == '.') continue;
    if (c < '0' || c > '9') throw InvalidInput("bad printed percentage: " + s);
    v = v * 10 + (c - '0');
  }
  return v;
}

std::string pad_right(const std::string& s, std::size_t width) {
  const std::size_t len = split_code_points(s).size();
  return len >= width ? s : s + std::string(width - len, ' ');
}

std::string csv_field(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += '"';
    out += c;
  }
  return out + "\"";
}

nlohmann::json optional_json(const std::optional<double>& v) {
  return v ? nlohmann::json(*v) : nlohmann::json(nullptr);
}

nlohmann::json to_json(const DeltaTok& d) {
  return {{"backend", d.backend},
          {"task", d.task},
          {"alphabet", d.alphabet},
          {"bucket", d.bucket},
          {"variant", prompts::variant_name(d.variant)},
          {"atomic_format", fmt_name(d.atomic_format)},
          {"merged_format", fmt_name(d.merged_format)},
          {"value", d.value},
          {"value_printed", format_pct(d.value)}};
}

nlohmann::json to_json(const AccuracyCell& c) {
  return {{"backend", c.backend},
          {"task", c.task},
          {"alphabet", c.alphabet},
          {"format", fmt_name(c.format)},
          {"bucket", c.bucket},
          {"variant", prompts::variant_name(c.variant)},
          {"n", c.n},
          {"n_correct", c.n_correct},
          {"n_unparseable", c.n_unparseable},
          {"accuracy", c.accuracy()},
          {"accuracy_parsed", optional_json(c.accuracy_parsed())}};
}

}  // namespace

nlohmann::json to_json(const ScoredRecord& r) {
  nlohmann::json j = {{"instance_id", r.instance_id},
                      {"variant", prompts::variant_name(r.variant)},
                      {"backend", r.backend},
                      {"model", r.model},
                      {"verdict", parse::verdict_name(r.verdict.kind)},
                      {"predicted", predicted_to_json(r.verdict)}};
  if (!r.verdict.reason.empty()) j["reason"] = r.verdict.reason;
  return j;
}

ScoredRecord scored_record_from_json(const nlohmann::json& j) {
  try {
    ScoredRecord r;
    r.instance_id = j.at("instance_id").get<std::string>();
    r.variant = prompts::variant_from_name(j.at("variant").get<std::string>());
    r.backend = j.value("backend", "");
    r.model = j.value("model", "");
    r.verdict.kind = parse::verdict_from_name(j.at("verdict").get<std::string>());
    const auto& p = j.value("predicted", nlohmann::json(nullptr));
    if (p.is_number_integer()) {
      r.verdict.predicted = p.get<long long>();
    } else if (p.is_string()) {
      r.verdict.predicted = p.get<std::string>();
    }
    r.verdict.reason = j.value("reason", "");
    return r;
  } catch (const nlohmann::json::exception& e) {
    throw InvalidInput(std::string("malformed verdict record: ") + e.what());
  }
}

std::vector<ScoredRecord> read_verdicts(const std::string& path) {
  std::vector<ScoredRecord> out;
  for (const auto& row : read_jsonl(path)) out.push_back(scored_record_from_json(row));
  return out;
}

void write_verdicts(const std::vector<ScoredRecord>& records, const std::string& path) {
  std::vector<nlohmann::json> rows;
  rows.reserve(records.size());
  for (const auto& r : records) rows.push_back(to_json(r));
  write_jsonl(rows, path);
}

InstanceIndex index_instances(const std::vector<taskgen::Instance>& instances) {
  InstanceIndex index;
  for (const auto& inst : instances) {
    auto [it, inserted] = index.emplace(inst.id, inst);
    if (!inserted && to_json(it->second) != to_json(inst)) {
      throw IntegrityError("two different instances share id " + inst.id);
    }
  }
  return index;
}

std::vector<ScoredRecord> score(const std::vector<runner::RunRecord>& runs,
                                const InstanceIndex& instances) {
  std::vector<ScoredRecord> out;
  out.reserve(runs.size());
  for (const auto& run : runs) {
    const auto& inst = lookup(instances, run.instance_id);
    ScoredRecord r{run.instance_id, run.variant, run.backend, run.model, {}};
    if (run.failed) {
      r.verdict.reason = "request failed: " + run.error;
    } else {
      r.verdict = parse::judge(inst, parse::parse_for(inst, run.raw_response));
    }
    out.push_back(std::move(r));
  }
  return out;
}

bool is_synthetic(const std::string& model) { return model.rfind("synthetic", 0) == 0; }

std::optional<double> AccuracyCell::accuracy_parsed() const {
  const std::size_t parsed = n - n_unparseable;
  if (parsed == 0) return std::nullopt;
  return 100.0 * n_correct / parsed;
}

std::vector<AccuracyCell> accuracy_matrix(const std::vector<ScoredRecord>& records,
                                          const InstanceIndex& instances, const GroupBy& by) {
  // Buckets sort numerically by their lower bound.
  using Key = std::tuple<std::string, std::string, std::string, int, int, std::string, int>;
  std::map<Key, AccuracyCell> cells;
  for (const auto& r : records) {
    const auto& inst = lookup(instances, r.instance_id);
    AccuracyCell proto;
    proto.backend = r.backend;
    proto.task = by.task ? inst.task.label() : "*";
    proto.alphabet = by.alphabet ? inst.alphabet : "*";
    proto.format = inst.format;
    proto.bucket = by.bucket ? inst.length_bucket.label() : "*";
    proto.variant = r.variant;
    const Key key{proto.backend, proto.task, proto.alphabet,
                  by.format ? static_cast<int>(inst.format) : -1,
                  by.bucket ? inst.length_bucket.lo : -1, proto.bucket,
                  by.variant ? static_cast<int>(r.variant) : -1};
    auto [it, inserted] = cells.emplace(key, proto);
    auto& cell = it->second;
    ++cell.n;
    if (r.verdict.kind == parse::VerdictKind::kCorrect) ++cell.n_correct;
    if (r.verdict.kind == parse::VerdictKind::kUnparseable) ++cell.n_unparseable;
  }
  std::vector<AccuracyCell> out;
  out.reserve(cells.size());
  for (auto& [key, cell] : cells) out.push_back(std::move(cell));
  return out;
}

std::vector<DeltaTok> delta_tok(const std::vector<AccuracyCell>& cells, FormatType atomic,
                                FormatType merged, std::vector<std::string>* warnings) {
  std::map<GroupKey, std::map<FormatType, Counts>> groups;
  for (const auto& c : cells) groups[group_of(c)][c.format] = {c.n, c.n_correct};
  return pair_deltas(groups, atomic, merged, warnings);
}

std::vector<DeltaTok> delta_tok_pooled(const std::vector<AccuracyCell>& cells, FormatType atomic,
                                       FormatType merged, std::vector<std::string>* warnings) {
  std::map<GroupKey, std::map<FormatType, Counts>> groups;
  for (const auto& c : cells) {
    auto key = group_of(c);
    std::get<3>(key) = "all";
    auto& counts = groups[key][c.format];
    counts.n += c.n;
    counts.correct += c.n_correct;
  }
  return pair_deltas(groups, atomic, merged, warnings);
}

std::vector<DeltaTok> delta_tok_max(const std::vector<AccuracyCell>& cells) {
  std::map<GroupKey, std::map<FormatType, Counts>> groups;
  for (const auto& c : cells) groups[group_of(c)][c.format] = {c.n, c.n_correct};
  std::vector<DeltaTok> out;
  for (const auto& [key, by_format] : groups) {
    if (by_format.size() < 2) continue;
    auto less = [](const auto& x, const auto& y) {
      // x.correct/x.n < y.correct/y.n without division
      return static_cast<long double>(x.second.correct) * y.second.n <
             static_cast<long double>(y.second.correct) * x.second.n;
    };
    const auto best = std::max_element(by_format.begin(), by_format.end(), less);
    const auto worst = std::min_element(by_format.begin(), by_format.end(), less);
    const auto& [backend, task, alphabet, bucket, variant] = key;
    out.push_back({backend, task, alphabet, bucket, variant, best->first, worst->first,
                   gap(best->second, worst->second)});
  }
  return out;
}

std::size_t ErrorShift::total() const {
  std::size_t t = 0;
  for (const auto& [shift, count] : histogram) t += count;
  return t;
}

std::optional<double> ErrorShift::mean() const {
  const std::size_t t = total();
  if (t == 0) return std::nullopt;
  long double sum = 0;
  for (const auto& [shift, count] : histogram) sum += static_cast<long double>(shift) * count;
  return static_cast<double>(sum / t);
}

ErrorShift error_shift(const std::vector<ScoredRecord>& records, const InstanceIndex& instances,
                       std::optional<FormatType> format) {
  ErrorShift es;
  for (const auto& r : records) {
    if (r.verdict.kind != parse::VerdictKind::kIncorrect) continue;
    const auto& inst = lookup(instances, r.instance_id);
    if (inst.task.type != taskgen::TaskType::kCounting) continue;
    if (format && inst.format != *format) continue;
    const auto* predicted = std::get_if<long long>(&r.verdict.predicted);
    const auto* gold = std::get_if<long long>(&inst.gold);
    if (!predicted || !gold || *predicted == *gold) continue;
    ++es.histogram[*predicted - *gold];
  }
  return es;
}

FrequencyTable parse_frequency_table(std::string_view text) {
  FrequencyTable table;
  std::size_t offset = 0;
  std::istringstream in{std::string(text)};
  std::string line;
  while (std::getline(in, line)) {
    const std::size_t line_offset = offset;
    offset += line.size() + 1;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty() || line[0] == '#') continue;
    const auto tab = line.find('\t');
    if (tab == std::string::npos || tab == 0) {
      throw ParseError("frequency line must be LETTER<TAB>PERCENT", line_offset);
    }
    double value = 0;
    try {
      std::size_t used = 0;
      value = std::stod(line.substr(tab + 1), &used);
      if (used != line.size() - tab - 1) throw std::invalid_argument("trailing text");
    } catch (const std::exception&) {
      throw ParseError("bad frequency value", line_offset + tab + 1);
    }
    if (!(value >= 0)) throw ParseError("frequency must be >= 0", line_offset + tab + 1);
    table[line.substr(0, tab)] = value;
  }
  return table;
}

FrequencyTable load_frequency_table(const std::string& path) {
  return parse_frequency_table(read_text_file(path));
}

std::optional<double> pearson(const std::vector<double>& x, const std::vector<double>& y) {
  if (x.size() != y.size() || x.size() < 2) return std::nullopt;
  const double n = static_cast<double>(x.size());
  const double mx = std::accumulate(x.begin(), x.end(), 0.0) / n;
  const double my = std::accumulate(y.begin(), y.end(), 0.0) / n;
  double sxy = 0, sxx = 0, syy = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sxy += (x[i] - mx) * (y[i] - my);
    sxx += (x[i] - mx) * (x[i] - mx);
    syy += (y[i] - my) * (y[i] - my);
  }
  if (sxx == 0 || syy == 0) return std::nullopt;
  return sxy / std::sqrt(sxx * syy);
}

std::optional<double> spearman(const std::vector<double>& x, const std::vector<double>& y) {
  if (x.size() != y.size()) return std::nullopt;
  return pearson(average_ranks(x), average_ranks(y));
}

Correlation frequency_correlation(const std::map<std::string, double>& per_letter_accuracy,
                                  const FrequencyTable& freq) {
  std::vector<double> f, err;
  for (const auto& [letter, acc] : per_letter_accuracy) {
    auto it = freq.find(letter);
    if (it == freq.end()) continue;
    f.push_back(it->second);
    err.push_back(100.0 - acc);
  }
  if (f.size() < 3) {
    throw InvalidInput("frequency correlation needs at least 3 shared letters, got " +
                       std::to_string(f.size()));
  }
  return {f.size(), pearson(f, err), spearman(f, err)};
}

std::string format_pct(double value) {
  const double rounded = std::round(value * 100.0) / 100.0;
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.2f", rounded == 0.0 ? 0.0 : rounded);
  return buf;
}

Report build_report(const std::vector<ScoredRecord>& records, const InstanceIndex& instances,
                    const FrequencyTable* freq) {
  Report rep;
  rep.cells = accuracy_matrix(records, instances);
  rep.delta_max = delta_tok_max(rep.cells);
  rep.delta_pair = delta_tok(rep.cells, FormatType::kD, FormatType::kA, &rep.warnings);
  rep.delta_pooled = delta_tok_pooled(rep.cells, FormatType::kD, FormatType::kA, nullptr);
  for (const auto& r : records) rep.backends[r.backend] = rep.backends[r.backend] || is_synthetic(r.model);

  std::map<Report::LetterKey, std::map<std::string, Counts>> letters;
  for (const auto& c : rep.cells) {
    if (c.task.rfind("counting:", 0) != 0) continue;
    auto& counts = letters[{c.alphabet, c.format}][c.task.substr(9)];
    counts.n += c.n;
    counts.correct += c.n_correct;
    if (!rep.error_shifts.count(c.format)) {
      rep.error_shifts[c.format] = error_shift(records, instances, c.format);
    }
  }
  for (const auto& [key, by_letter] : letters) {
    for (const auto& [letter, counts] : by_letter) {
      rep.per_letter_accuracy[key][letter] = 100.0 * counts.correct / counts.n;
    }
    // Fewer than three counted letters is the common case (ab, ez grids).
    if (!freq || by_letter.size() < 3) continue;
    try {
      rep.correlations[key] = frequency_correlation(rep.per_letter_accuracy[key], *freq);
    } catch (const InvalidInput& e) {
      rep.warnings.push_back(key.first + " format (" + fmt_name(key.second) + "): " + e.what());
    }
  }
  return rep;
}

ReportFormat report_format_from_name(std::string_view name) {
  if (name == "table" || name == "table-text" || name == "text") return ReportFormat::kTableText;
  if (name == "csv") return ReportFormat::kCsv;
  if (name == "json") return ReportFormat::kJson;
  throw ConfigError("unknown report format: " + std::string(name));
}

namespace {

std::string render_json(const Report& rep) {
  nlohmann::json j;
  j["cells"] = nlohmann::json::array();
  for (const auto& c : rep.cells) j["cells"].push_back(to_json(c));
  for (const auto* list : {&rep.delta_max, &rep.delta_pair, &rep.delta_pooled}) {
    const char* name = list == &rep.delta_max    ? "delta_tok_max"
                       : list == &rep.delta_pair ? "delta_tok"
                                                 : "delta_tok_pooled";
    j[name] = nlohmann::json::array();
    for (const auto& d : *list) j[name].push_back(to_json(d));
  }
  j["error_shift"] = nlohmann::json::object();
  for (const auto& [format, es] : rep.error_shifts) {
    nlohmann::json hist = nlohmann::json::object();
    for (const auto& [shift, count] : es.histogram) hist[std::to_string(shift)] = count;
    j["error_shift"][fmt_name(format)] = {
        {"histogram", hist}, {"total", es.total()}, {"mean", optional_json(es.mean())}};
  }
  j["per_letter_accuracy"] = nlohmann::json::object();
  for (const auto& [key, by_letter] : rep.per_letter_accuracy) {
    j["per_letter_accuracy"][key.first][fmt_name(key.second)] = by_letter;
  }
  j["frequency_correlation"] = nlohmann::json::object();
  for (const auto& [key, c] : rep.correlations) {
    j["frequency_correlation"][key.first][fmt_name(key.second)] = {
        {"n", c.n}, {"pearson", optional_json(c.pearson)}, {"spearman", optional_json(c.spearman)}};
  }
  j["backends"] = nlohmann::json::object();
  for (const auto& [label, synthetic] : rep.backends) {
    j["backends"][label] = {{"synthetic", synthetic}};
  }
  j["warnings"] = rep.warnings;
  return j.dump(2) + "\n";
}

std::string render_csv(const Report& rep) {
  std::string out =
      "backend,task,alphabet,format,bucket,variant,n,n_correct,n_unparseable,accuracy,accuracy_parsed\n";
  for (const auto& c : rep.cells) {
    const auto parsed = c.accuracy_parsed();
    out += csv_field(c.backend) + "," + csv_field(c.task) + "," + csv_field(c.alphabet) + "," +
           fmt_name(c.format) + "," + c.bucket + "," + std::string(prompts::variant_name(c.variant)) +
           "," + std::to_string(c.n) + "," + std::to_string(c.n_correct) + "," +
           std::to_string(c.n_unparseable) + "," + format_pct(c.accuracy()) + "," +
           (parsed ? format_pct(*parsed) : "") + "\n";
  }
  return out;
}

std::string render_table(const Report& rep) {
  // One block per (backend, task, alphabet); columns are bucket/variant.
  using BlockKey = std::tuple<std::string, std::string, std::string>;
  struct Block {
    std::vector<std::pair<std::string, PromptVariant>> columns;
    std::map<std::pair<FormatType, std::size_t>, const AccuracyCell*> cells;
    std::map<std::size_t, std::string> delta;
  };
  std::map<BlockKey, Block> blocks;
  std::vector<BlockKey> order;
  for (const auto& c : rep.cells) {
    BlockKey key{c.backend, c.task, c.alphabet};
    if (!blocks.count(key)) order.push_back(key);
    auto& b = blocks[key];
    const std::pair col{c.bucket, c.variant};
    auto it = std::find(b.columns.begin(), b.columns.end(), col);
    std::size_t idx = static_cast<std::size_t>(it - b.columns.begin());
    if (it == b.columns.end()) b.columns.push_back(col);
    b.cells[{c.format, idx}] = &c;
  }
  for (const auto& d : rep.delta_max) {
    auto& b = blocks[{d.backend, d.task, d.alphabet}];
    const std::pair col{d.bucket, d.variant};
    auto it = std::find(b.columns.begin(), b.columns.end(), col);
    if (it != b.columns.end()) b.delta[static_cast<std::size_t>(it - b.columns.begin())] = format_pct(d.value);
  }

  std::ostringstream out;
  for (const auto& key : order) {
    const auto& [backend, task, alphabet] = key;
    const auto& b = blocks.at(key);
    const bool synthetic = rep.backends.count(backend) && rep.backends.at(backend);
    out << "task " << task << "  alphabet " << alphabet << "  backend " << backend
        << (synthetic ? "  [SYNTHETIC: simulated solver, not model results]" : "") << "\n";
    const std::size_t label_w = 14;
    std::vector<std::size_t> widths;
    out << pad_right("format", label_w);
    for (const auto& [bucket, variant] : b.columns) {
      const std::string h = bucket + " " + std::string(prompts::variant_name(variant));
      widths.push_back(std::max<std::size_t>(h.size(), 6) + 2);
      out << pad_right(h, widths.back());
    }
    out << "\n";
    for (FormatType f : taskgen::kAllFormats) {
      bool any = false;
      for (std::size_t i = 0; i < b.columns.size(); ++i) any = any || b.cells.count({f, i});
      if (!any) continue;
      out << pad_right("(" + fmt_name(f) + ")", label_w);
      for (std::size_t i = 0; i < b.columns.size(); ++i) {
        auto it = b.cells.find({f, i});
        out << pad_right(it == b.cells.end() ? "-" : format_pct(it->second->accuracy()), widths[i]);
      }
      out << "\n";
    }
    out << pad_right("Δ_tok [max]", label_w);
    for (std::size_t i = 0; i < b.columns.size(); ++i) {
      auto it = b.delta.find(i);
      out << pad_right(it == b.delta.end() ? "-" : it->second, widths[i]);
    }
    out << "\n\n";
  }

  std::size_t unparseable = 0;
  for (const auto& c : rep.cells) unparseable += c.n_unparseable;
  out << "unparseable responses (counted as wrong): " << unparseable << "\n";

  for (const auto& [format, es] : rep.error_shifts) {
    out << "error shift (" << fmt_name(format) << "): failures " << es.total();
    if (auto m = es.mean()) out << ", mean " << format_pct(*m);
    out << "\n";
    for (const auto& [shift, count] : es.histogram) {
      out << "  " << (shift > 0 ? "+" : "") << shift << "  " << count << "\n";
    }
  }
  for (const auto& [key, c] : rep.correlations) {
    out << "frequency vs error rate, " << key.first << " (" << fmt_name(key.second) << "): letters " << c.n << ", pearson "
        << (c.pearson ? format_pct(*c.pearson) : "n/a") << ", spearman "
        << (c.spearman ? format_pct(*c.spearman) : "n/a") << "\n";
  }
  for (const auto& w : rep.warnings) out << "warning: " << w << "\n";
  return out.str();
}

}  // namespace

std::string render_report(const Report& report, ReportFormat format) {
  if (report.cells.empty()) throw InvalidInput("report has no accuracy cells");
  switch (format) {
    case ReportFormat::kTableText: return render_table(report);
    case ReportFormat::kCsv: return render_csv(report);
    case ReportFormat::kJson: return render_json(report);
  }
  return {};
}

std::vector<DeltaCheck> check_printed_deltas(const std::vector<PrintedColumn>& columns,
                                             std::size_t instances_per_cell) {
  if (instances_per_cell == 0) throw InvalidInput("instances_per_cell must be >= 1");
  std::vector<DeltaCheck> out;
  for (const auto& col : columns) {
    std::vector<AccuracyCell> cells;
    for (const auto& [format, printed] : col.accuracy) {
      const long long centi = centi_from_printed(printed);
      const long long scaled = centi * static_cast<long long>(instances_per_cell);
      if (centi > 10000 || scaled % 10000 != 0) {
        throw InvalidInput(col.label + ": accuracy " + printed + " is not a whole number of " +
                           std::to_string(instances_per_cell) + " instances");
      }
      AccuracyCell c;
      c.task = col.label;
      c.format = format;
      c.n = instances_per_cell;
      c.n_correct = static_cast<std::size_t>(scaled / 10000);
      cells.push_back(c);
    }
    const auto deltas = delta_tok_max(cells);
    DeltaCheck check{col.label, col.printed_delta_max, deltas.empty() ? "" : format_pct(deltas[0].value), false};
    check.matches = !deltas.empty() && check.recomputed == col.printed_delta_max;
    out.push_back(std::move(check));
  }
  return out;
}

}  // namespace tokprobe::metrics
