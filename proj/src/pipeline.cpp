#include "tokprobe/pipeline.hpp"

#include <algorithm>
#include <cstdlib>
#include <filesystem>
#include <set>

#include "tokprobe/common.hpp"
#include "tokprobe/jsonl.hpp"
#include "tokprobe/metrics.hpp"

#ifndef TOKPROBE_DATA_DIR
#define TOKPROBE_DATA_DIR "."
#endif

namespace tokprobe::pipeline {

namespace fs = std::filesystem;
using taskgen::TaskType;

namespace {

std::string resolve(const std::string& base_dir, const std::string& path) {
  if (path.empty() || fs::path(path).is_absolute() || base_dir.empty()) return path;
  return (fs::path(base_dir) / path).lexically_normal().string();
}

void require_file(const std::string& path, const std::string& what) {
  if (!path.empty() && !fs::exists(path)) throw ConfigError(what + " not found: " + path);
}

template <typename T>
std::vector<T> string_list(const nlohmann::json& j, const char* key) {
  if (!j.contains(key)) throw ConfigError(std::string("experiment is missing \"") + key + "\"");
  const auto& v = j.at(key);
  if (!v.is_array()) throw ConfigError(std::string("\"") + key + "\" must be a list");
  std::vector<T> out;
  for (const auto& e : v) {
    if (!e.is_string()) throw ConfigError(std::string("\"") + key + "\" entries must be strings");
    out.push_back(e.get<std::string>());
  }
  return out;
}

void reject_unknown(const nlohmann::json& j, const std::set<std::string>& known, const char* where) {
  for (const auto& [key, value] : j.items()) {
    if (!known.count(key)) throw ConfigError(std::string("unknown key \"") + key + "\" in " + where);
  }
}

ExperimentSpec experiment_from_json(const nlohmann::json& j) {
  if (!j.is_object()) throw ConfigError("each experiment must be an object");
  reject_unknown(j, {"task", "targets", "alphabet", "buckets", "formats", "variants"}, "experiment");
  ExperimentSpec e;
  try {
    e.task = taskgen::task_type_from_name(j.at("task").get<std::string>());
    e.alphabet = j.at("alphabet").get<std::string>();
  } catch (const nlohmann::json::exception&) {
    throw ConfigError("experiment needs string fields \"task\" and \"alphabet\"");
  } catch (const InvalidInput& err) {
    throw ConfigError(err.what());
  }
  if (j.contains("targets")) e.targets = string_list<std::string>(j, "targets");
  for (const auto& b : string_list<std::string>(j, "buckets")) {
    try {
      const auto [lo, hi] = parse_bucket_range(b);
      e.buckets.push_back(taskgen::bucket_for(e.task, lo, hi));
    } catch (const InvalidInput& err) {
      throw ConfigError(err.what());
    }
  }
  for (const auto& f : string_list<std::string>(j, "formats")) {
    try {
      e.formats.push_back(taskgen::format_from_letter(f));
    } catch (const InvalidInput&) {
      throw ConfigError("unknown format \"" + f + "\" (expected a, b, c or d)");
    }
  }
  for (const auto& v : string_list<std::string>(j, "variants")) {
    try {
      e.variants.push_back(prompts::variant_from_name(v));
    } catch (const InvalidInput&) {
      throw ConfigError("unknown prompt variant \"" + v + "\"");
    }
  }
  return e;
}

}  // namespace

std::string default_data_dir() {
  if (const char* env = std::getenv("TOKPROBE_DATA_DIR"); env && *env) return env;
  return TOKPROBE_DATA_DIR;
}
std::string default_templates_dir() { return (fs::path(default_data_dir()) / "templates").string(); }
std::string default_words_path() { return (fs::path(default_data_dir()) / "data" / "words_en.tsv").string(); }
std::string default_freq_path() { return (fs::path(default_data_dir()) / "data" / "letter_freq.tsv").string(); }

std::vector<taskgen::TaskKind> ExperimentSpec::task_kinds() const {
  switch (task) {
    case TaskType::kCounting: {
      std::vector<taskgen::TaskKind> out;
      for (const auto& t : targets) out.push_back(taskgen::TaskKind::counting(t));
      return out;
    }
    case TaskType::kSorting: return {taskgen::TaskKind::sorting()};
    case TaskType::kReversing: return {taskgen::TaskKind::reversing()};
  }
  return {};
}

void ExperimentConfig::validate() const {
  if (n < 1) throw ConfigError("n must be >= 1");
  if (experiments.empty()) throw ConfigError("config lists no experiments");
  if (output_dir.empty()) throw ConfigError("output_dir is required");
  require_file(templates_dir, "template directory");
  require_file(words_path, "word list");
  require_file(freq_table, "frequency table");
  require_file(merges_path, "merges file");
  backend.validate();
  for (const auto& e : experiments) {
    if (e.buckets.empty() || e.formats.empty() || e.variants.empty()) {
      throw ConfigError("experiment needs at least one bucket, format and variant");
    }
    if (e.task == TaskType::kCounting && e.targets.empty()) {
      throw ConfigError("counting experiment needs \"targets\"");
    }
    if (e.task != TaskType::kCounting && !e.targets.empty()) {
      throw ConfigError("\"targets\" only applies to counting");
    }
    for (auto v : e.variants) {
      if (!prompts::variant_applicable(e.task, v)) {
        throw ConfigError("variant " + std::string(prompts::variant_name(v)) + " does not apply to " +
                          std::string(taskgen::task_type_name(e.task)));
      }
    }
    try {
      const auto words = e.alphabet == "word" || e.alphabet == "hfword"
                             ? taskgen::load_word_list(words_path.empty() ? default_words_path() : words_path)
                             : taskgen::WordList{};
      const auto alphabet = taskgen::resolve_alphabet(e.alphabet, &words);
      for (const auto& t : e.targets) {
        if (std::find(alphabet.units.begin(), alphabet.units.end(), t) == alphabet.units.end()) {
          throw ConfigError("counting target \"" + t + "\" is not in alphabet " + e.alphabet);
        }
      }
    } catch (const InvalidInput& err) {
      throw ConfigError(err.what());
    }
  }
}

std::pair<int, int> parse_bucket_range(std::string_view text) {
  const auto sep = text.find_first_of(":-");
  auto number = [&](std::string_view s) {
    if (s.empty() || s.size() > 9 || s.find_first_not_of("0123456789") != std::string_view::npos) {
      throw InvalidInput("bucket must be LO:HI, got \"" + std::string(text) + "\"");
    }
    return std::stoi(std::string(s));
  };
  if (sep == std::string_view::npos) {
    throw InvalidInput("bucket must be LO:HI, got \"" + std::string(text) + "\"");
  }
  return {number(text.substr(0, sep)), number(text.substr(sep + 1))};
}

ExperimentConfig config_from_json(const nlohmann::json& j, const std::string& base_dir) {
  if (!j.is_object()) throw ConfigError("config must be a JSON object");
  reject_unknown(j,
                 {"experiments", "n", "seed", "backend", "output_dir", "cache_dir", "templates",
                  "words", "freq_table", "merges"},
                 "config");
  ExperimentConfig cfg;
  try {
    if (!j.contains("experiments") || !j.at("experiments").is_array()) {
      throw ConfigError("config needs an \"experiments\" list");
    }
    for (const auto& e : j.at("experiments")) cfg.experiments.push_back(experiment_from_json(e));
    const auto& n = j.value("n", nlohmann::json(1));
    if (!n.is_number_integer() || n.get<long long>() < 1) throw ConfigError("n must be an integer >= 1");
    cfg.n = n.get<std::size_t>();
    cfg.seed = j.value("seed", std::uint64_t{0});
    cfg.output_dir = resolve(base_dir, j.value("output_dir", ""));
    cfg.cache_dir = resolve(base_dir, j.value("cache_dir", ""));
    cfg.templates_dir = resolve(base_dir, j.value("templates", ""));
    cfg.words_path = resolve(base_dir, j.value("words", ""));
    cfg.freq_table = resolve(base_dir, j.value("freq_table", ""));
    cfg.merges_path = resolve(base_dir, j.value("merges", ""));
    if (j.contains("backend")) {
      const auto& b = j.at("backend");
      cfg.backend = b.is_string() ? load_backend_config(resolve(base_dir, b.get<std::string>()))
                                  : runner::backend_config_from_json(b);
    }
    cfg.backend.sim_merges = resolve(base_dir, cfg.backend.sim_merges);
    if (cfg.merges_path.empty()) cfg.merges_path = cfg.backend.sim_merges;
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("malformed config: ") + e.what());
  }
  return cfg;
}

ExperimentConfig load_config(const std::string& path) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(read_text_file(path));
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError("cannot parse config " + path + ": " + e.what());
  } catch (const std::runtime_error& e) {
    throw ConfigError(e.what());
  }
  return config_from_json(j, fs::path(path).parent_path().string());
}

runner::BackendConfig load_backend_config(const std::string& path) {
  try {
    auto cfg = runner::backend_config_from_json(nlohmann::json::parse(read_text_file(path)));
    cfg.sim_merges = resolve(fs::path(path).parent_path().string(), cfg.sim_merges);
    return cfg;
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError("cannot parse backend config " + path + ": " + e.what());
  } catch (const ConfigError&) {
    throw;
  } catch (const std::runtime_error& e) {
    throw ConfigError(e.what());
  }
}

std::uint64_t cell_seed(std::uint64_t seed, const std::string& alphabet,
                        const taskgen::LengthBucket& bucket) {
  return derive_seed(seed, stable_key({alphabet, bucket.label()}));
}

std::vector<taskgen::Instance> generate_instances(const ExperimentConfig& cfg) {
  taskgen::WordList words;
  bool words_loaded = false;
  std::vector<taskgen::Instance> out;
  for (const auto& e : cfg.experiments) {
    if ((e.alphabet == "word" || e.alphabet == "hfword") && !words_loaded) {
      words = taskgen::load_word_list(cfg.words_path.empty() ? default_words_path() : cfg.words_path);
      words_loaded = true;
    }
    const auto alphabet = taskgen::resolve_alphabet(e.alphabet, &words);
    for (const auto& task : e.task_kinds()) {
      for (const auto& bucket : e.buckets) {
        for (auto format : e.formats) {
          auto batch = taskgen::generate(task, alphabet, bucket, cfg.n, format,
                                         cell_seed(cfg.seed, e.alphabet, bucket));
          out.insert(out.end(), std::make_move_iterator(batch.begin()),
                     std::make_move_iterator(batch.end()));
        }
      }
    }
  }
  return out;
}

std::vector<prompts::PromptBundle> render_bundles(const ExperimentConfig& cfg,
                                                  const std::vector<taskgen::Instance>& instances) {
  const auto templates =
      prompts::TemplateSet::load(cfg.templates_dir.empty() ? default_templates_dir() : cfg.templates_dir);
  // Instances appear in experiment order, so each one is matched back to the
  // experiment that produced it by task and alphabet.
  std::vector<prompts::PromptBundle> out;
  for (const auto& e : cfg.experiments) {
    for (const auto& inst : instances) {
      if (inst.task.type != e.task || inst.alphabet != e.alphabet) continue;
      if (std::find(e.formats.begin(), e.formats.end(), inst.format) == e.formats.end()) continue;
      if (std::find(e.buckets.begin(), e.buckets.end(), inst.length_bucket) == e.buckets.end()) continue;
      if (e.task == TaskType::kCounting &&
          std::find(e.targets.begin(), e.targets.end(), inst.task.target) == e.targets.end()) {
        continue;
      }
      for (auto v : e.variants) out.push_back(prompts::render_prompt(templates, inst, v));
    }
  }
  // Overlapping experiments would render the same bundle twice.
  std::set<std::pair<std::string, prompts::PromptVariant>> seen;
  std::vector<prompts::PromptBundle> unique;
  for (auto& b : out) {
    if (seen.emplace(b.instance_id, b.variant).second) unique.push_back(std::move(b));
  }
  return unique;
}

tokenizer::MergeTable sim_table(const std::string& merges_path, const std::string& words_path) {
  if (!merges_path.empty()) return tokenizer::read_merges(merges_path);
  const auto words = taskgen::load_word_list(words_path.empty() ? default_words_path() : words_path);
  return runner::default_sim_table(&words);
}

std::unique_ptr<runner::Backend> make_backend(const runner::BackendConfig& cfg,
                                              const std::vector<taskgen::Instance>& instances,
                                              const std::string& merges_path,
                                              const std::string& words_path) {
  if (cfg.kind == runner::BackendKind::kHttpChat) {
    return std::make_unique<runner::HttpChatBackend>(cfg);
  }
  return std::make_unique<runner::SimulatedBackend>(cfg, sim_table(merges_path, words_path),
                                                    instances);
}

PipelineResult run_pipeline(const ExperimentConfig& cfg) {
  cfg.validate();
  PipelineResult result;
  const fs::path out_dir(cfg.output_dir);
  fs::create_directories(out_dir);
  auto artifact = [&](const char* name) {
    const auto p = (out_dir / name).string();
    result.artifacts.push_back(p);
    return p;
  };

  const auto instances = generate_instances(cfg);
  taskgen::write_instances(instances, artifact("instances.jsonl"));

  const auto bundles = render_bundles(cfg, instances);
  prompts::write_bundles(bundles, artifact("bundles.jsonl"));

  // The backend is built after the cheap stages so that a missing credential
  // still leaves instances and bundles on disk.
  std::unique_ptr<runner::Backend> backend;
  if (cfg.backend.kind == runner::BackendKind::kSimulated) {
    const auto table = sim_table(cfg.merges_path, cfg.words_path);
    tokenizer::write_merges(table, artifact("merges.txt"));
    backend = std::make_unique<runner::SimulatedBackend>(cfg.backend, table, instances);
  } else {
    backend = std::make_unique<runner::HttpChatBackend>(cfg.backend);
  }
  const runner::ResultCache cache(cfg.cache_dir.empty() ? (out_dir / "cache").string() : cfg.cache_dir);
  const auto runs = runner::run_batch(bundles, *backend, cfg.backend, &cache, &result.stats);
  runner::write_runs(runs, artifact("runs.jsonl"));

  const auto index = metrics::index_instances(instances);
  const auto verdicts = metrics::score(runs, index);
  metrics::write_verdicts(verdicts, artifact("verdicts.jsonl"));

  std::optional<metrics::FrequencyTable> freq;
  if (!cfg.freq_table.empty()) freq = metrics::load_frequency_table(cfg.freq_table);
  const auto report = metrics::build_report(verdicts, index, freq ? &*freq : nullptr);
  write_text_file_atomic(artifact("report.txt"),
                         metrics::render_report(report, metrics::ReportFormat::kTableText));
  write_text_file_atomic(artifact("report.csv"),
                         metrics::render_report(report, metrics::ReportFormat::kCsv));
  write_text_file_atomic(artifact("report.json"),
                         metrics::render_report(report, metrics::ReportFormat::kJson));
  return result;
}

}  // namespace tokprobe::pipeline
