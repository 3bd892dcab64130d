// tokprobe: command-line front end. Exit status 0 on success, 2 for usage or
// configuration errors, 1 for any other failure.

#include <CLI11.hpp>

#include <cstdio>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "tokprobe/common.hpp"
#include "tokprobe/jsonl.hpp"
#include "tokprobe/metrics.hpp"
#include "tokprobe/pipeline.hpp"
#include "tokprobe/prompts.hpp"
#include "tokprobe/runner.hpp"
#include "tokprobe/taskgen.hpp"
#include "tokprobe/tokenizer.hpp"

namespace {

using namespace tokprobe;

void emit(const std::string& text, const std::string& out) {
  if (out.empty() || out == "-") {
    std::cout << text;
    std::cout.flush();
  } else {
    write_text_file_atomic(out, text);
  }
}

struct GenerateArgs {
  std::string task;
  std::string target;
  std::string alphabet = "ab";
  std::string bucket;
  std::size_t n = 0;
  std::vector<std::string> formats;
  std::uint64_t seed = 0;
  std::string words;
  std::string out;
};

int cmd_generate(const GenerateArgs& a) {
  taskgen::TaskKind task;
  if (a.task.find(':') != std::string::npos) {
    task = taskgen::TaskKind::from_label(a.task);
  } else {
    task.type = taskgen::task_type_from_name(a.task);
    task.target = a.target;
  }
  if (task.type == taskgen::TaskType::kCounting && task.target.empty()) {
    throw ConfigError("counting needs --target (or --task counting:X)");
  }
  const auto [lo, hi] = pipeline::parse_bucket_range(a.bucket);
  const auto bucket = taskgen::bucket_for(task.type, lo, hi);
  taskgen::WordList words;
  if (a.alphabet == "word" || a.alphabet == "hfword") {
    words = taskgen::load_word_list(a.words.empty() ? pipeline::default_words_path() : a.words);
  }
  const auto alphabet = taskgen::resolve_alphabet(a.alphabet, &words);
  std::vector<nlohmann::json> rows;
  for (const auto& f : a.formats) {
    for (const auto& inst :
         taskgen::generate(task, alphabet, bucket, a.n, taskgen::format_from_letter(f), a.seed)) {
      rows.push_back(taskgen::to_json(inst));
    }
  }
  emit(dump_jsonl(rows), a.out);
  return 0;
}

struct TokenizeArgs {
  std::string merges;
  std::string text;
  std::vector<std::string> units;
};

int cmd_tokenize(const TokenizeArgs& a) {
  const auto table = tokenizer::read_merges(a.merges);
  const auto view = tokenizer::encode(table, a.text);
  nlohmann::json j;
  j["tokens"] = view.tokens;
  j["boundaries"] = nlohmann::json::array();
  for (const auto& b : view.boundaries) j["boundaries"].push_back({b.start, b.end});
  if (!a.units.empty()) {
    const auto rep = tokenizer::alignment_report(view, a.units);
    j["alignment"] = {{"per_unit_aligned", rep.per_unit_aligned},
                      {"merged_unit_count", rep.merged_unit_count},
                      {"split_unit_count", rep.split_unit_count}};
  }
  std::cout << j.dump() << "\n";
  return 0;
}

struct TrainArgs {
  std::string corpus;
  std::size_t merges = 1000;
  bool no_pretokenize = false;
  bool builtin = false;
  std::string words;
  std::string out;
};

int cmd_train(const TrainArgs& a) {
  tokenizer::MergeTable table;
  if (a.builtin) {
    table = pipeline::sim_table("", a.words);
  } else {
    if (a.corpus.empty()) throw ConfigError("train-bpe needs --corpus or --builtin");
    std::vector<std::string> corpus;
    std::string text = read_text_file(a.corpus);
    std::size_t start = 0;
    while (start <= text.size()) {
      auto end = text.find('\n', start);
      if (end == std::string::npos) end = text.size();
      if (end > start) corpus.push_back(text.substr(start, end - start));
      start = end + 1;
    }
    table = tokenizer::train_bpe(corpus, a.merges, !a.no_pretokenize);
  }
  emit(tokenizer::format_merges(table), a.out);
  return 0;
}

struct RenderArgs {
  std::string instances;
  std::vector<std::string> variants;
  std::string templates;
  std::string out;
};

int cmd_render(const RenderArgs& a) {
  const auto templates = prompts::TemplateSet::load(
      a.templates.empty() ? pipeline::default_templates_dir() : a.templates);
  std::vector<prompts::PromptBundle> bundles;
  std::size_t skipped = 0;
  for (const auto& inst : taskgen::read_instances(a.instances)) {
    for (const auto& name : a.variants) {
      const auto v = prompts::variant_from_name(name);
      if (!prompts::variant_applicable(inst.task.type, v)) {
        ++skipped;
        continue;
      }
      bundles.push_back(prompts::render_prompt(templates, inst, v));
    }
  }
  if (skipped) {
    std::cerr << "render-prompt: skipped " << skipped
              << " instance/variant pairs whose task has no such template\n";
  }
  std::vector<nlohmann::json> rows;
  for (const auto& b : bundles) rows.push_back(prompts::to_json(b));
  emit(dump_jsonl(rows), a.out);
  return 0;
}

struct RunArgs {
  std::string bundles;
  std::string backend;
  std::string config;
  std::string instances;
  std::string cache;
  std::string merges;
  std::string words;
  std::optional<int> max_parallel;
  std::string out;
};

int cmd_run(const RunArgs& a) {
  runner::BackendConfig cfg;
  if (!a.config.empty()) cfg = pipeline::load_backend_config(a.config);
  if (a.backend == "http") {
    cfg.kind = runner::BackendKind::kHttpChat;
  } else if (a.backend == "sim") {
    cfg.kind = runner::BackendKind::kSimulated;
  }
  if (a.max_parallel) cfg.max_parallel = *a.max_parallel;
  if (!a.merges.empty()) cfg.sim_merges = a.merges;
  cfg.validate();

  std::vector<taskgen::Instance> instances;
  if (cfg.kind == runner::BackendKind::kSimulated) {
    if (a.instances.empty()) throw ConfigError("the simulated backend needs --instances");
    instances = taskgen::read_instances(a.instances);
  }
  const auto bundles = prompts::read_bundles(a.bundles);
  auto backend = pipeline::make_backend(cfg, instances, cfg.sim_merges, a.words);
  std::optional<runner::ResultCache> cache;
  if (!a.cache.empty()) cache.emplace(a.cache);
  runner::RunStats stats;
  const auto runs = runner::run_batch(bundles, *backend, cfg, cache ? &*cache : nullptr, &stats);
  std::vector<nlohmann::json> rows;
  for (const auto& r : runs) rows.push_back(runner::to_json(r));
  emit(dump_jsonl(rows), a.out);
  std::cerr << "run: " << runs.size() << " records, " << stats.requests << " backend calls, "
            << stats.cache_hits << " cache hits, " << stats.deduplicated << " deduplicated, "
            << stats.failed << " failed\n";
  return 0;
}

struct ScoreArgs {
  std::string runs;
  std::string instances;
  std::string out;
};

int cmd_score(const ScoreArgs& a) {
  const auto index = metrics::index_instances(taskgen::read_instances(a.instances));
  const auto verdicts = metrics::score(runner::read_runs(a.runs), index);
  std::vector<nlohmann::json> rows;
  for (const auto& v : verdicts) rows.push_back(metrics::to_json(v));
  emit(dump_jsonl(rows), a.out);
  return 0;
}

struct ReportArgs {
  std::string verdicts;
  std::string instances;
  std::string format = "table";
  std::string freq_table;
  std::string out;
};

int cmd_report(const ReportArgs& a) {
  const auto format = metrics::report_format_from_name(a.format);
  const auto index = metrics::index_instances(taskgen::read_instances(a.instances));
  std::optional<metrics::FrequencyTable> freq;
  if (!a.freq_table.empty()) freq = metrics::load_frequency_table(a.freq_table);
  const auto report =
      metrics::build_report(metrics::read_verdicts(a.verdicts), index, freq ? &*freq : nullptr);
  emit(metrics::render_report(report, format), a.out);
  return 0;
}

struct PipelineArgs {
  std::string config;
  std::optional<std::size_t> n;
  std::optional<std::uint64_t> seed;
  std::string output_dir;
  std::string cache_dir;
  std::string backend;
  std::optional<int> max_parallel;
};

int cmd_pipeline(const PipelineArgs& a) {
  auto cfg = pipeline::load_config(a.config);
  if (a.n) cfg.n = *a.n;
  if (a.seed) cfg.seed = *a.seed;
  if (!a.output_dir.empty()) cfg.output_dir = a.output_dir;
  if (!a.cache_dir.empty()) cfg.cache_dir = a.cache_dir;
  if (a.backend == "http") cfg.backend.kind = runner::BackendKind::kHttpChat;
  if (a.backend == "sim") cfg.backend.kind = runner::BackendKind::kSimulated;
  if (a.max_parallel) cfg.backend.max_parallel = *a.max_parallel;
  const auto result = pipeline::run_pipeline(cfg);
  for (const auto& p : result.artifacts) std::cout << p << "\n";
  std::cerr << "pipeline: " << result.stats.requests << " backend calls, "
            << result.stats.cache_hits << " cache hits, " << result.stats.failed << " failed\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Probe how string tokenization affects symbolic reasoning in language models."};
  app.require_subcommand(1);
  app.set_version_flag("--version", "tokprobe 0.1.0");

  GenerateArgs gen;
  auto* generate = app.add_subcommand("generate", "Generate task instances as JSON Lines");
  generate->add_option("--task", gen.task, "counting, sorting, reversing, or counting:X")->required();
  generate->add_option("--target", gen.target, "Unit to count (counting only)");
  generate->add_option("--alphabet", gen.alphabet,
                       "ab, ez, zbre, random, letter, digit, letter_digit, word, hfword, chars:XYZ")
      ->capture_default_str();
  generate->add_option("--bucket", gen.bucket, "Length range LO:HI")->required();
  generate->add_option("--n", gen.n, "Instances per format")->required()->check(CLI::PositiveNumber);
  generate->add_option("--format", gen.formats, "Rendering format(s): a, b, c, d")
      ->required()
      ->delimiter(',')
      ->check(CLI::IsMember({"a", "b", "c", "d"}));
  generate->add_option("--seed", gen.seed, "Random seed")->capture_default_str();
  generate->add_option("--words", gen.words, "Word list for word alphabets");
  generate->add_option("--out", gen.out, "Output file (default stdout)");

  TokenizeArgs tok;
  auto* tokenize = app.add_subcommand("tokenize", "Encode text with a merges file and report alignment");
  tokenize->add_option("--merges", tok.merges, "Merges file")->required()->check(CLI::ExistingFile);
  tokenize->add_option("--text", tok.text, "Text to encode")->required();
  tokenize->add_option("--units", tok.units, "Atomic units of the text, in order");

  TrainArgs train;
  auto* train_cmd = app.add_subcommand("train-bpe", "Train a merges file");
  auto* corpus_opt = train_cmd->add_option("--corpus", train.corpus, "Training text, one string per line")
                         ->check(CLI::ExistingFile);
  train_cmd->add_option("--merges", train.merges, "Number of merges")->capture_default_str();
  train_cmd->add_flag("--no-pretokenize", train.no_pretokenize, "Let merges cross whitespace");
  train_cmd->add_flag("--builtin", train.builtin, "Emit the simulated backend's built-in table")
      ->excludes(corpus_opt);
  train_cmd->add_option("--words", train.words, "Word list mixed into the built-in table");
  train_cmd->add_option("--out", train.out, "Output file (default stdout)");

  RenderArgs render;
  auto* render_cmd = app.add_subcommand("render-prompt", "Render prompts for instances");
  render_cmd->add_option("--instance-file", render.instances, "Instances JSON Lines")
      ->required()
      ->check(CLI::ExistingFile);
  render_cmd->add_option("--variant", render.variants, "Prompt variant(s): base, cot, scot")
      ->required()
      ->delimiter(',')
      ->check(CLI::IsMember({"base", "cot", "scot"}));
  render_cmd->add_option("--templates", render.templates, "Template directory");
  render_cmd->add_option("--out", render.out, "Output file (default stdout)");

  RunArgs run;
  auto* run_cmd = app.add_subcommand("run", "Send prompt bundles to a backend");
  run_cmd->add_option("--bundles", run.bundles, "Prompt bundles JSON Lines")
      ->required()
      ->check(CLI::ExistingFile);
  run_cmd->add_option("--backend", run.backend, "http or sim (overrides the config kind)")
      ->check(CLI::IsMember({"http", "sim"}));
  run_cmd->add_option("--config", run.config, "Backend config JSON")->check(CLI::ExistingFile);
  run_cmd->add_option("--instances", run.instances, "Instances JSON Lines (sim backend)")
      ->check(CLI::ExistingFile);
  run_cmd->add_option("--cache", run.cache, "Response cache directory");
  run_cmd->add_option("--merges", run.merges, "Merges file for the sim backend")
      ->check(CLI::ExistingFile);
  run_cmd->add_option("--words", run.words, "Word list for the built-in sim table");
  run_cmd->add_option("--max-parallel", run.max_parallel, "Concurrent requests")
      ->check(CLI::PositiveNumber);
  run_cmd->add_option("--out", run.out, "Output file (default stdout)");

  ScoreArgs sc;
  auto* score_cmd = app.add_subcommand("score", "Parse and judge run records");
  score_cmd->add_option("--runs", sc.runs, "Run records JSON Lines")->required()->check(CLI::ExistingFile);
  score_cmd->add_option("--instances", sc.instances, "Instances JSON Lines")
      ->required()
      ->check(CLI::ExistingFile);
  score_cmd->add_option("--out", sc.out, "Output file (default stdout)");

  ReportArgs rep;
  auto* report_cmd = app.add_subcommand("report", "Aggregate verdicts into accuracy tables");
  report_cmd->add_option("--verdicts", rep.verdicts, "Verdicts JSON Lines")
      ->required()
      ->check(CLI::ExistingFile);
  report_cmd->add_option("--instances", rep.instances, "Instances JSON Lines")
      ->required()
      ->check(CLI::ExistingFile);
  report_cmd->add_option("--format", rep.format, "table, csv or json")
      ->capture_default_str()
      ->check(CLI::IsMember({"table", "table-text", "csv", "json"}));
  report_cmd->add_option("--freq-table", rep.freq_table, "Letter frequency table")
      ->check(CLI::ExistingFile);
  report_cmd->add_option("--out", rep.out, "Output file (default stdout)");

  PipelineArgs pipe;
  auto* pipe_cmd = app.add_subcommand("pipeline", "Run generate, render, run, score and report");
  pipe_cmd->add_option("--config", pipe.config, "Experiment config JSON")
      ->required()
      ->check(CLI::ExistingFile);
  pipe_cmd->add_option("--n", pipe.n, "Instances per cell (overrides config)")->check(CLI::PositiveNumber);
  pipe_cmd->add_option("--seed", pipe.seed, "Seed (overrides config)");
  pipe_cmd->add_option("--output-dir", pipe.output_dir, "Output directory (overrides config)");
  pipe_cmd->add_option("--cache-dir", pipe.cache_dir, "Cache directory (overrides config)");
  pipe_cmd->add_option("--backend", pipe.backend, "http or sim (overrides config)")
      ->check(CLI::IsMember({"http", "sim"}));
  pipe_cmd->add_option("--max-parallel", pipe.max_parallel, "Concurrent requests")
      ->check(CLI::PositiveNumber);

  try {
    app.parse(argc, argv);
  } catch (const CLI::Success& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;
  }

  try {
    if (generate->parsed()) return cmd_generate(gen);
    if (tokenize->parsed()) return cmd_tokenize(tok);
    if (train_cmd->parsed()) return cmd_train(train);
    if (render_cmd->parsed()) return cmd_render(render);
    if (run_cmd->parsed()) return cmd_run(run);
    if (score_cmd->parsed()) return cmd_score(sc);
    if (report_cmd->parsed()) return cmd_report(rep);
    if (pipe_cmd->parsed()) return cmd_pipeline(pipe);
  } catch (const ConfigError& e) {
    std::cerr << "configuration error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 2;
}
