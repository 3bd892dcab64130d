#pragma once

#include <cstdint>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "tokprobe/prompts.hpp"
#include "tokprobe/runner.hpp"
#include "tokprobe/taskgen.hpp"

namespace tokprobe::pipeline {

// Installed data directory (templates/, data/) baked in at build time.
std::string default_data_dir();
std::string default_templates_dir();
std::string default_words_path();
std::string default_freq_path();

struct ExperimentSpec {
  taskgen::TaskType task = taskgen::TaskType::kCounting;
  std::vector<std::string> targets;  // counting only
  std::string alphabet;
  std::vector<taskgen::LengthBucket> buckets;
  std::vector<taskgen::FormatType> formats;
  std::vector<prompts::PromptVariant> variants;

  std::vector<taskgen::TaskKind> task_kinds() const;
};

struct ExperimentConfig {
  std::vector<ExperimentSpec> experiments;
  std::size_t n = 0;  // instances per (task, alphabet, bucket, format)
  std::uint64_t seed = 0;
  runner::BackendConfig backend;
  std::string output_dir;
  std::string cache_dir;       // empty = <output_dir>/cache
  std::string templates_dir;   // empty = built-in templates
  std::string words_path;      // empty = built-in word list
  std::string freq_table;      // optional letter-frequency table
  std::string merges_path;     // simulated backend table; empty = built-in

  // Throws ConfigError: n >= 1, formats in a..d, referenced files exist,
  // variants applicable to their task, counting targets given.
  void validate() const;
};

// Relative paths inside the document resolve against `base_dir`. "backend"
// is either an inline object or the path of a backend config file. Unknown
// keys are rejected.
ExperimentConfig config_from_json(const nlohmann::json& j, const std::string& base_dir);
ExperimentConfig load_config(const std::string& path);

runner::BackendConfig load_backend_config(const std::string& path);

// "10:20" or "10-20".
std::pair<int, int> parse_bucket_range(std::string_view text);

// Seed shared by every target and format drawn from one (alphabet, bucket),
// so that the same strings appear under each rendering.
std::uint64_t cell_seed(std::uint64_t seed, const std::string& alphabet,
                        const taskgen::LengthBucket& bucket);

std::vector<taskgen::Instance> generate_instances(const ExperimentConfig& cfg);

// Bundles for every instance and every configured variant of its experiment.
std::vector<prompts::PromptBundle> render_bundles(const ExperimentConfig& cfg,
                                                  const std::vector<taskgen::Instance>& instances);

// Merge table used by the simulated backend: the configured file if any,
// else the built-in table.
tokenizer::MergeTable sim_table(const std::string& merges_path, const std::string& words_path);

std::unique_ptr<runner::Backend> make_backend(const runner::BackendConfig& cfg,
                                              const std::vector<taskgen::Instance>& instances,
                                              const std::string& merges_path,
                                              const std::string& words_path);

struct PipelineResult {
  runner::RunStats stats;
  std::vector<std::string> artifacts;  // files written, in order
};

// generate -> render-prompt -> run -> score -> report. Every stage writes its
// artifact before the next starts, and the response cache makes reruns
// resume where they stopped.
PipelineResult run_pipeline(const ExperimentConfig& cfg);

}  // namespace tokprobe::pipeline
