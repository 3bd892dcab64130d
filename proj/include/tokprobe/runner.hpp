#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "tokprobe/prompts.hpp"
#include "tokprobe/taskgen.hpp"
#include "tokprobe/tokenizer.hpp"

namespace tokprobe::runner {

// Noise model of the synthetic backend. Merged tokens (covering more than one
// unit) may be undercounted; single-unit tokens may slip by one, downward
// twice as often as upward.
struct SimErrorModel {
  double p_merged_miscount = 0.0;
  double p_atomic_slip = 0.0;
  std::size_t max_steps = 100000;

  void validate() const;
};

struct RetryPolicy {
  int max_attempts = 3;
  double backoff_initial_s = 1.0;
  double backoff_factor = 2.0;

  double delay_before_attempt(int attempt) const;  // attempt is 1-based
};

enum class BackendKind { kHttpChat, kSimulated };

struct BackendConfig {
  BackendKind kind = BackendKind::kSimulated;
  std::string label;  // defaults to "http-chat" / "simulated"

  // http-chat
  std::string endpoint;
  std::string model;
  std::string api_key_env = "OPENAI_API_KEY";
  double timeout_s = 120.0;

  // simulated
  SimErrorModel sim;
  std::uint64_t sim_seed = 0;
  std::string sim_merges;  // merges file; empty = built-in table

  double temperature = 0.0;
  int max_parallel = 4;
  RetryPolicy retry;

  void validate() const;
  std::string effective_label() const;
};

BackendConfig backend_config_from_json(const nlohmann::json& j);
nlohmann::json to_json(const BackendConfig& cfg);

struct RunRecord {
  std::string instance_id;
  prompts::PromptVariant variant = prompts::PromptVariant::kBase;
  std::string backend;
  std::string model;
  std::string cache_key;
  std::string request;
  std::string raw_response;
  double latency_ms = 0.0;
  std::string timestamp;
  int attempts = 0;
  bool failed = false;
  std::string error;
};

nlohmann::json to_json(const RunRecord& r);
RunRecord run_record_from_json(const nlohmann::json& j);
std::vector<RunRecord> read_runs(const std::string& path);
void write_runs(const std::vector<RunRecord>& runs, const std::string& path);

struct Completion {
  std::string text;
  double latency_ms = 0.0;
};

class Backend {
 public:
  virtual ~Backend() = default;
  virtual std::string label() const = 0;
  virtual std::string model_name() const = 0;
  // Synthetic backends report zero latency and a fixed epoch timestamp so
  // that their records are reproducible byte for byte.
  virtual bool deterministic() const = 0;
  // Throws on failure; run_batch retries.
  virtual Completion complete(const prompts::PromptBundle& bundle, const std::string& cache_key) = 0;
};

// POST {endpoint}/chat/completions with a bearer token read from the
// environment variable named in the config.
class HttpChatBackend final : public Backend {
 public:
  // Throws ConfigError when the credential variable is unset or empty.
  explicit HttpChatBackend(BackendConfig cfg);

  std::string label() const override { return cfg_.effective_label(); }
  std::string model_name() const override { return cfg_.model; }
  bool deterministic() const override { return false; }
  Completion complete(const prompts::PromptBundle& bundle, const std::string& cache_key) override;

 private:
  BackendConfig cfg_;
  std::string token_;
  std::string host_;       // scheme://host[:port]
  std::string base_path_;  // path prefix without trailing slash
};

// Walks the tokenization of an instance's rendered string and emits a
// supervised-CoT style transcript ending in the answer line. Base-variant
// bundles get only the answer line.
std::string simulate_response(const prompts::PromptBundle& bundle,
                              const taskgen::Instance& instance,
                              const tokenizer::TokenizationView& tokenization,
                              const SimErrorModel& model, std::uint64_t seed);

class SimulatedBackend final : public Backend {
 public:
  SimulatedBackend(BackendConfig cfg, tokenizer::MergeTable table,
                   std::vector<taskgen::Instance> instances);

  std::string label() const override { return cfg_.effective_label(); }
  std::string model_name() const override;
  bool deterministic() const override { return true; }
  Completion complete(const prompts::PromptBundle& bundle, const std::string& cache_key) override;

 private:
  BackendConfig cfg_;
  tokenizer::MergeTable table_;
  std::string table_digest_;
  std::map<std::string, taskgen::Instance> instances_;
};

// Deterministic stand-in tokenizer for the simulated backend: BPE trained on
// random strings over the built-in alphabets, plus the word list if given.
tokenizer::MergeTable default_sim_table(const taskgen::WordList* words);

// Content-addressed response store: one JSON file per key under `dir`.
// Concurrent writers of one key race benignly (last rename wins).
class ResultCache {
 public:
  explicit ResultCache(std::string dir);
  std::optional<RunRecord> get(const std::string& key) const;
  void put(const RunRecord& record) const;
  const std::string& dir() const { return dir_; }

 private:
  std::string path_for(const std::string& key) const;
  std::string dir_;
};

std::string cache_key(const std::string& backend_label, const std::string& model,
                      double temperature, const std::string& prompt);

struct RunStats {
  std::size_t requests = 0;     // backend calls, including retries
  std::size_t cache_hits = 0;
  std::size_t deduplicated = 0;  // bundles sharing a key with an earlier bundle
  std::size_t failed = 0;
};

// One record per bundle, in input order. Identical cache keys are requested
// at most once; at most cfg.max_parallel requests are in flight. Exhausted
// retries produce a failed record and never abort the batch.
std::vector<RunRecord> run_batch(const std::vector<prompts::PromptBundle>& bundles,
                                 Backend& backend, const BackendConfig& cfg,
                                 const ResultCache* cache, RunStats* stats = nullptr,
                                 const std::function<void(double)>& sleep_fn = {});

}  // namespace tokprobe::runner
