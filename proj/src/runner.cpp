#include "tokprobe/runner.hpp"

#include <httplib.h>

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdlib>
#include <ctime>
#include <filesystem>
#include <mutex>
#include <thread>

#include "tokprobe/common.hpp"
#include "tokprobe/jsonl.hpp"

namespace tokprobe::runner {

using prompts::PromptBundle;
using prompts::PromptVariant;
using taskgen::TaskType;

namespace {

constexpr const char* kEpoch = "1970-01-01T00:00:00Z";

std::string utc_now() {
  const auto now = std::chrono::system_clock::now();
  const std::time_t t = std::chrono::system_clock::to_time_t(now);
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof(buf), "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

void check_probability(double p, const char* name) {
  if (!(p >= 0.0 && p <= 1.0)) {
    throw ConfigError(std::string(name) + " must lie in [0, 1]");
  }
}

// Per-token view used by the simulator: which units a token touches and which
// units start inside it.
struct TokenUnits {
  std::size_t covered = 0;
  std::vector<std::size_t> starts;
};

std::vector<TokenUnits> map_tokens_to_units(const tokenizer::TokenizationView& view,
                                            const std::vector<std::string>& units) {
  const auto spans = tokenizer::locate_units(view.source, units);
  std::vector<TokenUnits> out(view.boundaries.size());
  std::size_t u = 0;
  for (std::size_t t = 0; t < view.boundaries.size(); ++t) {
    const auto& b = view.boundaries[t];
    // Units are ordered, so skip those ending before this token.
    while (u < spans.size() && spans[u].end <= b.start) ++u;
    for (std::size_t k = u; k < spans.size() && spans[k].start < b.end; ++k) {
      if (spans[k].end > b.start) ++out[t].covered;
      if (spans[k].start >= b.start) out[t].starts.push_back(k);
    }
  }
  return out;
}

std::string join(const std::vector<std::string>& parts) {
  std::string s;
  for (const auto& p : parts) s += p;
  return s;
}

// -1 twice as often as +1.
int slip(Rng& rng) { return rng.below(3) < 2 ? -1 : +1; }

}  // namespace

void SimErrorModel::validate() const {
  check_probability(p_merged_miscount, "p_merged_miscount");
  check_probability(p_atomic_slip, "p_atomic_slip");
  if (max_steps < 1) throw ConfigError("max_steps must be >= 1");
}

double RetryPolicy::delay_before_attempt(int attempt) const {
  if (attempt <= 1) return 0.0;
  return backoff_initial_s * std::pow(backoff_factor, attempt - 2);
}

void BackendConfig::validate() const {
  if (max_parallel < 1) throw ConfigError("max_parallel must be >= 1");
  if (retry.max_attempts < 1) throw ConfigError("retry.max_attempts must be >= 1");
  if (retry.backoff_initial_s < 0 || retry.backoff_factor < 1) {
    throw ConfigError("retry backoff must be non-negative with factor >= 1");
  }
  if (temperature < 0) throw ConfigError("temperature must be >= 0");
  if (kind == BackendKind::kHttpChat) {
    if (endpoint.empty()) throw ConfigError("http-chat backend needs an endpoint");
    if (model.empty()) throw ConfigError("http-chat backend needs a model name");
    if (api_key_env.empty()) throw ConfigError("http-chat backend needs api_key_env");
  } else {
    sim.validate();
  }
}

std::string BackendConfig::effective_label() const {
  if (!label.empty()) return label;
  return kind == BackendKind::kHttpChat ? "http-chat" : "simulated";
}

BackendConfig backend_config_from_json(const nlohmann::json& j) {
  try {
    BackendConfig cfg;
    const std::string kind = j.value("kind", "simulated");
    if (kind == "http-chat" || kind == "http") {
      cfg.kind = BackendKind::kHttpChat;
    } else if (kind == "simulated" || kind == "sim") {
      cfg.kind = BackendKind::kSimulated;
    } else {
      throw ConfigError("unknown backend kind: " + kind);
    }
    cfg.label = j.value("label", "");
    cfg.endpoint = j.value("endpoint", "");
    cfg.model = j.value("model", "");
    cfg.api_key_env = j.value("api_key_env", cfg.api_key_env);
    cfg.timeout_s = j.value("timeout_s", cfg.timeout_s);
    cfg.temperature = j.value("temperature", 0.0);
    cfg.max_parallel = j.value("max_parallel", cfg.max_parallel);
    if (j.contains("retry")) {
      const auto& r = j.at("retry");
      cfg.retry.max_attempts = r.value("max_attempts", cfg.retry.max_attempts);
      cfg.retry.backoff_initial_s = r.value("backoff_initial_s", cfg.retry.backoff_initial_s);
      cfg.retry.backoff_factor = r.value("backoff_factor", cfg.retry.backoff_factor);
    }
    if (j.contains("sim")) {
      const auto& s = j.at("sim");
      cfg.sim.p_merged_miscount = s.value("p_merged_miscount", 0.0);
      cfg.sim.p_atomic_slip = s.value("p_atomic_slip", 0.0);
      cfg.sim.max_steps = s.value("max_steps", cfg.sim.max_steps);
      cfg.sim_seed = s.value("seed", std::uint64_t{0});
      cfg.sim_merges = s.value("merges", "");
    }
    cfg.validate();
    return cfg;
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("malformed backend config: ") + e.what());
  }
}

nlohmann::json to_json(const BackendConfig& cfg) {
  nlohmann::json j = {
      {"kind", cfg.kind == BackendKind::kHttpChat ? "http-chat" : "simulated"},
      {"label", cfg.effective_label()},
      {"temperature", cfg.temperature},
      {"max_parallel", cfg.max_parallel},
      {"retry",
       {{"max_attempts", cfg.retry.max_attempts},
        {"backoff_initial_s", cfg.retry.backoff_initial_s},
        {"backoff_factor", cfg.retry.backoff_factor}}},
  };
  if (cfg.kind == BackendKind::kHttpChat) {
    j["endpoint"] = cfg.endpoint;
    j["model"] = cfg.model;
    j["api_key_env"] = cfg.api_key_env;
    j["timeout_s"] = cfg.timeout_s;
  } else {
    j["sim"] = {{"p_merged_miscount", cfg.sim.p_merged_miscount},
                {"p_atomic_slip", cfg.sim.p_atomic_slip},
                {"max_steps", cfg.sim.max_steps},
                {"seed", cfg.sim_seed},
                {"merges", cfg.sim_merges}};
  }
  return j;
}

nlohmann::json to_json(const RunRecord& r) {
  nlohmann::json j = {
      {"instance_id", r.instance_id},
      {"variant", prompts::variant_name(r.variant)},
      {"backend", r.backend},
      {"model", r.model},
      {"cache_key", r.cache_key},
      {"request", r.request},
      {"raw_response", r.raw_response},
      {"latency_ms", r.latency_ms},
      {"timestamp", r.timestamp},
      {"attempts", r.attempts},
      {"failed", r.failed},
  };
  if (r.failed) j["error"] = r.error;
  return j;
}

RunRecord run_record_from_json(const nlohmann::json& j) {
  try {
    RunRecord r;
    r.instance_id = j.at("instance_id").get<std::string>();
    r.variant = prompts::variant_from_name(j.at("variant").get<std::string>());
    r.backend = j.at("backend").get<std::string>();
    r.model = j.value("model", "");
    r.cache_key = j.value("cache_key", "");
    r.request = j.at("request").get<std::string>();
    r.raw_response = j.at("raw_response").get<std::string>();
    r.latency_ms = j.value("latency_ms", 0.0);
    r.timestamp = j.value("timestamp", "");
    r.attempts = j.value("attempts", 0);
    r.failed = j.value("failed", false);
    r.error = j.value("error", "");
    return r;
  } catch (const nlohmann::json::exception& e) {
    throw InvalidInput(std::string("malformed run record: ") + e.what());
  }
}

std::vector<RunRecord> read_runs(const std::string& path) {
  std::vector<RunRecord> out;
  for (const auto& row : read_jsonl(path)) out.push_back(run_record_from_json(row));
  return out;
}

void write_runs(const std::vector<RunRecord>& runs, const std::string& path) {
  std::vector<nlohmann::json> rows;
  rows.reserve(runs.size());
  for (const auto& r : runs) rows.push_back(to_json(r));
  write_jsonl(rows, path);
}

// ---------------------------------------------------------------------------
// http-chat

HttpChatBackend::HttpChatBackend(BackendConfig cfg) : cfg_(std::move(cfg)) {
  cfg_.validate();
  const char* token = std::getenv(cfg_.api_key_env.c_str());
  if (!token || !*token) {
    throw ConfigError("environment variable " + cfg_.api_key_env +
                      " holding the API token is not set");
  }
  token_ = token;
  const auto scheme_end = cfg_.endpoint.find("://");
  if (scheme_end == std::string::npos) {
    throw ConfigError("endpoint must start with http:// or https://: " + cfg_.endpoint);
  }
  const auto path_start = cfg_.endpoint.find('/', scheme_end + 3);
  host_ = cfg_.endpoint.substr(0, path_start);
  base_path_ = path_start == std::string::npos ? "" : cfg_.endpoint.substr(path_start);
  while (!base_path_.empty() && base_path_.back() == '/') base_path_.pop_back();
}

Completion HttpChatBackend::complete(const PromptBundle& bundle, const std::string&) {
  httplib::Client client(host_);
  const auto timeout = std::chrono::duration<double>(cfg_.timeout_s);
  client.set_connection_timeout(std::chrono::duration_cast<std::chrono::microseconds>(timeout));
  client.set_read_timeout(std::chrono::duration_cast<std::chrono::microseconds>(timeout));
  client.set_bearer_token_auth(token_);

  const nlohmann::json body = {
      {"model", cfg_.model},
      {"messages", {{{"role", "user"}, {"content", bundle.text}}}},
      {"temperature", cfg_.temperature},
  };
  const auto start = std::chrono::steady_clock::now();
  auto res = client.Post(base_path_ + "/chat/completions", body.dump(), "application/json");
  const double latency =
      std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start).count();
  if (!res) throw std::runtime_error("request failed: " + httplib::to_string(res.error()));
  if (res->status != 200) {
    throw std::runtime_error("HTTP " + std::to_string(res->status) + ": " +
                             res->body.substr(0, 200));
  }
  try {
    const auto reply = nlohmann::json::parse(res->body);
    return {reply.at("choices").at(0).at("message").at("content").get<std::string>(), latency};
  } catch (const nlohmann::json::exception& e) {
    throw std::runtime_error(std::string("malformed chat completion: ") + e.what());
  }
}

// ---------------------------------------------------------------------------
// simulated

std::string simulate_response(const PromptBundle& bundle, const taskgen::Instance& instance,
                              const tokenizer::TokenizationView& tokenization,
                              const SimErrorModel& model, std::uint64_t seed) {
  const auto tokens = map_tokens_to_units(tokenization, instance.units);
  Rng rng(seed);
  std::string transcript;
  std::size_t steps = 0;
  bool exhausted = false;

  auto for_each_step = [&](auto&& body) {
    for (std::size_t t = 0; t < tokens.size(); ++t) {
      if (tokens[t].covered == 0) continue;
      if (steps == model.max_steps) {
        exhausted = true;
        break;
      }
      ++steps;
      body(t, tokens[t].covered > 1);
    }
  };

  std::string answer_line;
  switch (instance.task.type) {
    case TaskType::kCounting: {
      long long counter = 0;
      transcript += "Counter = 0\n";
      for_each_step([&](std::size_t t, bool merged) {
        long long contribution = 0;
        for (std::size_t u : tokens[t].starts) contribution += instance.units[u] == instance.task.target;
        if (merged) {
          if (rng.bernoulli(model.p_merged_miscount) && contribution > 0) {
            contribution = static_cast<long long>(rng.below(static_cast<std::uint64_t>(contribution)));
          }
        } else if (rng.bernoulli(model.p_atomic_slip)) {
          contribution += slip(rng);
        }
        counter = std::max(0LL, counter + contribution);
        transcript += "Step " + std::to_string(steps) + ": '" + tokenization.tokens[t] +
                      "' -> Counter = " + std::to_string(counter) + "\n";
      });
      answer_line = "Result: " + std::to_string(counter);
      break;
    }
    case TaskType::kReversing: {
      std::vector<std::string> reversed;
      transcript += "reversed = ''\n";
      for_each_step([&](std::size_t t, bool merged) {
        std::vector<std::string> piece;
        for (std::size_t u : tokens[t].starts) piece.push_back(instance.units[u]);
        if (merged) {
          // A missed merge keeps the token's internal order.
          if (!rng.bernoulli(model.p_merged_miscount)) std::reverse(piece.begin(), piece.end());
        } else if (!piece.empty() && rng.bernoulli(model.p_atomic_slip)) {
          if (slip(rng) < 0) {
            piece.clear();
          } else {
            piece.push_back(piece.back());
          }
        }
        reversed.insert(reversed.begin(), piece.begin(), piece.end());
        transcript += "Step " + std::to_string(steps) + ": '" + tokenization.tokens[t] +
                      "' -> reversed = '" + join(reversed) + "'\n";
      });
      answer_line = "{'Result': '" + join(reversed) + "'}";
      break;
    }
    case TaskType::kSorting: {
      std::vector<std::string> sorted;
      transcript += "sorted = []\n";
      for_each_step([&](std::size_t t, bool merged) {
        std::vector<std::string> piece;
        for (std::size_t u : tokens[t].starts) piece.push_back(instance.units[u]);
        if (piece.empty()) return;
        if (merged && rng.bernoulli(model.p_merged_miscount)) {
          // The whole token lands as one block at its first unit's position.
          auto at = std::upper_bound(sorted.begin(), sorted.end(), piece.front());
          sorted.insert(at, piece.begin(), piece.end());
        } else {
          if (!merged && rng.bernoulli(model.p_atomic_slip)) {
            if (slip(rng) < 0) {
              piece.clear();
            } else {
              piece.push_back(piece.back());
            }
          }
          for (const auto& unit : piece) {
            sorted.insert(std::upper_bound(sorted.begin(), sorted.end(), unit), unit);
          }
        }
        transcript += "Step " + std::to_string(steps) + ": '" + tokenization.tokens[t] +
                      "' -> sorted = '" + join(sorted) + "'\n";
      });
      answer_line = "{'Result': '" + join(sorted) + "'}";
      break;
    }
  }
  if (bundle.variant == PromptVariant::kBase) return answer_line;
  if (exhausted) transcript += "Step budget exhausted.\n";
  return transcript + "\n" + answer_line;
}

SimulatedBackend::SimulatedBackend(BackendConfig cfg, tokenizer::MergeTable table,
                                   std::vector<taskgen::Instance> instances)
    : cfg_(std::move(cfg)), table_(std::move(table)) {
  cfg_.validate();
  table_digest_ = sha256_hex(tokenizer::format_merges(table_)).substr(0, 12);
  for (auto& inst : instances) {
    const std::string id = inst.id;
    instances_.emplace(id, std::move(inst));
  }
}

std::string SimulatedBackend::model_name() const {
  nlohmann::json params = {{"p_merged_miscount", cfg_.sim.p_merged_miscount},
                           {"p_atomic_slip", cfg_.sim.p_atomic_slip},
                           {"max_steps", cfg_.sim.max_steps},
                           {"seed", cfg_.sim_seed},
                           {"table", table_digest_}};
  return "synthetic-bpe-walker" + params.dump();
}

Completion SimulatedBackend::complete(const PromptBundle& bundle, const std::string& key) {
  auto it = instances_.find(bundle.instance_id);
  if (it == instances_.end()) {
    throw InvalidInput("simulated backend has no instance " + bundle.instance_id);
  }
  const auto view = tokenizer::encode(table_, it->second.rendered);
  return {simulate_response(bundle, it->second, view, cfg_.sim, derive_seed(cfg_.sim_seed, key)),
          0.0};
}

tokenizer::MergeTable default_sim_table(const taskgen::WordList* words) {
  std::vector<std::string> corpus;
  for (const char* name : {"ab", "ez", "zbre", "random", "letter_digit", "digit"}) {
    const auto alphabet = taskgen::builtin_alphabet(name);
    Rng rng(derive_seed(0, std::string("corpus:") + name));
    for (int i = 0; i < 1000; ++i) {
      const auto len = rng.between(10, 40);
      std::string s;
      for (long k = 0; k < len; ++k) s += alphabet.units[rng.below(alphabet.units.size())];
      corpus.push_back(std::move(s));
    }
  }
  if (words) corpus.insert(corpus.end(), words->words.begin(), words->words.end());
  return tokenizer::train_bpe(corpus, 1000, true);
}

// ---------------------------------------------------------------------------
// cache + batch

ResultCache::ResultCache(std::string dir) : dir_(std::move(dir)) {
  std::filesystem::create_directories(dir_);
}

std::string ResultCache::path_for(const std::string& key) const {
  return (std::filesystem::path(dir_) / (key + ".json")).string();
}

std::optional<RunRecord> ResultCache::get(const std::string& key) const {
  const auto path = path_for(key);
  if (!std::filesystem::exists(path)) return std::nullopt;
  try {
    return run_record_from_json(nlohmann::json::parse(read_text_file(path)));
  } catch (const std::exception&) {
    return std::nullopt;  // unreadable entries are treated as misses
  }
}

void ResultCache::put(const RunRecord& record) const {
  write_text_file_atomic(path_for(record.cache_key), to_json(record).dump());
}

std::string cache_key(const std::string& backend_label, const std::string& model,
                      double temperature, const std::string& prompt) {
  return sha256_hex(
      stable_key({backend_label, model, nlohmann::json(temperature).dump(), prompt}));
}

std::vector<RunRecord> run_batch(const std::vector<PromptBundle>& bundles, Backend& backend,
                                 const BackendConfig& cfg, const ResultCache* cache,
                                 RunStats* stats, const std::function<void(double)>& sleep_fn) {
  cfg.validate();
  const std::string label = backend.label();
  const std::string model = backend.model_name();

  std::vector<std::string> keys(bundles.size());
  std::map<std::string, std::size_t> first_of;  // key -> representative bundle
  std::vector<std::size_t> representatives;
  for (std::size_t i = 0; i < bundles.size(); ++i) {
    keys[i] = cache_key(label, model, cfg.temperature, bundles[i].text);
    if (first_of.emplace(keys[i], i).second) representatives.push_back(i);
  }

  std::map<std::string, RunRecord> results;
  std::vector<std::size_t> pending;
  RunStats local;
  local.deduplicated = bundles.size() - representatives.size();
  for (std::size_t i : representatives) {
    if (cache) {
      if (auto hit = cache->get(keys[i])) {
        results.emplace(keys[i], std::move(*hit));
        ++local.cache_hits;
        continue;
      }
    }
    pending.push_back(i);
  }

  auto sleep = sleep_fn ? sleep_fn : [](double s) {
    std::this_thread::sleep_for(std::chrono::duration<double>(s));
  };
  std::mutex mu;
  std::atomic<std::size_t> next{0};
  std::atomic<std::size_t> requests{0};
  auto worker = [&] {
    for (std::size_t p = next++; p < pending.size(); p = next++) {
      const std::size_t i = pending[p];
      RunRecord rec;
      rec.backend = label;
      rec.model = model;
      rec.cache_key = keys[i];
      rec.request = bundles[i].text;
      for (int attempt = 1; attempt <= cfg.retry.max_attempts; ++attempt) {
        if (attempt > 1) sleep(cfg.retry.delay_before_attempt(attempt));
        rec.attempts = attempt;
        ++requests;
        try {
          const Completion c = backend.complete(bundles[i], keys[i]);
          rec.raw_response = c.text;
          rec.latency_ms = backend.deterministic() ? 0.0 : c.latency_ms;
          rec.failed = false;
          rec.error.clear();
          break;
        } catch (const std::exception& e) {
          rec.failed = true;
          rec.error = e.what();
        }
      }
      rec.timestamp = backend.deterministic() ? kEpoch : utc_now();
      if (!rec.failed && cache) cache->put(rec);
      std::lock_guard lock(mu);
      results.emplace(keys[i], std::move(rec));
    }
  };
  const std::size_t n_workers =
      std::min<std::size_t>(static_cast<std::size_t>(cfg.max_parallel), pending.size());
  {
    std::vector<std::jthread> pool;
    for (std::size_t w = 0; w < n_workers; ++w) pool.emplace_back(worker);
  }
  local.requests = requests;

  std::vector<RunRecord> out;
  out.reserve(bundles.size());
  for (std::size_t i = 0; i < bundles.size(); ++i) {
    RunRecord rec = results.at(keys[i]);
    rec.instance_id = bundles[i].instance_id;
    rec.variant = bundles[i].variant;
    rec.request = bundles[i].text;
    if (rec.failed) ++local.failed;
    out.push_back(std::move(rec));
  }
  if (stats) *stats = local;
  return out;
}

}  // namespace tokprobe::runner
