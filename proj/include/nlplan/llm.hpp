#pragma once

#include <chrono>
#include <cstdint>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "nlplan/grammar.hpp"
#include "nlplan/worldstate.hpp"

namespace nlplan::llm {

class LlmError : public std::runtime_error {
 public:
  enum class Kind { BackendUnavailable, Timeout, GrammarViolation, BadResponse };

  LlmError(Kind kind, const std::string& what) : std::runtime_error(what), kind_(kind) {}
  Kind kind() const noexcept { return kind_; }

 private:
  Kind kind_;
};

const char* to_string(LlmError::Kind kind);

struct GenerationRequest {
  std::string prompt;
  std::shared_ptr<const Grammar> grammar;
  int max_tokens{512};
  double temperature{0.0};
  std::vector<std::string> stop_sequences;
  std::optional<std::int64_t> seed;
};

struct GenerationResult {
  std::string text;
  std::size_t token_count{0};
  std::string backend_id;
  /// Time the backend spent on the call. Simulated for the scripted backend,
  /// measured for remote ones.
  double latency_seconds{0.0};
};

/// Text generation, tokenization and embeddings behind one handle. Calls are
/// independent: there is no conversation state.
class Backend : public ws::Embedder {
 public:
  /// Raw completion. Callers normally go through llm::generate(), which adds
  /// grammar validation.
  virtual GenerationResult complete(const GenerationRequest& request) = 0;
  virtual std::vector<std::int32_t> tokenize(std::string_view text) = 0;
  virtual std::string detokenize(std::span<const std::int32_t> tokens) = 0;
  virtual std::string backend_id() const = 0;

  std::string embedder_id() const override { return backend_id(); }
};

/// Runs the request and, when a grammar is attached, rejects output the
/// grammar does not derive with LlmError::GrammarViolation.
GenerationResult generate(Backend& backend, const GenerationRequest& request);

/// Deterministic, rule-driven backend. Requests are answered by the first
/// queued one-shot response whose matcher accepts the prompt, otherwise by
/// the first matching rule, otherwise by the fallback text.
class ScriptedBackend final : public Backend {
 public:
  using Matcher = std::function<bool(const GenerationRequest&)>;
  using Responder = std::function<std::string(const GenerationRequest&)>;

  struct Call {
    std::string prompt;
    std::string response;
    std::string source;  // rule name, "queued" or "fallback"
  };

  explicit ScriptedBackend(std::size_t embedding_dimension = 256);

  void add_rule(std::string name, Matcher matcher, Responder responder);
  /// One-shot response consumed by the next call whose prompt contains
  /// `prompt_substring` (any prompt when empty).
  void queue_response(std::string text, std::string prompt_substring = {});
  void set_fallback(std::string text) { fallback_ = std::move(text); }
  /// Latency reported for every call, in seconds.
  void set_call_delay(double seconds) { call_delay_ = seconds; }
  double call_delay() const { return call_delay_; }

  GenerationResult complete(const GenerationRequest& request) override;
  std::vector<std::int32_t> tokenize(std::string_view text) override;
  std::string detokenize(std::span<const std::int32_t> tokens) override;
  std::vector<double> embed(std::string_view text) const override { return embedder_.embed(text); }
  std::size_t dimension() const override { return embedder_.dimension(); }
  std::string backend_id() const override { return "scripted"; }

  std::vector<Call> calls() const;
  std::size_t call_count() const;

 private:
  struct NamedRule {
    std::string name;
    Matcher matcher;
    Responder responder;
  };
  struct Queued {
    std::string text;
    std::string prompt_substring;
  };

  ws::HashingEmbedder embedder_;
  mutable std::mutex mutex_;
  std::vector<NamedRule> rules_;
  std::vector<Queued> queued_;
  std::vector<Call> calls_;
  std::string fallback_{"{}"};
  double call_delay_{0.0};
  std::map<std::string, std::int32_t, std::less<>> vocab_;
  std::vector<std::string> pieces_;
};

struct HttpConfig {
  std::string url{"http://127.0.0.1:8080"};
  std::string completion_path{"/completion"};
  std::string tokenize_path{"/tokenize"};
  std::string detokenize_path{"/detokenize"};
  std::string embedding_path{"/embedding"};
  int timeout_ms{60000};
};

/// Client for a local llama.cpp-style inference server. The completion
/// payload is {prompt, n_predict, temperature, grammar, seed, stop} and the
/// reply carries {content}; grammars travel as GBNF text.
class HttpBackend final : public Backend {
 public:
  explicit HttpBackend(HttpConfig config);
  ~HttpBackend() override;

  GenerationResult complete(const GenerationRequest& request) override;
  std::vector<std::int32_t> tokenize(std::string_view text) override;
  std::string detokenize(std::span<const std::int32_t> tokens) override;
  std::vector<double> embed(std::string_view text) const override;
  /// Learned from the first embedding reply; 0 before that.
  std::size_t dimension() const override;
  std::string backend_id() const override { return "http:" + config_.url; }

  const HttpConfig& config() const { return config_; }

 private:
  struct Impl;
  HttpConfig config_;
  std::unique_ptr<Impl> impl_;
};

/// Backend selection read from a key-value config file:
///   backend = "scripted" | "http"
///   http.url = "http://host:port"
///   http.timeout_ms = 60000
/// NLPLAN_SERVER_URL overrides http.url when set.
struct BackendConfig {
  std::string backend{"scripted"};
  HttpConfig http;
  double scripted_delay_s{0.0};
};

BackendConfig load_backend_config(const std::string& path);
/// Applies recognized keys from a parsed key-value map.
BackendConfig backend_config_from(const std::map<std::string, std::string>& kv);
void apply_env_overrides(BackendConfig& config);

/// Parses `key = value` lines; '#' starts a comment; values may be quoted.
std::map<std::string, std::string> parse_key_values(std::string_view text);

}  // namespace nlplan::llm
