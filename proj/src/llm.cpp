#include "nlplan/llm.hpp"

#include <algorithm>
#include <cctype>
#include <cstdlib>
#include <fstream>
#include <sstream>

namespace nlplan::llm {

const char* to_string(LlmError::Kind kind) {
  switch (kind) {
    case LlmError::Kind::BackendUnavailable: return "BackendUnavailable";
    case LlmError::Kind::Timeout: return "Timeout";
    case LlmError::Kind::GrammarViolation: return "GrammarViolation";
    case LlmError::Kind::BadResponse: return "BadResponse";
  }
  return "Unknown";
}

GenerationResult generate(Backend& backend, const GenerationRequest& request) {
  if (request.prompt.empty()) throw std::invalid_argument("generate: empty prompt");
  if (request.max_tokens < 1) throw std::invalid_argument("generate: max_tokens must be >= 1");
  auto result = backend.complete(request);
  if (request.grammar && !request.grammar->recognize(result.text)) {
    std::string shown = result.text.substr(0, 200);
    if (result.text.size() > 200) shown += "...";
    throw LlmError(LlmError::Kind::GrammarViolation,
                   "output of backend '" + result.backend_id + "' is not derivable from the grammar: " + shown);
  }
  return result;
}

// ---------------------------------------------------------------------------
// Scripted backend

namespace {

bool is_space(char c) { return std::isspace(static_cast<unsigned char>(c)) != 0; }

// Each piece is a whitespace run followed by a word; trailing whitespace
// sticks to the last piece. Concatenating the pieces gives back the text.
std::vector<std::string> split_pieces(std::string_view text) {
  std::vector<std::string> pieces;
  std::size_t i = 0;
  while (i < text.size()) {
    const std::size_t start = i;
    while (i < text.size() && is_space(text[i])) ++i;
    while (i < text.size() && !is_space(text[i])) ++i;
    pieces.emplace_back(text.substr(start, i - start));
  }
  if (pieces.size() > 1) {
    const auto& last = pieces.back();
    if (std::all_of(last.begin(), last.end(), is_space)) {
      auto tail = std::move(pieces.back());
      pieces.pop_back();
      pieces.back() += tail;
    }
  }
  return pieces;
}

}  // namespace

ScriptedBackend::ScriptedBackend(std::size_t embedding_dimension) : embedder_(embedding_dimension) {}

void ScriptedBackend::add_rule(std::string name, Matcher matcher, Responder responder) {
  std::lock_guard lock(mutex_);
  rules_.push_back({std::move(name), std::move(matcher), std::move(responder)});
}

void ScriptedBackend::queue_response(std::string text, std::string prompt_substring) {
  std::lock_guard lock(mutex_);
  queued_.push_back({std::move(text), std::move(prompt_substring)});
}

GenerationResult ScriptedBackend::complete(const GenerationRequest& request) {
  std::string text;
  std::string source;
  {
    std::lock_guard lock(mutex_);
    for (auto it = queued_.begin(); it != queued_.end(); ++it) {
      if (it->prompt_substring.empty() || request.prompt.find(it->prompt_substring) != std::string::npos) {
        text = std::move(it->text);
        source = "queued";
        queued_.erase(it);
        break;
      }
    }
  }
  if (source.empty()) {
    // Responders run unlocked: they may consult other components.
    std::vector<NamedRule> rules;
    {
      std::lock_guard lock(mutex_);
      rules = rules_;
    }
    for (const auto& rule : rules) {
      if (rule.matcher(request)) {
        text = rule.responder(request);
        source = rule.name;
        break;
      }
    }
  }
  if (source.empty()) {
    std::lock_guard lock(mutex_);
    text = fallback_;
    source = "fallback";
  }
  std::lock_guard lock(mutex_);
  calls_.push_back({request.prompt, text, source});
  GenerationResult result;
  result.token_count = text.empty() ? 0 : split_pieces(text).size();
  result.text = std::move(text);
  result.backend_id = backend_id();
  result.latency_seconds = call_delay_;
  return result;
}

std::vector<std::int32_t> ScriptedBackend::tokenize(std::string_view text) {
  std::lock_guard lock(mutex_);
  std::vector<std::int32_t> ids;
  for (auto& piece : split_pieces(text)) {
    auto it = vocab_.find(piece);
    if (it == vocab_.end()) {
      const auto id = static_cast<std::int32_t>(pieces_.size());
      pieces_.push_back(piece);
      it = vocab_.emplace(std::move(piece), id).first;
    }
    ids.push_back(it->second);
  }
  return ids;
}

std::string ScriptedBackend::detokenize(std::span<const std::int32_t> tokens) {
  std::lock_guard lock(mutex_);
  std::string out;
  for (auto id : tokens) {
    if (id < 0 || static_cast<std::size_t>(id) >= pieces_.size()) {
      throw LlmError(LlmError::Kind::BadResponse, "unknown token id " + std::to_string(id));
    }
    out += pieces_[static_cast<std::size_t>(id)];
  }
  return out;
}

std::vector<ScriptedBackend::Call> ScriptedBackend::calls() const {
  std::lock_guard lock(mutex_);
  return calls_;
}

std::size_t ScriptedBackend::call_count() const {
  std::lock_guard lock(mutex_);
  return calls_.size();
}

// ---------------------------------------------------------------------------
// Configuration

std::map<std::string, std::string> parse_key_values(std::string_view text) {
  std::map<std::string, std::string> out;
  std::istringstream in{std::string(text)};
  std::string line;
  int line_no = 0;
  auto trim = [](std::string s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string::npos) return std::string{};
    const auto e = s.find_last_not_of(" \t\r");
    return s.substr(b, e - b + 1);
  };
  while (std::getline(in, line)) {
    ++line_no;
    // '#' inside a quoted value is kept.
    bool quoted = false;
    for (std::size_t i = 0; i < line.size(); ++i) {
      if (line[i] == '"') quoted = !quoted;
      if (line[i] == '#' && !quoted) {
        line.resize(i);
        break;
      }
    }
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw std::runtime_error("config line " + std::to_string(line_no) + ": expected 'key = value'");
    }
    auto key = trim(line.substr(0, eq));
    auto value = trim(line.substr(eq + 1));
    if (value.size() >= 2 && value.front() == '"' && value.back() == '"') value = value.substr(1, value.size() - 2);
    if (key.empty()) throw std::runtime_error("config line " + std::to_string(line_no) + ": empty key");
    out[key] = value;
  }
  return out;
}

BackendConfig backend_config_from(const std::map<std::string, std::string>& kv) {
  BackendConfig config;
  if (auto it = kv.find("backend"); it != kv.end()) config.backend = it->second;
  if (auto it = kv.find("http.url"); it != kv.end()) config.http.url = it->second;
  if (auto it = kv.find("http.endpoint"); it != kv.end()) config.http.completion_path = it->second;
  if (auto it = kv.find("http.timeout_ms"); it != kv.end()) config.http.timeout_ms = std::stoi(it->second);
  if (auto it = kv.find("scripted.delay_s"); it != kv.end()) config.scripted_delay_s = std::stod(it->second);
  if (config.backend != "scripted" && config.backend != "http") {
    throw std::runtime_error("unknown backend '" + config.backend + "' (expected scripted or http)");
  }
  if (config.http.timeout_ms <= 0) throw std::runtime_error("http.timeout_ms must be positive");
  return config;
}

void apply_env_overrides(BackendConfig& config) {
  if (const char* url = std::getenv("NLPLAN_SERVER_URL"); url != nullptr && *url != '\0') config.http.url = url;
}

BackendConfig load_backend_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open config file '" + path + "'");
  std::stringstream buf;
  buf << in.rdbuf();
  auto config = backend_config_from(parse_key_values(buf.str()));
  apply_env_overrides(config);
  return config;
}

}  // namespace nlplan::llm
