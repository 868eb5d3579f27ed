#include <atomic>
#include <chrono>
#include <regex>

#include "httplib.h"
#include "json.hpp"
#include "nlplan/llm.hpp"

namespace nlplan::llm {

using json = nlohmann::json;

struct HttpBackend::Impl {
  std::string scheme_host_port;
  mutable std::atomic<std::size_t> dimension{0};
};

namespace {

std::string normalize_base(const std::string& url) {
  static const std::regex pattern(R"(^(http://)?([^/:]+)(:(\d+))?/?$)");
  std::smatch m;
  if (!std::regex_match(url, m, pattern)) {
    throw LlmError(LlmError::Kind::BackendUnavailable, "unsupported server url '" + url + "' (expected http://host:port)");
  }
  return "http://" + m[2].str() + (m[4].matched ? ":" + m[4].str() : "");
}

}  // namespace

HttpBackend::HttpBackend(HttpConfig config) : config_(std::move(config)), impl_(std::make_unique<Impl>()) {
  impl_->scheme_host_port = normalize_base(config_.url);
}

HttpBackend::~HttpBackend() = default;

namespace {

json post_json(const std::string& base, const std::string& path, const json& body, int timeout_ms) {
  httplib::Client client(base);
  const auto timeout = std::chrono::milliseconds(timeout_ms);
  client.set_connection_timeout(timeout);
  client.set_read_timeout(timeout);
  client.set_write_timeout(timeout);
  const auto started = std::chrono::steady_clock::now();
  auto response = client.Post(path, body.dump(), "application/json");
  if (!response) {
    const auto err = response.error();
    const auto waited = std::chrono::steady_clock::now() - started;
    const bool timed_out = err == httplib::Error::ConnectionTimeout ||
                           (err == httplib::Error::Read && waited >= timeout * 9 / 10);
    throw LlmError(timed_out ? LlmError::Kind::Timeout : LlmError::Kind::BackendUnavailable,
                   "POST " + base + path + " failed: " + httplib::to_string(err));
  }
  if (response->status != 200) {
    throw LlmError(LlmError::Kind::BackendUnavailable,
                   "POST " + base + path + " returned HTTP " + std::to_string(response->status));
  }
  try {
    return json::parse(response->body);
  } catch (const json::parse_error& e) {
    throw LlmError(LlmError::Kind::BadResponse, "POST " + base + path + ": reply is not JSON: " + e.what());
  }
}

}  // namespace

GenerationResult HttpBackend::complete(const GenerationRequest& request) {
  json body{{"prompt", request.prompt},
            {"n_predict", request.max_tokens},
            {"temperature", request.temperature},
            {"stop", request.stop_sequences}};
  if (request.grammar) body["grammar"] = request.grammar->to_gbnf();
  if (request.seed) body["seed"] = *request.seed;

  const auto started = std::chrono::steady_clock::now();
  const auto reply = post_json(impl_->scheme_host_port, config_.completion_path, body, config_.timeout_ms);
  const std::chrono::duration<double> took = std::chrono::steady_clock::now() - started;

  if (!reply.is_object() || !reply.contains("content") || !reply["content"].is_string()) {
    throw LlmError(LlmError::Kind::BadResponse, "completion reply has no string field 'content'");
  }
  GenerationResult result;
  result.text = reply["content"].get<std::string>();
  if (reply.contains("tokens_predicted") && reply["tokens_predicted"].is_number_integer()) {
    result.token_count = reply["tokens_predicted"].get<std::size_t>();
  }
  result.backend_id = backend_id();
  result.latency_seconds = took.count();
  return result;
}

std::vector<std::int32_t> HttpBackend::tokenize(std::string_view text) {
  const auto reply =
      post_json(impl_->scheme_host_port, config_.tokenize_path, json{{"content", std::string(text)}}, config_.timeout_ms);
  if (!reply.is_object() || !reply.contains("tokens") || !reply["tokens"].is_array()) {
    throw LlmError(LlmError::Kind::BadResponse, "tokenize reply has no array field 'tokens'");
  }
  return reply["tokens"].get<std::vector<std::int32_t>>();
}

std::string HttpBackend::detokenize(std::span<const std::int32_t> tokens) {
  const auto reply = post_json(impl_->scheme_host_port, config_.detokenize_path,
                               json{{"tokens", std::vector<std::int32_t>(tokens.begin(), tokens.end())}},
                               config_.timeout_ms);
  if (!reply.is_object() || !reply.contains("content") || !reply["content"].is_string()) {
    throw LlmError(LlmError::Kind::BadResponse, "detokenize reply has no string field 'content'");
  }
  return reply["content"].get<std::string>();
}

std::vector<double> HttpBackend::embed(std::string_view text) const {
  const auto reply = post_json(impl_->scheme_host_port, config_.embedding_path, json{{"content", std::string(text)}},
                               config_.timeout_ms);
  // Older servers answer {"embedding":[...]}, newer ones
  // [{"index":0,"embedding":[[...]]}].
  const json* values = nullptr;
  if (reply.is_object() && reply.contains("embedding")) {
    values = &reply["embedding"];
  } else if (reply.is_array() && !reply.empty() && reply[0].is_object() && reply[0].contains("embedding")) {
    values = &reply[0]["embedding"];
  }
  if (values && values->is_array() && !values->empty() && (*values)[0].is_array()) values = &(*values)[0];
  if (!values || !values->is_array()) {
    throw LlmError(LlmError::Kind::BadResponse, "embedding reply has no numeric array 'embedding'");
  }
  std::vector<double> out;
  out.reserve(values->size());
  for (const auto& v : *values) {
    if (!v.is_number()) throw LlmError(LlmError::Kind::BadResponse, "embedding contains a non-number");
    out.push_back(v.get<double>());
  }
  std::size_t expected = 0;
  impl_->dimension.compare_exchange_strong(expected, out.size());
  return out;
}

std::size_t HttpBackend::dimension() const {
  auto d = impl_->dimension.load();
  if (d == 0) {
    // Probe once so callers that size an index up front get a real value.
    d = embed("dimension probe").size();
  }
  return d;
}

}  // namespace nlplan::llm
