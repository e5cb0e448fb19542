#include <chrono>
#include <thread>

// Eigen must precede httplib: <resolv.h> defines a `_res` macro.
#include "spatial_prompt/error.hpp"
#include "spatial_prompt/llm_client.hpp"

#define CPPHTTPLIB_OPENSSL_SUPPORT
#include "httplib.h"

namespace spatial_prompt {

using nlohmann::json;

HttpBackend::HttpBackend(HttpBackendConfig config) : config_(std::move(config)) {
  const std::string& url = config_.base_url;
  const auto scheme_end = url.find("://");
  if (scheme_end == std::string::npos) {
    throw Error(ErrorKind::InvalidArgument, "base URL must include a scheme: " + url);
  }
  const auto path_start = url.find('/', scheme_end + 3);
  scheme_host_port_ = url.substr(0, path_start);
  path_prefix_ = path_start == std::string::npos ? "" : url.substr(path_start);
  while (!path_prefix_.empty() && path_prefix_.back() == '/') path_prefix_.pop_back();
}

ChatResponse HttpBackend::send(const ChatRequest& request) {
  const std::string body = chat_completions_body(request).dump();
  const std::string endpoint = path_prefix_ + "/chat/completions";
  const httplib::Headers headers{{"Authorization", "Bearer " + config_.api_key}};

  httplib::Client client(scheme_host_port_);
  client.set_connection_timeout(config_.timeout_s, 0);
  client.set_read_timeout(config_.timeout_s, 0);
  client.set_write_timeout(config_.timeout_s, 0);

  const auto start = std::chrono::steady_clock::now();
  int backoff_ms = config_.initial_backoff_ms;
  std::string last_failure;
  for (int attempt = 0; attempt <= config_.max_retries; ++attempt) {
    if (attempt > 0) {
      std::this_thread::sleep_for(std::chrono::milliseconds(backoff_ms));
      backoff_ms *= 2;
    }
    auto res = client.Post(endpoint, headers, body, "application/json");
    if (!res) {
      last_failure = "network error: " + httplib::to_string(res.error());
      continue;
    }
    if (res->status == 401 || res->status == 403) {
      throw Error(ErrorKind::BackendUnavailable,
                  "authentication rejected (HTTP " + std::to_string(res->status) + "); check " + kApiKeyEnv);
    }
    if (res->status == 429 || res->status >= 500) {
      last_failure = "HTTP " + std::to_string(res->status) + ": " + res->body.substr(0, 200);
      continue;
    }
    if (res->status < 200 || res->status >= 300) {
      throw Error(ErrorKind::ProviderError, "HTTP " + std::to_string(res->status) + ": " + res->body.substr(0, 200));
    }
    ChatResponse response;
    try {
      const json doc = json::parse(res->body);
      const json& content = doc.at("choices").at(0).at("message").at("content");
      response.answer_text = content.is_string() ? content.get<std::string>() : content.dump();
      if (doc.contains("id") && doc["id"].is_string()) response.raw_ref = doc["id"].get<std::string>();
    } catch (const json::exception& e) {
      throw Error(ErrorKind::ProviderError, std::string("unparseable completion: ") + e.what());
    }
    response.backend_tag = tag();
    response.latency_ms = std::chrono::duration_cast<std::chrono::milliseconds>(
                              std::chrono::steady_clock::now() - start)
                              .count();
    return response;
  }
  const ErrorKind kind = last_failure.rfind("network", 0) == 0 ? ErrorKind::BackendUnavailable
                                                                : ErrorKind::ProviderError;
  throw Error(kind, last_failure + " (after " + std::to_string(config_.max_retries) + " retries)");
}

}  // namespace spatial_prompt
