#pragma once

#include <cstdint>
#include <filesystem>
#include <memory>
#include <mutex>
#include <optional>
#include <semaphore>
#include <string>
#include <unordered_map>
#include <vector>

#include "json.hpp"
#include "spatial_prompt/prompt.hpp"

namespace spatial_prompt {

inline constexpr const char* kApiKeyEnv = "SPATIAL_PROMPT_API_KEY";

struct ChatPart {
  enum class Kind { Text, Image };
  Kind kind = Kind::Text;
  std::string text;        // Text
  std::string media_type;  // Image
  std::string data_b64;    // Image

  bool operator==(const ChatPart&) const = default;
};

struct ChatParams {
  double temperature = 0.0;
  int max_output_tokens = 512;
};

struct ChatRequest {
  std::string model_tag;
  std::vector<ChatPart> parts;
  double temperature = 0.0;
  int max_output_tokens = 512;
};

struct ChatResponse {
  std::string answer_text;
  std::int64_t latency_ms = 0;
  std::string backend_tag;
  std::optional<std::string> raw_ref;
};

// Parts follow the prompt layout: preamble, then pose text and image per
// keyframe, then annotation, then query. Empty text parts are dropped.
ChatRequest to_chat_request(const PromptBundle& bundle, const std::string& model_tag,
                            const ChatParams& params = {});

// Canonical serialization of the parts with images replaced by the SHA-256 of
// their decoded bytes.
nlohmann::json canonical_parts(const ChatRequest& request);
std::string fingerprint(const ChatRequest& request);

// OpenAI-compatible chat-completions request body.
nlohmann::json chat_completions_body(const ChatRequest& request);

class ChatBackend {
 public:
  virtual ~ChatBackend() = default;
  // Must be safe to call concurrently.
  virtual ChatResponse send(const ChatRequest& request) = 0;
  virtual std::string tag() const = 0;
};

// Test double: answers with the last text part, i.e. the user query.
class EchoBackend final : public ChatBackend {
 public:
  ChatResponse send(const ChatRequest& request) override;
  std::string tag() const override { return "echo"; }
};

struct ReplayEntry {
  std::string fingerprint;
  std::string response;
  std::string model;
};

std::vector<ReplayEntry> read_replay_file(const std::filesystem::path& path);

// Answers from recorded fingerprint -> response pairs; throws ReplayMiss.
class ReplayBackend final : public ChatBackend {
 public:
  explicit ReplayBackend(const std::filesystem::path& path);
  ChatResponse send(const ChatRequest& request) override;
  std::string tag() const override { return "replay"; }
  std::size_t size() const { return responses_.size(); }

 private:
  std::unordered_map<std::string, std::string> responses_;
};

// Forwards to `upstream` and appends every answered request to a replay file.
class RecordingBackend final : public ChatBackend {
 public:
  RecordingBackend(std::unique_ptr<ChatBackend> upstream, std::filesystem::path path);
  ChatResponse send(const ChatRequest& request) override;
  std::string tag() const override { return "record:" + upstream_->tag(); }

 private:
  std::unique_ptr<ChatBackend> upstream_;
  std::filesystem::path path_;
  std::mutex append_mutex_;
};

// Caps the number of concurrent send calls reaching `inner`.
class BoundedBackend final : public ChatBackend {
 public:
  BoundedBackend(std::unique_ptr<ChatBackend> inner, int max_in_flight);
  ChatResponse send(const ChatRequest& request) override;
  std::string tag() const override { return inner_->tag(); }

 private:
  std::unique_ptr<ChatBackend> inner_;
  std::counting_semaphore<1024> slots_;
};

struct HttpBackendConfig {
  std::string base_url = "https://api.openai.com/v1";
  std::string api_key;  // taken from kApiKeyEnv by make_backend
  int max_retries = 3;
  int initial_backoff_ms = 500;
  int timeout_s = 120;
};

// POSTs to {base_url}/chat/completions. Network failures and 429/5xx are
// retried with exponential backoff; 401/403 and other 4xx are not.
class HttpBackend final : public ChatBackend {
 public:
  explicit HttpBackend(HttpBackendConfig config);
  ChatResponse send(const ChatRequest& request) override;
  std::string tag() const override { return "http"; }

 private:
  HttpBackendConfig config_;
  std::string scheme_host_port_;
  std::string path_prefix_;
};

struct BackendConfig {
  std::string kind = "replay";  // replay | http | echo
  std::filesystem::path replay_path;
  std::optional<std::filesystem::path> record_path;
  std::string model = "gpt-4o-2024-11-20";
  std::string base_url = "https://api.openai.com/v1";
  double temperature = 0.0;
  int max_output_tokens = 512;
  int max_retries = 3;
  int max_in_flight = 4;
};

// HTTP backends read the key from kApiKeyEnv and throw BackendUnavailable
// naming the variable when it is unset.
std::unique_ptr<ChatBackend> make_backend(const BackendConfig& config);

}  // namespace spatial_prompt
