#include "spatial_prompt/llm_client.hpp"

#include <chrono>
#include <cstdlib>
#include <fstream>

#include "spatial_prompt/codec.hpp"
#include "spatial_prompt/error.hpp"

namespace spatial_prompt {

using nlohmann::json;

namespace {

void add_text(std::vector<ChatPart>& parts, std::string text) {
  if (text.empty()) return;
  ChatPart part;
  part.kind = ChatPart::Kind::Text;
  part.text = std::move(text);
  parts.push_back(std::move(part));
}

}  // namespace

ChatRequest to_chat_request(const PromptBundle& bundle, const std::string& model_tag, const ChatParams& params) {
  ChatRequest request;
  request.model_tag = model_tag;
  request.temperature = params.temperature;
  request.max_output_tokens = params.max_output_tokens;

  add_text(request.parts, bundle.preamble);
  for (const auto& block : bundle.blocks) {
    std::string pose;
    if (!block.position_text.empty()) pose += block.position_text + "\n";
    if (!block.rotation_text.empty()) pose += block.rotation_text + "\n";
    if (!pose.empty()) pose += "Image data:";
    add_text(request.parts, std::move(pose));

    ChatPart image;
    image.kind = ChatPart::Kind::Image;
    image.media_type = block.image.media_type;
    image.data_b64 = base64_encode(block.image.bytes);
    request.parts.push_back(std::move(image));
  }
  add_text(request.parts, bundle.annotation);
  add_text(request.parts, bundle.query);
  return request;
}

json canonical_parts(const ChatRequest& request) {
  json parts = json::array();
  for (const auto& p : request.parts) {
    if (p.kind == ChatPart::Kind::Text) {
      parts.push_back({{"type", "text"}, {"text", p.text}});
    } else {
      parts.push_back({{"type", "image"},
                       {"media_type", p.media_type},
                       {"sha256", sha256_hex(base64_decode(p.data_b64))}});
    }
  }
  return parts;
}

std::string fingerprint(const ChatRequest& request) {
  // json objects keep keys sorted, so dump() is canonical.
  return sha256_hex(canonical_parts(request).dump());
}

json chat_completions_body(const ChatRequest& request) {
  json content = json::array();
  for (const auto& p : request.parts) {
    if (p.kind == ChatPart::Kind::Text) {
      content.push_back({{"type", "text"}, {"text", p.text}});
    } else {
      content.push_back(
          {{"type", "image_url"}, {"image_url", {{"url", "data:" + p.media_type + ";base64," + p.data_b64}}}});
    }
  }
  return {{"model", request.model_tag},
          {"temperature", request.temperature},
          {"max_tokens", request.max_output_tokens},
          {"messages", json::array({{{"role", "user"}, {"content", std::move(content)}}})}};
}

ChatResponse EchoBackend::send(const ChatRequest& request) {
  ChatResponse response;
  response.backend_tag = tag();
  for (auto it = request.parts.rbegin(); it != request.parts.rend(); ++it) {
    if (it->kind == ChatPart::Kind::Text) {
      response.answer_text = it->text;
      break;
    }
  }
  return response;
}

std::vector<ReplayEntry> read_replay_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorKind::BackendUnavailable, "replay file " + path.string() + " not readable");
  std::vector<ReplayEntry> entries;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      const json j = json::parse(line);
      entries.push_back({j.at("fingerprint").get<std::string>(), j.at("response").get<std::string>(),
                         j.value("model", std::string())});
    } catch (const json::exception& e) {
      throw Error(ErrorKind::InvalidArgument,
                  path.string() + ":" + std::to_string(line_no) + ": bad replay entry: " + e.what());
    }
  }
  return entries;
}

ReplayBackend::ReplayBackend(const std::filesystem::path& path) {
  for (auto& e : read_replay_file(path)) responses_[e.fingerprint] = std::move(e.response);
}

ChatResponse ReplayBackend::send(const ChatRequest& request) {
  const auto start = std::chrono::steady_clock::now();
  const std::string fp = fingerprint(request);
  auto it = responses_.find(fp);
  if (it == responses_.end()) throw Error(ErrorKind::ReplayMiss, "no recorded response for fingerprint " + fp);
  ChatResponse response;
  response.answer_text = it->second;
  response.backend_tag = tag();
  response.raw_ref = fp;
  response.latency_ms = std::chrono::duration_cast<std::chrono::milliseconds>(
                            std::chrono::steady_clock::now() - start)
                            .count();
  return response;
}

RecordingBackend::RecordingBackend(std::unique_ptr<ChatBackend> upstream, std::filesystem::path path)
    : upstream_(std::move(upstream)), path_(std::move(path)) {}

ChatResponse RecordingBackend::send(const ChatRequest& request) {
  ChatResponse response = upstream_->send(request);
  const json entry{{"fingerprint", fingerprint(request)}, {"response", response.answer_text}, {"model", request.model_tag}};
  std::lock_guard lock(append_mutex_);
  std::ofstream out(path_, std::ios::app);
  if (!out) throw Error(ErrorKind::IoError, "cannot append to " + path_.string());
  out << entry.dump() << '\n';
  return response;
}

BoundedBackend::BoundedBackend(std::unique_ptr<ChatBackend> inner, int max_in_flight)
    : inner_(std::move(inner)), slots_(std::max(1, std::min(max_in_flight, 1024))) {}

ChatResponse BoundedBackend::send(const ChatRequest& request) {
  slots_.acquire();
  struct Release {
    std::counting_semaphore<1024>& s;
    ~Release() { s.release(); }
  } release{slots_};
  return inner_->send(request);
}

std::unique_ptr<ChatBackend> make_backend(const BackendConfig& config) {
  std::unique_ptr<ChatBackend> backend;
  if (config.kind == "replay") {
    backend = std::make_unique<ReplayBackend>(config.replay_path);
  } else if (config.kind == "echo") {
    backend = std::make_unique<EchoBackend>();
  } else if (config.kind == "http") {
    const char* key = std::getenv(kApiKeyEnv);
    if (key == nullptr || *key == '\0') {
      throw Error(ErrorKind::BackendUnavailable, std::string("HTTP backend needs an API key in ") + kApiKeyEnv);
    }
    HttpBackendConfig http;
    http.base_url = config.base_url;
    http.api_key = key;
    http.max_retries = config.max_retries;
    backend = std::make_unique<HttpBackend>(std::move(http));
  } else {
    throw Error(ErrorKind::InvalidArgument, "unknown backend '" + config.kind + "'");
  }
  if (config.record_path) backend = std::make_unique<RecordingBackend>(std::move(backend), *config.record_path);
  return std::make_unique<BoundedBackend>(std::move(backend), config.max_in_flight);
}

}  // namespace spatial_prompt
