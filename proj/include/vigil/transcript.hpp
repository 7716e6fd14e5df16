#pragma once

// Offline backends: a transcript replayer keyed by request hash and a
// function-backed transport for scripted stubs.

#include <deque>
#include <functional>
#include <map>
#include <mutex>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "vigil/error.hpp"
#include "vigil/gateway.hpp"
#include "vigil/prompt.hpp"

namespace vigil {

inline std::string chat_response_body(const std::string& content, const std::string& model_id) {
  return dump_json({{"model", model_id},
                    {"choices", nlohmann::json::array({{{"index", 0},
                                                        {"message", {{"role", "assistant"}, {"content", content}}},
                                                        {"finish_reason", "stop"}}})}});
}

/// Extracts (system, user) from a chat-completion request body.
inline std::pair<std::string, std::string> chat_messages(std::string_view body) {
  auto j = nlohmann::json::parse(body.begin(), body.end(), nullptr, false);
  std::pair<std::string, std::string> out;
  if (j.is_discarded() || !j.contains("messages") || !j["messages"].is_array()) {
    throw Error(ErrorCode::malformed, "not a chat-completion body");
  }
  for (const auto& m : j["messages"]) {
    if (!m.is_object() || !m.contains("content") || !m["content"].is_string()) continue;
    const auto role = m.value("role", "");
    if (role == "system") out.first = m["content"].get<std::string>();
    if (role == "user") out.second = m["content"].get<std::string>();
  }
  return out;
}

struct TranscriptEntry {
  std::string request_hash;  // "*" matches any request
  std::string completion;
};

/// Accepts a JSON array of {request_hash, completion} or {"entries": [...]}.
inline std::vector<TranscriptEntry> parse_transcript(std::string_view source) {
  auto j = nlohmann::json::parse(source.begin(), source.end(), nullptr, false);
  if (j.is_object() && j.contains("entries")) j = j["entries"];
  if (j.is_discarded() || !j.is_array()) throw Error(ErrorCode::malformed, "transcript must be a JSON array");
  std::vector<TranscriptEntry> entries;
  for (const auto& e : j) {
    if (!e.is_object() || !e.contains("request_hash") || !e.contains("completion") ||
        !e["request_hash"].is_string() || !e["completion"].is_string()) {
      throw Error(ErrorCode::malformed, "transcript entry needs request_hash and completion strings");
    }
    entries.push_back({e["request_hash"].get<std::string>(), e["completion"].get<std::string>()});
  }
  return entries;
}

/// Replays canned completions. Entries sharing a hash are served in file
/// order; the last one repeats once the queue is exhausted. Unknown
/// requests get HTTP 404.
class TranscriptTransport final : public Transport {
 public:
  explicit TranscriptTransport(std::vector<TranscriptEntry> entries, std::string model_id = "mock-model")
      : model_id_(std::move(model_id)) {
    for (auto& e : entries) queues_[e.request_hash].push_back(std::move(e.completion));
  }

  static TranscriptTransport from_json(std::string_view source, std::string model_id = "mock-model") {
    return TranscriptTransport(parse_transcript(source), std::move(model_id));
  }

  HttpResponse send(const HttpRequest& request) override {
    const auto [system, user] = chat_messages(request.body);
    const auto hash = request_hash(system, user);
    std::lock_guard lock(mutex_);
    ++calls_;
    auto it = queues_.find(hash);
    if (it == queues_.end()) it = queues_.find("*");
    if (it == queues_.end() || it->second.empty()) {
      return HttpResponse{404, R"({"error":"no transcript entry for request )" + hash + "\"}"};
    }
    std::string completion = it->second.front();
    if (it->second.size() > 1) it->second.pop_front();
    return HttpResponse{200, chat_response_body(completion, model_id_)};
  }

  [[nodiscard]] std::size_t calls() const {
    std::lock_guard lock(mutex_);
    return calls_;
  }

 private:
  std::string model_id_;
  mutable std::mutex mutex_;
  std::map<std::string, std::deque<std::string>> queues_;
  std::size_t calls_ = 0;
};

/// Transport backed by a callable; used for scripted stubs.
class FunctionTransport final : public Transport {
 public:
  using Handler = std::function<HttpResponse(const HttpRequest&)>;
  explicit FunctionTransport(Handler handler) : handler_(std::move(handler)) {}
  HttpResponse send(const HttpRequest& request) override { return handler_(request); }

 private:
  Handler handler_;
};

}  // namespace vigil
