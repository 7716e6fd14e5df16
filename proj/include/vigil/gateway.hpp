#pragma once

// Tiered inference: backend configuration, the HTTP transport seam, the
// chat-completion client and the client-side result cache.

#include <chrono>
#include <cstdint>
#include <cstdlib>
#include <fstream>
#include <functional>
#include <list>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <string_view>
#include <thread>
#include <unordered_map>
#include <utility>
#include <vector>

#include <httplib.h>
#include <nlohmann/json.hpp>

#include "vigil/error.hpp"
#include "vigil/prompt.hpp"
#include "vigil/text.hpp"

namespace vigil {

enum class Tier { pattern, in_browser, local_api, cloud_api };

inline std::string_view to_string(Tier t) {
  switch (t) {
    case Tier::pattern: return "pattern";
    case Tier::in_browser: return "in-browser";
    case Tier::local_api: return "local-api";
    case Tier::cloud_api: return "cloud-api";
  }
  return "pattern";
}

inline Tier parse_tier(std::string_view s) {
  if (s == "pattern") return Tier::pattern;
  if (s == "in-browser") return Tier::in_browser;
  if (s == "local-api") return Tier::local_api;
  if (s == "cloud-api") return Tier::cloud_api;
  throw Error(ErrorCode::configuration, "unknown tier '" + std::string(s) + "'");
}

/// Rank in the privacy ordering: higher tiers expose data further.
inline int tier_rank(Tier t) { return static_cast<int>(t); }

struct BackendConfig {
  Tier tier = Tier::pattern;
  std::string endpoint;        // full chat-completion URL (local-api, cloud-api)
  std::string model_id;
  std::string credential_env;  // name of the environment variable holding the key
  std::int64_t timeout_ms = 60'000;
  int retries = 1;             // on transport failure only

  /// Only the API tiers may open connections.
  [[nodiscard]] bool network_allowed() const { return tier == Tier::local_api || tier == Tier::cloud_api; }

  void validate() const {
    if (timeout_ms <= 0) throw Error(ErrorCode::configuration, "timeout must be positive");
    if (retries < 0) throw Error(ErrorCode::configuration, "retries must be non-negative");
    if (network_allowed() && endpoint.empty()) {
      throw Error(ErrorCode::configuration, std::string(to_string(tier)) + " requires an endpoint");
    }
    if (tier == Tier::cloud_api && credential_env.empty()) {
      throw Error(ErrorCode::configuration, "cloud-api requires a credential environment variable");
    }
  }

  /// Digest of everything that changes model output, for cache keys.
  [[nodiscard]] std::string digest() const {
    return text::sha256_hex(std::string(to_string(tier)) + "\x1f" + endpoint + "\x1f" + model_id);
  }
};

inline nlohmann::json to_json(const BackendConfig& c) {
  return {{"tier", to_string(c.tier)},
          {"endpoint", c.endpoint},
          {"model_id", c.model_id},
          {"credential_env", c.credential_env},
          {"timeout_ms", c.timeout_ms},
          {"network_allowed", c.network_allowed()}};
}

// Transport -------------------------------------------------------------------

struct HttpRequest {
  std::string method = "POST";
  std::string url;
  std::map<std::string, std::string> headers;
  std::string body;
  std::int64_t timeout_ms = 60'000;
};

struct HttpResponse {
  int status = 0;
  std::string body;
};

/// The only path to the network. Implementations throw Error{transport} or
/// Error{timeout} on connection-level failure.
class Transport {
 public:
  virtual ~Transport() = default;
  virtual HttpResponse send(const HttpRequest& request) = 0;
};

struct ParsedUrl {
  std::string origin;  // scheme://host[:port]
  std::string path;
};

inline ParsedUrl parse_url(std::string_view url) {
  const auto scheme_end = url.find("://");
  if (scheme_end == std::string_view::npos) throw Error(ErrorCode::configuration, "URL lacks scheme: " + std::string(url));
  const auto scheme = url.substr(0, scheme_end);
  if (scheme != "http" && scheme != "https") {
    throw Error(ErrorCode::configuration, "unsupported scheme: " + std::string(scheme));
  }
  const auto path_start = url.find('/', scheme_end + 3);
  ParsedUrl out;
  out.origin = std::string(url.substr(0, path_start));
  out.path = path_start == std::string_view::npos ? "/" : std::string(url.substr(path_start));
  if (out.origin.size() <= scheme_end + 3) throw Error(ErrorCode::configuration, "URL lacks host");
  return out;
}

class HttpTransport final : public Transport {
 public:
  HttpResponse send(const HttpRequest& request) override {
    const auto url = parse_url(request.url);
    httplib::Client client(url.origin);
    const auto timeout = std::chrono::milliseconds(request.timeout_ms);
    client.set_connection_timeout(timeout);
    client.set_read_timeout(timeout);
    client.set_write_timeout(timeout);
    httplib::Headers headers;
    for (const auto& [k, v] : request.headers) {
      if (k != "Content-Type") headers.emplace(k, v);
    }
    const auto started = std::chrono::steady_clock::now();
    auto content_type = request.headers.count("Content-Type") ? request.headers.at("Content-Type") : "application/json";
    httplib::Result result = request.method == "GET" ? client.Get(url.path, headers)
                                                     : client.Post(url.path, headers, request.body, content_type);
    if (!result) {
      const auto waited = std::chrono::steady_clock::now() - started;
      if (result.error() == httplib::Error::ConnectionTimeout || waited >= timeout) {
        throw Error(ErrorCode::timeout, request.url + " after " + std::to_string(request.timeout_ms) + " ms");
      }
      throw Error(ErrorCode::transport, request.url + ": " + httplib::to_string(result.error()));
    }
    return HttpResponse{result->status, result->body};
  }
};

/// Wraps another transport and records every outbound request.
class RecordingTransport final : public Transport {
 public:
  explicit RecordingTransport(std::shared_ptr<Transport> inner = nullptr) : inner_(std::move(inner)) {}

  HttpResponse send(const HttpRequest& request) override {
    {
      std::lock_guard lock(mutex_);
      requests_.push_back(request);
    }
    if (!inner_) throw Error(ErrorCode::transport, "recording transport has no downstream");
    return inner_->send(request);
  }

  [[nodiscard]] std::vector<HttpRequest> requests() const {
    std::lock_guard lock(mutex_);
    return requests_;
  }

  [[nodiscard]] std::size_t connection_count() const {
    std::lock_guard lock(mutex_);
    return requests_.size();
  }

 private:
  std::shared_ptr<Transport> inner_;
  mutable std::mutex mutex_;
  std::vector<HttpRequest> requests_;
};

/// Sends through `transport` only when `config` permits network I/O.
inline HttpResponse send_guarded(Transport& transport, const HttpRequest& request, const BackendConfig& config) {
  if (!config.network_allowed()) {
    throw Error(ErrorCode::privacy_violation,
                "tier " + std::string(to_string(config.tier)) + " is zero-network; refused " + request.url);
  }
  int attempts = 0;
  while (true) {
    try {
      return transport.send(request);
    } catch (const Error& e) {
      if (e.code() != ErrorCode::transport || attempts >= config.retries) throw;
      ++attempts;
    }
  }
}

// Chat completion ------------------------------------------------------------

inline nlohmann::json chat_completion_body(const DetectionPrompt& prompt, const std::string& model_id) {
  return {{"model", model_id},
          {"messages",
           nlohmann::json::array({{{"role", "system"}, {"content", prompt.system_text}},
                                  {{"role", "user"}, {"content", prompt.user_text}}})},
          {"temperature", 0},
          {"n", 1}};
}

inline std::string dump_json(const nlohmann::json& j, int indent = -1) {
  return j.dump(indent, ' ', false, nlohmann::json::error_handler_t::replace);
}

inline RawModelOutput complete(const DetectionPrompt& prompt, const BackendConfig& config, Transport& transport) {
  config.validate();
  if (config.tier == Tier::pattern) throw Error(ErrorCode::no_completion_backend, "pattern tier cannot complete prompts");
  if (config.tier == Tier::in_browser) {
    throw Error(ErrorCode::tier_unavailable, "in-browser inference runs inside the extension");
  }
  HttpRequest req;
  req.url = config.endpoint;
  req.timeout_ms = config.timeout_ms;
  req.headers["Content-Type"] = "application/json";
  if (!config.credential_env.empty()) {
    const char* key = std::getenv(config.credential_env.c_str());
    if (key == nullptr || *key == '\0') {
      throw Error(ErrorCode::configuration, "credential variable " + config.credential_env + " is not set");
    }
    req.headers["Authorization"] = std::string("Bearer ") + key;
  }
  req.body = dump_json(chat_completion_body(prompt, config.model_id));

  const auto started = std::chrono::steady_clock::now();
  const auto resp = send_guarded(transport, req, config);
  const double elapsed =
      std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - started).count();
  if (resp.status < 200 || resp.status >= 300) {
    throw Error(ErrorCode::http_status, std::to_string(resp.status) + " from " + config.endpoint + ": " +
                                            resp.body.substr(0, 200));
  }
  const auto body = nlohmann::json::parse(resp.body, nullptr, false);
  if (body.is_discarded() || !body.contains("choices") || !body["choices"].is_array() || body["choices"].empty()) {
    throw Error(ErrorCode::malformed, "completion response lacks choices");
  }
  const auto& message = body["choices"][0].value("message", nlohmann::json::object());
  if (!message.contains("content") || !message["content"].is_string()) {
    throw Error(ErrorCode::malformed, "completion response lacks message content");
  }
  RawModelOutput out;
  out.text = message["content"].get<std::string>();
  out.model_id = body.value("model", config.model_id);
  out.elapsed_ms = elapsed;
  return out;
}

/// Completion seam used by LLM plugins and mitigation; tests substitute
/// transcripts or failure injectors here.
using Completer = std::function<RawModelOutput(const DetectionPrompt&, const BackendConfig&)>;

inline Completer make_completer(std::shared_ptr<Transport> transport) {
  return [transport = std::move(transport)](const DetectionPrompt& p, const BackendConfig& c) {
    return complete(p, c, *transport);
  };
}

// Cache ---------------------------------------------------------------------

struct CacheKeyParts {
  std::string text_digest;
  std::string plugin_id;
  std::string config_digest;
  std::string model_id;

  static CacheKeyParts make(std::string_view text, std::string plugin_id, std::string_view plugin_config,
                            std::string model_id) {
    return {text::sha256_hex(text), std::move(plugin_id), text::sha256_hex(plugin_config), std::move(model_id)};
  }

  /// The text itself never enters the key, only its digest.
  [[nodiscard]] std::string digest() const {
    return text::sha256_hex(text_digest + "\x1f" + plugin_id + "\x1f" + config_digest + "\x1f" + model_id);
  }
};

struct CacheEntry {
  std::string key;
  std::string value;
  std::chrono::system_clock::time_point inserted_at;
  std::chrono::system_clock::time_point last_access;
};

struct CacheOptions {
  std::size_t capacity = 512;
  std::chrono::seconds ttl = std::chrono::hours(24);
  std::function<std::chrono::system_clock::time_point()> clock = [] { return std::chrono::system_clock::now(); };
};

/// LRU cache with TTL expiry; safe for concurrent get/put.
class ResultCache {
 public:
  explicit ResultCache(CacheOptions options = {}) : options_(std::move(options)) {
    if (options_.capacity == 0) throw Error(ErrorCode::configuration, "cache capacity must be positive");
  }

  std::optional<std::string> get(const std::string& key) {
    std::lock_guard lock(mutex_);
    auto it = index_.find(key);
    if (it == index_.end()) return std::nullopt;
    const auto now = options_.clock();
    if (now - it->second->inserted_at >= options_.ttl) {
      entries_.erase(it->second);
      index_.erase(it);
      return std::nullopt;
    }
    it->second->last_access = now;
    entries_.splice(entries_.begin(), entries_, it->second);
    return it->second->value;
  }

  void put(const std::string& key, std::string value) {
    std::lock_guard lock(mutex_);
    const auto now = options_.clock();
    if (auto it = index_.find(key); it != index_.end()) {
      it->second->value = std::move(value);
      it->second->inserted_at = now;
      it->second->last_access = now;
      entries_.splice(entries_.begin(), entries_, it->second);
      return;
    }
    entries_.push_front(CacheEntry{key, std::move(value), now, now});
    index_[key] = entries_.begin();
    while (entries_.size() > options_.capacity) {
      index_.erase(entries_.back().key);
      entries_.pop_back();
    }
  }

  void erase(const std::string& key) {
    std::lock_guard lock(mutex_);
    if (auto it = index_.find(key); it != index_.end()) {
      entries_.erase(it->second);
      index_.erase(it);
    }
  }

  [[nodiscard]] std::size_t size() const {
    std::lock_guard lock(mutex_);
    return entries_.size();
  }

  /// Most recent first.
  [[nodiscard]] std::vector<CacheEntry> entries() const {
    std::lock_guard lock(mutex_);
    return {entries_.begin(), entries_.end()};
  }

  /// One JSON object per line, least recently used first.
  void save(const std::string& path) const {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw Error(ErrorCode::io, "cannot write cache " + path);
    const auto ms = [](auto tp) {
      return std::chrono::duration_cast<std::chrono::milliseconds>(tp.time_since_epoch()).count();
    };
    std::lock_guard lock(mutex_);
    for (auto it = entries_.rbegin(); it != entries_.rend(); ++it) {
      nlohmann::json line{{"key", it->key},
                          {"value", it->value},
                          {"inserted_at", ms(it->inserted_at)},
                          {"last_access", ms(it->last_access)}};
      out << dump_json(line) << '\n';
    }
  }

  /// Restores entries, skipping expired and malformed lines.
  void load(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) return;
    std::string line;
    std::vector<CacheEntry> loaded;
    while (std::getline(in, line)) {
      auto j = nlohmann::json::parse(line, nullptr, false);
      if (j.is_discarded() || !j.is_object()) continue;
      try {
        CacheEntry e;
        e.key = j.at("key").get<std::string>();
        e.value = j.at("value").get<std::string>();
        e.inserted_at = std::chrono::system_clock::time_point(std::chrono::milliseconds(j.at("inserted_at").get<std::int64_t>()));
        e.last_access = std::chrono::system_clock::time_point(std::chrono::milliseconds(j.at("last_access").get<std::int64_t>()));
        loaded.push_back(std::move(e));
      } catch (const nlohmann::json::exception&) {
        continue;
      }
    }
    std::lock_guard lock(mutex_);
    const auto now = options_.clock();
    for (auto& e : loaded) {
      if (now - e.inserted_at >= options_.ttl) continue;
      if (auto it = index_.find(e.key); it != index_.end()) {
        entries_.erase(it->second);
        index_.erase(it);
      }
      entries_.push_front(std::move(e));
      index_[entries_.front().key] = entries_.begin();
      while (entries_.size() > options_.capacity) {
        index_.erase(entries_.back().key);
        entries_.pop_back();
      }
    }
  }

 private:
  CacheOptions options_;
  mutable std::mutex mutex_;
  std::list<CacheEntry> entries_;
  std::unordered_map<std::string, std::list<CacheEntry>::iterator> index_;
};

template <class T>
struct Cached {
  T value;
  bool from_cache = false;
};

/// Memoizes `producer` under `key`. `encode`/`decode` convert between the
/// value and its cached string; a stored value that fails to decode is
/// treated as a miss. A null cache always calls the producer.
template <class Producer, class Encode, class Decode>
auto cached_analyze(ResultCache* cache, const CacheKeyParts& key, Producer&& producer, Encode&& encode,
                    Decode&& decode) -> Cached<std::invoke_result_t<Producer>> {
  using Value = std::invoke_result_t<Producer>;
  const auto digest = key.digest();
  if (cache != nullptr) {
    if (auto hit = cache->get(digest)) {
      try {
        return Cached<Value>{decode(*hit), true};
      } catch (const std::exception&) {
        cache->erase(digest);
      }
    }
  }
  Value value = producer();
  if (cache != nullptr) {
    try {
      cache->put(digest, encode(value));
    } catch (const std::exception&) {
      // cache failures degrade to an uncached result
    }
  }
  return Cached<Value>{std::move(value), false};
}

/// String-valued convenience overload.
template <class Producer>
Cached<std::string> cached_analyze(ResultCache* cache, const CacheKeyParts& key, Producer&& producer) {
  return cached_analyze(
      cache, key, std::forward<Producer>(producer), [](const std::string& v) { return v; },
      [](const std::string& v) { return v; });
}

}  // namespace vigil
