#pragma once

#include <filesystem>
#include <memory>
#include <random>
#include <thread>
#include <string>
#include <vector>

#include "vigil/vigil.hpp"

namespace vigil::testing {

inline std::string data_file(const std::string& name) { return std::string(VIGIL_DATA_DIR) + "/" + name; }
inline std::string fixture_file(const std::string& name) { return std::string(VIGIL_FIXTURE_DIR) + "/" + name; }

inline const std::shared_ptr<const Taxonomy>& shipped_taxonomy() {
  static const auto tax = std::make_shared<const Taxonomy>(load_taxonomy_file(data_file("taxonomy.json")));
  return tax;
}

inline const std::shared_ptr<const CompiledMatcher>& shipped_matcher() {
  static const auto m = std::make_shared<const CompiledMatcher>(
      compile_rules(*shipped_taxonomy(), load_rules(read_file(data_file("rules.json")))));
  return m;
}

/// Set VIGIL_UPDATE_GOLDEN=1 to rewrite golden fixtures instead of comparing.
inline bool updating_golden() {
  const char* v = std::getenv("VIGIL_UPDATE_GOLDEN");
  return v != nullptr && std::string(v) == "1";
}

inline BackendConfig local_backend(std::string endpoint = "http://127.0.0.1:9/v1/chat/completions") {
  BackendConfig c;
  c.tier = Tier::local_api;
  c.endpoint = std::move(endpoint);
  c.model_id = "stub-model";
  c.timeout_ms = 5'000;
  return c;
}

/// Completer that ignores the prompt and returns `text`.
inline Completer canned(std::string text, std::string model = "stub-model") {
  return [text = std::move(text), model = std::move(model)](const DetectionPrompt&, const BackendConfig&) {
    return RawModelOutput{text, model, 0.0};
  };
}

inline Finding finding_for(const Taxonomy& tax, std::string_view source, const std::string& type,
                           std::string_view quote, double confidence = 0.8, std::string plugin = "test") {
  Finding f;
  f.id = plugin + ":x";
  f.plugin_id = std::move(plugin);
  f.trigger_type_id = type;
  f.bias_triggered = tax.trigger(type).bias_triggered;
  f.severity = tax.trigger(type).default_severity;
  f.span = ground_span(source, quote);
  f.explanation = "flagged";
  f.confidence = confidence;
  return f;
}

/// Random text over a small alphabet that exercises boundaries, case,
/// whitespace runs and non-ASCII letters.
inline std::string random_text(std::mt19937& rng, std::size_t max_words, const std::vector<std::string>& vocab) {
  std::uniform_int_distribution<std::size_t> nwords(0, max_words);
  std::uniform_int_distribution<std::size_t> pick(0, vocab.size() - 1);
  static const std::vector<std::string> seps = {" ", "  ", "\n", ", ", ". ", "-", "\t", " \n "};
  std::uniform_int_distribution<std::size_t> sep(0, seps.size() - 1);
  std::string out;
  const auto n = nwords(rng);
  for (std::size_t i = 0; i < n; ++i) {
    if (i) out += seps[sep(rng)];
    out += vocab[pick(rng)];
  }
  return out;
}

/// httplib server on an ephemeral loopback port, stopped on destruction.
class StubServer {
 public:
  StubServer() = default;
  StubServer(const StubServer&) = delete;
  StubServer& operator=(const StubServer&) = delete;
  ~StubServer() { stop(); }

  httplib::Server& server() { return server_; }

  void start() {
    port_ = server_.bind_to_any_port("127.0.0.1");
    thread_ = std::thread([this] { server_.listen_after_bind(); });
    server_.wait_until_ready();
  }

  void stop() {
    server_.stop();
    if (thread_.joinable()) thread_.join();
  }

  [[nodiscard]] int port() const { return port_; }
  [[nodiscard]] std::string url(const std::string& path) const {
    return "http://127.0.0.1:" + std::to_string(port_) + path;
  }

 private:
  httplib::Server server_;
  std::thread thread_;
  int port_ = 0;
};

}  // namespace vigil::testing
