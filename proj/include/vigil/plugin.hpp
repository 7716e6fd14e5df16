#pragma once

// Plugin abstraction: in-process and remote plugins produce findings through
// one contract, and `analyze` fans a request out to them.

#include <algorithm>
#include <chrono>
#include <functional>
#include <future>
#include <map>
#include <memory>
#include <optional>
#include <set>
#include <shared_mutex>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "vigil/error.hpp"
#include "vigil/findings.hpp"
#include "vigil/gateway.hpp"
#include "vigil/taxonomy.hpp"
#include "vigil/text.hpp"

namespace vigil {

enum class PluginKind { in_process, remote };

inline std::string_view to_string(PluginKind k) { return k == PluginKind::in_process ? "in-process" : "remote"; }

inline PluginKind parse_plugin_kind(std::string_view s) {
  if (s == "in-process") return PluginKind::in_process;
  if (s == "remote") return PluginKind::remote;
  throw Error(ErrorCode::malformed, "plugin kind must be in-process|remote");
}

struct PluginDescriptor {
  std::string id;
  PluginKind kind = PluginKind::in_process;
  std::string display_name;
  std::vector<std::string> trigger_domains;  // "cognitive-bias", "moralization"
  std::vector<std::string> locales;
  Tier required_tier = Tier::pattern;
  std::string version = "1.0.0";

  friend bool operator==(const PluginDescriptor&, const PluginDescriptor&) = default;
};

inline void to_json(nlohmann::json& j, const PluginDescriptor& d) {
  j = nlohmann::json{{"id", d.id},
                     {"kind", to_string(d.kind)},
                     {"display_name", d.display_name},
                     {"trigger_domains", d.trigger_domains},
                     {"locales", d.locales},
                     {"required_tier", to_string(d.required_tier)},
                     {"version", d.version}};
}

inline void from_json(const nlohmann::json& j, PluginDescriptor& d) {
  d.id = detail::string_field(j, "id");
  d.kind = parse_plugin_kind(detail::string_field(j, "kind"));
  d.display_name = detail::string_field(j, "display_name");
  d.trigger_domains = detail::field(j, "trigger_domains").get<std::vector<std::string>>();
  d.locales = detail::field(j, "locales").get<std::vector<std::string>>();
  d.required_tier = parse_tier(detail::string_field(j, "required_tier"));
  d.version = detail::string_field(j, "version");
  for (const auto& dom : d.trigger_domains) {
    if (dom != "cognitive-bias" && dom != "moralization") throw Error(ErrorCode::malformed, "trigger domain " + dom);
  }
  if (d.id.empty()) throw Error(ErrorCode::malformed, "plugin id is empty");
}

struct AnalysisRequest {
  std::string content_id;
  std::string text;
  std::string locale = "en";
  double sensitivity = 0.5;
  std::vector<std::string> plugin_ids;
  BackendConfig backend;
};

/// What a detect function sees.
struct PluginContext {
  std::string_view text;
  std::string_view locale;
  double sensitivity = 0.5;
  const BackendConfig& backend;
};

/// What a detect function returns, before validation and filtering.
struct PluginOutput {
  std::vector<Finding> findings;
  std::optional<bool> is_moralizing;
  std::vector<MoralizationFinding> moralization;
  std::map<std::string, std::size_t> dropped;
  std::string model_id;
  std::vector<std::string> notes;
};

using DetectFn = std::function<PluginOutput(const PluginContext&)>;

struct PluginDiagnostics {
  std::map<std::string, std::size_t> dropped;
  std::size_t filtered = 0;
  std::size_t invalid = 0;
  std::string model_id;
  std::vector<std::string> notes;
  std::optional<std::string> error;
  std::optional<std::string> error_code;
};

struct PluginResult {
  std::string plugin_id;
  std::vector<Finding> findings;
  std::optional<bool> is_moralizing;
  std::vector<MoralizationFinding> moralization;
  double elapsed_ms = 0.0;
  bool from_cache = false;
  PluginDiagnostics diagnostics;

  [[nodiscard]] bool ok() const { return !diagnostics.error.has_value(); }
};

struct AnalysisResult {
  std::string content_id;
  std::vector<PluginResult> plugins;

  [[nodiscard]] std::size_t finding_count() const {
    std::size_t n = 0;
    for (const auto& p : plugins) n += p.findings.size();
    return n;
  }
};

/// Raised when every requested plugin failed; carries the per-plugin
/// diagnostics.
class AnalysisFailure : public Error {
 public:
  explicit AnalysisFailure(AnalysisResult result)
      : Error(ErrorCode::all_plugins_failed, "every requested plugin failed"), result_(std::move(result)) {}
  [[nodiscard]] const AnalysisResult& result() const { return result_; }

 private:
  AnalysisResult result_;
};

// JSON ----------------------------------------------------------------------

inline nlohmann::json plugin_output_to_json(const PluginOutput& o) {
  nlohmann::json j{{"findings", o.findings},
                   {"moralization", o.moralization},
                   {"dropped", o.dropped},
                   {"model_id", o.model_id},
                   {"notes", o.notes}};
  j["is_moralizing"] = o.is_moralizing ? nlohmann::json(*o.is_moralizing) : nlohmann::json(nullptr);
  return j;
}

inline PluginOutput plugin_output_from_json(const nlohmann::json& j) {
  PluginOutput o;
  o.findings = j.at("findings").get<std::vector<Finding>>();
  o.moralization = j.at("moralization").get<std::vector<MoralizationFinding>>();
  o.dropped = j.at("dropped").get<std::map<std::string, std::size_t>>();
  o.model_id = j.at("model_id").get<std::string>();
  o.notes = j.at("notes").get<std::vector<std::string>>();
  if (!j.at("is_moralizing").is_null()) o.is_moralizing = j.at("is_moralizing").get<bool>();
  return o;
}

inline void to_json(nlohmann::json& j, const PluginResult& r) {
  const auto opt = [](const std::optional<std::string>& s) { return s ? nlohmann::json(*s) : nlohmann::json(nullptr); };
  j = nlohmann::json{{"plugin_id", r.plugin_id},
                     {"findings", r.findings},
                     {"elapsed_ms", r.elapsed_ms},
                     {"from_cache", r.from_cache},
                     {"diagnostics",
                      {{"dropped", r.diagnostics.dropped},
                       {"filtered", r.diagnostics.filtered},
                       {"invalid", r.diagnostics.invalid},
                       {"model_id", r.diagnostics.model_id},
                       {"notes", r.diagnostics.notes},
                       {"error", opt(r.diagnostics.error)},
                       {"error_code", opt(r.diagnostics.error_code)}}}};
  if (r.is_moralizing) {
    j["moralization"] = {{"is_moralizing", *r.is_moralizing}, {"findings", r.moralization}};
  }
}

inline void from_json(const nlohmann::json& j, PluginResult& r) {
  r.plugin_id = detail::string_field(j, "plugin_id");
  r.findings = detail::field(j, "findings").get<std::vector<Finding>>();
  r.elapsed_ms = detail::field(j, "elapsed_ms").get<double>();
  r.from_cache = detail::field(j, "from_cache").get<bool>();
  const auto& d = detail::field(j, "diagnostics");
  r.diagnostics.dropped = d.at("dropped").get<std::map<std::string, std::size_t>>();
  r.diagnostics.filtered = d.at("filtered").get<std::size_t>();
  r.diagnostics.invalid = d.at("invalid").get<std::size_t>();
  r.diagnostics.model_id = d.at("model_id").get<std::string>();
  r.diagnostics.notes = d.at("notes").get<std::vector<std::string>>();
  if (!d.at("error").is_null()) r.diagnostics.error = d.at("error").get<std::string>();
  if (!d.at("error_code").is_null()) r.diagnostics.error_code = d.at("error_code").get<std::string>();
  if (j.contains("moralization")) {
    r.is_moralizing = j["moralization"].at("is_moralizing").get<bool>();
    r.moralization = j["moralization"].at("findings").get<std::vector<MoralizationFinding>>();
  }
}

inline void to_json(nlohmann::json& j, const AnalysisResult& r) {
  j = nlohmann::json{{"content_id", r.content_id}, {"plugins", r.plugins}};
}

inline void from_json(const nlohmann::json& j, AnalysisResult& r) {
  r.content_id = detail::string_field(j, "content_id");
  r.plugins = detail::field(j, "plugins").get<std::vector<PluginResult>>();
}

inline nlohmann::json to_json(const AnalysisRequest& r) {
  return {{"content_id", r.content_id},
          {"text", r.text},
          {"locale", r.locale},
          {"sensitivity", r.sensitivity},
          {"plugin_ids", r.plugin_ids},
          {"backend", {{"tier", to_string(r.backend.tier)}}}};
}

/// Parses a request body; wire-level shape errors are `malformed`.
inline AnalysisRequest analysis_request_from_json(const nlohmann::json& j) {
  if (!j.is_object()) throw Error(ErrorCode::malformed, "request body must be an object");
  AnalysisRequest r;
  r.content_id = j.contains("content_id") ? detail::string_field(j, "content_id") : std::string();
  r.text = detail::string_field(j, "text");
  if (j.contains("locale")) r.locale = detail::string_field(j, "locale");
  if (j.contains("sensitivity")) {
    if (!j["sensitivity"].is_number()) throw Error(ErrorCode::malformed, "sensitivity must be a number");
    r.sensitivity = j["sensitivity"].get<double>();
  }
  const auto& ids = detail::field(j, "plugin_ids");
  if (!ids.is_array()) throw Error(ErrorCode::malformed, "plugin_ids must be an array");
  for (const auto& id : ids) {
    if (!id.is_string()) throw Error(ErrorCode::malformed, "plugin id must be a string");
    r.plugin_ids.push_back(id.get<std::string>());
  }
  if (j.contains("backend") && j["backend"].is_object() && j["backend"].contains("tier")) {
    r.backend.tier = parse_tier(detail::string_field(j["backend"], "tier"));
  }
  return r;
}

// Registry ------------------------------------------------------------------

class PluginRegistry {
 public:
  void register_plugin(PluginDescriptor descriptor, DetectFn detect) {
    if (descriptor.id.empty()) throw Error(ErrorCode::invalid_argument, "plugin id is empty");
    if (!detect) throw Error(ErrorCode::invalid_argument, "plugin " + descriptor.id + " has no detect function");
    std::unique_lock lock(mutex_);
    for (const auto& e : entries_) {
      if (e.descriptor.id == descriptor.id) throw Error(ErrorCode::duplicate_id, "plugin " + descriptor.id);
    }
    entries_.push_back({std::move(descriptor), std::move(detect)});
  }

  /// Registration order.
  [[nodiscard]] std::vector<PluginDescriptor> list_plugins() const {
    std::shared_lock lock(mutex_);
    std::vector<PluginDescriptor> out;
    for (const auto& e : entries_) out.push_back(e.descriptor);
    return out;
  }

  [[nodiscard]] std::optional<std::pair<PluginDescriptor, DetectFn>> find(std::string_view id) const {
    std::shared_lock lock(mutex_);
    for (const auto& e : entries_) {
      if (e.descriptor.id == id) return std::make_pair(e.descriptor, e.detect);
    }
    return std::nullopt;
  }

  [[nodiscard]] bool contains(std::string_view id) const { return find(id).has_value(); }

 private:
  struct Entry {
    PluginDescriptor descriptor;
    DetectFn detect;
  };
  mutable std::shared_mutex mutex_;
  std::vector<Entry> entries_;
};

/// Identity mapping from the user-facing knob to a confidence cutoff.
inline double sensitivity_threshold(double sensitivity) { return sensitivity; }

inline void validate_request(const PluginRegistry& registry, const AnalysisRequest& request) {
  if (request.text.empty()) throw Error(ErrorCode::invalid_argument, "text is empty");
  if (!text::is_valid_utf8(request.text)) throw Error(ErrorCode::invalid_argument, "text is not valid UTF-8");
  if (!(request.sensitivity >= 0.0 && request.sensitivity <= 1.0)) {
    throw Error(ErrorCode::invalid_argument, "sensitivity outside [0,1]");
  }
  if (request.plugin_ids.empty()) throw Error(ErrorCode::invalid_argument, "no plugins requested");
  std::set<std::string> seen;
  for (const auto& id : request.plugin_ids) {
    if (!seen.insert(id).second) throw Error(ErrorCode::invalid_argument, "plugin requested twice: " + id);
    if (!registry.contains(id)) throw Error(ErrorCode::unknown_plugin, id);
  }
}

namespace detail {

inline PluginResult run_plugin(const PluginDescriptor& descriptor, const DetectFn& detect,
                               const AnalysisRequest& request, const std::u32string& decoded, const Taxonomy& taxonomy,
                               ResultCache* cache) {
  PluginResult result;
  result.plugin_id = descriptor.id;
  const auto started = std::chrono::steady_clock::now();
  try {
    if (tier_rank(request.backend.tier) < tier_rank(descriptor.required_tier)) {
      throw Error(ErrorCode::configuration, "plugin " + descriptor.id + " needs tier " +
                                                std::string(to_string(descriptor.required_tier)) + " or above");
    }
    const nlohmann::json plugin_config{{"locale", request.locale},
                                       {"sensitivity", request.sensitivity},
                                       {"version", descriptor.version},
                                       {"backend", request.backend.digest()}};
    const auto key = CacheKeyParts::make(request.text, descriptor.id, plugin_config.dump(), request.backend.model_id);
    auto produced = cached_analyze(
        cache, key,
        [&] {
          return detect(PluginContext{request.text, request.locale, request.sensitivity, request.backend});
        },
        [](const PluginOutput& o) { return dump_json(plugin_output_to_json(o)); },
        [](const std::string& s) { return plugin_output_from_json(nlohmann::json::parse(s)); });
    result.from_cache = produced.from_cache;
    auto& out = produced.value;
    result.diagnostics.dropped = out.dropped;
    result.diagnostics.model_id = out.model_id;
    result.diagnostics.notes = out.notes;
    result.is_moralizing = out.is_moralizing;

    const double threshold = sensitivity_threshold(request.sensitivity);
    std::vector<Finding> kept;
    for (auto& f : out.findings) {
      try {
        validate_finding(f, decoded, taxonomy);
      } catch (const Error& e) {
        ++result.diagnostics.invalid;
        result.diagnostics.notes.push_back(std::string("invalid finding rejected: ") + e.what());
        continue;
      }
      if (f.confidence < threshold) {
        ++result.diagnostics.filtered;
        continue;
      }
      kept.push_back(std::move(f));
    }
    result.findings = dedupe_findings(std::move(kept));
    for (std::size_t i = 0; i < result.findings.size(); ++i) {
      result.findings[i].id = descriptor.id + ":" + std::to_string(i);
      result.findings[i].plugin_id = descriptor.id;
    }
    for (auto& m : out.moralization) {
      try {
        validate_moralization(m, decoded, taxonomy);
        result.moralization.push_back(std::move(m));
      } catch (const Error& e) {
        ++result.diagnostics.invalid;
        result.diagnostics.notes.push_back(std::string("invalid moralization rejected: ") + e.what());
      }
    }
  } catch (const Error& e) {
    result.diagnostics.error = e.what();
    result.diagnostics.error_code = std::string(to_string(e.code()));
  } catch (const std::exception& e) {
    result.diagnostics.error = e.what();
    result.diagnostics.error_code = "internal";
  }
  result.elapsed_ms =
      std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - started).count();
  return result;
}

}  // namespace detail

/// Dispatches the request to each plugin concurrently and assembles results
/// in request order. One plugin failing is recorded in its diagnostics; if
/// every plugin fails an AnalysisFailure is thrown.
inline AnalysisResult analyze(const PluginRegistry& registry, const AnalysisRequest& request,
                              const Taxonomy& taxonomy, ResultCache* cache = nullptr) {
  validate_request(registry, request);
  const auto decoded = text::decode_utf8(request.text);

  std::vector<std::pair<PluginDescriptor, DetectFn>> plugins;
  for (const auto& id : request.plugin_ids) plugins.push_back(*registry.find(id));

  AnalysisResult result;
  result.content_id = request.content_id;
  if (plugins.size() == 1) {
    result.plugins.push_back(
        detail::run_plugin(plugins[0].first, plugins[0].second, request, decoded, taxonomy, cache));
  } else {
    std::vector<std::future<PluginResult>> futures;
    for (const auto& [descriptor, detect] : plugins) {
      futures.push_back(std::async(std::launch::async, [&, &descriptor = descriptor, &detect = detect] {
        return detail::run_plugin(descriptor, detect, request, decoded, taxonomy, cache);
      }));
    }
    for (auto& f : futures) result.plugins.push_back(f.get());
  }
  if (std::none_of(result.plugins.begin(), result.plugins.end(), [](const auto& p) { return p.ok(); })) {
    throw AnalysisFailure(std::move(result));
  }
  return result;
}

// Remote plugins ------------------------------------------------------------

struct RegistryResponse {
  std::vector<PluginDescriptor> plugins;
  std::string server_version;
  std::string taxonomy_version;

  friend bool operator==(const RegistryResponse&, const RegistryResponse&) = default;
};

inline void to_json(nlohmann::json& j, const RegistryResponse& r) {
  j = nlohmann::json{
      {"plugins", r.plugins}, {"server_version", r.server_version}, {"taxonomy_version", r.taxonomy_version}};
}

inline void from_json(const nlohmann::json& j, RegistryResponse& r) {
  r.plugins = detail::field(j, "plugins").get<std::vector<PluginDescriptor>>();
  r.server_version = detail::string_field(j, "server_version");
  r.taxonomy_version = detail::string_field(j, "taxonomy_version");
}

inline std::string join_url(std::string base, std::string_view path) {
  while (!base.empty() && base.back() == '/') base.pop_back();
  return base + std::string(path);
}

/// Fetches a server's plugin registry. `network` decides whether the call
/// is permitted at all.
inline RegistryResponse discover_remote_plugins(Transport& transport, const std::string& base_url,
                                                const BackendConfig& network) {
  HttpRequest req;
  req.method = "GET";
  req.url = join_url(base_url, "/api/plugins");
  req.timeout_ms = network.timeout_ms;
  const auto resp = send_guarded(transport, req, network);
  if (resp.status != 200) throw Error(ErrorCode::http_status, std::to_string(resp.status) + " from " + req.url);
  auto j = nlohmann::json::parse(resp.body, nullptr, false);
  if (j.is_discarded()) throw Error(ErrorCode::malformed, "registry response is not JSON");
  try {
    return j.get<RegistryResponse>();
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::malformed, std::string("registry response: ") + e.what());
  }
}

/// Detect function forwarding to a server plugin over HTTP. The request's
/// own backend tier decides whether the call may leave the machine.
inline DetectFn make_remote_detect(std::shared_ptr<Transport> transport, std::string base_url, std::string plugin_id) {
  return [transport = std::move(transport), base_url = std::move(base_url),
          plugin_id = std::move(plugin_id)](const PluginContext& ctx) {
    AnalysisRequest forward;
    forward.content_id = "remote";
    forward.text = std::string(ctx.text);
    forward.locale = std::string(ctx.locale);
    forward.sensitivity = ctx.sensitivity;
    forward.plugin_ids = {plugin_id};
    HttpRequest req;
    req.url = join_url(base_url, "/api/analyze");
    req.timeout_ms = ctx.backend.timeout_ms;
    req.headers["Content-Type"] = "application/json";
    req.body = dump_json(to_json(forward));
    const auto resp = send_guarded(*transport, req, ctx.backend);
    if (resp.status != 200) {
      throw Error(ErrorCode::http_status, std::to_string(resp.status) + " from " + req.url + ": " +
                                              resp.body.substr(0, 200));
    }
    AnalysisResult remote;
    try {
      remote = nlohmann::json::parse(resp.body).get<AnalysisResult>();
    } catch (const nlohmann::json::exception& e) {
      throw Error(ErrorCode::malformed, std::string("remote analyze response: ") + e.what());
    }
    if (remote.plugins.size() != 1) throw Error(ErrorCode::malformed, "remote response must hold one plugin");
    auto& r = remote.plugins.front();
    if (r.diagnostics.error) throw Error(ErrorCode::http_status, "remote plugin failed: " + *r.diagnostics.error);
    PluginOutput out;
    out.findings = std::move(r.findings);
    out.moralization = std::move(r.moralization);
    out.is_moralizing = r.is_moralizing;
    out.dropped = r.diagnostics.dropped;
    out.model_id = r.diagnostics.model_id;
    out.notes = r.diagnostics.notes;
    return out;
  };
}

/// Registers every plugin a server advertises as a remote plugin.
inline std::vector<PluginDescriptor> register_remote_plugins(PluginRegistry& registry,
                                                             std::shared_ptr<Transport> transport,
                                                             const std::string& base_url,
                                                             const BackendConfig& network) {
  auto response = discover_remote_plugins(*transport, base_url, network);
  std::vector<PluginDescriptor> registered;
  for (auto d : response.plugins) {
    d.kind = PluginKind::remote;
    registry.register_plugin(d, make_remote_detect(transport, base_url, d.id));
    registered.push_back(std::move(d));
  }
  return registered;
}

}  // namespace vigil
