#pragma once

// Stateless HTTP backend: plugin discovery, analyze, rewrite and health.
// Request handling is a pure function of (method, path, body) so it can be
// exercised without sockets; `bind` mounts it on a cpp-httplib server.

#include <chrono>
#include <memory>
#include <optional>
#include <string>
#include <vector>
#include <string_view>
#include <utility>

#include <httplib.h>
#include <nlohmann/json.hpp>

#include "vigil/error.hpp"
#include "vigil/findings.hpp"
#include "vigil/gateway.hpp"
#include "vigil/mitigation.hpp"
#include "vigil/plugin.hpp"
#include "vigil/taxonomy.hpp"

namespace vigil {

inline constexpr std::string_view kServerVersion = "1.0.0";

struct ServiceConfig {
  std::string server_version = std::string(kServerVersion);
  /// Extension origin allowed by CORS; empty disables CORS headers.
  std::string cors_origin;
};

struct ServiceResponse {
  int status = 200;
  nlohmann::json body;
};

inline nlohmann::json error_body(std::string_view code, std::string_view message) {
  return {{"error", {{"code", code}, {"message", message}}}};
}

class VigilService {
 public:
  VigilService(std::shared_ptr<const Taxonomy> taxonomy, std::shared_ptr<const PluginRegistry> registry,
               BackendConfig backend, Completer completer, ServiceConfig config = {})
      : taxonomy_(std::move(taxonomy)),
        registry_(std::move(registry)),
        backend_(std::move(backend)),
        completer_(std::move(completer)),
        config_(std::move(config)),
        started_(std::chrono::steady_clock::now()) {}

  [[nodiscard]] RegistryResponse registry_response() const {
    return RegistryResponse{registry_->list_plugins(), config_.server_version, taxonomy_->version()};
  }

  [[nodiscard]] ServiceResponse handle(std::string_view method, std::string_view path, std::string_view body) const {
    try {
      if (path == "/health") {
        if (method != "GET") return method_not_allowed();
        return health();
      }
      if (path == "/api/plugins") {
        if (method != "GET") return method_not_allowed();
        return {200, registry_response()};
      }
      if (path == "/api/analyze") {
        if (method != "POST") return method_not_allowed();
        return analyze_endpoint(body);
      }
      if (path == "/api/rewrite") {
        if (method != "POST") return method_not_allowed();
        return rewrite_endpoint(body);
      }
      return {404, error_body("not_found", std::string(path))};
    } catch (const std::exception& e) {
      return {500, error_body("internal", e.what())};
    }
  }

  /// Mounts all routes on `server`.
  void bind(httplib::Server& server) const {
    const auto route = [this](const httplib::Request& req, httplib::Response& res) {
      auto out = handle(req.method, req.path, req.body);
      res.status = out.status;
      res.set_content(dump_json(out.body), "application/json");
      apply_cors(res);
    };
    server.Get("/health", route);
    server.Get("/api/plugins", route);
    server.Post("/api/analyze", route);
    server.Post("/api/rewrite", route);
    server.Options(R"(/.*)", [this](const httplib::Request&, httplib::Response& res) {
      res.status = 204;
      apply_cors(res);
    });
    server.set_error_handler([this](const httplib::Request& req, httplib::Response& res) {
      if (!res.body.empty()) return;
      res.set_content(dump_json(error_body(res.status == 404 ? "not_found" : "error", req.path)), "application/json");
      apply_cors(res);
    });
  }

 private:
  static ServiceResponse method_not_allowed() { return {405, error_body("method_not_allowed", "")}; }

  void apply_cors(httplib::Response& res) const {
    if (config_.cors_origin.empty()) return;
    res.set_header("Access-Control-Allow-Origin", config_.cors_origin);
    res.set_header("Access-Control-Allow-Methods", "GET, POST, OPTIONS");
    res.set_header("Access-Control-Allow-Headers", "Content-Type");
    res.set_header("Vary", "Origin");
  }

  ServiceResponse health() const {
    const auto uptime =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - started_).count();
    return {200,
            {{"status", "ok"},
             {"version", config_.server_version},
             {"taxonomy_version", taxonomy_->version()},
             {"uptime_s", uptime}}};
  }

  static std::optional<nlohmann::json> parse_body(std::string_view body) {
    auto j = nlohmann::json::parse(body.begin(), body.end(), nullptr, false);
    if (j.is_discarded() || !j.is_object()) return std::nullopt;
    return j;
  }

  ServiceResponse analyze_endpoint(std::string_view body) const {
    const auto j = parse_body(body);
    if (!j) return {400, error_body("malformed", "body must be a JSON object")};
    AnalysisRequest request;
    try {
      request = analysis_request_from_json(*j);
    } catch (const Error& e) {
      return {400, error_body(to_string(e.code()), e.what())};
    } catch (const nlohmann::json::exception& e) {
      return {400, error_body("malformed", e.what())};
    }
    // the server always analyzes with its own configured backend
    request.backend = backend_;
    try {
      auto result = analyze(*registry_, request, *taxonomy_, nullptr);
      return {200, result};
    } catch (const AnalysisFailure& e) {
      nlohmann::json out = error_body("upstream_failure", e.what());
      out["result"] = e.result();
      return {502, out};
    } catch (const Error& e) {
      const int status = e.code() == ErrorCode::unknown_plugin ? 422 : 400;
      return {status, error_body(to_string(e.code()), e.what())};
    }
  }

  ServiceResponse rewrite_endpoint(std::string_view body) const {
    const auto j = parse_body(body);
    if (!j) return {400, error_body("malformed", "body must be a JSON object")};
    if (!j->contains("text") || !(*j)["text"].is_string() || (*j)["text"].get<std::string>().empty()) {
      return {400, error_body("missing_field", "text")};
    }
    const auto text_value = (*j)["text"].get<std::string>();
    if (!text::is_valid_utf8(text_value)) return {400, error_body("malformed", "text is not valid UTF-8")};
    std::vector<Finding> findings;
    try {
      if (j->contains("findings")) findings = (*j)["findings"].get<std::vector<Finding>>();
      const auto decoded = text::decode_utf8(text_value);
      for (const auto& f : findings) validate_finding(f, decoded, *taxonomy_);
    } catch (const Error& e) {
      return {400, error_body(to_string(e.code()), e.what())};
    } catch (const nlohmann::json::exception& e) {
      return {400, error_body("malformed", e.what())};
    }
    try {
      if (j->contains("k") && !(*j)["k"].is_null()) {
        if (!(*j)["k"].is_number_integer() || (*j)["k"].get<long long>() < 1) {
          return {400, error_body("invalid_argument", "k must be a positive integer")};
        }
        const auto k = static_cast<std::size_t>((*j)["k"].get<long long>());
        return {200, alternatives(text_value, findings, k, backend_, completer_)};
      }
      return {200, rewrite(text_value, findings, backend_, completer_)};
    } catch (const Error& e) {
      if (e.code() == ErrorCode::invalid_argument) return {400, error_body(to_string(e.code()), e.what())};
      return {502, error_body(to_string(e.code()), e.what())};
    }
  }

  std::shared_ptr<const Taxonomy> taxonomy_;
  std::shared_ptr<const PluginRegistry> registry_;
  BackendConfig backend_;
  Completer completer_;
  ServiceConfig config_;
  std::chrono::steady_clock::time_point started_;
};

}  // namespace vigil
