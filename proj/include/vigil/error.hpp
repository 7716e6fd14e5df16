#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace vigil {

enum class ErrorCode {
  malformed,
  duplicate_id,
  missing_field,
  unknown_field,
  wrong_count,
  unknown_trigger,
  invalid_argument,
  not_found,
  empty_rule_set,
  unparseable,
  unsupported_locale,
  unknown_plugin,
  all_plugins_failed,
  no_completion_backend,
  tier_unavailable,
  privacy_violation,
  configuration,
  timeout,
  transport,
  http_status,
  empty_rewrite,
  io,
};

constexpr std::string_view to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::malformed: return "malformed";
    case ErrorCode::duplicate_id: return "duplicate id";
    case ErrorCode::missing_field: return "missing field";
    case ErrorCode::unknown_field: return "unknown field";
    case ErrorCode::wrong_count: return "wrong count";
    case ErrorCode::unknown_trigger: return "unknown trigger";
    case ErrorCode::invalid_argument: return "invalid argument";
    case ErrorCode::not_found: return "not found";
    case ErrorCode::empty_rule_set: return "empty rule set";
    case ErrorCode::unparseable: return "unparseable";
    case ErrorCode::unsupported_locale: return "unsupported locale";
    case ErrorCode::unknown_plugin: return "unknown plugin";
    case ErrorCode::all_plugins_failed: return "all plugins failed";
    case ErrorCode::no_completion_backend: return "no completion backend";
    case ErrorCode::tier_unavailable: return "tier unavailable here";
    case ErrorCode::privacy_violation: return "privacy violation";
    case ErrorCode::configuration: return "configuration";
    case ErrorCode::timeout: return "timeout";
    case ErrorCode::transport: return "transport";
    case ErrorCode::http_status: return "http status";
    case ErrorCode::empty_rewrite: return "empty rewrite";
    case ErrorCode::io: return "io";
  }
  return "unknown";
}

/// Every failure raised by the library carries a machine-checkable code.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& detail)
      : std::runtime_error(std::string(to_string(code)) + ": " + detail), code_(code) {}

  [[nodiscard]] ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

}  // namespace vigil
