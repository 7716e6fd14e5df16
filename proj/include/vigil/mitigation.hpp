#pragma once

// LLM reformulation of a whole content block. Inputs are never modified;
// keeping the original for "restore" is the caller's job.

#include <algorithm>
#include <cstddef>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "vigil/error.hpp"
#include "vigil/findings.hpp"
#include "vigil/gateway.hpp"
#include "vigil/llm_detection.hpp"
#include "vigil/prompt.hpp"
#include "vigil/text.hpp"

namespace vigil {

enum class Disposition { neutralized, unchanged };

inline std::string_view to_string(Disposition d) { return d == Disposition::neutralized ? "neutralized" : "unchanged"; }

struct FindingDisposition {
  std::string finding_id;
  Disposition disposition = Disposition::unchanged;

  friend bool operator==(const FindingDisposition&, const FindingDisposition&) = default;
};

struct RewriteResult {
  std::string rewritten;
  std::vector<FindingDisposition> dispositions;
  std::string rationale;
  std::string model_id;

  friend bool operator==(const RewriteResult&, const RewriteResult&) = default;
};

struct AlternativesResult {
  std::vector<std::string> variants;
  std::size_t requested = 0;
  /// How many fewer distinct variants than requested came back.
  std::size_t short_by = 0;
  std::string model_id;
};

inline std::string findings_digest_for_prompt(const std::vector<Finding>& findings) {
  std::string out;
  for (const auto& f : findings) {
    out += "- [" + f.id + "] " + f.trigger_type_id + " (" + f.bias_triggered + "): \"" + f.span.excerpt + "\"; " +
           f.explanation + "\n";
  }
  return out;
}

inline DetectionPrompt build_rewrite_prompt(std::string_view text, const std::vector<Finding>& findings) {
  DetectionPrompt p;
  p.system_text =
      "You rewrite short texts so that they no longer exploit cognitive biases of the reader. Keep every factual "
      "claim and the overall meaning; change only framing, tone and wording. Keep the original language.";
  p.user_text = "Flagged passages:\n" + findings_digest_for_prompt(findings) +
                "\nRewrite the whole text below. Answer with one ```json block holding an object with keys "
                "\"rewritten\" (the full new text), \"rationale\" (one sentence) and \"dispositions\" (list of "
                "{\"finding_id\", \"status\"} where status is \"neutralized\" or \"unchanged\").\n\n" +
                embed_text(text) + "\n";
  p.output_contract =
      R"({"type":"object","required":["rewritten"],"properties":{"rewritten":{"type":"string"},"rationale":{"type":"string"},"dispositions":{"type":"array"}}})";
  return p;
}

inline DetectionPrompt build_alternatives_prompt(std::string_view text, const std::vector<Finding>& findings,
                                                 std::size_t k) {
  DetectionPrompt p;
  p.system_text =
      "You propose neutral reformulations of short texts. Keep every factual claim and the overall meaning; "
      "remove wording that exploits cognitive biases. Keep the original language.";
  p.user_text = "Flagged passages:\n" + findings_digest_for_prompt(findings) + "\nWrite " + std::to_string(k) +
                " distinct reformulations of the whole text below. Answer with one ```json block holding a JSON "
                "array of strings.\n\n" +
                embed_text(text) + "\n";
  p.output_contract = R"({"type":"array","items":{"type":"string"},"minItems":)" + std::to_string(k) +
                      R"(,"maxItems":)" + std::to_string(k) + "}";
  return p;
}

namespace detail {

/// Completion text without a surrounding code fence.
inline std::string strip_fence(std::string_view raw) {
  auto s = text::trim(raw);
  if (s.rfind("```", 0) == 0) {
    const auto nl = s.find('\n');
    const auto close = s.rfind("```");
    if (nl != std::string::npos && close != std::string::npos && close > nl) s = text::trim(s.substr(nl + 1, close - nl - 1));
  }
  return s;
}

inline bool contains_excerpt(std::string_view haystack, std::string_view excerpt) {
  return !excerpt.empty() && haystack.find(excerpt) != std::string_view::npos;
}

}  // namespace detail

inline RewriteResult rewrite(std::string_view text, const std::vector<Finding>& findings, const BackendConfig& config,
                             const Completer& completer) {
  if (findings.empty()) {
    return RewriteResult{std::string(text), {}, "no findings to neutralize", ""};
  }
  const auto raw = completer(build_rewrite_prompt(text, findings), config);
  RewriteResult result;
  result.model_id = raw.model_id;
  std::map<std::string, Disposition> claimed;
  const auto payload = extract_payload(raw.text);
  if (payload && payload->is_object() && payload->contains("rewritten") && (*payload)["rewritten"].is_string()) {
    result.rewritten = (*payload)["rewritten"].get<std::string>();
    if (payload->contains("rationale") && (*payload)["rationale"].is_string()) {
      result.rationale = (*payload)["rationale"].get<std::string>();
    }
    if (payload->contains("dispositions") && (*payload)["dispositions"].is_array()) {
      for (const auto& d : (*payload)["dispositions"]) {
        if (!d.is_object() || !d.contains("finding_id") || !d["finding_id"].is_string()) continue;
        const auto status = d.value("status", "");
        if (status == "neutralized") claimed[d["finding_id"].get<std::string>()] = Disposition::neutralized;
        if (status == "unchanged") claimed[d["finding_id"].get<std::string>()] = Disposition::unchanged;
      }
    }
  } else {
    result.rewritten = detail::strip_fence(raw.text);
  }
  if (text::trim(result.rewritten).empty()) throw Error(ErrorCode::empty_rewrite, "model returned a blank rewrite");
  for (const auto& f : findings) {
    auto it = claimed.find(f.id);
    const auto d = it != claimed.end() ? it->second
                   : detail::contains_excerpt(result.rewritten, f.span.excerpt) ? Disposition::unchanged
                                                                                : Disposition::neutralized;
    result.dispositions.push_back({f.id, d});
  }
  return result;
}

inline AlternativesResult alternatives(std::string_view text, const std::vector<Finding>& findings, std::size_t k,
                                       const BackendConfig& config, const Completer& completer) {
  if (k < 1) throw Error(ErrorCode::invalid_argument, "k must be at least 1");
  const auto raw = completer(build_alternatives_prompt(text, findings, k), config);
  const auto payload = extract_payload(raw.text);
  const nlohmann::json* list = nullptr;
  if (payload && payload->is_array()) list = &*payload;
  if (payload && payload->is_object()) {
    for (const char* key : {"alternatives", "variants"}) {
      if (payload->contains(key) && (*payload)[key].is_array()) list = &(*payload)[key];
    }
  }
  if (list == nullptr) throw Error(ErrorCode::unparseable, "no list of alternatives in model output");
  AlternativesResult out;
  out.requested = k;
  out.model_id = raw.model_id;
  std::set<std::string> seen;
  for (const auto& v : *list) {
    if (!v.is_string()) continue;
    auto s = text::trim(v.get<std::string>());
    if (s.empty() || !seen.insert(s).second) continue;
    out.variants.push_back(std::move(s));
    if (out.variants.size() == k) break;
  }
  out.short_by = k - out.variants.size();
  return out;
}

struct RewriteCheck {
  std::string finding_id;
  bool excerpt_removed = false;
};

struct VerifyReport {
  std::vector<RewriteCheck> findings;
  double length_ratio = 0.0;
  bool length_ok = false;
  bool differs = false;

  [[nodiscard]] bool all_passed() const {
    return length_ok && differs &&
           std::all_of(findings.begin(), findings.end(), [](const auto& c) { return c.excerpt_removed; });
  }
};

inline constexpr double kMinLengthRatio = 0.5;
inline constexpr double kMaxLengthRatio = 2.0;

/// Heuristic, advisory checks on a rewrite. `differs` is vacuously true
/// when there was nothing to neutralize.
inline VerifyReport verify_rewrite(std::string_view original, const RewriteResult& result,
                                   const std::vector<Finding>& findings) {
  VerifyReport report;
  for (const auto& f : findings) {
    report.findings.push_back({f.id, !detail::contains_excerpt(result.rewritten, f.span.excerpt)});
  }
  const auto orig_len = text::length(original);
  const auto new_len = text::length(result.rewritten);
  report.length_ratio = orig_len == 0 ? 0.0 : static_cast<double>(new_len) / static_cast<double>(orig_len);
  report.length_ok = report.length_ratio >= kMinLengthRatio && report.length_ratio <= kMaxLengthRatio;
  report.differs = findings.empty() || result.rewritten != original;
  return report;
}

inline void to_json(nlohmann::json& j, const RewriteResult& r) {
  nlohmann::json d = nlohmann::json::array();
  for (const auto& x : r.dispositions) d.push_back({{"finding_id", x.finding_id}, {"disposition", to_string(x.disposition)}});
  j = nlohmann::json{{"rewritten", r.rewritten}, {"dispositions", d}, {"rationale", r.rationale}, {"model_id", r.model_id}};
}

inline void to_json(nlohmann::json& j, const AlternativesResult& r) {
  j = nlohmann::json{
      {"variants", r.variants}, {"requested", r.requested}, {"short_by", r.short_by}, {"model_id", r.model_id}};
}

inline void to_json(nlohmann::json& j, const VerifyReport& r) {
  nlohmann::json f = nlohmann::json::array();
  for (const auto& c : r.findings) f.push_back({{"finding_id", c.finding_id}, {"excerpt_removed", c.excerpt_removed}});
  j = nlohmann::json{{"findings", f},
                     {"length_ratio", r.length_ratio},
                     {"length_ok", r.length_ok},
                     {"differs", r.differs},
                     {"all_passed", r.all_passed()}};
}

}  // namespace vigil
