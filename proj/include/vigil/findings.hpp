#pragma once

#include <algorithm>
#include <cstddef>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <tuple>
#include <vector>

#include <nlohmann/json.hpp>

#include "vigil/error.hpp"
#include "vigil/severity.hpp"
#include "vigil/taxonomy.hpp"
#include "vigil/text.hpp"

namespace vigil {

/// Half-open range of Unicode scalar offsets plus the exact excerpt.
struct TextSpan {
  std::size_t start = 0;
  std::size_t end = 0;
  std::string excerpt;

  friend bool operator==(const TextSpan&, const TextSpan&) = default;
};

struct Finding {
  std::string id;
  std::string plugin_id;
  std::string trigger_type_id;
  std::string bias_triggered;
  Severity severity;
  TextSpan span;
  std::string explanation;
  double confidence = 1.0;

  friend bool operator==(const Finding&, const Finding&) = default;
};

enum class Demand { explicit_demand, implicit_demand, none };

inline std::string_view to_string(Demand d) {
  switch (d) {
    case Demand::explicit_demand: return "explicit";
    case Demand::implicit_demand: return "implicit";
    case Demand::none: return "none";
  }
  return "none";
}

inline std::optional<Demand> parse_demand(std::string_view s) {
  if (s == "explicit") return Demand::explicit_demand;
  if (s == "implicit") return Demand::implicit_demand;
  if (s == "none") return Demand::none;
  return std::nullopt;
}

struct RoleMention {
  TextSpan span;
  std::string role_id;

  friend bool operator==(const RoleMention&, const RoleMention&) = default;
};

struct MoralizationFinding {
  TextSpan span;
  std::vector<std::string> moral_values;
  Demand demand = Demand::none;
  std::vector<RoleMention> roles;
  std::string locale = "en";

  friend bool operator==(const MoralizationFinding&, const MoralizationFinding&) = default;
};

inline TextSpan make_span(std::u32string_view source, std::size_t start, std::size_t end) {
  return TextSpan{start, end, text::encode_utf8(source.substr(start, end - start))};
}

/// Locates `quote` in `source`: first exact occurrence, else the first
/// occurrence after collapsing whitespace runs on both sides (mapped back to
/// original offsets). Throws `not found` otherwise.
inline TextSpan ground_span(std::u32string_view source, std::u32string_view quote) {
  if (quote.empty()) throw Error(ErrorCode::invalid_argument, "quote is empty");
  if (auto pos = source.find(quote); pos != std::u32string_view::npos) {
    return make_span(source, pos, pos + quote.size());
  }
  const auto norm_source = text::collapse_whitespace(source);
  const auto norm_quote = text::collapse_whitespace(quote, /*trim=*/true);
  if (!norm_quote.text.empty()) {
    if (auto pos = norm_source.text.find(norm_quote.text); pos != std::u32string::npos) {
      auto [a, b] = text::to_original(norm_source, pos, pos + norm_quote.text.size());
      return make_span(source, a, b);
    }
  }
  throw Error(ErrorCode::not_found, "quote not present in source");
}

inline TextSpan ground_span(std::string_view source, std::string_view quote) {
  return ground_span(text::decode_utf8(source, false), text::decode_utf8(quote, false));
}

inline bool span_is_valid(const TextSpan& span, std::u32string_view source) {
  return span.start < span.end && span.end <= source.size() &&
         text::encode_utf8(source.substr(span.start, span.end - span.start)) == span.excerpt;
}

/// Throws `malformed` when a finding breaks its span or taxonomy invariants.
inline void validate_finding(const Finding& f, std::u32string_view source, const Taxonomy& taxonomy) {
  if (!span_is_valid(f.span, source)) {
    throw Error(ErrorCode::malformed, "finding " + f.id + ": excerpt does not match offsets");
  }
  const auto* type = taxonomy.find_trigger(f.trigger_type_id);
  if (type == nullptr) throw Error(ErrorCode::unknown_trigger, f.trigger_type_id);
  if (f.bias_triggered != type->bias_triggered) {
    throw Error(ErrorCode::malformed, "finding " + f.id + ": bias does not match taxonomy");
  }
  if (f.explanation.empty()) throw Error(ErrorCode::malformed, "finding " + f.id + ": empty explanation");
  if (!(f.confidence >= 0.0 && f.confidence <= 1.0)) {
    throw Error(ErrorCode::malformed, "finding " + f.id + ": confidence outside [0,1]");
  }
}

inline void validate_moralization(const MoralizationFinding& m, std::u32string_view source, const Taxonomy& taxonomy) {
  if (!span_is_valid(m.span, source)) throw Error(ErrorCode::malformed, "moralization span mismatch");
  if (m.moral_values.empty()) throw Error(ErrorCode::malformed, "moralization without moral values");
  for (const auto& v : m.moral_values) {
    if (!taxonomy.has_moral_category(v)) throw Error(ErrorCode::unknown_trigger, "moral value " + v);
  }
  for (const auto& r : m.roles) {
    if (!taxonomy.has_role(r.role_id)) throw Error(ErrorCode::unknown_trigger, "role " + r.role_id);
    if (!span_is_valid(r.span, source)) throw Error(ErrorCode::malformed, "role span mismatch");
  }
  if (m.locale != "en" && m.locale != "de") throw Error(ErrorCode::unsupported_locale, m.locale);
}

/// Collapses findings sharing (trigger type, span) to the most confident one
/// and orders the result by start offset, then by descending severity.
inline std::vector<Finding> dedupe_findings(std::vector<Finding> findings) {
  std::vector<Finding> out;
  std::map<std::tuple<std::string, std::size_t, std::size_t>, std::size_t> index;
  for (auto& f : findings) {
    auto key = std::make_tuple(f.trigger_type_id, f.span.start, f.span.end);
    if (auto it = index.find(key); it != index.end()) {
      if (f.confidence > out[it->second].confidence) out[it->second] = std::move(f);
      continue;
    }
    index.emplace(std::move(key), out.size());
    out.push_back(std::move(f));
  }
  std::stable_sort(out.begin(), out.end(), [](const Finding& a, const Finding& b) {
    if (a.span.start != b.span.start) return a.span.start < b.span.start;
    return a.severity.score() > b.severity.score();
  });
  return out;
}

// JSON ----------------------------------------------------------------------

inline void to_json(nlohmann::json& j, const TextSpan& s) {
  j = nlohmann::json{{"start", s.start}, {"end", s.end}, {"excerpt", s.excerpt}};
}

inline void to_json(nlohmann::json& j, const Severity& s) {
  j = nlohmann::json{{"level", s.name()}, {"score", s.score()}};
}

inline void to_json(nlohmann::json& j, const Finding& f) {
  j = nlohmann::json{{"id", f.id},
                     {"plugin_id", f.plugin_id},
                     {"trigger_type_id", f.trigger_type_id},
                     {"bias_triggered", f.bias_triggered},
                     {"severity", f.severity},
                     {"span", f.span},
                     {"explanation", f.explanation},
                     {"confidence", f.confidence}};
}

inline void to_json(nlohmann::json& j, const RoleMention& r) {
  j = nlohmann::json{{"span", r.span}, {"role_id", r.role_id}};
}

inline void to_json(nlohmann::json& j, const MoralizationFinding& m) {
  j = nlohmann::json{{"span", m.span},
                     {"moral_values", m.moral_values},
                     {"demand", to_string(m.demand)},
                     {"roles", m.roles},
                     {"locale", m.locale}};
}

namespace detail {

inline const nlohmann::json& field(const nlohmann::json& j, const char* key) {
  if (!j.is_object() || !j.contains(key)) throw Error(ErrorCode::missing_field, key);
  return j.at(key);
}

inline std::string string_field(const nlohmann::json& j, const char* key) {
  const auto& v = field(j, key);
  if (!v.is_string()) throw Error(ErrorCode::malformed, std::string(key) + " must be a string");
  return v.get<std::string>();
}

inline std::size_t offset_field(const nlohmann::json& j, const char* key) {
  const auto& v = field(j, key);
  if (!v.is_number_unsigned()) throw Error(ErrorCode::malformed, std::string(key) + " must be a non-negative integer");
  return v.get<std::size_t>();
}

}  // namespace detail

inline void from_json(const nlohmann::json& j, TextSpan& s) {
  s.start = detail::offset_field(j, "start");
  s.end = detail::offset_field(j, "end");
  s.excerpt = detail::string_field(j, "excerpt");
}

inline void from_json(const nlohmann::json& j, Severity& s) {
  const auto& v = j.is_object() ? detail::field(j, "level") : j;
  if (!v.is_string()) throw Error(ErrorCode::malformed, "severity level must be a string");
  s = Severity::from_name(v.get<std::string>());
}

inline void from_json(const nlohmann::json& j, Finding& f) {
  f.id = detail::string_field(j, "id");
  f.plugin_id = detail::string_field(j, "plugin_id");
  f.trigger_type_id = detail::string_field(j, "trigger_type_id");
  f.bias_triggered = detail::string_field(j, "bias_triggered");
  f.severity = detail::field(j, "severity").get<Severity>();
  f.span = detail::field(j, "span").get<TextSpan>();
  f.explanation = detail::string_field(j, "explanation");
  const auto& c = detail::field(j, "confidence");
  if (!c.is_number()) throw Error(ErrorCode::malformed, "confidence must be a number");
  f.confidence = c.get<double>();
}

inline void from_json(const nlohmann::json& j, RoleMention& r) {
  r.span = detail::field(j, "span").get<TextSpan>();
  r.role_id = detail::string_field(j, "role_id");
}

inline void from_json(const nlohmann::json& j, MoralizationFinding& m) {
  m.span = detail::field(j, "span").get<TextSpan>();
  m.moral_values = detail::field(j, "moral_values").get<std::vector<std::string>>();
  auto d = parse_demand(detail::string_field(j, "demand"));
  if (!d) throw Error(ErrorCode::malformed, "demand must be explicit|implicit|none");
  m.demand = *d;
  m.roles = detail::field(j, "roles").get<std::vector<RoleMention>>();
  m.locale = detail::string_field(j, "locale");
}

}  // namespace vigil
