#pragma once

// Prompt construction and structured-output parsing for the LLM detectors.
// Model output is untrusted: every entry is validated against the taxonomy
// and grounded in the source text, or dropped with a reason.

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstddef>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "vigil/error.hpp"
#include "vigil/findings.hpp"
#include "vigil/gateway.hpp"
#include "vigil/prompt.hpp"
#include "vigil/taxonomy.hpp"
#include "vigil/text.hpp"

namespace vigil {

inline constexpr std::string_view kCbtLlmPluginId = "cbt-llm";
inline constexpr std::string_view kMoralizationPluginId = "moralization-llm";
inline constexpr double kDefaultLlmConfidence = 0.7;

enum class PromptMode { benchmark, production };

// Embedding -----------------------------------------------------------------

inline constexpr std::string_view kTextBegin = "<<<TEXT>>>";
inline constexpr std::string_view kTextEnd = "<<<END TEXT>>>";

/// Backslashes double and every `<<<` gains a backslash, so no delimiter can
/// occur inside the embedded body.
inline std::string escape_embedded(std::string_view s) {
  std::string out;
  out.reserve(s.size());
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (s[i] == '\\') {
      out += "\\\\";
    } else if (s.compare(i, 3, "<<<") == 0) {
      out += "\\<<<";
      i += 2;
    } else {
      out.push_back(s[i]);
    }
  }
  return out;
}

inline std::string unescape_embedded(std::string_view s) {
  std::string out;
  out.reserve(s.size());
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (s[i] == '\\' && i + 1 < s.size() && s[i + 1] == '\\') {
      out.push_back('\\');
      ++i;
    } else if (s[i] == '\\' && s.compare(i + 1, 3, "<<<") == 0) {
      out += "<<<";
      i += 3;
    } else {
      out.push_back(s[i]);
    }
  }
  return out;
}

inline std::string embed_text(std::string_view text) {
  return std::string(kTextBegin) + "\n" + escape_embedded(text) + "\n" + std::string(kTextEnd);
}

/// Recovers the analyzed text from a prompt's user message.
inline std::optional<std::string> extract_embedded_text(std::string_view user_text) {
  const auto open = std::string(kTextBegin) + "\n";
  const auto close = "\n" + std::string(kTextEnd);
  const auto b = user_text.find(open);
  if (b == std::string_view::npos) return std::nullopt;
  const auto body = b + open.size();
  const auto e = user_text.find(close, body);
  if (e == std::string_view::npos) return std::nullopt;
  return unescape_embedded(user_text.substr(body, e - body));
}

// Prompts -------------------------------------------------------------------

inline std::string taxonomy_excerpt(const Taxonomy& taxonomy) {
  std::string out;
  for (const auto& t : taxonomy.trigger_types()) {
    out += "- " + t.id + " (" + t.display_name + "; exploits " + t.bias_triggered + "): " + t.definition + "\n";
  }
  return out;
}

inline std::string sensitivity_instruction(double sensitivity) {
  if (sensitivity < 1.0 / 3.0) return "Report every plausible instance, including subtle ones.";
  if (sensitivity < 2.0 / 3.0) return "Report instances that a careful reader would agree are present.";
  return "Report only clear, unambiguous instances.";
}

inline std::string label_enum(const Taxonomy& taxonomy) {
  nlohmann::json ids = nlohmann::json::array();
  for (const auto& t : taxonomy.trigger_types()) ids.push_back(t.id);
  return ids.dump();
}

inline DetectionPrompt build_cbt_prompt(std::string_view text, const Taxonomy& taxonomy, double sensitivity,
                                        PromptMode mode) {
  if (text.empty()) throw Error(ErrorCode::invalid_argument, "text is empty");
  DetectionPrompt p;
  p.locale = "en";
  const auto labels = label_enum(taxonomy);
  if (mode == PromptMode::benchmark) {
    p.system_text =
        "You are an expert in propaganda analysis. Identify which persuasion techniques occur in a news "
        "article. Use only the technique ids listed by the user.";
    p.user_text = "Techniques:\n" + taxonomy_excerpt(taxonomy) +
                  "\nWhich of these techniques are used in the article below? Answer with one ```json fenced "
                  "block containing a JSON array of technique ids, for example [\"doubt\"]. Answer [] if none "
                  "apply.\n\n" +
                  embed_text(text) + "\n";
    p.output_contract = R"({"type":"array","items":{"enum":)" + labels + "}}";
    return p;
  }
  p.system_text =
      "You detect cognitive bias triggers: passages whose wording exploits a cognitive bias of the reader. "
      "Favor precision over recall. Quote the text exactly as written; never paraphrase a quote.";
  p.user_text = "Trigger types:\n" + taxonomy_excerpt(taxonomy) + "\n" + sensitivity_instruction(sensitivity) +
                "\nAnswer with one ```json fenced block containing a JSON array. Each element is an object "
                "with keys: \"label\" (a trigger type id), \"bias\" (the bias it exploits), \"quote\" (exact "
                "substring of the text), \"severity\" (\"low\", \"medium\" or \"high\"), \"explanation\" (one "
                "sentence) and \"confidence\" (number between 0 and 1). Answer [] if nothing applies.\n\n" +
                embed_text(text) + "\n";
  p.output_contract =
      R"({"type":"array","items":{"type":"object","required":["label","quote","explanation"],"properties":{"label":{"enum":)" +
      labels +
      R"(},"bias":{"type":"string"},"quote":{"type":"string"},"severity":{"enum":["low","medium","high"]},"explanation":{"type":"string"},"confidence":{"type":"number","minimum":0,"maximum":1}}}})";
  return p;
}

inline DetectionPrompt build_moralization_prompt(std::string_view text, std::string_view locale,
                                                 const Taxonomy& taxonomy) {
  if (locale != "en" && locale != "de") throw Error(ErrorCode::unsupported_locale, std::string(locale));
  if (text.empty()) throw Error(ErrorCode::invalid_argument, "text is empty");
  const bool de = locale == "de";
  nlohmann::json values = nlohmann::json::array();
  std::string value_lines;
  for (const auto& c : taxonomy.moral_categories()) {
    values.push_back(c.id);
    value_lines += "- " + c.id + ": " + c.locale_labels.at(de ? "de" : "en") + "\n";
  }
  nlohmann::json roles = taxonomy.protagonist_roles();
  std::string role_lines;
  for (const auto& r : taxonomy.protagonist_roles()) role_lines += "- " + r + "\n";

  DetectionPrompt p;
  p.locale = std::string(locale);
  if (de) {
    p.system_text =
        "Du erkennst Moralisierungen: Textstellen, die eine Streitfrage mit moralischen Werten begründen und "
        "daraus eine Forderung ableiten. Zitiere den Text immer wörtlich.";
    p.user_text = "Moralische Werte:\n" + value_lines + "\nProtagonistenrollen:\n" + role_lines +
                  "\nEnthält der folgende Text eine Moralisierung? Antworte mit genau einem ```json Block, der "
                  "ein Objekt mit den Schlüsseln \"moralizing\" (true oder false), \"quote\" (wörtliche "
                  "moralisierende Passage), \"moral_values\" (Liste von Wert-IDs), \"demand\" (\"explicit\", "
                  "\"implicit\" oder \"none\") und \"roles\" (Liste von Objekten mit \"role\" und \"quote\") "
                  "enthält. Bei false genügt {\"moralizing\": false}.\n\n" +
                  embed_text(text) + "\n";
  } else {
    p.system_text =
        "You detect moralization: passages that justify a position on a contested issue by appeal to moral "
        "values and derive a demand from it. Always quote the text verbatim.";
    p.user_text = "Moral values:\n" + value_lines + "\nProtagonist roles:\n" + role_lines +
                  "\nDoes the following text contain moralization? Answer with exactly one ```json block "
                  "holding an object with keys \"moralizing\" (true or false), \"quote\" (verbatim moralizing "
                  "passage), \"moral_values\" (list of value ids), \"demand\" (\"explicit\", \"implicit\" or "
                  "\"none\") and \"roles\" (list of objects with \"role\" and \"quote\"). If false, "
                  "{\"moralizing\": false} suffices.\n\n" +
                  embed_text(text) + "\n";
  }
  p.output_contract =
      R"({"type":"object","required":["moralizing"],"properties":{"moralizing":{"type":"boolean"},"quote":{"type":"string"},"moral_values":{"type":"array","items":{"enum":)" +
      values.dump() +
      R"(}},"demand":{"enum":["explicit","implicit","none"]},"roles":{"type":"array","items":{"type":"object","properties":{"role":{"enum":)" +
      roles.dump() + R"(},"quote":{"type":"string"}}}}}})";
  return p;
}

/// Serialized form used by golden files.
inline std::string render_prompt(const DetectionPrompt& p) {
  return "[system]\n" + p.system_text + "\n[user]\n" + p.user_text + "[contract]\n" + p.output_contract + "\n";
}

// Payload extraction --------------------------------------------------------

namespace detail {

/// End (exclusive) of the bracketed value starting at `begin`, honoring
/// JSON string escapes; npos if unbalanced.
inline std::size_t balanced_end(std::string_view s, std::size_t begin) {
  std::vector<char> stack;
  bool in_string = false;
  for (std::size_t i = begin; i < s.size(); ++i) {
    const char c = s[i];
    if (in_string) {
      if (c == '\\') {
        ++i;
      } else if (c == '"') {
        in_string = false;
      }
      continue;
    }
    if (c == '"') {
      in_string = true;
    } else if (c == '[' || c == '{') {
      stack.push_back(c == '[' ? ']' : '}');
    } else if (c == ']' || c == '}') {
      if (stack.empty() || stack.back() != c) return std::string_view::npos;
      stack.pop_back();
      if (stack.empty()) return i + 1;
    }
  }
  return std::string_view::npos;
}

inline std::optional<nlohmann::json> try_parse(std::string_view s) {
  auto j = nlohmann::json::parse(s.begin(), s.end(), nullptr, false);
  if (j.is_discarded() || !(j.is_array() || j.is_object())) return std::nullopt;
  return j;
}

}  // namespace detail

inline constexpr std::size_t kMaxPayloadCandidates = 256;

/// First syntactically valid JSON array/object: fenced blocks are tried in
/// order first, then bare bracketed values in order of position.
inline std::optional<nlohmann::json> extract_payload(std::string_view raw) {
  std::size_t pos = 0;
  while (true) {
    const auto open = raw.find("```", pos);
    if (open == std::string_view::npos) break;
    const auto line_end = raw.find('\n', open + 3);
    if (line_end == std::string_view::npos) break;
    const auto close = raw.find("```", line_end + 1);
    if (close == std::string_view::npos) break;
    if (auto j = detail::try_parse(raw.substr(line_end + 1, close - line_end - 1))) return j;
    pos = close + 3;
  }
  std::size_t attempts = 0;
  for (std::size_t i = 0; i < raw.size() && attempts < kMaxPayloadCandidates; ++i) {
    if (raw[i] != '[' && raw[i] != '{') continue;
    ++attempts;
    const auto end = detail::balanced_end(raw, i);
    if (end == std::string_view::npos) continue;
    if (auto j = detail::try_parse(raw.substr(i, end - i))) return j;
  }
  return std::nullopt;
}

// CBT parsing ---------------------------------------------------------------

enum class DropReason { unknown_label, ungroundable_quote, malformed_entry };

inline std::string_view to_string(DropReason r) {
  switch (r) {
    case DropReason::unknown_label: return "unknown-label";
    case DropReason::ungroundable_quote: return "ungroundable-quote";
    case DropReason::malformed_entry: return "malformed-entry";
  }
  return "malformed-entry";
}

struct DroppedEntry {
  DropReason reason;
  std::string fragment;
};

struct ParseReport {
  std::vector<Finding> accepted;
  std::vector<DroppedEntry> dropped;
  /// Coercions applied to accepted entries (e.g. out-of-range severity).
  std::vector<std::string> notes;
  std::size_t entries_seen = 0;

  [[nodiscard]] std::map<std::string, std::size_t> dropped_counts() const {
    std::map<std::string, std::size_t> out;
    for (const auto& d : dropped) ++out[std::string(to_string(d.reason))];
    return out;
  }
};

/// Case-insensitive match on trigger id or display name.
inline const TriggerType* resolve_label(const Taxonomy& taxonomy, std::string_view label) {
  const auto wanted = text::ascii_lower(text::trim(label));
  for (const auto& t : taxonomy.trigger_types()) {
    if (t.id == wanted || text::ascii_lower(t.display_name) == wanted) return &t;
  }
  return nullptr;
}

namespace detail {

inline std::optional<std::string> string_member(const nlohmann::json& obj, std::initializer_list<const char*> keys) {
  for (const char* k : keys) {
    if (obj.contains(k) && obj[k].is_string()) return obj[k].get<std::string>();
  }
  return std::nullopt;
}

inline const nlohmann::json* entry_list(const nlohmann::json& payload) {
  if (payload.is_array()) return &payload;
  for (const char* key : {"findings", "triggers", "results"}) {
    if (payload.contains(key) && payload[key].is_array()) return &payload[key];
  }
  return nullptr;
}

}  // namespace detail

inline ParseReport parse_cbt_output(const RawModelOutput& raw, const Taxonomy& taxonomy, std::string_view source_text,
                                    std::string_view plugin_id = kCbtLlmPluginId) {
  const auto payload = extract_payload(raw.text);
  if (!payload) throw Error(ErrorCode::unparseable, "no structured payload in model output");

  ParseReport report;
  nlohmann::json single = nlohmann::json::array();
  const nlohmann::json* entries = detail::entry_list(*payload);
  if (entries == nullptr) {
    if (payload->is_object() && payload->contains("label")) single.push_back(*payload);
    entries = &single;
  }
  const auto source = text::decode_utf8(source_text, false);
  for (const auto& e : *entries) {
    ++report.entries_seen;
    const auto fragment = dump_json(e);
    const auto drop = [&](DropReason r) { report.dropped.push_back({r, fragment}); };
    if (!e.is_object()) {
      drop(DropReason::malformed_entry);
      continue;
    }
    const auto label = detail::string_member(e, {"label", "trigger_type_id", "technique"});
    if (!label) {
      drop(DropReason::malformed_entry);
      continue;
    }
    const auto* type = resolve_label(taxonomy, *label);
    if (type == nullptr) {
      drop(DropReason::unknown_label);
      continue;
    }
    const auto quote = detail::string_member(e, {"quote", "span", "text"});
    const auto explanation = detail::string_member(e, {"explanation"});
    if (!quote || quote->empty() || !explanation || text::trim(*explanation).empty()) {
      drop(DropReason::malformed_entry);
      continue;
    }
    TextSpan span;
    try {
      span = ground_span(source, text::decode_utf8(*quote, false));
    } catch (const Error&) {
      drop(DropReason::ungroundable_quote);
      continue;
    }
    Finding f;
    f.id = std::string(plugin_id) + ":" + std::to_string(report.accepted.size());
    f.plugin_id = plugin_id;
    f.trigger_type_id = type->id;
    f.bias_triggered = type->bias_triggered;
    f.severity = type->default_severity;
    if (e.contains("severity")) {
      const auto s = e["severity"].is_string() ? Severity::parse(text::ascii_lower(e["severity"].get<std::string>()))
                                               : std::nullopt;
      if (s) {
        f.severity = *s;
      } else {
        report.notes.push_back("malformed-entry: severity coerced to default for " + f.id);
      }
    }
    f.confidence = kDefaultLlmConfidence;
    if (e.contains("confidence")) {
      const auto& c = e["confidence"];
      if (c.is_number() && std::isfinite(c.get<double>()) && c.get<double>() >= 0.0 && c.get<double>() <= 1.0) {
        f.confidence = c.get<double>();
      } else {
        report.notes.push_back("malformed-entry: confidence defaulted for " + f.id);
      }
    }
    f.span = std::move(span);
    f.explanation = text::trim(*explanation);
    report.accepted.push_back(std::move(f));
  }
  return report;
}

struct LabelParse {
  std::set<std::string> labels;
  std::vector<DroppedEntry> dropped;
};

/// Benchmark-mode output: a list of technique ids (strings or objects with a
/// label), possibly wrapped in {"techniques": [...]}.
inline LabelParse parse_cbt_labels(const RawModelOutput& raw, const Taxonomy& taxonomy) {
  const auto payload = extract_payload(raw.text);
  if (!payload) throw Error(ErrorCode::unparseable, "no structured payload in model output");
  const nlohmann::json* list = payload->is_array() ? &*payload : nullptr;
  for (const char* key : {"techniques", "labels", "findings"}) {
    if (list == nullptr && payload->contains(key) && (*payload)[key].is_array()) list = &(*payload)[key];
  }
  LabelParse out;
  if (list == nullptr) return out;
  for (const auto& e : *list) {
    std::optional<std::string> label;
    if (e.is_string()) label = e.get<std::string>();
    if (e.is_object()) label = detail::string_member(e, {"label", "technique", "trigger_type_id"});
    if (!label) {
      out.dropped.push_back({DropReason::malformed_entry, dump_json(e)});
      continue;
    }
    if (const auto* t = resolve_label(taxonomy, *label)) {
      out.labels.insert(t->id);
    } else {
      out.dropped.push_back({DropReason::unknown_label, dump_json(e)});
    }
  }
  return out;
}

// Moralization parsing ------------------------------------------------------

struct MoralizationParse {
  bool is_moralizing = false;
  std::optional<MoralizationFinding> details;
  std::vector<DroppedEntry> dropped;
};

namespace detail {

inline std::optional<bool> decision_word(std::string_view w) {
  const auto s = text::ascii_lower(text::trim(w));
  if (s == "yes" || s == "ja" || s == "true" || s == "1") return true;
  if (s == "no" || s == "nein" || s == "false" || s == "0") return false;
  return std::nullopt;
}

inline std::optional<bool> decision_from_json(const nlohmann::json& payload) {
  if (!payload.is_object()) return std::nullopt;
  for (const char* key : {"moralizing", "decision", "moralization", "is_moralizing"}) {
    if (!payload.contains(key)) continue;
    const auto& v = payload[key];
    if (v.is_boolean()) return v.get<bool>();
    if (v.is_string()) return decision_word(v.get<std::string>());
    if (v.is_number_integer()) {
      const auto n = v.get<long long>();
      if (n == 0 || n == 1) return n == 1;
    }
  }
  return std::nullopt;
}

/// `decision: yes|no` (or `Entscheidung: ja|nein`) anywhere in free text.
inline std::optional<bool> decision_from_text(std::string_view raw) {
  const auto lower = text::ascii_lower(raw);
  for (std::string_view key : {"decision", "entscheidung", "moralizing"}) {
    std::size_t pos = 0;
    while ((pos = lower.find(key, pos)) != std::string::npos) {
      std::size_t i = pos + key.size();
      while (i < lower.size() && (lower[i] == ' ' || lower[i] == '*' || lower[i] == '"')) ++i;
      if (i < lower.size() && lower[i] == ':') {
        ++i;
        while (i < lower.size() && (lower[i] == ' ' || lower[i] == '*' || lower[i] == '"')) ++i;
        std::size_t j = i;
        while (j < lower.size() && std::isalnum(static_cast<unsigned char>(lower[j]))) ++j;
        if (auto d = decision_word(lower.substr(i, j - i))) return d;
      }
      pos += key.size();
    }
  }
  return std::nullopt;
}

}  // namespace detail

inline MoralizationParse parse_moralization_output(const RawModelOutput& raw, const Taxonomy& taxonomy,
                                                   std::string_view source_text, std::string_view locale = "en") {
  const auto payload = extract_payload(raw.text);
  std::optional<bool> decision;
  if (payload) decision = detail::decision_from_json(*payload);
  if (!decision) decision = detail::decision_from_text(raw.text);
  if (!decision) throw Error(ErrorCode::unparseable, "no moralization decision in model output");

  MoralizationParse out;
  out.is_moralizing = *decision;
  if (!out.is_moralizing || !payload || !payload->is_object()) return out;

  const auto& p = *payload;
  const auto fragment = dump_json(p);
  const auto source = text::decode_utf8(source_text, false);
  const auto drop_details = [&](DropReason r) {
    out.dropped.push_back({r, fragment});
    return out;
  };

  MoralizationFinding m;
  m.locale = std::string(locale);
  if (!p.contains("moral_values") || !p["moral_values"].is_array() || p["moral_values"].empty()) {
    return drop_details(DropReason::malformed_entry);
  }
  for (const auto& v : p["moral_values"]) {
    if (!v.is_string()) return drop_details(DropReason::malformed_entry);
    const auto id = text::ascii_lower(text::trim(v.get<std::string>()));
    if (!taxonomy.has_moral_category(id)) return drop_details(DropReason::unknown_label);
    if (std::find(m.moral_values.begin(), m.moral_values.end(), id) == m.moral_values.end()) {
      m.moral_values.push_back(id);
    }
  }
  const auto demand = detail::string_member(p, {"demand"});
  if (demand) {
    const auto d = parse_demand(text::ascii_lower(text::trim(*demand)));
    if (!d) return drop_details(DropReason::malformed_entry);
    m.demand = *d;
  }
  if (const auto quote = detail::string_member(p, {"quote"}); quote && !quote->empty()) {
    try {
      m.span = ground_span(source, text::decode_utf8(*quote, false));
    } catch (const Error&) {
      return drop_details(DropReason::ungroundable_quote);
    }
  } else {
    if (source.empty()) return drop_details(DropReason::ungroundable_quote);
    m.span = make_span(source, 0, source.size());
  }
  if (p.contains("roles") && p["roles"].is_array()) {
    for (const auto& r : p["roles"]) {
      const auto role_fragment = dump_json(r);
      const auto role = r.is_object() ? detail::string_member(r, {"role", "role_id"}) : std::nullopt;
      const auto quote = r.is_object() ? detail::string_member(r, {"quote"}) : std::nullopt;
      if (!role || !quote || quote->empty()) {
        out.dropped.push_back({DropReason::malformed_entry, role_fragment});
        continue;
      }
      const auto role_id = text::ascii_lower(text::trim(*role));
      if (!taxonomy.has_role(role_id)) {
        out.dropped.push_back({DropReason::unknown_label, role_fragment});
        continue;
      }
      try {
        m.roles.push_back({ground_span(source, text::decode_utf8(*quote, false)), role_id});
      } catch (const Error&) {
        out.dropped.push_back({DropReason::ungroundable_quote, role_fragment});
      }
    }
  }
  out.details = std::move(m);
  return out;
}

// Chunking ------------------------------------------------------------------

struct TextChunk {
  std::size_t offset = 0;  // scalar offset of the chunk in the source
  std::u32string text;
};

/// Splits at paragraph boundaries (blank lines) so that every chunk is at
/// most `budget` scalars; a paragraph longer than the budget is split at its
/// last whitespace inside the budget, or hard at the budget. Chunks tile the
/// source exactly.
inline std::vector<TextChunk> split_into_chunks(std::u32string_view source, std::size_t budget) {
  if (budget == 0) throw Error(ErrorCode::invalid_argument, "chunk budget must be positive");
  std::vector<std::size_t> breaks;  // positions right after a blank-line separator
  for (std::size_t i = 0; i < source.size(); ++i) {
    if (source[i] != U'\n') continue;
    std::size_t j = i + 1;
    while (j < source.size() && source[j] != U'\n' && text::is_space(source[j])) ++j;
    if (j < source.size() && source[j] == U'\n') {
      while (j < source.size() && text::is_space(source[j])) ++j;
      breaks.push_back(j);
      i = j - 1;
    }
  }
  std::vector<TextChunk> out;
  std::size_t start = 0;
  while (start < source.size()) {
    const std::size_t limit = start + budget;
    std::size_t cut = 0;
    if (limit >= source.size()) {
      cut = source.size();
    } else {
      for (auto b : breaks) {
        if (b > start && b <= limit) cut = b;
      }
      if (cut == 0) {
        for (std::size_t k = limit; k > start; --k) {
          if (text::is_space(source[k - 1])) {
            cut = k;
            break;
          }
        }
      }
      if (cut == 0) cut = limit;
    }
    out.push_back({start, std::u32string(source.substr(start, cut - start))});
    start = cut;
  }
  return out;
}

/// Moves a chunk-relative finding onto source offsets.
inline void rebase(Finding& f, std::size_t offset) {
  f.span.start += offset;
  f.span.end += offset;
}

}  // namespace vigil
