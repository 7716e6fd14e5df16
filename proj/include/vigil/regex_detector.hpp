#pragma once

// Keyword/phrase detector backing the `cbt-regex` plugin. All rules are
// compiled into one Aho-Corasick automaton over case-folded,
// whitespace-normalized code points, so detection is a single pass over the
// text regardless of rule count.

#include <algorithm>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <queue>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include <nlohmann/json.hpp>

#include "vigil/error.hpp"
#include "vigil/findings.hpp"
#include "vigil/taxonomy.hpp"
#include "vigil/text.hpp"

namespace vigil {

inline constexpr std::string_view kRegexPluginId = "cbt-regex";

enum class RuleKind { keyword, phrase };

/// Pattern syntax: literal words separated by spaces; a trailing `*` on the
/// last word matches any further letters/digits (inflection wildcard).
struct PatternRule {
  std::string trigger_type_id;
  RuleKind kind = RuleKind::keyword;
  std::string pattern;
  bool case_insensitive = true;
  std::optional<Severity> severity;
  std::string explanation_template;
};

inline std::vector<PatternRule> load_rules(std::string_view source) {
  using nlohmann::json;
  json doc = json::parse(source.begin(), source.end(), nullptr, false);
  if (doc.is_discarded() || !doc.is_array()) throw Error(ErrorCode::malformed, "rule file must be a JSON array");
  std::vector<PatternRule> rules;
  for (const auto& e : doc) {
    if (!e.is_object()) throw Error(ErrorCode::malformed, "rule must be an object");
    for (auto it = e.begin(); it != e.end(); ++it) {
      static constexpr std::string_view kKnown[] = {"trigger_type_id", "kind", "pattern", "case_insensitive",
                                                    "severity", "explanation_template"};
      if (std::find(std::begin(kKnown), std::end(kKnown), it.key()) == std::end(kKnown)) {
        throw Error(ErrorCode::unknown_field, "rule." + it.key());
      }
    }
    PatternRule r;
    r.trigger_type_id = detail::string_field(e, "trigger_type_id");
    const auto kind = detail::string_field(e, "kind");
    if (kind == "keyword") {
      r.kind = RuleKind::keyword;
    } else if (kind == "phrase") {
      r.kind = RuleKind::phrase;
    } else {
      throw Error(ErrorCode::malformed, "rule kind must be keyword|phrase");
    }
    r.pattern = detail::string_field(e, "pattern");
    r.explanation_template = detail::string_field(e, "explanation_template");
    if (e.contains("case_insensitive")) {
      if (!e["case_insensitive"].is_boolean()) throw Error(ErrorCode::malformed, "case_insensitive must be boolean");
      r.case_insensitive = e["case_insensitive"].get<bool>();
    }
    if (e.contains("severity") && !e["severity"].is_null()) r.severity = e["severity"].get<Severity>();
    rules.push_back(std::move(r));
  }
  return rules;
}

inline nlohmann::json rules_to_json(const std::vector<PatternRule>& rules) {
  nlohmann::json out = nlohmann::json::array();
  for (const auto& r : rules) {
    nlohmann::json e{{"trigger_type_id", r.trigger_type_id},
                     {"kind", r.kind == RuleKind::keyword ? "keyword" : "phrase"},
                     {"pattern", r.pattern},
                     {"case_insensitive", r.case_insensitive},
                     {"explanation_template", r.explanation_template}};
    if (r.severity) e["severity"] = r.severity->name();
    out.push_back(std::move(e));
  }
  return out;
}

/// Match boundaries follow the usual `\b` rule: a boundary sits wherever a
/// letter/digit meets a non-letter/digit or the text edge. Only pattern
/// edges that are letters or digits need one.
inline bool is_boundary(std::u32string_view t, std::size_t pos) {
  if (pos == 0 || pos == t.size()) return true;
  return text::is_word_char(t[pos - 1]) != text::is_word_char(t[pos]);
}

/// A rule reduced to its matchable literal.
struct CompiledRule {
  PatternRule rule;
  std::u32string literal;  // whitespace-normalized, original case
  std::u32string folded;   // literal after case folding
  bool wildcard = false;
  Severity severity;
  std::string bias;
};

inline CompiledRule compile_rule(const Taxonomy& taxonomy, const PatternRule& rule) {
  const auto* type = taxonomy.find_trigger(rule.trigger_type_id);
  if (type == nullptr) throw Error(ErrorCode::unknown_trigger, "rule references " + rule.trigger_type_id);
  if (rule.trigger_type_id == "repetition") {
    throw Error(ErrorCode::invalid_argument, "repetition needs cross-sentence counting and is not pattern-detectable");
  }
  if (rule.explanation_template.empty()) throw Error(ErrorCode::malformed, "empty explanation_template");
  CompiledRule c;
  c.rule = rule;
  c.severity = rule.severity.value_or(type->default_severity);
  c.bias = type->bias_triggered;
  auto decoded = text::decode_utf8(rule.pattern);
  if (!decoded.empty() && decoded.back() == U'*') {
    c.wildcard = true;
    decoded.pop_back();
  }
  c.literal = text::collapse_whitespace(decoded, /*trim=*/true).text;
  if (c.literal.empty()) throw Error(ErrorCode::malformed, "empty pattern");
  if (c.literal.find(U'*') != std::u32string::npos) {
    throw Error(ErrorCode::malformed, "wildcard only allowed at pattern end: " + rule.pattern);
  }
  if (rule.kind == RuleKind::keyword && c.literal.find(U' ') != std::u32string::npos) {
    throw Error(ErrorCode::malformed, "keyword pattern contains whitespace: " + rule.pattern);
  }
  if (c.wildcard && !text::is_word_char(c.literal.back())) {
    throw Error(ErrorCode::malformed, "wildcard must follow a letter or digit: " + rule.pattern);
  }
  c.folded = text::fold_case(c.literal);
  return c;
}

/// Raw occurrence on the normalized text before mapping back to the source.
struct RuleHit {
  std::size_t rule = 0;
  std::size_t start = 0;
  std::size_t end = 0;
};

/// Text prepared for matching: the shared normalization both the automaton
/// and reference scanners work on.
struct PreparedText {
  std::u32string source;
  text::NormalizedText normalized;
  std::u32string folded;

  explicit PreparedText(std::string_view utf8)
      : source(text::decode_utf8(utf8, false)),
        normalized(text::collapse_whitespace(source)),
        folded(text::fold_case(normalized.text)) {}
};

/// Completes a candidate occurrence ending at `end` (exclusive) of the
/// literal: extends wildcards, checks case and boundaries.
inline std::optional<RuleHit> accept_hit(const CompiledRule& rule, std::size_t index, const PreparedText& t,
                                         std::size_t start, std::size_t end) {
  const auto& norm = t.normalized.text;
  if (!rule.rule.case_insensitive && norm.compare(start, rule.literal.size(), rule.literal) != 0) {
    return std::nullopt;
  }
  if (rule.wildcard) {
    while (end < norm.size() && text::is_word_char(norm[end])) ++end;
  }
  // edges made of punctuation carry no boundary requirement
  const bool front_word = text::is_word_char(rule.literal.front());
  const bool back_word = text::is_word_char(rule.literal.back());
  if ((front_word && !is_boundary(norm, start)) || (back_word && !is_boundary(norm, end))) return std::nullopt;
  return RuleHit{index, start, end};
}

/// Keeps non-overlapping leftmost-longest hits per rule. Input must be
/// sorted by (rule, start, end).
inline std::vector<RuleHit> select_per_rule(std::vector<RuleHit> hits) {
  std::vector<RuleHit> out;
  std::size_t i = 0;
  while (i < hits.size()) {
    const std::size_t rule = hits[i].rule;
    std::size_t frontier = 0;
    for (; i < hits.size() && hits[i].rule == rule; ++i) {
      if (hits[i].start < frontier) continue;
      // longest among candidates sharing this start
      std::size_t j = i;
      while (j + 1 < hits.size() && hits[j + 1].rule == rule && hits[j + 1].start == hits[i].start) ++j;
      out.push_back(hits[j]);
      frontier = hits[j].end;
      i = j;
    }
  }
  return out;
}

class CompiledMatcher {
 public:
  [[nodiscard]] const std::vector<CompiledRule>& rules() const { return rules_; }

  /// Every accepted rule occurrence, after per-rule leftmost-longest selection.
  [[nodiscard]] std::vector<RuleHit> scan(const PreparedText& t) const {
    std::vector<RuleHit> hits;
    std::int32_t state = 0;
    for (std::size_t i = 0; i < t.folded.size(); ++i) {
      state = step(state, t.folded[i]);
      for (std::int32_t s = nodes_[state].output ? state : nodes_[state].dict_link; s >= 0;
           s = nodes_[s].dict_link) {
        for (std::size_t r : nodes_[s].rules) {
          const std::size_t start = i + 1 - rules_[r].folded.size();
          if (auto hit = accept_hit(rules_[r], r, t, start, i + 1)) hits.push_back(*hit);
        }
      }
    }
    std::sort(hits.begin(), hits.end(), [](const RuleHit& a, const RuleHit& b) {
      return std::tie(a.rule, a.start, a.end) < std::tie(b.rule, b.start, b.end);
    });
    return select_per_rule(std::move(hits));
  }

 private:
  struct Node {
    std::unordered_map<char32_t, std::int32_t> next;
    std::int32_t fail = 0;
    std::int32_t dict_link = -1;
    bool output = false;
    std::vector<std::size_t> rules;
  };

  friend CompiledMatcher compile_rules(const Taxonomy&, const std::vector<PatternRule>&);

  [[nodiscard]] std::int32_t step(std::int32_t state, char32_t c) const {
    while (true) {
      const auto& n = nodes_[state];
      if (auto it = n.next.find(c); it != n.next.end()) return it->second;
      if (state == 0) return 0;
      state = n.fail;
    }
  }

  void build() {
    nodes_.assign(1, Node{});
    for (std::size_t r = 0; r < rules_.size(); ++r) {
      std::int32_t state = 0;
      for (char32_t c : rules_[r].folded) {
        auto it = nodes_[state].next.find(c);
        if (it == nodes_[state].next.end()) {
          nodes_.push_back(Node{});
          const auto created = static_cast<std::int32_t>(nodes_.size() - 1);
          nodes_[state].next.emplace(c, created);
          state = created;
        } else {
          state = it->second;
        }
      }
      nodes_[state].output = true;
      nodes_[state].rules.push_back(r);
    }
    std::queue<std::int32_t> bfs;
    for (auto& [c, child] : nodes_[0].next) bfs.push(child);
    while (!bfs.empty()) {
      const auto s = bfs.front();
      bfs.pop();
      for (auto& [c, child] : nodes_[s].next) {
        std::int32_t f = nodes_[s].fail;
        while (true) {
          if (auto it = nodes_[f].next.find(c); it != nodes_[f].next.end() && it->second != child) {
            nodes_[child].fail = it->second;
            break;
          }
          if (f == 0) {
            nodes_[child].fail = 0;
            break;
          }
          f = nodes_[f].fail;
        }
        const auto fail = nodes_[child].fail;
        nodes_[child].dict_link = nodes_[fail].output ? fail : nodes_[fail].dict_link;
        bfs.push(child);
      }
    }
  }

  std::vector<CompiledRule> rules_;
  std::vector<Node> nodes_;
};

inline CompiledMatcher compile_rules(const Taxonomy& taxonomy, const std::vector<PatternRule>& rules) {
  if (rules.empty()) throw Error(ErrorCode::empty_rule_set, "no pattern rules");
  CompiledMatcher m;
  m.rules_.reserve(rules.size());
  for (const auto& r : rules) m.rules_.push_back(compile_rule(taxonomy, r));
  m.build();
  return m;
}

inline std::string render_explanation(std::string_view tmpl, std::string_view match) {
  std::string out;
  std::size_t pos = 0;
  while (true) {
    auto hit = tmpl.find("{match}", pos);
    out.append(tmpl.substr(pos, hit - pos));
    if (hit == std::string_view::npos) break;
    out.append(match);
    pos = hit + 7;
  }
  return out;
}

/// Turns normalized-text hits into findings against the original text,
/// ordered by start offset then rule order.
inline std::vector<Finding> hits_to_findings(const CompiledMatcher& matcher, const PreparedText& t,
                                             std::vector<RuleHit> hits) {
  std::sort(hits.begin(), hits.end(),
            [](const RuleHit& a, const RuleHit& b) { return std::tie(a.start, a.rule) < std::tie(b.start, b.rule); });
  std::vector<Finding> out;
  out.reserve(hits.size());
  for (const auto& h : hits) {
    const auto& rule = matcher.rules()[h.rule];
    auto [a, b] = text::to_original(t.normalized, h.start, h.end);
    Finding f;
    f.id = std::string(kRegexPluginId) + ":" + std::to_string(out.size());
    f.plugin_id = kRegexPluginId;
    f.trigger_type_id = rule.rule.trigger_type_id;
    f.bias_triggered = rule.bias;
    f.severity = rule.severity;
    f.span = make_span(t.source, a, b);
    f.explanation = render_explanation(rule.rule.explanation_template, f.span.excerpt);
    f.confidence = 1.0;
    out.push_back(std::move(f));
  }
  return out;
}

/// One finding per match occurrence; pure and safe to call concurrently.
inline std::vector<Finding> detect(const CompiledMatcher& matcher, std::string_view utf8_text) {
  PreparedText t(utf8_text);
  return hits_to_findings(matcher, t, matcher.scan(t));
}

}  // namespace vigil
