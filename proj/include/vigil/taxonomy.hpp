#pragma once

// The single catalog of bias-trigger types, moral-value categories and
// protagonist roles shared by detection, evaluation and UI display.

#include <algorithm>
#include <array>
#include <cstddef>
#include <fstream>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include <nlohmann/json.hpp>

#include "vigil/error.hpp"
#include "vigil/severity.hpp"

namespace vigil {

inline constexpr std::size_t kShippedTriggerTypeCount = 14;
inline constexpr std::size_t kShippedMoralCategoryCount = 12;

inline constexpr std::array<std::string_view, 6> kMoralFoundations = {
    "authority", "care", "fairness", "liberty", "loyalty", "sanctity"};
inline constexpr std::array<std::string_view, 2> kDemandKinds = {"explicit", "implicit"};

struct TriggerType {
  std::string id;
  std::string display_name;
  std::string bias_triggered;
  std::string definition;
  Severity default_severity;
  std::map<std::string, std::string> locale_labels;
};

enum class Polarity { virtue, vice };

struct MoralCategory {
  std::string id;
  std::string foundation;
  Polarity polarity = Polarity::virtue;
  std::map<std::string, std::string> locale_labels;
};

struct TaxonomyLoadOptions {
  /// Require exactly the shipped entry counts (14 trigger types, 12 moral categories).
  bool strict_counts = false;
};

class Taxonomy {
 public:
  Taxonomy() = default;
  Taxonomy(std::string version, std::vector<TriggerType> triggers, std::vector<MoralCategory> categories,
           std::vector<std::string> roles)
      : version_(std::move(version)),
        triggers_(std::move(triggers)),
        categories_(std::move(categories)),
        roles_(std::move(roles)) {
    std::sort(triggers_.begin(), triggers_.end(), [](auto& a, auto& b) { return a.id < b.id; });
    std::sort(categories_.begin(), categories_.end(), [](auto& a, auto& b) { return a.id < b.id; });
    std::sort(roles_.begin(), roles_.end());
    for (std::size_t i = 0; i < triggers_.size(); ++i) trigger_index_.emplace(triggers_[i].id, i);
  }

  [[nodiscard]] const std::string& version() const { return version_; }
  [[nodiscard]] const std::vector<TriggerType>& trigger_types() const { return triggers_; }
  [[nodiscard]] const std::vector<MoralCategory>& moral_categories() const { return categories_; }
  [[nodiscard]] const std::vector<std::string>& protagonist_roles() const { return roles_; }

  [[nodiscard]] const TriggerType* find_trigger(std::string_view id) const {
    auto it = trigger_index_.find(std::string(id));
    return it == trigger_index_.end() ? nullptr : &triggers_[it->second];
  }

  [[nodiscard]] const TriggerType& trigger(std::string_view id) const {
    if (const auto* t = find_trigger(id)) return *t;
    throw Error(ErrorCode::unknown_trigger, std::string(id));
  }

  [[nodiscard]] bool has_moral_category(std::string_view id) const {
    return std::any_of(categories_.begin(), categories_.end(), [&](auto& c) { return c.id == id; });
  }

  [[nodiscard]] bool has_role(std::string_view id) const {
    return std::binary_search(roles_.begin(), roles_.end(), std::string(id));
  }

 private:
  std::string version_;
  std::vector<TriggerType> triggers_;
  std::vector<MoralCategory> categories_;
  std::vector<std::string> roles_;
  std::unordered_map<std::string, std::size_t> trigger_index_;
};

/// The cognitive bias a trigger type exploits.
inline const std::string& bias_for(const Taxonomy& taxonomy, std::string_view trigger_id) {
  return taxonomy.trigger(trigger_id).bias_triggered;
}

inline std::string_view to_string(Polarity p) { return p == Polarity::virtue ? "virtue" : "vice"; }

inline bool is_kebab_id(std::string_view id) {
  if (id.empty() || id.front() == '-' || id.back() == '-') return false;
  char prev = 0;
  for (char c : id) {
    const bool ok = (c >= 'a' && c <= 'z') || (c >= '0' && c <= '9') || c == '-';
    if (!ok || (c == '-' && prev == '-')) return false;
    prev = c;
  }
  return true;
}

namespace detail {

using nlohmann::json;

inline void require_keys(const json& obj, std::string_view where, std::initializer_list<std::string_view> keys) {
  if (!obj.is_object()) throw Error(ErrorCode::malformed, std::string(where) + " must be an object");
  for (auto k : keys) {
    if (!obj.contains(std::string(k))) {
      throw Error(ErrorCode::missing_field, std::string(where) + "." + std::string(k));
    }
  }
  for (auto it = obj.begin(); it != obj.end(); ++it) {
    if (std::find(keys.begin(), keys.end(), it.key()) == keys.end()) {
      throw Error(ErrorCode::unknown_field, std::string(where) + "." + it.key());
    }
  }
}

inline std::string get_string(const json& obj, const char* key, std::string_view where, bool allow_empty = false) {
  const auto& v = obj.at(key);
  if (!v.is_string()) throw Error(ErrorCode::malformed, std::string(where) + "." + key + " must be a string");
  auto s = v.get<std::string>();
  if (!allow_empty && s.empty()) throw Error(ErrorCode::malformed, std::string(where) + "." + key + " is empty");
  return s;
}

inline std::map<std::string, std::string> get_labels(const json& obj, std::string_view where,
                                                     std::initializer_list<std::string_view> required) {
  const auto& v = obj.at("locale_labels");
  if (!v.is_object()) throw Error(ErrorCode::malformed, std::string(where) + ".locale_labels must be an object");
  std::map<std::string, std::string> out;
  for (auto it = v.begin(); it != v.end(); ++it) {
    if (!it.value().is_string() || it.value().get<std::string>().empty()) {
      throw Error(ErrorCode::malformed, std::string(where) + ".locale_labels." + it.key());
    }
    out.emplace(it.key(), it.value().get<std::string>());
  }
  for (auto loc : required) {
    if (!out.count(std::string(loc))) {
      throw Error(ErrorCode::missing_field, std::string(where) + ".locale_labels." + std::string(loc));
    }
  }
  return out;
}

}  // namespace detail

/// Parses and validates a taxonomy document. Unknown fields are rejected.
inline Taxonomy load_taxonomy(std::string_view source, TaxonomyLoadOptions options = {}) {
  using nlohmann::json;
  json doc = json::parse(source.begin(), source.end(), nullptr, false);
  if (doc.is_discarded() || !doc.is_object()) throw Error(ErrorCode::malformed, "taxonomy is not a JSON object");
  detail::require_keys(doc, "taxonomy", {"version", "trigger_types", "moral_categories", "protagonist_roles"});

  auto version = detail::get_string(doc, "version", "taxonomy");
  const auto& tt = doc.at("trigger_types");
  const auto& mc = doc.at("moral_categories");
  const auto& pr = doc.at("protagonist_roles");
  if (!tt.is_array() || !mc.is_array() || !pr.is_array()) {
    throw Error(ErrorCode::malformed, "trigger_types, moral_categories and protagonist_roles must be arrays");
  }

  std::vector<TriggerType> triggers;
  std::set<std::string> seen;
  for (const auto& e : tt) {
    detail::require_keys(e, "trigger_type",
                         {"id", "display_name", "bias_triggered", "definition", "default_severity", "locale_labels"});
    TriggerType t;
    t.id = detail::get_string(e, "id", "trigger_type");
    const std::string where = "trigger_type[" + t.id + "]";
    if (!is_kebab_id(t.id)) throw Error(ErrorCode::malformed, where + ": id must be lowercase-kebab");
    if (!seen.insert(t.id).second) throw Error(ErrorCode::duplicate_id, t.id);
    t.display_name = detail::get_string(e, "display_name", where);
    t.bias_triggered = detail::get_string(e, "bias_triggered", where);
    t.definition = detail::get_string(e, "definition", where);
    t.default_severity = Severity::from_name(detail::get_string(e, "default_severity", where));
    t.locale_labels = detail::get_labels(e, where, {"en"});
    triggers.push_back(std::move(t));
  }

  std::vector<MoralCategory> categories;
  std::set<std::pair<std::string, Polarity>> axes;
  for (const auto& e : mc) {
    detail::require_keys(e, "moral_category", {"id", "foundation", "polarity", "locale_labels"});
    MoralCategory c;
    c.id = detail::get_string(e, "id", "moral_category");
    const std::string where = "moral_category[" + c.id + "]";
    if (!is_kebab_id(c.id)) throw Error(ErrorCode::malformed, where + ": id must be lowercase-kebab");
    if (!seen.insert(c.id).second) throw Error(ErrorCode::duplicate_id, c.id);
    c.foundation = detail::get_string(e, "foundation", where);
    if (std::find(kMoralFoundations.begin(), kMoralFoundations.end(), c.foundation) == kMoralFoundations.end()) {
      throw Error(ErrorCode::malformed, where + ": unknown foundation '" + c.foundation + "'");
    }
    const auto polarity = detail::get_string(e, "polarity", where);
    if (polarity == "virtue") {
      c.polarity = Polarity::virtue;
    } else if (polarity == "vice") {
      c.polarity = Polarity::vice;
    } else {
      throw Error(ErrorCode::malformed, where + ": polarity must be virtue|vice");
    }
    if (!axes.emplace(c.foundation, c.polarity).second) {
      throw Error(ErrorCode::duplicate_id, where + ": (foundation, polarity) already declared");
    }
    c.locale_labels = detail::get_labels(e, where, {"en", "de"});
    categories.push_back(std::move(c));
  }

  std::vector<std::string> roles;
  std::set<std::string> seen_roles;
  for (const auto& e : pr) {
    if (!e.is_string() || !is_kebab_id(e.get<std::string>())) {
      throw Error(ErrorCode::malformed, "protagonist_roles entries must be lowercase-kebab strings");
    }
    if (!seen_roles.insert(e.get<std::string>()).second) throw Error(ErrorCode::duplicate_id, e.get<std::string>());
    roles.push_back(e.get<std::string>());
  }

  if (options.strict_counts) {
    if (triggers.size() != kShippedTriggerTypeCount) {
      throw Error(ErrorCode::wrong_count, "expected 14 trigger types, got " + std::to_string(triggers.size()));
    }
    if (categories.size() != kShippedMoralCategoryCount) {
      throw Error(ErrorCode::wrong_count, "expected 12 moral categories, got " + std::to_string(categories.size()));
    }
  }
  return Taxonomy(std::move(version), std::move(triggers), std::move(categories), std::move(roles));
}

/// Canonical form: fixed key order, arrays sorted by id, two-space indent,
/// trailing newline.
inline std::string serialize_taxonomy(const Taxonomy& taxonomy) {
  using nlohmann::ordered_json;
  ordered_json doc;
  doc["version"] = taxonomy.version();
  doc["trigger_types"] = ordered_json::array();
  for (const auto& t : taxonomy.trigger_types()) {
    ordered_json e;
    e["id"] = t.id;
    e["display_name"] = t.display_name;
    e["bias_triggered"] = t.bias_triggered;
    e["definition"] = t.definition;
    e["default_severity"] = t.default_severity.name();
    e["locale_labels"] = t.locale_labels;
    doc["trigger_types"].push_back(std::move(e));
  }
  doc["moral_categories"] = ordered_json::array();
  for (const auto& c : taxonomy.moral_categories()) {
    ordered_json e;
    e["id"] = c.id;
    e["foundation"] = c.foundation;
    e["polarity"] = to_string(c.polarity);
    e["locale_labels"] = c.locale_labels;
    doc["moral_categories"].push_back(std::move(e));
  }
  doc["protagonist_roles"] = taxonomy.protagonist_roles();
  return doc.dump(2) + "\n";
}

inline std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::io, "cannot open " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

inline Taxonomy load_taxonomy_file(const std::string& path, TaxonomyLoadOptions options = {}) {
  return load_taxonomy(read_file(path), options);
}

}  // namespace vigil
