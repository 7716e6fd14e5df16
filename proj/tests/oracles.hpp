#pragma once

// Independent reference implementations and fixture data shared by the
// evalkit suite and the acceptance binary.

#include <map>
#include <random>
#include <set>
#include <string>
#include <vector>

#include "support.hpp"

namespace vigil::testing {

using eval::Rational;

struct Confusion {
  std::int64_t tp = 0, fp = 0, fn = 0, tn = 0;
};

/// Walks the full article x label grid; labels outside `universe` are
/// still counted through the union below.
inline Confusion confusion_grid(const eval::LabelSets& gold, const eval::LabelSets& pred) {
  std::set<std::string> universe;
  for (const auto* sets : {&gold, &pred}) {
    for (const auto& [_, labels] : *sets) universe.insert(labels.begin(), labels.end());
  }
  Confusion c;
  for (const auto& [article, g] : gold) {
    const auto& p = pred.at(article);
    for (const auto& label : universe) {
      const bool in_g = g.count(label) > 0, in_p = p.count(label) > 0;
      if (in_g && in_p) ++c.tp;
      else if (in_p) ++c.fp;
      else if (in_g) ++c.fn;
      else ++c.tn;
    }
  }
  return c;
}

/// F1 as 2TP / (2TP + FP + FN); nullopt when the class never occurs.
inline std::optional<Rational> f1_direct(std::int64_t tp, std::int64_t fp, std::int64_t fn) {
  if (2 * tp + fp + fn == 0) return std::nullopt;
  return Rational(2 * tp, 2 * tp + fp + fn);
}

struct ReferenceMicro {
  Rational p, r, f1;
};

inline ReferenceMicro reference_micro(const eval::LabelSets& gold, const eval::LabelSets& pred) {
  const auto c = confusion_grid(gold, pred);
  if (c.tp + c.fp + c.fn == 0) return {1, 1, 1};
  return {c.tp + c.fp ? Rational(c.tp, c.tp + c.fp) : Rational(0), c.tp + c.fn ? Rational(c.tp, c.tp + c.fn) : Rational(0),
          f1_direct(c.tp, c.fp, c.fn).value_or(Rational(0))};
}

inline Rational reference_macro(const std::vector<int>& gold, const std::vector<int>& pred) {
  std::int64_t m[2][2] = {{0, 0}, {0, 0}};  // m[gold][pred]
  for (std::size_t i = 0; i < gold.size(); ++i) ++m[gold[i]][pred[i]];
  std::vector<Rational> f1s;
  for (int cls : {1, 0}) {
    const auto tp = m[cls][cls], fp = m[1 - cls][cls], fn = m[cls][1 - cls];
    if (auto f = f1_direct(tp, fp, fn)) f1s.push_back(*f);
  }
  return eval::mean(f1s);
}

inline Rational reference_pabak(const std::vector<int>& a, const std::vector<int>& b) {
  std::int64_t agree = 0, disagree = 0;
  for (std::size_t i = 0; i < a.size(); ++i) (a[i] == b[i] ? agree : disagree) += 1;
  return Rational(agree - disagree, agree + disagree);
}

inline std::vector<std::string> trigger_ids() {
  std::vector<std::string> ids;
  for (const auto& t : shipped_taxonomy()->trigger_types()) ids.push_back(t.id);
  return ids;
}

/// Up to 10 articles over up to 14 labels, gold and pred on the same ids.
inline std::pair<eval::LabelSets, eval::LabelSets> random_label_sets(std::mt19937& rng) {
  const auto ids = trigger_ids();
  const auto n_labels = 1 + rng() % ids.size();
  const auto n_articles = 1 + rng() % 10;
  const auto draw = [&] {
    std::set<std::string> s;
    for (std::size_t k = 0; k < n_labels; ++k) {
      if (rng() % 3 == 0) s.insert(ids[k]);
    }
    return s;
  };
  eval::LabelSets gold, pred;
  for (std::size_t a = 0; a < n_articles; ++a) {
    const auto id = "art" + std::to_string(a);
    gold[id] = draw();
    pred[id] = draw();
  }
  return {gold, pred};
}

inline std::vector<int> random_flags(std::mt19937& rng, std::size_t n, unsigned positive_per_10 = 3) {
  std::vector<int> v(n);
  for (auto& x : v) x = rng() % 10 < positive_per_10 ? 1 : 0;
  return v;
}

// 5-article fixture -------------------------------------------------------------

inline std::string semeval5_dir() { return fixture_file("semeval5"); }

/// Scripted benchmark-mode answers; article 705 answers in prose.
inline const std::map<std::string, std::string>& semeval5_completions() {
  static const std::map<std::string, std::string> m = {
      {"701", "```json\n[\"loaded-language\"]\n```"},
      {"702", "```json\n[\"flag-waving\", \"slogans\"]\n```"},
      {"703", "[\"Name-Calling-Labeling\", \"repetition\"]"},
      {"704", "```json\n[\"doubt\"]\n```"},
      {"705", "The article discusses migration policy and contains strong opinions."},
  };
  return m;
}

/// Hand count: TP 4 (701 loaded, 702 flag, 703 both), FP 2 (702 slogans,
/// 704 doubt), FN 3 (701 doubt, 705 both).
inline constexpr std::int64_t kSemeval5Tp = 4, kSemeval5Fp = 2, kSemeval5Fn = 3;

inline std::string semeval5_transcript_path() { return fixture_file("semeval5/transcript.json"); }

/// Regenerates the transcript from the scripted answers.
inline void write_semeval5_transcript() {
  const auto ds = eval::load_cbt_dataset(semeval5_dir(), *shipped_taxonomy(),
                                         eval::LabelAliases::from_taxonomy(*shipped_taxonomy()));
  nlohmann::json entries = nlohmann::json::array();
  for (const auto& [id, completion] : semeval5_completions()) {
    const auto prompt = build_cbt_prompt(ds.texts.at(id), *shipped_taxonomy(), 0.5, PromptMode::benchmark);
    entries.push_back({{"article", id}, {"request_hash", request_hash(prompt)}, {"completion", completion}});
  }
  std::ofstream(semeval5_transcript_path(), std::ios::trunc) << nlohmann::json{{"entries", entries}}.dump(2) << '\n';
}

inline eval::CbtEvalRun run_semeval5() {
  const auto& tax = *shipped_taxonomy();
  const auto ds = eval::load_cbt_dataset(semeval5_dir(), tax, eval::LabelAliases::from_taxonomy(tax));
  auto transport = std::make_shared<TranscriptTransport>(parse_transcript(read_file(semeval5_transcript_path())));
  return eval::run_cbt_eval(ds, tax, local_backend(), PromptMode::benchmark, make_completer(transport));
}

}  // namespace vigil::testing
