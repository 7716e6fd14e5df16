#pragma once

// Evaluation harness: multi-label micro-F1 over per-article label sets,
// binary macro-F1, PABAK agreement and latency benchmarking. Metrics are
// computed in exact rational arithmetic; doubles are derived at the end.

#include <algorithm>
#include <chrono>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <functional>
#include <future>
#include <map>
#include <numeric>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "vigil/error.hpp"
#include "vigil/gateway.hpp"
#include "vigil/llm_detection.hpp"
#include "vigil/taxonomy.hpp"
#include "vigil/text.hpp"

namespace vigil::eval {

/// Reduced fraction with positive denominator.
class Rational {
 public:
  constexpr Rational() = default;
  constexpr Rational(std::int64_t num, std::int64_t den = 1) : num_(num), den_(den) {  // NOLINT
    if (den_ == 0) throw Error(ErrorCode::invalid_argument, "zero denominator");
    if (den_ < 0) num_ = -num_, den_ = -den_;
    const auto g = std::gcd(num_ < 0 ? -num_ : num_, den_);
    if (g > 1) num_ /= g, den_ /= g;
  }

  [[nodiscard]] constexpr std::int64_t num() const { return num_; }
  [[nodiscard]] constexpr std::int64_t den() const { return den_; }
  [[nodiscard]] constexpr double to_double() const { return static_cast<double>(num_) / static_cast<double>(den_); }

  friend constexpr Rational operator+(Rational a, Rational b) { return {a.num_ * b.den_ + b.num_ * a.den_, a.den_ * b.den_}; }
  friend constexpr Rational operator-(Rational a, Rational b) { return {a.num_ * b.den_ - b.num_ * a.den_, a.den_ * b.den_}; }
  friend constexpr Rational operator*(Rational a, Rational b) { return {a.num_ * b.num_, a.den_ * b.den_}; }
  friend constexpr Rational operator/(Rational a, Rational b) {
    if (b.num_ == 0) throw Error(ErrorCode::invalid_argument, "division by zero");
    return {a.num_ * b.den_, a.den_ * b.num_};
  }
  friend constexpr bool operator==(Rational a, Rational b) { return a.num_ == b.num_ && a.den_ == b.den_; }
  friend constexpr bool operator<(Rational a, Rational b) { return a.num_ * b.den_ < b.num_ * a.den_; }
  friend constexpr bool operator<=(Rational a, Rational b) { return !(b < a); }

  [[nodiscard]] std::string str() const { return std::to_string(num_) + "/" + std::to_string(den_); }

 private:
  std::int64_t num_ = 0;
  std::int64_t den_ = 1;
};

inline Rational mean(const std::vector<Rational>& xs) {
  if (xs.empty()) throw Error(ErrorCode::invalid_argument, "mean of nothing");
  Rational sum;
  for (auto x : xs) sum = sum + x;
  return sum / Rational(static_cast<std::int64_t>(xs.size()));
}

struct Counts {
  std::int64_t tp = 0;
  std::int64_t fp = 0;
  std::int64_t fn = 0;

  friend bool operator==(const Counts&, const Counts&) = default;
};

struct PRF {
  Rational precision;
  Rational recall;
  Rational f1;
};

/// P = TP/(TP+FP), R = TP/(TP+FN), F1 = 2PR/(P+R). A zero denominator
/// scores 0, except that no positives anywhere (TP+FP+FN = 0) is a vacuous
/// perfect score of 1.
inline PRF prf(const Counts& c) {
  if (c.tp + c.fp + c.fn == 0) return {Rational(1), Rational(1), Rational(1)};
  const Rational p = (c.tp + c.fp) == 0 ? Rational(0) : Rational(c.tp, c.tp + c.fp);
  const Rational r = (c.tp + c.fn) == 0 ? Rational(0) : Rational(c.tp, c.tp + c.fn);
  const Rational f = (p + r) == Rational(0) ? Rational(0) : Rational(2) * p * r / (p + r);
  return {p, r, f};
}

struct MetricReport {
  Rational precision;
  Rational recall;
  Rational f1;
  std::optional<Rational> macro_f1;
  Counts totals;
  std::map<std::string, Counts> per_label;
  std::size_t n = 0;
};

// SemEval ingestion ---------------------------------------------------------

struct GoldAnnotation {
  std::string article_id;
  std::string label;  // dataset spelling
  std::size_t start = 0;
  std::size_t end = 0;
};

using LabelSets = std::map<std::string, std::set<std::string>>;

/// Maps dataset label spellings onto taxonomy trigger ids.
class LabelAliases {
 public:
  /// Aliases derived from the taxonomy plus the component labels of the
  /// merged SemEval classes.
  static LabelAliases from_taxonomy(const Taxonomy& taxonomy) {
    LabelAliases a;
    for (const auto& t : taxonomy.trigger_types()) {
      a.add(t.id, t.id);
      a.add(t.display_name, t.id);
    }
    const std::pair<const char*, const char*> merged[] = {
        {"Bandwagon", "bandwagon-reductio-ad-hitlerum"},
        {"Reductio_ad_hitlerum", "bandwagon-reductio-ad-hitlerum"},
        {"Whataboutism", "whataboutism-straw-men-red-herring"},
        {"Straw_Men", "whataboutism-straw-men-red-herring"},
        {"Red_Herring", "whataboutism-straw-men-red-herring"},
        {"Exaggeration", "exaggeration-minimisation"},
        {"Minimisation", "exaggeration-minimisation"},
        {"Name_Calling", "name-calling-labeling"},
        {"Labeling", "name-calling-labeling"},
    };
    for (auto [alias, id] : merged) {
      if (taxonomy.find_trigger(id) != nullptr) a.add(alias, id);
    }
    return a;
  }

  /// Lowercase; `_`, `,`, `/`, spaces become `-`; dash runs collapse.
  static std::string normalize(std::string_view label) {
    std::string out;
    for (char c : text::ascii_lower(text::trim(label))) {
      if (c == '_' || c == ',' || c == '/' || c == ' ') c = '-';
      if (c == '-' && !out.empty() && out.back() == '-') continue;
      out.push_back(c);
    }
    while (!out.empty() && out.back() == '-') out.pop_back();
    return out;
  }

  void add(std::string_view alias, std::string id) { table_[normalize(alias)] = std::move(id); }

  /// Extra aliases from a two-column TSV (alias, trigger id).
  void load_tsv(std::string_view tsv, const Taxonomy& taxonomy) {
    std::istringstream in{std::string(tsv)};
    std::string line;
    while (std::getline(in, line)) {
      if (line.empty() || line[0] == '#') continue;
      const auto tab = line.find('\t');
      if (tab == std::string::npos) throw Error(ErrorCode::malformed, "alias row needs two columns: " + line);
      const auto id = text::trim(line.substr(tab + 1));
      if (taxonomy.find_trigger(id) == nullptr) throw Error(ErrorCode::unknown_trigger, id);
      add(line.substr(0, tab), id);
    }
  }

  [[nodiscard]] std::optional<std::string> resolve(std::string_view label) const {
    auto it = table_.find(normalize(label));
    if (it == table_.end()) return std::nullopt;
    return it->second;
  }

 private:
  std::map<std::string, std::string> table_;
};

/// Rows of `article_id<TAB>technique<TAB>start<TAB>end`; blank lines and
/// `#` comments are skipped.
inline std::vector<GoldAnnotation> parse_annotations(std::string_view tsv) {
  std::vector<GoldAnnotation> out;
  std::istringstream in{std::string(tsv)};
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (text::trim(line).empty() || line[0] == '#') continue;
    std::vector<std::string> cols;
    std::size_t pos = 0;
    while (true) {
      const auto tab = line.find('\t', pos);
      cols.push_back(line.substr(pos, tab - pos));
      if (tab == std::string::npos) break;
      pos = tab + 1;
    }
    const auto where = "annotation line " + std::to_string(lineno);
    if (cols.size() != 4) throw Error(ErrorCode::malformed, where + ": expected 4 columns");
    GoldAnnotation a;
    a.article_id = text::trim(cols[0]);
    a.label = text::trim(cols[1]);
    try {
      std::size_t used = 0;
      const auto s = std::stoll(cols[2], &used);
      if (used != cols[2].size() || s < 0) throw std::invalid_argument("start");
      const auto e = std::stoll(cols[3], &used);
      if (used != text::trim(cols[3]).size() || e < 0) throw std::invalid_argument("end");
      a.start = static_cast<std::size_t>(s);
      a.end = static_cast<std::size_t>(e);
    } catch (const std::exception&) {
      throw Error(ErrorCode::malformed, where + ": offsets must be non-negative integers");
    }
    if (a.article_id.empty()) throw Error(ErrorCode::malformed, where + ": empty article id");
    if (a.end <= a.start) throw Error(ErrorCode::malformed, where + ": end must exceed start");
    out.push_back(std::move(a));
  }
  return out;
}

/// One label set per article. With an article index, exactly the indexed
/// articles are reported (unannotated ones as empty sets).
inline LabelSets aggregate_to_article_labels(const std::vector<GoldAnnotation>& annotations,
                                             const LabelAliases& aliases,
                                             const std::optional<std::vector<std::string>>& article_index = {}) {
  LabelSets out;
  if (article_index) {
    for (const auto& id : *article_index) out[id];
  }
  for (const auto& a : annotations) {
    if (a.end <= a.start) throw Error(ErrorCode::malformed, "annotation in " + a.article_id + ": end <= start");
    const auto id = aliases.resolve(a.label);
    if (!id) throw Error(ErrorCode::unknown_trigger, "unresolvable label '" + a.label + "'");
    if (article_index && !out.count(a.article_id)) continue;
    out[a.article_id].insert(*id);
  }
  return out;
}

// Metrics -------------------------------------------------------------------

/// TP/FP/FN pooled over all (article, label) pairs.
inline MetricReport micro_f1(const LabelSets& gold, const LabelSets& pred) {
  if (gold.size() != pred.size()) throw Error(ErrorCode::invalid_argument, "article id mismatch");
  MetricReport r;
  for (const auto& [article, g] : gold) {
    auto it = pred.find(article);
    if (it == pred.end()) throw Error(ErrorCode::invalid_argument, "article id mismatch: " + article);
    const auto& p = it->second;
    for (const auto& l : g) {
      auto& c = r.per_label[l];
      if (p.count(l)) {
        ++c.tp, ++r.totals.tp;
      } else {
        ++c.fn, ++r.totals.fn;
      }
    }
    for (const auto& l : p) {
      if (!g.count(l)) ++r.per_label[l].fp, ++r.totals.fp;
    }
  }
  r.n = gold.size();
  const auto s = prf(r.totals);
  r.precision = s.precision;
  r.recall = s.recall;
  r.f1 = s.f1;
  return r;
}

namespace detail {

inline void require_binary(const std::vector<int>& v, const char* what) {
  for (int x : v) {
    if (x != 0 && x != 1) throw Error(ErrorCode::invalid_argument, std::string(what) + " contains a non-binary label");
  }
}

}  // namespace detail

/// Per-class F1 for the positive and negative class, averaged unweighted.
/// A class absent from both gold and predictions has no defined F1 and is
/// left out of the average. The micro fields carry the positive class.
inline MetricReport macro_f1_binary(const std::vector<int>& gold, const std::vector<int>& pred) {
  if (gold.size() != pred.size()) throw Error(ErrorCode::invalid_argument, "length mismatch");
  if (gold.empty()) throw Error(ErrorCode::invalid_argument, "no instances");
  detail::require_binary(gold, "gold");
  detail::require_binary(pred, "pred");
  MetricReport r;
  Counts pos, neg;
  for (std::size_t i = 0; i < gold.size(); ++i) {
    if (gold[i] == 1 && pred[i] == 1) ++pos.tp;
    if (gold[i] == 0 && pred[i] == 1) ++pos.fp, ++neg.fn;
    if (gold[i] == 1 && pred[i] == 0) ++pos.fn, ++neg.fp;
    if (gold[i] == 0 && pred[i] == 0) ++neg.tp;
  }
  r.per_label["positive"] = pos;
  r.per_label["negative"] = neg;
  r.totals = pos;
  r.n = gold.size();
  const auto p = prf(pos);
  r.precision = p.precision;
  r.recall = p.recall;
  r.f1 = p.f1;
  std::vector<Rational> f1s;
  for (const auto& c : {pos, neg}) {
    if (c.tp + c.fp + c.fn > 0) f1s.push_back(prf(c).f1);
  }
  r.macro_f1 = mean(f1s);
  return r;
}

/// Prevalence- and bias-adjusted kappa for two binary raters: 2 p_o - 1.
inline Rational pabak(const std::vector<int>& a, const std::vector<int>& b) {
  if (a.size() != b.size()) throw Error(ErrorCode::invalid_argument, "length mismatch");
  if (a.empty()) throw Error(ErrorCode::invalid_argument, "no instances");
  detail::require_binary(a, "rater a");
  detail::require_binary(b, "rater b");
  std::int64_t agree = 0;
  for (std::size_t i = 0; i < a.size(); ++i) agree += a[i] == b[i] ? 1 : 0;
  return Rational(2) * Rational(agree, static_cast<std::int64_t>(a.size())) - Rational(1);
}

inline double pabak_from_observed(double observed_agreement) { return 2.0 * observed_agreement - 1.0; }

struct PairAgreement {
  std::string a;
  std::string b;
  Rational observed;
  Rational pabak;
};

struct AgreementReport {
  std::vector<PairAgreement> pairs;
  /// Mean of model-vs-rater PABAK (headline figure).
  Rational model_vs_raters;
  /// Mean rater-vs-rater PABAK; absent with fewer than two raters.
  std::optional<Rational> rater_vs_rater;
  /// Model vs the per-instance majority of raters (ties count as negative).
  Rational model_vs_majority;
};

inline AgreementReport aggregate_pabak(const std::vector<int>& model, const std::vector<std::vector<int>>& raters) {
  if (raters.empty()) throw Error(ErrorCode::invalid_argument, "no raters");
  AgreementReport r;
  const auto observed = [](Rational k) { return (k + Rational(1)) / Rational(2); };
  std::vector<Rational> mvr;
  for (std::size_t i = 0; i < raters.size(); ++i) {
    const auto k = pabak(model, raters[i]);
    r.pairs.push_back({"model", "rater" + std::to_string(i + 1), observed(k), k});
    mvr.push_back(k);
  }
  r.model_vs_raters = mean(mvr);
  std::vector<Rational> rvr;
  for (std::size_t i = 0; i < raters.size(); ++i) {
    for (std::size_t j = i + 1; j < raters.size(); ++j) {
      const auto k = pabak(raters[i], raters[j]);
      r.pairs.push_back({"rater" + std::to_string(i + 1), "rater" + std::to_string(j + 1), observed(k), k});
      rvr.push_back(k);
    }
  }
  if (!rvr.empty()) r.rater_vs_rater = mean(rvr);
  std::vector<int> majority(model.size());
  for (std::size_t n = 0; n < model.size(); ++n) {
    std::size_t votes = 0;
    for (const auto& rater : raters) votes += rater[n] == 1 ? 1 : 0;
    majority[n] = 2 * votes > raters.size() ? 1 : 0;
  }
  r.model_vs_majority = pabak(model, majority);
  return r;
}

// Latency -------------------------------------------------------------------

/// Nearest-rank percentile (`percent` in 1..100) of an unsorted sample.
inline double percentile_nearest_rank(std::vector<double> samples, int percent) {
  if (samples.empty()) throw Error(ErrorCode::invalid_argument, "empty sample");
  if (percent < 1 || percent > 100) throw Error(ErrorCode::invalid_argument, "percent must be in 1..100");
  std::sort(samples.begin(), samples.end());
  const std::size_t n = samples.size();
  std::size_t rank = (static_cast<std::size_t>(percent) * n + 99) / 100;
  rank = std::clamp<std::size_t>(rank, 1, n);
  return samples[rank - 1];
}

enum class LengthBin { short_text, medium_text, long_text };

inline std::string_view to_string(LengthBin b) {
  switch (b) {
    case LengthBin::short_text: return "short";
    case LengthBin::medium_text: return "medium";
    case LengthBin::long_text: return "long";
  }
  return "short";
}

struct BinThresholds {
  std::size_t short_max = 280;    // scalars
  std::size_t medium_max = 1000;  // scalars
};

struct BenchText {
  std::string id;
  std::string text;
  LengthBin bin = LengthBin::short_text;
};

inline LengthBin bin_for(std::string_view text, const BinThresholds& t) {
  const auto n = text::length(text);
  if (n <= t.short_max) return LengthBin::short_text;
  if (n <= t.medium_max) return LengthBin::medium_text;
  return LengthBin::long_text;
}

/// JSON array of {"id", "text"}; bins follow from the thresholds and must
/// split the corpus 5/5/5.
inline std::vector<BenchText> load_bench_corpus(std::string_view source, const BinThresholds& thresholds = {}) {
  auto j = nlohmann::json::parse(source.begin(), source.end(), nullptr, false);
  if (j.is_discarded() || !j.is_array()) throw Error(ErrorCode::malformed, "bench corpus must be a JSON array");
  std::vector<BenchText> out;
  std::map<LengthBin, int> per_bin;
  for (const auto& e : j) {
    if (!e.is_object() || !e.contains("id") || !e.contains("text") || !e["text"].is_string() || !e["id"].is_string()) {
      throw Error(ErrorCode::malformed, "bench entry needs string id and text");
    }
    BenchText t{e["id"].get<std::string>(), e["text"].get<std::string>(), LengthBin::short_text};
    t.bin = bin_for(t.text, thresholds);
    ++per_bin[t.bin];
    out.push_back(std::move(t));
  }
  if (out.size() != 15 || per_bin[LengthBin::short_text] != 5 || per_bin[LengthBin::medium_text] != 5 ||
      per_bin[LengthBin::long_text] != 5) {
    throw Error(ErrorCode::wrong_count, "bench corpus must hold 5 short, 5 medium and 5 long texts");
  }
  return out;
}

struct LatencySummary {
  double median_ms = 0.0;
  double p95_ms = 0.0;
  std::size_t n = 0;
};

struct LatencyReport {
  std::string tier;
  std::map<std::string, LatencySummary> per_bin;
  LatencySummary overall;
  std::size_t texts = 0;
  std::size_t repetitions = 0;
  std::vector<double> samples_ms;
};

inline LatencySummary summarize(const std::vector<double>& samples) {
  return {percentile_nearest_rank(samples, 50), percentile_nearest_rank(samples, 95), samples.size()};
}

/// Times `run(text)` `repetitions` times per corpus text.
inline LatencyReport bench_latency(const std::vector<BenchText>& corpus,
                                   const std::function<void(const std::string&)>& run, std::size_t repetitions,
                                   std::string tier) {
  if (repetitions == 0) throw Error(ErrorCode::invalid_argument, "repetitions must be positive");
  if (corpus.empty()) throw Error(ErrorCode::invalid_argument, "empty corpus");
  LatencyReport report;
  report.tier = std::move(tier);
  report.texts = corpus.size();
  report.repetitions = repetitions;
  std::map<std::string, std::vector<double>> by_bin;
  for (const auto& t : corpus) {
    for (std::size_t r = 0; r < repetitions; ++r) {
      const auto started = std::chrono::steady_clock::now();
      run(t.text);
      const double ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - started).count();
      report.samples_ms.push_back(ms);
      by_bin[std::string(to_string(t.bin))].push_back(ms);
    }
  }
  for (const auto& [bin, samples] : by_bin) report.per_bin[bin] = summarize(samples);
  report.overall = summarize(report.samples_ms);
  return report;
}

// Runners -------------------------------------------------------------------

struct ArticleError {
  std::string article_id;
  std::string message;
};

struct CbtEvalRun {
  MetricReport report;
  LabelSets gold;
  LabelSets predicted;
  std::vector<ArticleError> errors;
};

struct CbtDataset {
  LabelSets gold;
  std::map<std::string, std::string> texts;
};

/// Layout: `labels.tsv` (gold spans), `articles/<id>.txt` or
/// `articles/article<id>.txt`, and an optional `article_ids.txt` index.
inline CbtDataset load_cbt_dataset(const std::filesystem::path& dir, const Taxonomy& taxonomy,
                                   const LabelAliases& aliases) {
  namespace fs = std::filesystem;
  if (!fs::is_directory(dir)) throw Error(ErrorCode::io, "dataset missing: " + dir.string());
  const auto annotations = parse_annotations(read_file((dir / "labels.tsv").string()));
  std::vector<std::string> index;
  if (fs::exists(dir / "article_ids.txt")) {
    std::istringstream in(read_file((dir / "article_ids.txt").string()));
    std::string line;
    while (std::getline(in, line)) {
      if (auto id = text::trim(line); !id.empty() && id[0] != '#') index.push_back(id);
    }
  } else {
    for (const auto& entry : fs::directory_iterator(dir / "articles")) {
      if (entry.path().extension() != ".txt") continue;
      auto stem = entry.path().stem().string();
      if (stem.rfind("article", 0) == 0) stem = stem.substr(7);
      index.push_back(stem);
    }
    std::sort(index.begin(), index.end());
  }
  (void)taxonomy;
  CbtDataset ds;
  ds.gold = aggregate_to_article_labels(annotations, aliases, index);
  for (const auto& id : index) {
    const auto plain = dir / "articles" / (id + ".txt");
    const auto prefixed = dir / "articles" / ("article" + id + ".txt");
    const auto path = fs::exists(plain) ? plain : prefixed;
    if (!fs::exists(path)) throw Error(ErrorCode::io, "article text missing for " + id);
    ds.texts[id] = read_file(path.string());
  }
  return ds;
}

/// Predicts a label set per article through `completer` and scores it with
/// micro-F1. Unparseable answers count as empty predictions and are logged;
/// backend failures abort the run.
inline CbtEvalRun run_cbt_eval(const CbtDataset& dataset, const Taxonomy& taxonomy, const BackendConfig& backend,
                               PromptMode mode, const Completer& completer, std::size_t jobs = 1) {
  CbtEvalRun run;
  run.gold = dataset.gold;
  std::vector<std::string> ids;
  for (const auto& [id, _] : dataset.gold) ids.push_back(id);

  struct Outcome {
    std::set<std::string> labels;
    std::optional<std::string> error;
  };
  const auto predict = [&](const std::string& id) {
    Outcome o;
    const auto& text = dataset.texts.at(id);
    const auto prompt = build_cbt_prompt(text, taxonomy, 0.5, mode);
    const auto raw = completer(prompt, backend);
    try {
      if (mode == PromptMode::benchmark) {
        o.labels = parse_cbt_labels(raw, taxonomy).labels;
      } else {
        for (const auto& f : parse_cbt_output(raw, taxonomy, text).accepted) o.labels.insert(f.trigger_type_id);
      }
    } catch (const Error& e) {
      o.error = e.what();
    }
    return o;
  };

  std::map<std::string, Outcome> outcomes;
  jobs = std::max<std::size_t>(jobs, 1);
  for (std::size_t i = 0; i < ids.size(); i += jobs) {
    std::vector<std::pair<std::string, std::future<Outcome>>> batch;
    for (std::size_t k = i; k < std::min(ids.size(), i + jobs); ++k) {
      batch.emplace_back(ids[k], std::async(jobs == 1 ? std::launch::deferred : std::launch::async, predict, ids[k]));
    }
    for (auto& [id, fut] : batch) outcomes[id] = fut.get();
  }
  for (const auto& id : ids) {
    auto& o = outcomes[id];
    run.predicted[id] = o.labels;
    if (o.error) run.errors.push_back({id, *o.error});
  }
  run.report = micro_f1(run.gold, run.predicted);
  return run;
}

struct MoralizationInstance {
  std::string id;
  std::string text;
  int gold = 0;
  std::vector<int> raters;
};

/// JSON lines: {"id", "text", "gold": 0|1, "raters": [0|1, ...]}.
inline std::vector<MoralizationInstance> load_moralization_dataset(std::string_view jsonl) {
  std::vector<MoralizationInstance> out;
  std::istringstream in{std::string(jsonl)};
  std::string line;
  std::size_t lineno = 0;
  std::optional<std::size_t> rater_count;
  while (std::getline(in, line)) {
    ++lineno;
    if (text::trim(line).empty()) continue;
    auto j = nlohmann::json::parse(line, nullptr, false);
    const auto where = "moralization line " + std::to_string(lineno);
    if (j.is_discarded() || !j.is_object()) throw Error(ErrorCode::malformed, where);
    try {
      MoralizationInstance m;
      m.id = j.at("id").is_string() ? j.at("id").get<std::string>() : j.at("id").dump();
      m.text = j.at("text").get<std::string>();
      m.gold = j.at("gold").get<int>();
      if (j.contains("raters")) m.raters = j.at("raters").get<std::vector<int>>();
      if (m.gold != 0 && m.gold != 1) throw Error(ErrorCode::malformed, where + ": gold must be 0 or 1");
      if (rater_count && *rater_count != m.raters.size()) {
        throw Error(ErrorCode::malformed, where + ": inconsistent rater count");
      }
      rater_count = m.raters.size();
      out.push_back(std::move(m));
    } catch (const nlohmann::json::exception& e) {
      throw Error(ErrorCode::malformed, where + ": " + e.what());
    }
  }
  if (out.empty()) throw Error(ErrorCode::malformed, "moralization dataset is empty");
  return out;
}

struct MoralizationEvalRun {
  MetricReport report;
  std::optional<AgreementReport> agreement;
  std::vector<int> predicted;
  std::vector<ArticleError> errors;
};

/// Unparseable answers count as negative and are logged.
inline MoralizationEvalRun run_moralization_eval(const std::vector<MoralizationInstance>& data,
                                                 const Taxonomy& taxonomy, const BackendConfig& backend,
                                                 std::string_view locale, const Completer& completer) {
  MoralizationEvalRun run;
  std::vector<int> gold;
  for (const auto& m : data) {
    gold.push_back(m.gold);
    const auto raw = completer(build_moralization_prompt(m.text, locale, taxonomy), backend);
    int decision = 0;
    try {
      decision = parse_moralization_output(raw, taxonomy, m.text, locale).is_moralizing ? 1 : 0;
    } catch (const Error& e) {
      run.errors.push_back({m.id, e.what()});
    }
    run.predicted.push_back(decision);
  }
  run.report = macro_f1_binary(gold, run.predicted);
  if (!data.front().raters.empty()) {
    std::vector<std::vector<int>> raters(data.front().raters.size());
    for (const auto& m : data) {
      for (std::size_t r = 0; r < m.raters.size(); ++r) raters[r].push_back(m.raters[r]);
    }
    run.agreement = aggregate_pabak(run.predicted, raters);
  }
  return run;
}

// Reports -------------------------------------------------------------------

inline nlohmann::json rational_json(Rational r) {
  return {{"value", r.to_double()}, {"exact", r.str()}};
}

inline nlohmann::json to_json(const MetricReport& r) {
  nlohmann::json labels = nlohmann::json::object();
  for (const auto& [l, c] : r.per_label) labels[l] = {{"tp", c.tp}, {"fp", c.fp}, {"fn", c.fn}};
  nlohmann::json j{{"precision", rational_json(r.precision)},
                   {"recall", rational_json(r.recall)},
                   {"f1", rational_json(r.f1)},
                   {"totals", {{"tp", r.totals.tp}, {"fp", r.totals.fp}, {"fn", r.totals.fn}}},
                   {"per_label", labels},
                   {"n", r.n}};
  if (r.macro_f1) j["macro_f1"] = rational_json(*r.macro_f1);
  return j;
}

inline nlohmann::json to_json(const AgreementReport& r) {
  nlohmann::json pairs = nlohmann::json::array();
  for (const auto& p : r.pairs) {
    pairs.push_back({{"a", p.a}, {"b", p.b}, {"observed", rational_json(p.observed)}, {"pabak", rational_json(p.pabak)}});
  }
  nlohmann::json j{{"pairs", pairs},
                   {"model_vs_raters", rational_json(r.model_vs_raters)},
                   {"model_vs_majority", rational_json(r.model_vs_majority)}};
  j["rater_vs_rater"] = r.rater_vs_rater ? rational_json(*r.rater_vs_rater) : nlohmann::json(nullptr);
  return j;
}

inline nlohmann::json to_json(const LatencySummary& s) {
  return {{"median_ms", s.median_ms}, {"p95_ms", s.p95_ms}, {"n", s.n}};
}

inline nlohmann::json to_json(const LatencyReport& r) {
  nlohmann::json bins = nlohmann::json::object();
  for (const auto& [b, s] : r.per_bin) bins[b] = to_json(s);
  return {{"tier", r.tier},
          {"overall", to_json(r.overall)},
          {"per_bin", bins},
          {"texts", r.texts},
          {"repetitions", r.repetitions}};
}

}  // namespace vigil::eval
