#pragma once

// Factories for the shipped plugins: cbt-regex, cbt-llm and moralization-llm.

#include <algorithm>
#include <memory>
#include <string>
#include <utility>

#include "vigil/gateway.hpp"
#include "vigil/llm_detection.hpp"
#include "vigil/plugin.hpp"
#include "vigil/regex_detector.hpp"
#include "vigil/taxonomy.hpp"

namespace vigil {

struct PluginSpec {
  PluginDescriptor descriptor;
  DetectFn detect;
};

inline void register_plugin(PluginRegistry& registry, PluginSpec spec) {
  registry.register_plugin(std::move(spec.descriptor), std::move(spec.detect));
}

inline PluginSpec make_regex_plugin(std::shared_ptr<const CompiledMatcher> matcher) {
  PluginDescriptor d;
  d.id = kRegexPluginId;
  d.kind = PluginKind::in_process;
  d.display_name = "Cognitive bias triggers (patterns)";
  d.trigger_domains = {"cognitive-bias"};
  d.locales = {"en", "de"};
  d.required_tier = Tier::pattern;
  return {d, [matcher = std::move(matcher)](const PluginContext& ctx) {
            PluginOutput out;
            out.findings = detect(*matcher, ctx.text);
            return out;
          }};
}

struct LlmPluginOptions {
  /// Texts longer than this many scalars are analyzed in paragraph chunks.
  std::size_t chunk_budget = 6000;
};

inline PluginSpec make_cbt_llm_plugin(std::shared_ptr<const Taxonomy> taxonomy, Completer completer,
                                      LlmPluginOptions options = {}) {
  PluginDescriptor d;
  d.id = kCbtLlmPluginId;
  d.kind = PluginKind::in_process;
  d.display_name = "Cognitive bias triggers (LLM)";
  d.trigger_domains = {"cognitive-bias"};
  d.locales = {"en", "de"};
  d.required_tier = Tier::in_browser;
  return {d, [taxonomy = std::move(taxonomy), completer = std::move(completer), options](const PluginContext& ctx) {
            PluginOutput out;
            const auto decoded = text::decode_utf8(ctx.text);
            for (const auto& chunk : split_into_chunks(decoded, options.chunk_budget)) {
              if (std::all_of(chunk.text.begin(), chunk.text.end(), [](char32_t c) { return text::is_space(c); })) {
                continue;
              }
              const auto chunk_text = text::encode_utf8(chunk.text);
              const auto prompt = build_cbt_prompt(chunk_text, *taxonomy, ctx.sensitivity, PromptMode::production);
              const auto raw = completer(prompt, ctx.backend);
              out.model_id = raw.model_id;
              auto report = parse_cbt_output(raw, *taxonomy, chunk_text);
              for (auto& f : report.accepted) {
                rebase(f, chunk.offset);
                out.findings.push_back(std::move(f));
              }
              for (const auto& [reason, n] : report.dropped_counts()) out.dropped[reason] += n;
              for (auto& n : report.notes) out.notes.push_back(std::move(n));
            }
            return out;
          }};
}

inline PluginSpec make_moralization_plugin(std::shared_ptr<const Taxonomy> taxonomy, Completer completer) {
  PluginDescriptor d;
  d.id = kMoralizationPluginId;
  d.kind = PluginKind::in_process;
  d.display_name = "Moralization (LLM)";
  d.trigger_domains = {"moralization"};
  d.locales = {"en", "de"};
  d.required_tier = Tier::in_browser;
  return {d, [taxonomy = std::move(taxonomy), completer = std::move(completer)](const PluginContext& ctx) {
            const auto prompt = build_moralization_prompt(ctx.text, ctx.locale, *taxonomy);
            const auto raw = completer(prompt, ctx.backend);
            auto parsed = parse_moralization_output(raw, *taxonomy, ctx.text, ctx.locale);
            PluginOutput out;
            out.model_id = raw.model_id;
            out.is_moralizing = parsed.is_moralizing;
            if (parsed.details) out.moralization.push_back(std::move(*parsed.details));
            for (const auto& drop : parsed.dropped) ++out.dropped[std::string(to_string(drop.reason))];
            return out;
          }};
}

}  // namespace vigil
