#include <gtest/gtest.h>

#include <atomic>
#include <random>
#include <set>

#include "support.hpp"

using namespace vigil;
using vigil::testing::canned;
using vigil::testing::finding_for;
using vigil::testing::fixture_file;
using vigil::testing::local_backend;
using vigil::testing::shipped_taxonomy;

namespace {

PluginDescriptor descriptor(std::string id, Tier tier = Tier::pattern) {
  PluginDescriptor d;
  d.id = std::move(id);
  d.display_name = d.id;
  d.trigger_domains = {"cognitive-bias"};
  d.locales = {"en"};
  d.required_tier = tier;
  return d;
}

AnalysisRequest request(std::string text, std::vector<std::string> ids, double sensitivity = 0.5) {
  AnalysisRequest r;
  r.content_id = "c1";
  r.text = std::move(text);
  r.plugin_ids = std::move(ids);
  r.sensitivity = sensitivity;
  return r;
}

/// Plugin emitting one loaded-language finding per (quote, confidence).
DetectFn emitting(std::vector<std::pair<std::string, double>> quotes, std::atomic<int>* calls = nullptr) {
  return [quotes = std::move(quotes), calls](const PluginContext& ctx) {
    if (calls) ++*calls;
    PluginOutput out;
    for (const auto& [q, c] : quotes) {
      out.findings.push_back(finding_for(*shipped_taxonomy(), ctx.text, "loaded-language", q, c, "fake"));
    }
    out.model_id = "fake-model";
    return out;
  };
}

ErrorCode code_of(const std::function<void()>& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.code();
  }
  ADD_FAILURE() << "expected vigil::Error";
  return ErrorCode::io;
}

std::shared_ptr<const CompiledMatcher> min_matcher() {
  return std::make_shared<const CompiledMatcher>(
      compile_rules(*shipped_taxonomy(), load_rules(read_file(fixture_file("rules_min.json")))));
}

}  // namespace

TEST(Registry, ListsInRegistrationOrderAndRejectsDuplicates) {
  PluginRegistry reg;
  register_plugin(reg, make_regex_plugin(min_matcher()));
  reg.register_plugin(descriptor("b"), emitting({}));
  reg.register_plugin(descriptor("a"), emitting({}));
  const auto list = reg.list_plugins();
  ASSERT_EQ(list.size(), 3u);
  EXPECT_EQ(list[0].id, "cbt-regex");
  EXPECT_EQ(list[1].id, "b");
  EXPECT_EQ(list[2].id, "a");
  EXPECT_EQ(code_of([&] { reg.register_plugin(descriptor("a"), emitting({})); }), ErrorCode::duplicate_id);
  EXPECT_EQ(code_of([&] { reg.register_plugin(descriptor(""), emitting({})); }), ErrorCode::invalid_argument);
  EXPECT_EQ(code_of([&] { reg.register_plugin(descriptor("c"), nullptr); }), ErrorCode::invalid_argument);
  EXPECT_TRUE(PluginRegistry{}.list_plugins().empty());
}

TEST(Registry, DescriptorJsonRoundTrip) {
  const auto d = make_moralization_plugin(shipped_taxonomy(), canned("")).descriptor;
  const nlohmann::json j = d;
  EXPECT_EQ(j["required_tier"], "in-browser");
  EXPECT_EQ(j.get<PluginDescriptor>(), d);
  auto bad = j;
  bad["trigger_domains"] = {"weather"};
  EXPECT_THROW((void)bad.get<PluginDescriptor>(), Error);
}

TEST(Analyze, RegexPluginEndToEnd) {
  PluginRegistry reg;
  register_plugin(reg, make_regex_plugin(min_matcher()));
  const auto r = analyze(reg, request("This disastrous, radical plan", {"cbt-regex"}), *shipped_taxonomy());
  EXPECT_EQ(r.content_id, "c1");
  ASSERT_EQ(r.plugins.size(), 1u);
  const auto& p = r.plugins[0];
  EXPECT_TRUE(p.ok());
  ASSERT_EQ(p.findings.size(), 2u);
  EXPECT_EQ(p.findings[0].id, "cbt-regex:0");
  EXPECT_EQ(p.findings[1].id, "cbt-regex:1");
  EXPECT_EQ(p.findings[0].span.start, 5u);
  EXPECT_EQ(r.finding_count(), 2u);
}

TEST(Analyze, MaximumSensitivityFiltersSubUnitConfidence) {
  PluginRegistry reg;
  reg.register_plugin(descriptor("fake"), emitting({{"one", 0.3}, {"two", 0.7}, {"three", 0.99}}));
  const auto hi = analyze(reg, request("one two three", {"fake"}, 1.0), *shipped_taxonomy());
  EXPECT_TRUE(hi.plugins[0].findings.empty());
  EXPECT_EQ(hi.plugins[0].diagnostics.filtered, 3u);
  const auto lo = analyze(reg, request("one two three", {"fake"}, 0.0), *shipped_taxonomy());
  EXPECT_EQ(lo.plugins[0].findings.size(), 3u);
  const auto mid = analyze(reg, request("one two three", {"fake"}, 0.7), *shipped_taxonomy());
  EXPECT_EQ(mid.plugins[0].findings.size(), 2u);  // threshold is inclusive
}

TEST(Analyze, RegexFindingsSurviveEverySensitivity) {
  PluginRegistry reg;
  register_plugin(reg, make_regex_plugin(min_matcher()));
  for (double s : {0.0, 0.5, 0.99, 1.0}) {
    EXPECT_EQ(analyze(reg, request("a radical idea", {"cbt-regex"}, s), *shipped_taxonomy()).finding_count(), 1u) << s;
  }
}

TEST(Analyze, SensitivityIsMonotone) {
  const std::vector<std::string> words = {"w0", "w1", "w2", "w3", "w4", "w5", "w6", "w7"};
  std::string text;
  for (const auto& w : words) text += w + " ";
  std::mt19937 rng(31);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int iter = 0; iter < 100; ++iter) {
    std::vector<std::pair<std::string, double>> qs;
    for (const auto& w : words) qs.emplace_back(w, u(rng));
    PluginRegistry reg;
    reg.register_plugin(descriptor("fake"), emitting(qs));
    double s1 = u(rng), s2 = u(rng);
    if (s1 > s2) std::swap(s1, s2);
    const auto ids = [&](double s) {
      std::set<std::size_t> out;
      for (const auto& f : analyze(reg, request(text, {"fake"}, s), *shipped_taxonomy()).plugins[0].findings) {
        out.insert(f.span.start);
      }
      return out;
    };
    const auto loose = ids(s1), strict = ids(s2);
    EXPECT_TRUE(std::includes(loose.begin(), loose.end(), strict.begin(), strict.end()));
  }
}

TEST(Analyze, FailingPluginIsIsolated) {
  PluginRegistry reg;
  reg.register_plugin(descriptor("ok"), emitting({{"fine", 0.9}}));
  reg.register_plugin(descriptor("boom"), [](const PluginContext&) -> PluginOutput {
    throw Error(ErrorCode::timeout, "upstream slow");
  });
  reg.register_plugin(descriptor("std"), [](const PluginContext&) -> PluginOutput {
    throw std::runtime_error("surprise");
  });
  const auto r = analyze(reg, request("all fine", {"boom", "ok", "std"}), *shipped_taxonomy());
  ASSERT_EQ(r.plugins.size(), 3u);
  EXPECT_FALSE(r.plugins[0].ok());
  EXPECT_EQ(r.plugins[0].diagnostics.error_code, "timeout");
  EXPECT_TRUE(r.plugins[1].ok());
  EXPECT_EQ(r.plugins[1].findings.size(), 1u);
  EXPECT_EQ(r.plugins[2].diagnostics.error_code, "internal");
}

TEST(Analyze, AllPluginsFailingRaises) {
  PluginRegistry reg;
  reg.register_plugin(descriptor("boom"), [](const PluginContext&) -> PluginOutput {
    throw Error(ErrorCode::transport, "down");
  });
  try {
    (void)analyze(reg, request("x", {"boom"}), *shipped_taxonomy());
    FAIL();
  } catch (const AnalysisFailure& e) {
    EXPECT_EQ(e.code(), ErrorCode::all_plugins_failed);
    ASSERT_EQ(e.result().plugins.size(), 1u);
    EXPECT_EQ(e.result().plugins[0].diagnostics.error_code, "transport");
  }
}

TEST(Analyze, ResultsFollowRequestOrderNotCompletionOrder) {
  PluginRegistry reg;
  for (int i = 0; i < 4; ++i) {
    reg.register_plugin(descriptor("p" + std::to_string(i)), [i](const PluginContext&) {
      std::this_thread::sleep_for(std::chrono::milliseconds(10 * (4 - i)));
      return PluginOutput{};
    });
  }
  const auto r = analyze(reg, request("x", {"p2", "p0", "p3", "p1"}), *shipped_taxonomy());
  std::vector<std::string> got;
  for (const auto& p : r.plugins) got.push_back(p.plugin_id);
  EXPECT_EQ(got, (std::vector<std::string>{"p2", "p0", "p3", "p1"}));
}

TEST(Analyze, InvalidFindingsRejectedNotFatal) {
  PluginRegistry reg;
  reg.register_plugin(descriptor("liar"), [](const PluginContext& ctx) {
    PluginOutput out;
    auto f = finding_for(*shipped_taxonomy(), ctx.text, "loaded-language", "real", 0.9);
    auto g = f;
    g.span.excerpt = "fabricated";
    out.findings = {f, g};
    return out;
  });
  const auto r = analyze(reg, request("a real text", {"liar"}), *shipped_taxonomy());
  EXPECT_EQ(r.plugins[0].findings.size(), 1u);
  EXPECT_EQ(r.plugins[0].diagnostics.invalid, 1u);
}

TEST(Analyze, RequestValidation) {
  PluginRegistry reg;
  reg.register_plugin(descriptor("a"), emitting({}));
  const auto& tax = *shipped_taxonomy();
  EXPECT_EQ(code_of([&] { (void)analyze(reg, request("x", {"nope"}), tax); }), ErrorCode::unknown_plugin);
  EXPECT_EQ(code_of([&] { (void)analyze(reg, request("", {"a"}), tax); }), ErrorCode::invalid_argument);
  EXPECT_EQ(code_of([&] { (void)analyze(reg, request("x\xff", {"a"}), tax); }), ErrorCode::invalid_argument);
  EXPECT_EQ(code_of([&] { (void)analyze(reg, request("x", {"a"}, 1.5), tax); }), ErrorCode::invalid_argument);
  EXPECT_EQ(code_of([&] { (void)analyze(reg, request("x", {}), tax); }), ErrorCode::invalid_argument);
  EXPECT_EQ(code_of([&] { (void)analyze(reg, request("x", {"a", "a"}), tax); }), ErrorCode::invalid_argument);
}

TEST(Analyze, TierBelowPluginRequirementIsPluginError) {
  PluginRegistry reg;
  register_plugin(reg, make_cbt_llm_plugin(shipped_taxonomy(), canned("[]")));
  register_plugin(reg, make_regex_plugin(min_matcher()));
  const auto r = analyze(reg, request("radical", {"cbt-llm", "cbt-regex"}), *shipped_taxonomy());
  EXPECT_EQ(r.plugins[0].diagnostics.error_code, "configuration");
  EXPECT_TRUE(r.plugins[1].ok());
}

TEST(Analyze, CacheMatchesUncachedAndSkipsProducer) {
  std::atomic<int> calls{0};
  PluginRegistry reg;
  reg.register_plugin(descriptor("fake"), emitting({{"alpha", 0.9}, {"beta", 0.4}}, &calls));
  ResultCache cache;
  const auto req = request("alpha beta", {"fake"}, 0.3);
  const auto plain = analyze(reg, req, *shipped_taxonomy());
  const auto first = analyze(reg, req, *shipped_taxonomy(), &cache);
  const auto second = analyze(reg, req, *shipped_taxonomy(), &cache);
  EXPECT_EQ(calls.load(), 2);
  EXPECT_FALSE(first.plugins[0].from_cache);
  EXPECT_TRUE(second.plugins[0].from_cache);
  EXPECT_EQ(plain.plugins[0].findings, second.plugins[0].findings);
  EXPECT_EQ(first.plugins[0].findings, second.plugins[0].findings);
  // a different sensitivity is a different key
  (void)analyze(reg, request("alpha beta", {"fake"}, 0.8), *shipped_taxonomy(), &cache);
  EXPECT_EQ(calls.load(), 3);
}

TEST(Analyze, ResultJsonRoundTrip) {
  PluginRegistry reg;
  register_plugin(reg, make_regex_plugin(min_matcher()));
  register_plugin(reg, make_moralization_plugin(shipped_taxonomy(), canned("decision: no")));
  auto req = request("a radical plan", {"cbt-regex", "moralization-llm"});
  req.backend = local_backend();
  const auto r = analyze(reg, req, *shipped_taxonomy());
  const nlohmann::json j = r;
  const auto back = j.get<AnalysisResult>();
  EXPECT_EQ(nlohmann::json(back), j);
  EXPECT_EQ(j["plugins"][1]["moralization"]["is_moralizing"], false);
}

TEST(BuiltinPlugins, CbtLlmChunksAndRebases) {
  std::atomic<int> prompts{0};
  Completer completer = [&](const DetectionPrompt& p, const BackendConfig&) {
    ++prompts;
    const auto chunk = extract_embedded_text(p.user_text).value_or("");
    nlohmann::json arr = nlohmann::json::array();
    if (chunk.find("disaster") != std::string::npos) {
      arr.push_back({{"label", "loaded-language"}, {"quote", "disaster"}, {"explanation", "e"}, {"confidence", 0.9}});
    }
    return RawModelOutput{"```json\n" + arr.dump() + "\n```", "m", 0.0};
  };
  PluginRegistry reg;
  register_plugin(reg, make_cbt_llm_plugin(shipped_taxonomy(), completer, {.chunk_budget = 20}));
  auto req = request("A calm opening.\n\nThen a disaster.\n\nAnd a disaster again.", {"cbt-llm"});
  req.backend = local_backend();
  const auto r = analyze(reg, req, *shipped_taxonomy());
  ASSERT_TRUE(r.plugins[0].ok()) << *r.plugins[0].diagnostics.error;
  EXPECT_GE(prompts.load(), 3);
  ASSERT_EQ(r.plugins[0].findings.size(), 2u);
  EXPECT_EQ(r.plugins[0].findings[0].span.start, 24u);
  EXPECT_EQ(r.plugins[0].findings[1].span.start, 41u);
}

TEST(BuiltinPlugins, MoralizationPositive) {
  const std::string text = "We owe it to our children to stop this.";
  PluginRegistry reg;
  register_plugin(reg, make_moralization_plugin(
                           shipped_taxonomy(),
                           canned(R"({"moralizing":true,"quote":"We owe it to our children","moral_values":["care-virtue"],)"
                                  R"("demand":"implicit","roles":[{"role":"victim","quote":"our children"}]})")));
  auto req = request(text, {"moralization-llm"});
  req.backend = local_backend();
  const auto r = analyze(reg, req, *shipped_taxonomy());
  EXPECT_EQ(r.plugins[0].is_moralizing, true);
  ASSERT_EQ(r.plugins[0].moralization.size(), 1u);
  EXPECT_EQ(r.plugins[0].moralization[0].roles[0].role_id, "victim");
}

// Remote plugins ------------------------------------------------------------

TEST(RemotePlugins, DiscoveredFromRegistryFixture) {
  const auto body = read_file(fixture_file("api_plugins.json"));
  auto transport = std::make_shared<RecordingTransport>(std::make_shared<FunctionTransport>(
      [&](const HttpRequest& r) { return HttpResponse{r.url.ends_with("/api/plugins") ? 200 : 404, body}; }));
  PluginRegistry reg;
  const auto got = register_remote_plugins(reg, transport, "http://127.0.0.1:9/", local_backend());
  ASSERT_EQ(got.size(), 2u);
  for (const auto& d : reg.list_plugins()) EXPECT_EQ(d.kind, PluginKind::remote);
  EXPECT_EQ(reg.list_plugins()[1].id, "moralization-llm");
  EXPECT_EQ(transport->requests()[0].url, "http://127.0.0.1:9/api/plugins");
  EXPECT_EQ(transport->requests()[0].method, "GET");
}

TEST(RemotePlugins, ZeroNetworkTierRefusesDiscovery) {
  auto transport = std::make_shared<RecordingTransport>();
  PluginRegistry reg;
  EXPECT_EQ(code_of([&] { (void)register_remote_plugins(reg, transport, "http://h", BackendConfig{}); }),
            ErrorCode::privacy_violation);
  EXPECT_EQ(transport->connection_count(), 0u);
}

TEST(RemotePlugins, ForwardsAnalyzeAndRevalidates) {
  const std::string text = "a radical plan";
  auto transport = std::make_shared<FunctionTransport>([&](const HttpRequest& r) {
    const auto fwd = nlohmann::json::parse(r.body);
    EXPECT_EQ(fwd["plugin_ids"], nlohmann::json::array({"remote-x"}));
    AnalysisResult remote;
    PluginResult pr;
    pr.plugin_id = "remote-x";
    pr.findings = {finding_for(*shipped_taxonomy(), text, "loaded-language", "radical", 0.8)};
    remote.plugins = {pr};
    return HttpResponse{200, nlohmann::json(remote).dump()};
  });
  PluginRegistry reg;
  auto d = descriptor("remote-x");
  d.kind = PluginKind::remote;
  reg.register_plugin(d, make_remote_detect(transport, "http://127.0.0.1:9", "remote-x"));
  auto req = request(text, {"remote-x"});
  const auto blocked = [&] {
    try {
      (void)analyze(reg, req, *shipped_taxonomy());
    } catch (const AnalysisFailure& e) {
      return *e.result().plugins[0].diagnostics.error_code;
    }
    return std::string("none");
  }();
  EXPECT_EQ(blocked, "privacy violation");
  req.backend = local_backend();
  const auto r = analyze(reg, req, *shipped_taxonomy());
  ASSERT_EQ(r.plugins[0].findings.size(), 1u);
  EXPECT_EQ(r.plugins[0].findings[0].plugin_id, "remote-x");
}
