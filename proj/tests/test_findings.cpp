#include <gtest/gtest.h>

#include <random>

#include "support.hpp"

using namespace vigil;
using vigil::testing::finding_for;
using vigil::testing::shipped_taxonomy;

TEST(GroundSpan, HandCountedExample) {
  const auto s = ground_span(std::string_view("a total disaster for all"), std::string_view("total disaster"));
  EXPECT_EQ(s.start, 2u);
  EXPECT_EQ(s.end, 16u);
  EXPECT_EQ(s.excerpt, "total disaster");
}

TEST(GroundSpan, FullSourceIsIdentitySpan) {
  const std::string src = "Völlig absurd!";
  const auto s = ground_span(std::string_view(src), std::string_view(src));
  EXPECT_EQ(s.start, 0u);
  EXPECT_EQ(s.end, text::length(src));
}

TEST(GroundSpan, AbsentQuoteNotFound) {
  try {
    (void)ground_span(std::string_view("a total disaster"), std::string_view("absent phrase"));
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::not_found);
  }
  EXPECT_THROW((void)ground_span(std::string_view("abc"), std::string_view("")), Error);
}

TEST(GroundSpan, WhitespaceNormalizedFallbackMapsToOriginal) {
  const std::string src = "This is a  total\n disaster, really.";
  const auto s = ground_span(std::string_view(src), std::string_view("total disaster"));
  EXPECT_EQ(s.excerpt, "total\n disaster");
  EXPECT_EQ(s.start, 11u);
  EXPECT_EQ(s.end, 26u);
}

TEST(GroundSpan, OffsetsCountScalarValuesNotBytes) {
  const auto s = ground_span(std::string_view("Grüße aus Köln"), std::string_view("Köln"));
  EXPECT_EQ(s.start, 10u);
  EXPECT_EQ(s.end, 14u);
}

TEST(GroundSpan, RandomSubstringProperty) {
  std::mt19937 rng(7);
  const std::u32string alphabet = U"abcdeäöü XYZ\n\t.,🙂";
  std::uniform_int_distribution<std::size_t> ch(0, alphabet.size() - 1);
  for (int iter = 0; iter < 2000; ++iter) {
    std::u32string src(std::uniform_int_distribution<std::size_t>(1, 60)(rng), U' ');
    for (auto& c : src) c = alphabet[ch(rng)];
    std::uniform_int_distribution<std::size_t> pos(0, src.size() - 1);
    auto a = pos(rng);
    auto b = pos(rng) + 1;
    if (a >= b) std::swap(a, b), b = std::max(b, a + 1);
    if (b > src.size()) continue;
    const auto quote = src.substr(a, b - a);
    const auto span = ground_span(std::u32string_view(src), std::u32string_view(quote));
    EXPECT_TRUE(span_is_valid(span, src));
    EXPECT_LE(span.start, a);
    EXPECT_EQ(span.excerpt, text::encode_utf8(quote));
    if (src.find(quote) == a) {
      EXPECT_EQ(span.start, a);
      EXPECT_EQ(span.end, b);
    }
  }
}

TEST(Dedupe, KeepsMaxConfidence) {
  const auto& tax = *shipped_taxonomy();
  const std::string src = "a total disaster";
  auto a = finding_for(tax, src, "loaded-language", "disaster", 0.6);
  auto b = finding_for(tax, src, "loaded-language", "disaster", 0.8);
  const auto out = dedupe_findings({a, b});
  ASSERT_EQ(out.size(), 1u);
  EXPECT_DOUBLE_EQ(out[0].confidence, 0.8);
}

TEST(Dedupe, DisjointSortedByStart) {
  const auto& tax = *shipped_taxonomy();
  const std::string src = "radical and shocking";
  auto late = finding_for(tax, src, "loaded-language", "shocking");
  auto early = finding_for(tax, src, "loaded-language", "radical");
  const auto out = dedupe_findings({late, early});
  ASSERT_EQ(out.size(), 2u);
  EXPECT_EQ(out[0].span.excerpt, "radical");
  EXPECT_EQ(out[1].span.excerpt, "shocking");
}

TEST(Dedupe, SameSpanDifferentTypesAllKept) {
  // three findings on one span: two types, one duplicated
  const auto& tax = *shipped_taxonomy();
  const std::string src = "those traitors";
  auto ll = finding_for(tax, src, "loaded-language", "traitors", 0.5);
  auto nc = finding_for(tax, src, "name-calling-labeling", "traitors", 0.9);
  auto ll2 = finding_for(tax, src, "loaded-language", "traitors", 0.7);
  const auto out = dedupe_findings({ll, nc, ll2});
  ASSERT_EQ(out.size(), 2u);
  // same start: higher severity first (name-calling is high)
  EXPECT_EQ(out[0].trigger_type_id, "name-calling-labeling");
  EXPECT_EQ(out[1].trigger_type_id, "loaded-language");
  EXPECT_DOUBLE_EQ(out[1].confidence, 0.7);
}

TEST(Dedupe, IdempotentOnRandomInput) {
  const auto& tax = *shipped_taxonomy();
  const std::string src = "one two three four five six seven";
  const std::vector<std::string> words = {"one", "two", "three", "four", "five", "six", "seven"};
  const std::vector<std::string> types = {"loaded-language", "doubt", "slogans", "name-calling-labeling"};
  std::mt19937 rng(11);
  for (int iter = 0; iter < 300; ++iter) {
    std::vector<Finding> fs;
    const int n = std::uniform_int_distribution<int>(0, 12)(rng);
    for (int i = 0; i < n; ++i) {
      fs.push_back(finding_for(tax, src, types[rng() % types.size()], words[rng() % words.size()],
                               std::uniform_real_distribution<double>(0, 1)(rng)));
    }
    const auto once = dedupe_findings(fs);
    EXPECT_EQ(dedupe_findings(once), once);
    for (std::size_t i = 1; i < once.size(); ++i) EXPECT_LE(once[i - 1].span.start, once[i].span.start);
  }
}

TEST(Validate, RejectsExcerptMismatch) {
  const auto& tax = *shipped_taxonomy();
  const std::string src = "a total disaster";
  auto f = finding_for(tax, src, "loaded-language", "disaster");
  const auto decoded = text::decode_utf8(src);
  EXPECT_NO_THROW(validate_finding(f, decoded, tax));
  f.span.excerpt = "disastes";
  EXPECT_THROW(validate_finding(f, decoded, tax), Error);
  f = finding_for(tax, src, "loaded-language", "disaster");
  f.span.end = 99;
  EXPECT_THROW(validate_finding(f, decoded, tax), Error);
  f = finding_for(tax, src, "loaded-language", "disaster");
  f.bias_triggered = "authority bias";
  EXPECT_THROW(validate_finding(f, decoded, tax), Error);
  f = finding_for(tax, src, "loaded-language", "disaster");
  f.confidence = 1.5;
  EXPECT_THROW(validate_finding(f, decoded, tax), Error);
}

TEST(FindingJson, RoundTripsExactly) {
  const auto& tax = *shipped_taxonomy();
  const auto f = finding_for(tax, "Köln is a disaster", "loaded-language", "disaster", 0.25);
  const nlohmann::json j = f;
  EXPECT_EQ(j["span"]["start"], 10);
  EXPECT_EQ(j["span"]["excerpt"], "disaster");
  EXPECT_EQ(j.get<Finding>(), f);
  for (const char* key : {"id", "plugin_id", "trigger_type_id", "bias_triggered", "severity", "span", "explanation",
                          "confidence"}) {
    EXPECT_TRUE(j.contains(key)) << key;
  }
}

TEST(FindingJson, MoralizationRoundTrip) {
  const std::string src = "We must protect the children.";
  MoralizationFinding m;
  m.span = ground_span(std::string_view(src), std::string_view("We must protect the children."));
  m.moral_values = {"care-virtue"};
  m.demand = Demand::explicit_demand;
  m.roles = {{ground_span(std::string_view(src), std::string_view("the children")), "victim"}};
  m.locale = "en";
  const nlohmann::json j = m;
  EXPECT_EQ(j.get<MoralizationFinding>(), m);
  EXPECT_NO_THROW(validate_moralization(m, text::decode_utf8(src), *shipped_taxonomy()));
  m.moral_values = {"courage"};
  EXPECT_THROW(validate_moralization(m, text::decode_utf8(src), *shipped_taxonomy()), Error);
}
