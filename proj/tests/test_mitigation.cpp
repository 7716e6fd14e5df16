#include <gtest/gtest.h>

#include "support.hpp"

using namespace vigil;
using vigil::testing::canned;
using vigil::testing::finding_for;
using vigil::testing::local_backend;
using vigil::testing::shipped_taxonomy;

namespace {

const std::string kText = "The radical plan is a total disaster for everyone.";

std::vector<Finding> two_findings() {
  auto a = finding_for(*shipped_taxonomy(), kText, "loaded-language", "radical", 0.9, "cbt-regex");
  a.id = "cbt-regex:0";
  auto b = finding_for(*shipped_taxonomy(), kText, "exaggeration-minimisation", "a total disaster", 0.8, "cbt-regex");
  b.id = "cbt-regex:1";
  return {a, b};
}

std::string digest(const std::vector<Finding>& fs) { return text::sha256_hex(nlohmann::json(fs).dump()); }

}  // namespace

TEST(Rewrite, StructuredReplyParsed) {
  const auto reply = R"(```json
{"rewritten":"The new plan is expected to cause problems for many people.","rationale":"Neutral wording.",
 "dispositions":[{"finding_id":"cbt-regex:0","status":"neutralized"},{"finding_id":"cbt-regex:1","status":"unchanged"}]}
```)";
  const auto r = rewrite(kText, two_findings(), local_backend(), canned(reply));
  EXPECT_EQ(r.rewritten, "The new plan is expected to cause problems for many people.");
  EXPECT_EQ(r.rationale, "Neutral wording.");
  ASSERT_EQ(r.dispositions.size(), 2u);
  EXPECT_EQ(r.dispositions[0].disposition, Disposition::neutralized);
  // claimed status wins over the excerpt heuristic
  EXPECT_EQ(r.dispositions[1].disposition, Disposition::unchanged);
  EXPECT_EQ(r.model_id, "stub-model");
}

TEST(Rewrite, PlainTextReplyUsesExcerptHeuristic) {
  const auto r = rewrite(kText, two_findings(), local_backend(),
                         canned("```\nThe radical plan may cause serious problems for everyone.\n```"));
  EXPECT_EQ(r.rewritten, "The radical plan may cause serious problems for everyone.");
  EXPECT_EQ(r.dispositions[0].disposition, Disposition::unchanged);
  EXPECT_EQ(r.dispositions[1].disposition, Disposition::neutralized);
}

TEST(Rewrite, NoFindingsReturnsOriginalWithoutCallingModel) {
  bool called = false;
  Completer c = [&](const DetectionPrompt&, const BackendConfig&) {
    called = true;
    return RawModelOutput{};
  };
  const auto r = rewrite(kText, {}, local_backend(), c);
  EXPECT_EQ(r.rewritten, kText);
  EXPECT_TRUE(r.dispositions.empty());
  EXPECT_FALSE(called);
}

TEST(Rewrite, BlankAndFailures) {
  try {
    (void)rewrite(kText, two_findings(), local_backend(), canned("   "));
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::empty_rewrite);
  }
  Completer slow = [](const DetectionPrompt&, const BackendConfig&) -> RawModelOutput {
    throw Error(ErrorCode::timeout, "slow model");
  };
  try {
    (void)rewrite(kText, two_findings(), local_backend(), slow);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::timeout);
  }
}

TEST(Rewrite, PromptCarriesFindingsAndEmbeddedText) {
  DetectionPrompt seen;
  Completer spy = [&](const DetectionPrompt& p, const BackendConfig&) {
    seen = p;
    return RawModelOutput{"ok text", "m", 0};
  };
  (void)rewrite(kText, two_findings(), local_backend(), spy);
  EXPECT_NE(seen.user_text.find("[cbt-regex:0] loaded-language"), std::string::npos);
  EXPECT_EQ(extract_embedded_text(seen.user_text), kText);
}

TEST(Rewrite, InputsAreNotModified) {
  const auto fs = two_findings();
  const auto before = digest(fs);
  const std::string text_copy = kText;
  (void)rewrite(text_copy, fs, local_backend(), canned(R"({"rewritten":"x y z w"})"));
  (void)alternatives(text_copy, fs, 2, local_backend(), canned(R"(["a","b"])"));
  EXPECT_EQ(digest(fs), before);
  EXPECT_EQ(text_copy, kText);
}

TEST(Alternatives, SingleVariant) {
  const auto r = alternatives(kText, two_findings(), 1, local_backend(), canned(R"(["One calm version."])"));
  ASSERT_EQ(r.variants.size(), 1u);
  EXPECT_EQ(r.requested, 1u);
  EXPECT_EQ(r.short_by, 0u);
}

TEST(Alternatives, DuplicatesCollapseAndShortfallReported) {
  const auto r = alternatives(kText, two_findings(), 3, local_backend(),
                              canned("```json\n[\"Variant A.\", \"Variant B.\", \" Variant A. \"]\n```"));
  EXPECT_EQ(r.variants, (std::vector<std::string>{"Variant A.", "Variant B."}));
  EXPECT_EQ(r.short_by, 1u);
  const nlohmann::json j = r;
  EXPECT_EQ(j["short_by"], 1);
}

TEST(Alternatives, ExtraVariantsTruncatedAndObjectWrapperAccepted) {
  const auto r =
      alternatives(kText, {}, 2, local_backend(), canned(R"({"alternatives":["a","b","c"]})"));
  EXPECT_EQ(r.variants.size(), 2u);
  EXPECT_EQ(r.short_by, 0u);
}

TEST(Alternatives, RejectsZeroAndUnparseable) {
  try {
    (void)alternatives(kText, {}, 0, local_backend(), canned("[]"));
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::invalid_argument);
  }
  try {
    (void)alternatives(kText, {}, 2, local_backend(), canned("no list here"));
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::unparseable);
  }
}

TEST(Verify, ChecksExcerptsLengthAndChange) {
  const auto fs = two_findings();
  RewriteResult good{"The new plan could cause problems for many people.", {}, "", ""};
  const auto ok = verify_rewrite(kText, good, fs);
  EXPECT_TRUE(ok.all_passed());
  EXPECT_TRUE(ok.findings[0].excerpt_removed);

  RewriteResult kept{"The radical plan could cause problems for people.", {}, "", ""};
  const auto partial = verify_rewrite(kText, kept, fs);
  EXPECT_FALSE(partial.findings[0].excerpt_removed);
  EXPECT_TRUE(partial.findings[1].excerpt_removed);
  EXPECT_FALSE(partial.all_passed());

  RewriteResult tiny{"Bad.", {}, "", ""};
  EXPECT_FALSE(verify_rewrite(kText, tiny, fs).length_ok);

  RewriteResult same{kText, {}, "", ""};
  EXPECT_FALSE(verify_rewrite(kText, same, fs).differs);
  EXPECT_TRUE(verify_rewrite(kText, same, {}).differs);
}
