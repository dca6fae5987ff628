// Copyright 2026 The clinsynth Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include <gtest/gtest.h>

#include <regex>

#include "clinsynth/error.hpp"
#include "clinsynth/io.hpp"
#include "clinsynth/template_gen.hpp"
#include "test_util.hpp"

namespace clinsynth {
namespace {

TEST(Template, SinglePlaceholder) {
  EXPECT_EQ(parse_template("Age: [Age]").placeholders, std::vector<std::string>{"Age"});
}

TEST(Template, ShippedTemplateFields) {
  const auto t = parse_template(read_file(test::data_dir() / "templates/clinical_transcript.txt"));
  EXPECT_EQ(t.placeholders,
            (std::vector<std::string>{"Name", "Age", "Sex", "Chief Complaint", "Medical History",
                                      "Physical Examination Findings", "Assessment",
                                      "Treatment Plan"}));
}

TEST(Template, UnbalancedBracketOffset) {
  try {
    parse_template("bad [Age");
    FAIL();
  } catch (const ParseError& e) {
    EXPECT_EQ(e.position(), 4u);
  }
  EXPECT_THROW(parse_template("x ] y"), ParseError);
}

TEST(Template, EscapedBrackets) {
  const auto t = parse_template("[[lit]] [A]");
  EXPECT_EQ(t.placeholders, std::vector<std::string>{"A"});
  EXPECT_EQ(t.render([](const std::string&) { return "v"; }), "[lit] v");
  const auto again = parse_template(t.to_source());
  EXPECT_EQ(again.segments, t.segments);
}

TEST(Template, RepeatedNameListedOnce) {
  const auto t = parse_template("[Name] and [Name] at [Age]");
  EXPECT_EQ(t.placeholders, (std::vector<std::string>{"Name", "Age"}));
}

SlotLexicon age_lexicon() {
  SlotLexicon lex;
  lex.add("Age", SlotRange{18, 90});
  return lex;
}

TEST(Fill, AgeInRange) {
  const auto t = parse_template("Age: [Age]");
  const std::regex re("Age: (\\d+)");
  for (std::uint64_t seed = 0; seed < 200; ++seed) {
    const std::string out = fill_template(t, age_lexicon(), seed);
    std::smatch m;
    ASSERT_TRUE(std::regex_match(out, m, re)) << out;
    const int age = std::stoi(m[1]);
    EXPECT_GE(age, 18);
    EXPECT_LE(age, 90);
  }
}

TEST(Fill, SameSeedSameOutput) {
  const auto t = parse_template(read_file(test::data_dir() / "templates/clinical_transcript.txt"));
  const auto lex = SlotLexicon::load(test::data_dir() / "lexicons/default.json");
  EXPECT_EQ(fill_template(t, lex, 31), fill_template(t, lex, 31));
  const std::string out = fill_template(t, lex, 31);
  EXPECT_EQ(out.find('['), std::string::npos);
}

TEST(Fill, MissingPlaceholderNamed) {
  const auto t = parse_template("Type: [Blood Type]");
  try {
    fill_template(t, age_lexicon(), 0);
    FAIL();
  } catch (const ValidationError& e) {
    EXPECT_NE(std::string(e.what()).find("Blood Type"), std::string::npos);
  }
}

TEST(Fill, RepeatedPlaceholderReusesDraw) {
  SlotLexicon lex;
  lex.add("N", SlotRange{0, 1000000});
  const std::string out = fill_template(parse_template("[N]-[N]"), lex, 4);
  const auto dash = out.find('-');
  EXPECT_EQ(out.substr(0, dash), out.substr(dash + 1));
}

TEST(Lexicon, PatternAndValidation) {
  SlotLexicon lex = SlotLexicon::from_json({{"MRN", {{"pattern", "MRN-###@{x|y}\\#"}}}});
  const std::string out = fill_template(parse_template("[MRN]"), lex, 2);
  EXPECT_TRUE(std::regex_match(out, std::regex("MRN-\\d{3}[A-Z][xy]#"))) << out;
  EXPECT_THROW(SlotLexicon::from_json({{"Age", {{"range", {9, 3}}}}}), Error);
  EXPECT_THROW(SlotLexicon::from_json({{"Sex", {{"choice", nlohmann::json::array()}}}}), Error);
}

TEST(FewShot, NoExamplesIsInstructionOnly) {
  EXPECT_EQ(build_fewshot_prompt("Write about [Condition].", {}, "a cough"), "Write about a cough.");
}

TEST(FewShot, ExamplesNumberedInOrder) {
  const std::vector<std::vector<DialogueTurn>> ex = {
      {{Speaker::kPatient, "first one"}, {Speaker::kClinician, "reply one"}},
      {{Speaker::kPatient, "second one"}}};
  const std::string p = build_fewshot_prompt("Do it.", ex, "");
  const auto one = p.find("\n1. Patient: first one Clinician: reply one");
  const auto two = p.find("\n2. Patient: second one");
  ASSERT_NE(one, std::string::npos);
  ASSERT_NE(two, std::string::npos);
  EXPECT_LT(one, two);
  EXPECT_EQ(p.find("\n3. "), std::string::npos);
  EXPECT_EQ(p.find("Do it."), p.rfind("Do it."));
}

TEST(FewShot, DefaultInstructionCondition) {
  const std::string p =
      build_fewshot_prompt(default_fewshot_instruction(), {}, "anxiety and panic attacks");
  EXPECT_NE(p.find("presenting with anxiety and panic attacks."), std::string::npos);
  EXPECT_EQ(p.find(kConditionSlot), std::string::npos);
}

TEST(Scenarios, ShippedDirectory) {
  const auto sc = load_scenarios(test::data_dir() / "prompts");
  ASSERT_EQ(sc.size(), 10u);
  EXPECT_TRUE(std::is_sorted(sc.begin(), sc.end(),
                             [](const Scenario& a, const Scenario& b) { return a.name < b.name; }));
  for (const auto& s : sc) EXPECT_FALSE(s.instruction.empty());
}

}  // namespace
}  // namespace clinsynth
