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

#ifndef CLINSYNTH_TEMPLATE_GEN_HPP_
#define CLINSYNTH_TEMPLATE_GEN_HPP_

#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include "clinsynth/transcript.hpp"
#include "json.hpp"

namespace clinsynth {

struct TemplateLiteral {
  std::string text;
  bool operator==(const TemplateLiteral&) const = default;
};

struct TemplatePlaceholder {
  std::string name;
  bool operator==(const TemplatePlaceholder&) const = default;
};

using TemplateSegment = std::variant<TemplateLiteral, TemplatePlaceholder>;

// A transcript template such as
//
//   Patient Name: [Name]
//   Age: [Age]
//
// Placeholders are bracketed names made of letters, digits, spaces, '-' and
// '_'. "[[" and "]]" stand for literal brackets.
struct TranscriptTemplate {
  std::string name;
  std::vector<TemplateSegment> segments;
  /// Distinct placeholder names in order of first appearance.
  std::vector<std::string> placeholders;

  /// Output with each placeholder replaced by `fill(name)`; literals are
  /// emitted unescaped.
  std::string render(const std::function<std::string(const std::string&)>& fill) const;

  /// Re-escaped template source; parse_template(to_source()) == *this.
  std::string to_source() const;
};

/// Throws ParseError carrying the byte offset of an unbalanced or invalid
/// bracket.
TranscriptTemplate parse_template(std::string_view text, std::string name = {});

// Generator for one placeholder:
//   choice  - one entry of a nonempty list
//   range   - an integer in [lo, hi]
//   pattern - '#' digit, '@' uppercase letter, "{a|b|c}" one alternative,
//             '\' escapes the next character
struct SlotChoice {
  std::vector<std::string> options;
};
struct SlotRange {
  std::int64_t lo = 0;
  std::int64_t hi = 0;
};
struct SlotPattern {
  std::string pattern;
};
using SlotGenerator = std::variant<SlotChoice, SlotRange, SlotPattern>;

// Placeholder name -> generator. JSON form:
//   {"Age": {"range": [18, 90]}, "Sex": {"choice": ["Female", "Male"]},
//    "MRN": {"pattern": "MRN-######"}}
class SlotLexicon {
 public:
  SlotLexicon() = default;

  void add(std::string name, SlotGenerator generator);
  bool covers(const std::string& name) const { return slots_.count(name) > 0; }
  const std::map<std::string, SlotGenerator>& slots() const { return slots_; }

  static SlotLexicon from_json(const nlohmann::json& obj);
  static SlotLexicon load(const std::filesystem::path& path);

 private:
  std::map<std::string, SlotGenerator> slots_;
};

/// Replaces every placeholder with one seeded draw per distinct name. Throws
/// ValidationError naming the first placeholder the lexicon lacks.
std::string fill_template(const TranscriptTemplate& tmpl, const SlotLexicon& lexicon,
                          std::uint64_t seed);

/// The condition slot recognised in few-shot instructions.
inline constexpr std::string_view kConditionSlot = "[Condition]";

/// Default instruction used when none is configured.
std::string default_fewshot_instruction();

// Few-shot prompt:
//
//   <instruction with [Condition] replaced>
//   Here are some examples
//   Example:
//   1. Patient: ... Clinician: ...
//   2. ...
//
// With no examples the prompt is the substituted instruction alone. Each
// example is rendered as consecutive "Speaker: utterance" turns on one line.
std::string build_fewshot_prompt(std::string_view instruction,
                                 const std::vector<std::vector<DialogueTurn>>& examples,
                                 std::string_view condition);

struct Scenario {
  std::string name;
  std::string instruction;
};

/// Loads every *.txt file of a directory as a scenario named after the file
/// stem, sorted by name.
std::vector<Scenario> load_scenarios(const std::filesystem::path& dir);

}  // namespace clinsynth

#endif  // CLINSYNTH_TEMPLATE_GEN_HPP_
