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

#include "clinsynth/template_gen.hpp"

#include <algorithm>
#include <cctype>

#include "clinsynth/error.hpp"
#include "clinsynth/io.hpp"
#include "clinsynth/rng.hpp"

namespace clinsynth {

namespace {

bool valid_placeholder_char(char c) {
  const auto u = static_cast<unsigned char>(c);
  return std::isalnum(u) || c == ' ' || c == '-' || c == '_';
}

void push_literal(std::vector<TemplateSegment>& segments, std::string_view text) {
  if (text.empty()) return;
  if (!segments.empty()) {
    if (auto* lit = std::get_if<TemplateLiteral>(&segments.back())) {
      lit->text += text;
      return;
    }
  }
  segments.push_back(TemplateLiteral{std::string(text)});
}

}  // namespace

TranscriptTemplate parse_template(std::string_view text, std::string name) {
  TranscriptTemplate tmpl;
  tmpl.name = std::move(name);
  std::size_t i = 0;
  std::size_t literal_start = 0;
  std::string pending;
  auto flush = [&](std::size_t upto) {
    pending += text.substr(literal_start, upto - literal_start);
    push_literal(tmpl.segments, pending);
    pending.clear();
  };
  while (i < text.size()) {
    const char c = text[i];
    if (c == '[' && i + 1 < text.size() && text[i + 1] == '[') {
      pending += text.substr(literal_start, i - literal_start);
      pending += '[';
      i += 2;
      literal_start = i;
    } else if (c == ']' && i + 1 < text.size() && text[i + 1] == ']') {
      pending += text.substr(literal_start, i - literal_start);
      pending += ']';
      i += 2;
      literal_start = i;
    } else if (c == '[') {
      const std::size_t close = text.find(']', i + 1);
      const std::size_t reopen = text.find('[', i + 1);
      if (close == std::string_view::npos || reopen < close) {
        throw ParseError("unbalanced '[' at offset " + std::to_string(i), i);
      }
      std::string_view pname = text.substr(i + 1, close - i - 1);
      if (pname.empty() ||
          !std::all_of(pname.begin(), pname.end(), valid_placeholder_char) ||
          pname.front() == ' ' || pname.back() == ' ') {
        throw ParseError("invalid placeholder name at offset " + std::to_string(i), i);
      }
      flush(i);
      tmpl.segments.push_back(TemplatePlaceholder{std::string(pname)});
      if (std::find(tmpl.placeholders.begin(), tmpl.placeholders.end(), pname) ==
          tmpl.placeholders.end()) {
        tmpl.placeholders.emplace_back(pname);
      }
      i = close + 1;
      literal_start = i;
    } else if (c == ']') {
      throw ParseError("unmatched ']' at offset " + std::to_string(i), i);
    } else {
      ++i;
    }
  }
  flush(text.size());
  return tmpl;
}

std::string TranscriptTemplate::render(
    const std::function<std::string(const std::string&)>& fill) const {
  std::string out;
  for (const auto& seg : segments) {
    if (const auto* lit = std::get_if<TemplateLiteral>(&seg)) {
      out += lit->text;
    } else {
      out += fill(std::get<TemplatePlaceholder>(seg).name);
    }
  }
  return out;
}

std::string TranscriptTemplate::to_source() const {
  std::string out;
  for (const auto& seg : segments) {
    if (const auto* lit = std::get_if<TemplateLiteral>(&seg)) {
      for (char c : lit->text) {
        if (c == '[' || c == ']') out += c;
        out += c;
      }
    } else {
      out += '[' + std::get<TemplatePlaceholder>(seg).name + ']';
    }
  }
  return out;
}

namespace {

void validate_pattern(const std::string& name, const std::string& pattern) {
  if (pattern.empty()) throw ValidationError("slot \"" + name + "\": empty pattern");
  for (std::size_t i = 0; i < pattern.size(); ++i) {
    if (pattern[i] == '\\') {
      ++i;
      continue;
    }
    if (pattern[i] != '{') continue;
    const std::size_t close = pattern.find('}', i);
    if (close == std::string::npos) {
      throw ValidationError("slot \"" + name + "\": unclosed '{' in pattern");
    }
    std::string_view body(pattern.data() + i + 1, close - i - 1);
    std::size_t start = 0;
    while (true) {
      std::size_t bar = body.find('|', start);
      std::string_view alt = body.substr(start, bar == std::string_view::npos
                                                    ? std::string_view::npos
                                                    : bar - start);
      if (alt.empty()) {
        throw ValidationError("slot \"" + name + "\": empty pattern alternative");
      }
      if (bar == std::string_view::npos) break;
      start = bar + 1;
    }
    i = close;
  }
}

std::string expand_pattern(const std::string& pattern, Rng& rng) {
  std::string out;
  for (std::size_t i = 0; i < pattern.size(); ++i) {
    const char c = pattern[i];
    if (c == '\\' && i + 1 < pattern.size()) {
      out += pattern[++i];
    } else if (c == '#') {
      out += static_cast<char>('0' + rng.below(10));
    } else if (c == '@') {
      out += static_cast<char>('A' + rng.below(26));
    } else if (c == '{') {
      const std::size_t close = pattern.find('}', i);
      std::vector<std::string> alts;
      std::size_t start = i + 1;
      while (true) {
        std::size_t bar = pattern.find('|', start);
        if (bar == std::string::npos || bar > close) {
          alts.push_back(pattern.substr(start, close - start));
          break;
        }
        alts.push_back(pattern.substr(start, bar - start));
        start = bar + 1;
      }
      out += alts[rng.below(alts.size())];
      i = close;
    } else {
      out += c;
    }
  }
  return out;
}

std::string draw(const SlotGenerator& gen, Rng& rng) {
  if (const auto* choice = std::get_if<SlotChoice>(&gen)) {
    return choice->options[rng.below(choice->options.size())];
  }
  if (const auto* range = std::get_if<SlotRange>(&gen)) {
    return std::to_string(rng.range(range->lo, range->hi));
  }
  return expand_pattern(std::get<SlotPattern>(gen).pattern, rng);
}

}  // namespace

void SlotLexicon::add(std::string name, SlotGenerator generator) {
  if (const auto* choice = std::get_if<SlotChoice>(&generator)) {
    if (choice->options.empty()) {
      throw ValidationError("slot \"" + name + "\": empty choice list");
    }
    for (const auto& o : choice->options) {
      if (o.empty()) throw ValidationError("slot \"" + name + "\": empty choice");
    }
  } else if (const auto* range = std::get_if<SlotRange>(&generator)) {
    if (range->lo > range->hi) {
      throw ValidationError("slot \"" + name + "\": range lo > hi");
    }
  } else {
    validate_pattern(name, std::get<SlotPattern>(generator).pattern);
  }
  slots_[std::move(name)] = std::move(generator);
}

SlotLexicon SlotLexicon::from_json(const nlohmann::json& obj) {
  if (!obj.is_object()) throw ValidationError("lexicon must be a JSON object");
  SlotLexicon lex;
  for (const auto& [name, spec] : obj.items()) {
    if (!spec.is_object() || spec.size() != 1) {
      throw ValidationError("slot \"" + name +
                            "\" needs exactly one of choice, range, pattern");
    }
    if (spec.contains("choice")) {
      lex.add(name, SlotChoice{spec["choice"].get<std::vector<std::string>>()});
    } else if (spec.contains("range")) {
      const auto& r = spec["range"];
      if (!r.is_array() || r.size() != 2) {
        throw ValidationError("slot \"" + name + "\": range must be [lo, hi]");
      }
      lex.add(name, SlotRange{r[0].get<std::int64_t>(), r[1].get<std::int64_t>()});
    } else if (spec.contains("pattern")) {
      lex.add(name, SlotPattern{spec["pattern"].get<std::string>()});
    } else {
      throw ValidationError("slot \"" + name + "\": unknown generator kind");
    }
  }
  return lex;
}

SlotLexicon SlotLexicon::load(const std::filesystem::path& path) {
  return from_json(nlohmann::json::parse(read_file(path)));
}

std::string fill_template(const TranscriptTemplate& tmpl, const SlotLexicon& lexicon,
                          std::uint64_t seed) {
  for (const auto& name : tmpl.placeholders) {
    if (!lexicon.covers(name)) {
      throw ValidationError("lexicon has no generator for placeholder \"" + name + "\"");
    }
  }
  Rng rng(seed);
  std::map<std::string, std::string> values;
  for (const auto& name : tmpl.placeholders) {
    values[name] = draw(lexicon.slots().at(name), rng);
  }
  return tmpl.render([&](const std::string& name) { return values.at(name); });
}

std::string default_fewshot_instruction() {
  return "Generate a new clinical transcript for a patient presenting with "
         "[Condition].";
}

namespace {

std::string substitute_all(std::string text, std::string_view slot,
                           std::string_view value) {
  std::size_t pos = 0;
  while ((pos = text.find(slot, pos)) != std::string::npos) {
    text.replace(pos, slot.size(), value);
    pos += value.size();
  }
  return text;
}

}  // namespace

std::string build_fewshot_prompt(std::string_view instruction,
                                 const std::vector<std::vector<DialogueTurn>>& examples,
                                 std::string_view condition) {
  if (instruction.empty()) throw ValidationError("instruction is empty");
  std::string prompt = substitute_all(std::string(instruction), kConditionSlot, condition);
  prompt = substitute_all(std::move(prompt), "[symptoms or condition]", condition);
  if (examples.empty()) return prompt;
  prompt += "\nHere are some examples\nExample:";
  for (std::size_t i = 0; i < examples.size(); ++i) {
    prompt += '\n';
    prompt += std::to_string(i + 1) + ". " + render_turns(examples[i]);
  }
  return prompt;
}

std::vector<Scenario> load_scenarios(const std::filesystem::path& dir) {
  std::vector<Scenario> out;
  for (const auto& entry : std::filesystem::directory_iterator(dir)) {
    if (!entry.is_regular_file() || entry.path().extension() != ".txt") continue;
    std::string text = read_file(entry.path());
    while (!text.empty() && (text.back() == '\n' || text.back() == '\r')) text.pop_back();
    out.push_back({entry.path().stem().string(), std::move(text)});
  }
  std::sort(out.begin(), out.end(),
            [](const Scenario& a, const Scenario& b) { return a.name < b.name; });
  return out;
}

}  // namespace clinsynth
