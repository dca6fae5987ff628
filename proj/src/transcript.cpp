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

#include "clinsynth/transcript.hpp"

#include "clinsynth/error.hpp"

namespace clinsynth {

std::string_view to_string(Speaker speaker) {
  return speaker == Speaker::kPatient ? "Patient" : "Clinician";
}

Speaker parse_speaker(std::string_view name) {
  if (name == "Patient") return Speaker::kPatient;
  if (name == "Clinician") return Speaker::kClinician;
  throw ValidationError("unknown speaker \"" + std::string(name) + "\"");
}

std::string_view to_string(Provenance provenance) {
  switch (provenance) {
    case Provenance::kTemplate:
      return "template";
    case Provenance::kLlm:
      return "llm";
    case Provenance::kNgram:
      return "ngram";
    case Provenance::kGan:
      return "gan";
    case Provenance::kMixture:
      return "mixture";
  }
  return "llm";
}

Provenance parse_provenance(std::string_view name) {
  for (auto p : {Provenance::kTemplate, Provenance::kLlm, Provenance::kNgram,
                 Provenance::kGan, Provenance::kMixture}) {
    if (to_string(p) == name) return p;
  }
  throw ValidationError("unknown provenance \"" + std::string(name) + "\"");
}

nlohmann::json transcript_to_json(const TranscriptRecord& record) {
  nlohmann::json turns = nlohmann::json::array();
  for (const auto& t : record.turns) {
    turns.push_back({{"speaker", to_string(t.speaker)}, {"text", t.text}});
  }
  nlohmann::json obj = {{"turns", turns},
                        {"scenario", record.scenario},
                        {"provenance", to_string(record.provenance)}};
  if (!record.preamble.empty()) obj["preamble"] = record.preamble;
  return obj;
}

TranscriptRecord transcript_from_json(const nlohmann::json& obj) {
  TranscriptRecord record;
  for (const auto& t : obj.at("turns")) {
    record.turns.push_back({parse_speaker(t.at("speaker").get<std::string>()),
                            t.at("text").get<std::string>()});
  }
  record.scenario = obj.value("scenario", "");
  record.provenance = parse_provenance(obj.value("provenance", "llm"));
  record.preamble = obj.value("preamble", "");
  if (record.turns.empty()) throw ValidationError("transcript has no turns");
  return record;
}

std::string render_turns(const std::vector<DialogueTurn>& turns) {
  std::string out;
  for (const auto& t : turns) {
    if (!out.empty()) out += ' ';
    out += to_string(t.speaker);
    out += ": ";
    out += t.text;
  }
  return out;
}

}  // namespace clinsynth
