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

#ifndef CLINSYNTH_TRANSCRIPT_HPP_
#define CLINSYNTH_TRANSCRIPT_HPP_

#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"

namespace clinsynth {

enum class Speaker { kPatient, kClinician };

std::string_view to_string(Speaker speaker);
Speaker parse_speaker(std::string_view name);

struct DialogueTurn {
  Speaker speaker = Speaker::kPatient;
  std::string text;

  bool operator==(const DialogueTurn&) const = default;
};

enum class Provenance { kTemplate, kLlm, kNgram, kGan, kMixture };

std::string_view to_string(Provenance provenance);
Provenance parse_provenance(std::string_view name);

struct TranscriptRecord {
  std::vector<DialogueTurn> turns;
  std::string scenario;
  Provenance provenance = Provenance::kLlm;
  /// Text that preceded the first speaker marker, if any.
  std::string preamble;

  bool operator==(const TranscriptRecord&) const = default;
};

nlohmann::json transcript_to_json(const TranscriptRecord& record);
TranscriptRecord transcript_from_json(const nlohmann::json& obj);

/// "Patient: ... Clinician: ..." on one line.
std::string render_turns(const std::vector<DialogueTurn>& turns);

}  // namespace clinsynth

#endif  // CLINSYNTH_TRANSCRIPT_HPP_
