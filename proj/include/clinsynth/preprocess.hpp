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

#ifndef CLINSYNTH_PREPROCESS_HPP_
#define CLINSYNTH_PREPROCESS_HPP_

#include <cstdint>
#include <filesystem>
#include <set>
#include <string>
#include <string_view>
#include <unordered_map>
#include <variant>
#include <vector>

#include "clinsynth/corpus.hpp"
#include "json.hpp"

namespace clinsynth {

/// Abbreviations recognised when no list is configured. Mirrors
/// data/abbreviations.txt.
const std::vector<std::string>& default_abbreviations();

struct PreprocessConfig {
  bool lowercase = true;
  /// Period-bearing tokens kept whole, matched case-insensitively.
  std::set<std::string> abbreviations{default_abbreviations().begin(),
                                      default_abbreviations().end()};
  std::size_t min_token_count = 1;
  bool preserve_deid_markers = true;

  /// Throws ValidationError when an abbreviation lacks a trailing period or
  /// min_token_count is zero.
  void validate() const;
};

/// One entry per line; blank lines and lines starting with '#' are skipped.
std::set<std::string> load_abbreviations(const std::filesystem::path& path);

using TokenSequence = std::vector<std::string>;

// Token rules:
//  * whitespace separates tokens;
//  * letters, digits and non-ASCII bytes form words;
//  * an apostrophe between two word characters stays inside the word;
//  * an abbreviation-list entry starting at a word boundary is one token;
//  * every other punctuation character is its own token;
//  * with preserve_deid_markers, "[** ... **]" is a single token.
TokenSequence tokenize(std::string_view text, const PreprocessConfig& config);

/// Splits after '.', '!' or '?' when followed by whitespace and an uppercase
/// letter, unless the period ends an abbreviation-list entry. Sentences are
/// trimmed.
std::vector<std::string> segment_sentences(std::string_view text,
                                           const PreprocessConfig& config);

/// Strips control characters, maps typographic quotes, dashes, ellipses and
/// non-breaking spaces to ASCII, and collapses whitespace runs to one space.
std::string normalize_text(std::string_view text);

enum class RejectReason { kEmptyAfterClean };

std::string_view to_string(RejectReason reason);

struct CleanRejection {
  std::string note_id;
  RejectReason reason = RejectReason::kEmptyAfterClean;
};

std::variant<ClinicalNote, CleanRejection> clean_note(
    const ClinicalNote& note, const PreprocessConfig& config);

using TokenId = std::int32_t;

// Dense token index. Specials occupy ids 0..2 and regular tokens follow in
// lexicographic order, so construction from the same token set is
// deterministic.
class Vocabulary {
 public:
  static constexpr TokenId kStart = 0;
  static constexpr TokenId kEnd = 1;
  static constexpr TokenId kUnknown = 2;
  static constexpr std::string_view kStartToken = "<s>";
  static constexpr std::string_view kEndToken = "</s>";
  static constexpr std::string_view kUnknownToken = "<unk>";

  Vocabulary();
  explicit Vocabulary(const std::vector<std::string>& tokens);

  std::size_t size() const { return tokens_.size(); }
  TokenId encode(std::string_view token) const;
  std::vector<TokenId> encode(const TokenSequence& tokens) const;
  const std::string& decode(TokenId id) const;
  TokenSequence decode(const std::vector<TokenId>& ids) const;
  bool contains(std::string_view token) const;
  const std::vector<std::string>& tokens() const { return tokens_; }

  /// Ids of the regular (non-special) tokens.
  std::vector<TokenId> regular_ids() const;

  bool operator==(const Vocabulary& other) const {
    return tokens_ == other.tokens_;
  }

 private:
  std::vector<std::string> tokens_;
  std::unordered_map<std::string, TokenId> index_;
};

/// Keeps tokens seen at least min_token_count times.
Vocabulary build_vocabulary(const std::vector<TokenSequence>& sequences,
                            const PreprocessConfig& config);

/// One token per line, specials first.
std::string vocabulary_to_text(const Vocabulary& vocab);
Vocabulary vocabulary_from_text(std::string_view text);

nlohmann::json preprocess_config_to_json(const PreprocessConfig& config);

}  // namespace clinsynth

#endif  // CLINSYNTH_PREPROCESS_HPP_
