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

#include "clinsynth/preprocess.hpp"

#include <algorithm>
#include <cctype>
#include <map>

#include "clinsynth/error.hpp"
#include "clinsynth/io.hpp"

namespace clinsynth {

const std::vector<std::string>& default_abbreviations() {
  static const std::vector<std::string> kList = {
      "dr.", "mr.", "mrs.", "ms.", "vs.", "e.g.", "i.e.", "etc.",
      "st.", "pt.", "approx.", "no.",
  };
  return kList;
}

void PreprocessConfig::validate() const {
  if (min_token_count < 1) {
    throw ValidationError("min_token_count must be at least 1");
  }
  for (const auto& a : abbreviations) {
    if (a.empty() || a.back() != '.') {
      throw ValidationError("abbreviation \"" + a + "\" must end with '.'");
    }
  }
}

std::set<std::string> load_abbreviations(const std::filesystem::path& path) {
  std::set<std::string> out;
  for (auto& line : read_lines(path)) {
    auto first = line.find_first_not_of(" \t");
    if (first == std::string::npos || line[first] == '#') continue;
    auto last = line.find_last_not_of(" \t");
    out.insert(line.substr(first, last - first + 1));
  }
  return out;
}

namespace {

bool is_word_byte(unsigned char c) {
  return std::isalnum(c) || c >= 0x80;
}

bool is_space(unsigned char c) { return std::isspace(c); }

std::string ascii_lower(std::string_view s) {
  std::string out(s);
  for (auto& c : out) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  return out;
}

bool iequals_prefix(std::string_view text, std::size_t pos, std::string_view word) {
  if (pos + word.size() > text.size()) return false;
  for (std::size_t i = 0; i < word.size(); ++i) {
    if (std::tolower(static_cast<unsigned char>(text[pos + i])) !=
        std::tolower(static_cast<unsigned char>(word[i]))) {
      return false;
    }
  }
  return true;
}

// Length of the longest abbreviation starting at `pos` and ending at a word
// boundary, or 0.
std::size_t match_abbreviation(std::string_view text, std::size_t pos,
                               const std::set<std::string>& abbreviations) {
  std::size_t best = 0;
  for (const auto& a : abbreviations) {
    if (a.size() <= best || !iequals_prefix(text, pos, a)) continue;
    std::size_t end = pos + a.size();
    if (end < text.size() && is_word_byte(static_cast<unsigned char>(text[end])))
      continue;
    best = a.size();
  }
  return best;
}

bool is_abbreviation(std::string_view word,
                     const std::set<std::string>& abbreviations) {
  std::string lower = ascii_lower(word);
  for (const auto& a : abbreviations) {
    if (ascii_lower(a) == lower) return true;
  }
  return false;
}

std::string_view trim(std::string_view s) {
  std::size_t b = 0, e = s.size();
  while (b < e && is_space(static_cast<unsigned char>(s[b]))) ++b;
  while (e > b && is_space(static_cast<unsigned char>(s[e - 1]))) --e;
  return s.substr(b, e - b);
}

}  // namespace

TokenSequence tokenize(std::string_view text, const PreprocessConfig& config) {
  TokenSequence out;
  auto emit = [&](std::string_view tok) {
    out.push_back(config.lowercase ? ascii_lower(tok) : std::string(tok));
  };
  std::size_t i = 0;
  const std::size_t n = text.size();
  while (i < n) {
    const auto c = static_cast<unsigned char>(text[i]);
    if (is_space(c)) {
      ++i;
      continue;
    }
    if (config.preserve_deid_markers && text.compare(i, 3, "[**") == 0) {
      std::size_t close = text.find("**]", i + 3);
      if (close != std::string_view::npos) {
        emit(text.substr(i, close + 3 - i));
        i = close + 3;
        continue;
      }
    }
    if (std::size_t len = match_abbreviation(text, i, config.abbreviations)) {
      emit(text.substr(i, len));
      i += len;
      continue;
    }
    if (is_word_byte(c)) {
      std::size_t j = i + 1;
      while (j < n) {
        auto cj = static_cast<unsigned char>(text[j]);
        if (is_word_byte(cj)) {
          ++j;
        } else if (cj == '\'' && j + 1 < n &&
                   is_word_byte(static_cast<unsigned char>(text[j + 1]))) {
          j += 2;
        } else {
          break;
        }
      }
      emit(text.substr(i, j - i));
      i = j;
      continue;
    }
    emit(text.substr(i, 1));
    ++i;
  }
  return out;
}

std::vector<std::string> segment_sentences(std::string_view text,
                                           const PreprocessConfig& config) {
  std::vector<std::string> out;
  std::size_t start = 0;
  const std::size_t n = text.size();
  for (std::size_t i = 0; i < n; ++i) {
    const char c = text[i];
    if (c != '.' && c != '!' && c != '?') continue;
    std::size_t j = i + 1;
    if (j >= n || !is_space(static_cast<unsigned char>(text[j]))) continue;
    std::size_t k = j;
    while (k < n && is_space(static_cast<unsigned char>(text[k]))) ++k;
    if (k >= n || !std::isupper(static_cast<unsigned char>(text[k]))) continue;
    if (c == '.') {
      std::size_t w = i;
      while (w > start && !is_space(static_cast<unsigned char>(text[w - 1]))) --w;
      while (w < i && !is_word_byte(static_cast<unsigned char>(text[w]))) ++w;
      if (is_abbreviation(text.substr(w, i + 1 - w), config.abbreviations)) {
        continue;
      }
    }
    std::string_view sentence = trim(text.substr(start, i + 1 - start));
    if (!sentence.empty()) out.emplace_back(sentence);
    start = j;
  }
  std::string_view rest = trim(text.substr(std::min(start, n)));
  if (!rest.empty()) out.emplace_back(rest);
  return out;
}

namespace {

// Decodes one UTF-8 sequence at `pos`. Returns the code point and advances
// `pos`; invalid bytes come back as themselves with `valid` false.
char32_t decode_utf8(std::string_view s, std::size_t& pos, bool& valid) {
  const auto b0 = static_cast<unsigned char>(s[pos]);
  valid = true;
  if (b0 < 0x80) {
    ++pos;
    return b0;
  }
  int extra = (b0 & 0xE0) == 0xC0 ? 1 : (b0 & 0xF0) == 0xE0 ? 2 : (b0 & 0xF8) == 0xF0 ? 3 : -1;
  if (extra < 0 || pos + static_cast<std::size_t>(extra) >= s.size()) {
    valid = false;
    ++pos;
    return b0;
  }
  char32_t cp = b0 & (0x3F >> extra);
  for (int k = 1; k <= extra; ++k) {
    const auto b = static_cast<unsigned char>(s[pos + k]);
    if ((b & 0xC0) != 0x80) {
      valid = false;
      ++pos;
      return b0;
    }
    cp = (cp << 6) | (b & 0x3F);
  }
  pos += extra + 1;
  return cp;
}

}  // namespace

std::string normalize_text(std::string_view text) {
  std::string mapped;
  mapped.reserve(text.size());
  std::size_t pos = 0;
  while (pos < text.size()) {
    const std::size_t begin = pos;
    bool valid = true;
    const char32_t cp = decode_utf8(text, pos, valid);
    if (!valid) {
      mapped += static_cast<char>(cp);
      continue;
    }
    switch (cp) {
      case U'\t':
      case U'\n':
      case U'\r':
      case U'\v':
      case U'\f':
      case 0x00A0:
      case 0x202F:
      case 0x205F:
      case 0x3000:
        mapped += ' ';
        continue;
      case 0x2018:
      case 0x2019:
      case 0x201A:
      case 0x201B:
      case 0x2032:
        mapped += '\'';
        continue;
      case 0x201C:
      case 0x201D:
      case 0x201E:
      case 0x201F:
      case 0x2033:
        mapped += '"';
        continue;
      case 0x2212:
        mapped += '-';
        continue;
      case 0x2026:
        mapped += "...";
        continue;
      case 0x200B:
      case 0x200C:
      case 0x200D:
      case 0xFEFF:
        continue;
      default:
        break;
    }
    if (cp >= 0x2010 && cp <= 0x2015) {
      mapped += '-';
    } else if (cp >= 0x2000 && cp <= 0x200A) {
      mapped += ' ';
    } else if (cp < 0x20 || cp == 0x7F || (cp >= 0x80 && cp <= 0x9F)) {
      // control character: dropped
    } else {
      mapped.append(text.substr(begin, pos - begin));
    }
  }
  std::string out;
  out.reserve(mapped.size());
  bool pending_space = false;
  for (char c : mapped) {
    if (c == ' ') {
      pending_space = !out.empty();
      continue;
    }
    if (pending_space) out += ' ';
    pending_space = false;
    out += c;
  }
  return out;
}

std::string_view to_string(RejectReason reason) {
  switch (reason) {
    case RejectReason::kEmptyAfterClean:
      return "empty_after_clean";
  }
  return "empty_after_clean";
}

std::variant<ClinicalNote, CleanRejection> clean_note(
    const ClinicalNote& note, const PreprocessConfig& /*config*/) {
  ClinicalNote cleaned = note;
  cleaned.text = normalize_text(note.text);
  if (cleaned.text.empty()) {
    return CleanRejection{note.id, RejectReason::kEmptyAfterClean};
  }
  return cleaned;
}

Vocabulary::Vocabulary() : Vocabulary(std::vector<std::string>{}) {}

Vocabulary::Vocabulary(const std::vector<std::string>& tokens) {
  std::set<std::string> regular;
  for (const auto& t : tokens) {
    if (t.empty() || t == kStartToken || t == kEndToken || t == kUnknownToken)
      continue;
    regular.insert(t);
  }
  tokens_ = {std::string(kStartToken), std::string(kEndToken),
             std::string(kUnknownToken)};
  tokens_.insert(tokens_.end(), regular.begin(), regular.end());
  for (std::size_t i = 0; i < tokens_.size(); ++i) {
    index_.emplace(tokens_[i], static_cast<TokenId>(i));
  }
}

TokenId Vocabulary::encode(std::string_view token) const {
  auto it = index_.find(std::string(token));
  return it == index_.end() ? kUnknown : it->second;
}

std::vector<TokenId> Vocabulary::encode(const TokenSequence& tokens) const {
  std::vector<TokenId> out;
  out.reserve(tokens.size());
  for (const auto& t : tokens) out.push_back(encode(t));
  return out;
}

const std::string& Vocabulary::decode(TokenId id) const {
  if (id < 0 || static_cast<std::size_t>(id) >= tokens_.size()) {
    throw ValidationError("token id " + std::to_string(id) + " out of range");
  }
  return tokens_[static_cast<std::size_t>(id)];
}

TokenSequence Vocabulary::decode(const std::vector<TokenId>& ids) const {
  TokenSequence out;
  out.reserve(ids.size());
  for (TokenId id : ids) out.push_back(decode(id));
  return out;
}

bool Vocabulary::contains(std::string_view token) const {
  return index_.count(std::string(token)) > 0;
}

std::vector<TokenId> Vocabulary::regular_ids() const {
  std::vector<TokenId> out;
  for (std::size_t i = 3; i < tokens_.size(); ++i) {
    out.push_back(static_cast<TokenId>(i));
  }
  return out;
}

Vocabulary build_vocabulary(const std::vector<TokenSequence>& sequences,
                            const PreprocessConfig& config) {
  if (sequences.empty()) {
    throw ValidationError("cannot build a vocabulary from zero sequences");
  }
  config.validate();
  std::map<std::string, std::size_t> counts;
  for (const auto& seq : sequences) {
    for (const auto& t : seq) ++counts[t];
  }
  std::vector<std::string> kept;
  for (const auto& [token, count] : counts) {
    if (count >= config.min_token_count) kept.push_back(token);
  }
  return Vocabulary(kept);
}

std::string vocabulary_to_text(const Vocabulary& vocab) {
  std::string out;
  for (const auto& t : vocab.tokens()) {
    out += t;
    out += '\n';
  }
  return out;
}

Vocabulary vocabulary_from_text(std::string_view text) {
  std::vector<std::string> tokens;
  std::size_t pos = 0;
  while (pos < text.size()) {
    std::size_t end = text.find('\n', pos);
    if (end == std::string_view::npos) end = text.size();
    if (end > pos) tokens.emplace_back(text.substr(pos, end - pos));
    pos = end + 1;
  }
  return Vocabulary(tokens);
}

nlohmann::json preprocess_config_to_json(const PreprocessConfig& config) {
  return {{"lowercase", config.lowercase},
          {"abbreviations", config.abbreviations},
          {"min_token_count", config.min_token_count},
          {"preserve_deid_markers", config.preserve_deid_markers}};
}

}  // namespace clinsynth
