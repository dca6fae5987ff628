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

#ifndef CLINSYNTH_METRICS_HPP_
#define CLINSYNTH_METRICS_HPP_

#include <cstdint>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "clinsynth/preprocess.hpp"
#include "json.hpp"

namespace clinsynth {

// ---------------------------------------------------------------------------
// BLEU
//
//   BLEU = BP * exp(sum_n w_n log p_n),   BP = min(1, exp(1 - r/c))
//
// p_n is the clipped n-gram precision: each candidate n-gram counts at most
// as often as it appears in the single reference where it is most frequent.
// With several references r is the reference length closest to c (the
// shorter one on ties). Any p_n of zero makes BLEU zero unless add-one
// smoothing is requested, which then applies to orders n >= 2 only.
// ---------------------------------------------------------------------------

struct BleuOptions {
  std::size_t max_order = 4;
  /// Defaults to uniform 1/N.
  std::optional<std::vector<double>> weights;
  bool smoothing = false;
};

struct BleuReport {
  double bleu = 0.0;
  double bp = 0.0;
  std::size_t max_order = 0;
  std::vector<double> weights;
  std::vector<double> precisions;
  std::vector<std::size_t> clipped;
  std::vector<std::size_t> totals;
  std::size_t candidate_length = 0;
  std::size_t reference_length = 0;
};

BleuReport bleu(const TokenSequence& candidate,
                const std::vector<TokenSequence>& references,
                const BleuOptions& options = {});

struct BleuPair {
  TokenSequence candidate;
  std::vector<TokenSequence> references;
};

struct CorpusBleu {
  /// Clipped and total counts plus lengths summed over pairs before the
  /// geometric mean.
  BleuReport micro;
  /// Mean of per-pair scores.
  double macro = 0.0;
  std::vector<BleuReport> pairs;
};

CorpusBleu corpus_bleu(const std::vector<BleuPair>& pairs,
                       const BleuOptions& options = {});

nlohmann::json bleu_to_json(const BleuReport& report);

// ---------------------------------------------------------------------------
// WER
// ---------------------------------------------------------------------------

enum class EditOp { kMatch, kSubstitution, kDeletion, kInsertion };

std::string_view to_string(EditOp op);

struct AlignedPair {
  EditOp op = EditOp::kMatch;
  std::optional<std::size_t> ref_index;
  std::optional<std::size_t> hyp_index;
};

struct WerReport {
  double wer = 0.0;
  std::size_t substitutions = 0;
  std::size_t deletions = 0;
  std::size_t insertions = 0;
  std::size_t reference_length = 0;
  std::size_t hypothesis_length = 0;
  std::vector<AlignedPair> alignment;

  std::size_t errors() const { return substitutions + deletions + insertions; }
};

/// Unit-cost Levenshtein alignment. On equal cost the backtrace prefers
/// substitution (or match), then deletion, then insertion. Throws on an
/// empty reference.
WerReport wer(const TokenSequence& reference, const TokenSequence& hypothesis);

/// Rebuilds the hypothesis from the reference by replaying an alignment.
TokenSequence replay_alignment(const TokenSequence& reference,
                               const TokenSequence& hypothesis,
                               const std::vector<AlignedPair>& alignment);

struct CorpusWer {
  double wer = 0.0;
  std::size_t substitutions = 0;
  std::size_t deletions = 0;
  std::size_t insertions = 0;
  std::size_t reference_length = 0;
  std::vector<WerReport> pairs;
};

/// Error counts and reference lengths summed over pairs.
CorpusWer corpus_wer(
    const std::vector<std::pair<TokenSequence, TokenSequence>>& pairs);

nlohmann::json wer_to_json(const WerReport& report, bool with_alignment = false);

// ---------------------------------------------------------------------------
// Noise channel
// ---------------------------------------------------------------------------

struct CorruptionRates {
  double substitution = 0.0;
  double deletion = 0.0;
  double insertion = 0.0;

  void validate() const;
  double total() const { return substitution + deletion + insertion; }
};

/// For each reference token, independently: substitute with a different
/// noise token (prob. substitution), else delete (prob. deletion); then
/// insert a random noise token after it (prob. insertion). Noise tokens are
/// the regular entries of `noise_vocab`.
TokenSequence corrupt_transcript(const TokenSequence& reference,
                                 const CorruptionRates& rates,
                                 const Vocabulary& noise_vocab,
                                 std::uint64_t seed);

}  // namespace clinsynth

#endif  // CLINSYNTH_METRICS_HPP_
