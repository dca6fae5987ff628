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

#ifndef CLINSYNTH_NGRAM_HPP_
#define CLINSYNTH_NGRAM_HPP_

#include <cstddef>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "clinsynth/decoding.hpp"
#include "clinsynth/preprocess.hpp"
#include "clinsynth/rng.hpp"
#include "json.hpp"

namespace clinsynth {

struct ContextCounts {
  double total = 0.0;
  std::map<TokenId, double> next;

  bool operator==(const ContextCounts&) const = default;
};

// Order-k model with additive (Lidstone) smoothing:
//
//   p(t | ctx) = (count(ctx, t) + alpha) / (count(ctx) + alpha * |V|)
//
// |V| is the outcome space: every vocabulary entry except the start token,
// which is never predicted. When a context has no counts and alpha is zero
// the conditional falls back to uniform.
//
// With boundary padding each sequence is prefixed by order-1 start tokens
// and closed by one scored end token. Without it only the windows that fit
// inside the sequence are counted and scored.
class NGramModel {
 public:
  NGramModel(std::size_t order, double alpha, Vocabulary vocab,
             bool boundary_padding = true);

  std::size_t order() const { return order_; }
  double alpha() const { return alpha_; }
  bool boundary_padding() const { return boundary_padding_; }
  const Vocabulary& vocabulary() const { return vocab_; }
  std::size_t outcome_count() const { return vocab_.size() - 1; }
  const std::map<std::vector<TokenId>, ContextCounts>& counts() const {
    return counts_;
  }

  /// Adds every window of `ids` with the given weight (fractional weights
  /// are used by EM).
  void accumulate(std::span<const TokenId> ids, double weight = 1.0);

  /// Replaces one context's counts; used when restoring a saved model.
  void set_counts(std::vector<TokenId> context, ContextCounts counts);

  /// Full conditional over vocabulary ids; entry kStart is always 0.
  /// `context` must hold exactly order-1 ids.
  std::vector<double> distribution(std::span<const TokenId> context) const;

  double probability(std::span<const TokenId> context, TokenId token) const;

  struct Event {
    std::vector<TokenId> context;
    TokenId token;
  };

  /// Scored events of one sequence under this model's padding policy.
  std::vector<Event> events(std::span<const TokenId> ids) const;

  /// Natural-log probability of one sequence and its event count.
  struct LogProb {
    double log_prob = 0.0;
    std::size_t events = 0;
  };
  LogProb log_probability(std::span<const TokenId> ids) const;

  bool operator==(const NGramModel&) const = default;

 private:
  std::size_t order_;
  double alpha_;
  Vocabulary vocab_;
  bool boundary_padding_;
  std::map<std::vector<TokenId>, ContextCounts> counts_;
};

NGramModel train_ngram(const std::vector<TokenSequence>& sequences,
                       std::size_t order, double alpha, const Vocabulary& vocab,
                       bool boundary_padding = true);

/// exp(-(1/T) Σ log p) over all scored events. Throws ValidationError naming
/// the event when a probability is zero.
double score_perplexity(const NGramModel& model,
                        const std::vector<TokenSequence>& sequences);
double score_perplexity_ids(const NGramModel& model,
                            const std::vector<std::vector<TokenId>>& sequences);

/// Autoregressive sampling: temperature, then truncation, then a seeded draw
/// at every step. Stops at the end token or max_length tokens.
TokenSequence sample_sequence(const NGramModel& model, const SamplerConfig& config);
std::vector<TokenId> sample_ids(const NGramModel& model,
                                const SamplerConfig& config, Rng& rng);

nlohmann::json ngram_to_json(const NGramModel& model);
NGramModel ngram_from_json(const nlohmann::json& obj);

}  // namespace clinsynth

#endif  // CLINSYNTH_NGRAM_HPP_
