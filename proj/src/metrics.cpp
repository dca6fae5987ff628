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

#include "clinsynth/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <unordered_map>

#include "clinsynth/error.hpp"
#include "clinsynth/rng.hpp"

namespace clinsynth {

namespace {

using NgramCounts = std::unordered_map<std::string, std::size_t>;

// Unit separator keeps joined keys unambiguous for ordinary tokens.
NgramCounts count_ngrams(const TokenSequence& tokens, std::size_t n) {
  NgramCounts counts;
  if (tokens.size() < n) return counts;
  for (std::size_t i = 0; i + n <= tokens.size(); ++i) {
    std::string key;
    for (std::size_t k = 0; k < n; ++k) {
      if (k) key += '\x1f';
      key += tokens[i + k];
    }
    ++counts[key];
  }
  return counts;
}

std::vector<double> resolve_weights(const BleuOptions& options) {
  if (options.max_order < 1) throw ValidationError("BLEU order must be >= 1");
  if (!options.weights) {
    return std::vector<double>(options.max_order,
                               1.0 / static_cast<double>(options.max_order));
  }
  const auto& w = *options.weights;
  if (w.size() != options.max_order) {
    throw ValidationError("BLEU needs one weight per order");
  }
  double sum = 0.0;
  for (double x : w) {
    if (x < 0.0) throw ValidationError("BLEU weights must be nonnegative");
    sum += x;
  }
  if (std::abs(sum - 1.0) > 1e-9) throw ValidationError("BLEU weights must sum to 1");
  return w;
}

std::size_t closest_length(std::size_t c, const std::vector<TokenSequence>& refs) {
  std::size_t best = refs.front().size();
  for (const auto& ref : refs) {
    const std::size_t len = ref.size();
    const auto d = len > c ? len - c : c - len;
    const auto bd = best > c ? best - c : c - best;
    if (d < bd || (d == bd && len < best)) best = len;
  }
  return best;
}

// Fills bleu/bp/precisions from clipped/totals and the two lengths.
void finish_report(BleuReport& report, bool smoothing) {
  const std::size_t n_orders = report.max_order;
  report.precisions.assign(n_orders, 0.0);
  bool any_zero = false;
  double log_sum = 0.0;
  for (std::size_t n = 0; n < n_orders; ++n) {
    double num = static_cast<double>(report.clipped[n]);
    double den = static_cast<double>(report.totals[n]);
    if (smoothing && n >= 1) {
      num += 1.0;
      den += 1.0;
    }
    const double p = den > 0.0 ? num / den : 0.0;
    report.precisions[n] = p;
    if (p <= 0.0) {
      any_zero = true;
    } else {
      log_sum += report.weights[n] * std::log(p);
    }
  }
  const double c = static_cast<double>(report.candidate_length);
  const double r = static_cast<double>(report.reference_length);
  report.bp = c > 0.0 ? std::min(1.0, std::exp(1.0 - r / c)) : 0.0;
  report.bleu = any_zero ? 0.0 : report.bp * std::exp(log_sum);
}

}  // namespace

BleuReport bleu(const TokenSequence& candidate,
                const std::vector<TokenSequence>& references,
                const BleuOptions& options) {
  if (candidate.empty()) throw ValidationError("BLEU candidate is empty");
  if (references.empty()) throw ValidationError("BLEU needs at least one reference");
  for (const auto& ref : references) {
    if (ref.empty()) throw ValidationError("BLEU reference is empty");
  }
  BleuReport report;
  report.max_order = options.max_order;
  report.weights = resolve_weights(options);
  report.clipped.assign(options.max_order, 0);
  report.totals.assign(options.max_order, 0);
  for (std::size_t n = 1; n <= options.max_order; ++n) {
    const NgramCounts cand = count_ngrams(candidate, n);
    NgramCounts max_ref;
    for (const auto& ref : references) {
      for (const auto& [gram, count] : count_ngrams(ref, n)) {
        auto& slot = max_ref[gram];
        slot = std::max(slot, count);
      }
    }
    std::size_t clipped = 0, total = 0;
    for (const auto& [gram, count] : cand) {
      total += count;
      auto it = max_ref.find(gram);
      if (it != max_ref.end()) clipped += std::min(count, it->second);
    }
    report.clipped[n - 1] = clipped;
    report.totals[n - 1] = total;
  }
  report.candidate_length = candidate.size();
  report.reference_length = closest_length(candidate.size(), references);
  finish_report(report, options.smoothing);
  return report;
}

CorpusBleu corpus_bleu(const std::vector<BleuPair>& pairs,
                       const BleuOptions& options) {
  if (pairs.empty()) throw ValidationError("corpus BLEU needs at least one pair");
  CorpusBleu out;
  out.micro.max_order = options.max_order;
  out.micro.weights = resolve_weights(options);
  out.micro.clipped.assign(options.max_order, 0);
  out.micro.totals.assign(options.max_order, 0);
  double macro_sum = 0.0;
  for (const auto& pair : pairs) {
    BleuReport r = bleu(pair.candidate, pair.references, options);
    for (std::size_t n = 0; n < options.max_order; ++n) {
      out.micro.clipped[n] += r.clipped[n];
      out.micro.totals[n] += r.totals[n];
    }
    out.micro.candidate_length += r.candidate_length;
    out.micro.reference_length += r.reference_length;
    macro_sum += r.bleu;
    out.pairs.push_back(std::move(r));
  }
  finish_report(out.micro, options.smoothing);
  out.macro = macro_sum / static_cast<double>(pairs.size());
  return out;
}

nlohmann::json bleu_to_json(const BleuReport& report) {
  return {{"bleu", report.bleu},
          {"bp", report.bp},
          {"N", report.max_order},
          {"weights", report.weights},
          {"p_n", report.precisions},
          {"clipped", report.clipped},
          {"totals", report.totals},
          {"c", report.candidate_length},
          {"r", report.reference_length}};
}

std::string_view to_string(EditOp op) {
  switch (op) {
    case EditOp::kMatch:
      return "match";
    case EditOp::kSubstitution:
      return "sub";
    case EditOp::kDeletion:
      return "del";
    case EditOp::kInsertion:
      return "ins";
  }
  return "match";
}

WerReport wer(const TokenSequence& reference, const TokenSequence& hypothesis) {
  if (reference.empty()) throw ValidationError("WER reference is empty");
  const std::size_t n = reference.size();
  const std::size_t m = hypothesis.size();
  const std::size_t width = m + 1;
  std::vector<std::size_t> cost((n + 1) * width);
  auto at = [&](std::size_t i, std::size_t j) -> std::size_t& {
    return cost[i * width + j];
  };
  for (std::size_t i = 0; i <= n; ++i) at(i, 0) = i;
  for (std::size_t j = 0; j <= m; ++j) at(0, j) = j;
  for (std::size_t i = 1; i <= n; ++i) {
    for (std::size_t j = 1; j <= m; ++j) {
      const std::size_t diag =
          at(i - 1, j - 1) + (reference[i - 1] == hypothesis[j - 1] ? 0 : 1);
      at(i, j) = std::min({diag, at(i - 1, j) + 1, at(i, j - 1) + 1});
    }
  }

  WerReport report;
  report.reference_length = n;
  report.hypothesis_length = m;
  std::size_t i = n, j = m;
  while (i > 0 || j > 0) {
    if (i > 0 && j > 0) {
      const bool same = reference[i - 1] == hypothesis[j - 1];
      if (at(i, j) == at(i - 1, j - 1) + (same ? 0 : 1)) {
        report.alignment.push_back(
            {same ? EditOp::kMatch : EditOp::kSubstitution, i - 1, j - 1});
        if (!same) ++report.substitutions;
        --i;
        --j;
        continue;
      }
    }
    if (i > 0 && at(i, j) == at(i - 1, j) + 1) {
      report.alignment.push_back({EditOp::kDeletion, i - 1, std::nullopt});
      ++report.deletions;
      --i;
      continue;
    }
    report.alignment.push_back({EditOp::kInsertion, std::nullopt, j - 1});
    ++report.insertions;
    --j;
  }
  std::reverse(report.alignment.begin(), report.alignment.end());
  report.wer = static_cast<double>(report.errors()) / static_cast<double>(n);
  return report;
}

TokenSequence replay_alignment(const TokenSequence& reference,
                               const TokenSequence& hypothesis,
                               const std::vector<AlignedPair>& alignment) {
  TokenSequence out;
  for (const auto& a : alignment) {
    switch (a.op) {
      case EditOp::kMatch:
        out.push_back(reference.at(*a.ref_index));
        break;
      case EditOp::kSubstitution:
      case EditOp::kInsertion:
        out.push_back(hypothesis.at(*a.hyp_index));
        break;
      case EditOp::kDeletion:
        break;
    }
  }
  return out;
}

CorpusWer corpus_wer(
    const std::vector<std::pair<TokenSequence, TokenSequence>>& pairs) {
  if (pairs.empty()) throw ValidationError("corpus WER needs at least one pair");
  CorpusWer out;
  for (const auto& [ref, hyp] : pairs) {
    WerReport r = wer(ref, hyp);
    out.substitutions += r.substitutions;
    out.deletions += r.deletions;
    out.insertions += r.insertions;
    out.reference_length += r.reference_length;
    out.pairs.push_back(std::move(r));
  }
  out.wer = static_cast<double>(out.substitutions + out.deletions + out.insertions) /
            static_cast<double>(out.reference_length);
  return out;
}

nlohmann::json wer_to_json(const WerReport& report, bool with_alignment) {
  nlohmann::json obj = {{"wer", report.wer},
                        {"substitutions", report.substitutions},
                        {"deletions", report.deletions},
                        {"insertions", report.insertions},
                        {"reference_length", report.reference_length},
                        {"hypothesis_length", report.hypothesis_length}};
  if (with_alignment) {
    nlohmann::json ops = nlohmann::json::array();
    for (const auto& a : report.alignment) {
      ops.push_back({{"op", to_string(a.op)},
                     {"ref", a.ref_index ? nlohmann::json(*a.ref_index) : nlohmann::json()},
                     {"hyp", a.hyp_index ? nlohmann::json(*a.hyp_index) : nlohmann::json()}});
    }
    obj["alignment"] = ops;
  }
  return obj;
}

void CorruptionRates::validate() const {
  for (double r : {substitution, deletion, insertion}) {
    if (!(r >= 0.0 && r < 1.0)) {
      throw ValidationError("corruption rates must lie in [0, 1)");
    }
  }
  if (substitution + deletion >= 1.0) {
    throw ValidationError("substitution + deletion rate must be below 1");
  }
}

TokenSequence corrupt_transcript(const TokenSequence& reference,
                                 const CorruptionRates& rates,
                                 const Vocabulary& noise_vocab,
                                 std::uint64_t seed) {
  rates.validate();
  std::vector<std::string> noise;
  for (TokenId id : noise_vocab.regular_ids()) noise.push_back(noise_vocab.decode(id));
  if ((rates.substitution > 0.0 && noise.size() < 2) ||
      (rates.insertion > 0.0 && noise.empty())) {
    throw ValidationError("noise vocabulary too small for the requested channel");
  }
  Rng rng(seed);
  TokenSequence out;
  out.reserve(reference.size());
  for (const auto& token : reference) {
    const double u = rng.uniform();
    if (u < rates.substitution) {
      // Uniform over noise tokens other than the original.
      const auto self = std::find(noise.begin(), noise.end(), token);
      const bool in_noise = self != noise.end();
      std::size_t pick = rng.below(noise.size() - (in_noise ? 1 : 0));
      if (in_noise && pick >= static_cast<std::size_t>(self - noise.begin())) ++pick;
      out.push_back(noise[pick]);
    } else if (u >= rates.substitution + rates.deletion) {
      out.push_back(token);
    }
    if (rng.uniform() < rates.insertion) out.push_back(noise[rng.below(noise.size())]);
  }
  return out;
}

}  // namespace clinsynth
