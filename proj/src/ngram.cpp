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

#include "clinsynth/ngram.hpp"

#include <cmath>

#include "clinsynth/error.hpp"

namespace clinsynth {

namespace {
constexpr int kFormatVersion = 1;
constexpr const char* kFormatName = "clinsynth-ngram";
}  // namespace

NGramModel::NGramModel(std::size_t order, double alpha, Vocabulary vocab,
                       bool boundary_padding)
    : order_(order),
      alpha_(alpha),
      vocab_(std::move(vocab)),
      boundary_padding_(boundary_padding) {
  if (order_ < 1) throw ValidationError("n-gram order must be at least 1");
  if (!(alpha_ >= 0.0) || !std::isfinite(alpha_)) {
    throw ValidationError("smoothing alpha must be nonnegative");
  }
}

std::vector<NGramModel::Event> NGramModel::events(
    std::span<const TokenId> ids) const {
  std::vector<TokenId> padded;
  const std::size_t pad = order_ - 1;
  if (boundary_padding_) {
    padded.assign(pad, Vocabulary::kStart);
    padded.insert(padded.end(), ids.begin(), ids.end());
    padded.push_back(Vocabulary::kEnd);
  } else {
    padded.assign(ids.begin(), ids.end());
  }
  std::vector<Event> out;
  for (std::size_t i = pad; i < padded.size(); ++i) {
    out.push_back({std::vector<TokenId>(padded.begin() + (i - pad),
                                        padded.begin() + i),
                   padded[i]});
  }
  return out;
}

void NGramModel::accumulate(std::span<const TokenId> ids, double weight) {
  for (auto& ev : events(ids)) {
    auto& cc = counts_[ev.context];
    cc.total += weight;
    cc.next[ev.token] += weight;
  }
}

void NGramModel::set_counts(std::vector<TokenId> context, ContextCounts counts) {
  if (context.size() != order_ - 1) {
    throw ValidationError("context length must equal order - 1");
  }
  counts_[std::move(context)] = std::move(counts);
}

std::vector<double> NGramModel::distribution(
    std::span<const TokenId> context) const {
  if (context.size() != order_ - 1) {
    throw ValidationError("context length must equal order - 1");
  }
  const std::size_t v = vocab_.size();
  const double outcomes = static_cast<double>(outcome_count());
  std::vector<double> dist(v, 0.0);
  auto it = counts_.find(std::vector<TokenId>(context.begin(), context.end()));
  const double total = it == counts_.end() ? 0.0 : it->second.total;
  const double denom = total + alpha_ * outcomes;
  if (denom <= 0.0) {
    for (std::size_t i = 0; i < v; ++i) {
      if (i != static_cast<std::size_t>(Vocabulary::kStart)) dist[i] = 1.0 / outcomes;
    }
    return dist;
  }
  for (std::size_t i = 0; i < v; ++i) {
    if (i != static_cast<std::size_t>(Vocabulary::kStart)) dist[i] = alpha_ / denom;
  }
  if (it != counts_.end()) {
    for (const auto& [tok, c] : it->second.next) {
      dist[static_cast<std::size_t>(tok)] += c / denom;
    }
  }
  return dist;
}

double NGramModel::probability(std::span<const TokenId> context,
                               TokenId token) const {
  if (token == Vocabulary::kStart) return 0.0;
  const double outcomes = static_cast<double>(outcome_count());
  auto it = counts_.find(std::vector<TokenId>(context.begin(), context.end()));
  const double total = it == counts_.end() ? 0.0 : it->second.total;
  const double denom = total + alpha_ * outcomes;
  if (denom <= 0.0) return 1.0 / outcomes;
  double count = 0.0;
  if (it != counts_.end()) {
    auto jt = it->second.next.find(token);
    if (jt != it->second.next.end()) count = jt->second;
  }
  return (count + alpha_) / denom;
}

NGramModel::LogProb NGramModel::log_probability(
    std::span<const TokenId> ids) const {
  LogProb lp;
  for (const auto& ev : events(ids)) {
    const double p = probability(ev.context, ev.token);
    if (!(p > 0.0)) {
      std::string ctx;
      for (TokenId c : ev.context) ctx += vocab_.decode(c) + " ";
      throw ValidationError("zero-probability event: \"" + vocab_.decode(ev.token) +
                            "\" after [" + ctx + "]");
    }
    lp.log_prob += std::log(p);
    ++lp.events;
  }
  return lp;
}

NGramModel train_ngram(const std::vector<TokenSequence>& sequences,
                       std::size_t order, double alpha, const Vocabulary& vocab,
                       bool boundary_padding) {
  if (sequences.empty()) throw ValidationError("empty training set");
  NGramModel model(order, alpha, vocab, boundary_padding);
  for (const auto& seq : sequences) model.accumulate(vocab.encode(seq));
  return model;
}

double score_perplexity_ids(const NGramModel& model,
                            const std::vector<std::vector<TokenId>>& sequences) {
  double total = 0.0;
  std::size_t events = 0;
  for (const auto& ids : sequences) {
    auto lp = model.log_probability(ids);
    total += lp.log_prob;
    events += lp.events;
  }
  if (events == 0) throw ValidationError("no scored events");
  return std::exp(-total / static_cast<double>(events));
}

double score_perplexity(const NGramModel& model,
                        const std::vector<TokenSequence>& sequences) {
  std::vector<std::vector<TokenId>> ids;
  ids.reserve(sequences.size());
  for (const auto& seq : sequences) ids.push_back(model.vocabulary().encode(seq));
  return score_perplexity_ids(model, ids);
}

std::vector<TokenId> sample_ids(const NGramModel& model,
                                const SamplerConfig& config, Rng& rng) {
  config.validate();
  std::vector<TokenId> context(model.order() - 1, Vocabulary::kStart);
  std::vector<TokenId> out;
  while (out.size() < config.max_length) {
    auto dist = decode_distribution(model.distribution(context), config);
    const auto tok = static_cast<TokenId>(rng.categorical(dist));
    if (tok == Vocabulary::kEnd) break;
    out.push_back(tok);
    if (!context.empty()) {
      context.erase(context.begin());
      context.push_back(tok);
    }
  }
  return out;
}

TokenSequence sample_sequence(const NGramModel& model,
                              const SamplerConfig& config) {
  Rng rng(config.seed);
  return model.vocabulary().decode(sample_ids(model, config, rng));
}

nlohmann::json ngram_to_json(const NGramModel& model) {
  nlohmann::json contexts = nlohmann::json::array();
  for (const auto& [ctx, cc] : model.counts()) {
    nlohmann::json next = nlohmann::json::array();
    for (const auto& [tok, c] : cc.next) next.push_back({tok, c});
    contexts.push_back({{"context", ctx}, {"total", cc.total}, {"next", next}});
  }
  return {{"format", kFormatName},
          {"version", kFormatVersion},
          {"order", model.order()},
          {"alpha", model.alpha()},
          {"boundary_padding", model.boundary_padding()},
          {"vocab", model.vocabulary().tokens()},
          {"contexts", contexts}};
}

NGramModel ngram_from_json(const nlohmann::json& obj) {
  if (obj.value("format", "") != kFormatName ||
      obj.value("version", 0) != kFormatVersion) {
    throw ValidationError("not a clinsynth-ngram v1 document");
  }
  NGramModel model(obj.at("order").get<std::size_t>(),
                   obj.at("alpha").get<double>(),
                   Vocabulary(obj.at("vocab").get<std::vector<std::string>>()),
                   obj.at("boundary_padding").get<bool>());
  for (const auto& entry : obj.at("contexts")) {
    ContextCounts cc;
    cc.total = entry.at("total").get<double>();
    for (const auto& pair : entry.at("next")) {
      cc.next[pair.at(0).get<TokenId>()] = pair.at(1).get<double>();
    }
    model.set_counts(entry.at("context").get<std::vector<TokenId>>(), std::move(cc));
  }
  return model;
}

}  // namespace clinsynth
