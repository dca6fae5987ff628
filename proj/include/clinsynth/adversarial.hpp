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

#ifndef CLINSYNTH_ADVERSARIAL_HPP_
#define CLINSYNTH_ADVERSARIAL_HPP_

#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "clinsynth/preprocess.hpp"
#include "json.hpp"

namespace clinsynth {

/// Generator action index. Contexts use kBeginSymbol for positions before
/// the first token.
using Symbol = std::int32_t;
inline constexpr Symbol kBeginSymbol = -1;
inline constexpr Symbol kFinishSymbol = -2;

using SymbolContext = std::vector<Symbol>;

// Order-k categorical policy: one logit vector per context of the previous
// order-1 symbols. Contexts never written to have zero logits (uniform).
// When `end_symbol` is set, drawing it terminates the sequence; otherwise
// every sequence has exactly max_length symbols.
class CategoricalGenerator {
 public:
  CategoricalGenerator(std::size_t num_symbols, std::size_t order,
                       std::size_t max_length, std::optional<Symbol> end_symbol);

  std::size_t num_symbols() const { return num_symbols_; }
  std::size_t order() const { return order_; }
  std::size_t max_length() const { return max_length_; }
  std::optional<Symbol> end_symbol() const { return end_symbol_; }

  std::vector<double> logits(const SymbolContext& context) const;
  std::vector<double>& mutable_logits(const SymbolContext& context);
  std::vector<double> probabilities(const SymbolContext& context) const;
  const std::map<SymbolContext, std::vector<double>>& table() const { return table_; }

  SymbolContext initial_context() const;
  SymbolContext advance(const SymbolContext& context, Symbol symbol) const;

  bool operator==(const CategoricalGenerator&) const = default;

 private:
  std::size_t num_symbols_;
  std::size_t order_;
  std::size_t max_length_;
  std::optional<Symbol> end_symbol_;
  std::map<SymbolContext, std::vector<double>> table_;
};

/// Numerically stable softmax.
std::vector<double> softmax(std::span<const double> logits);

struct GeneratorStep {
  SymbolContext context;
  Symbol action = 0;
};

struct GeneratedSequence {
  /// Emitted symbols, without the end symbol.
  std::vector<Symbol> symbols;
  /// Every draw, including a final end-symbol draw.
  std::vector<GeneratorStep> steps;
  double log_prob = 0.0;
};

/// n sequences; sequence i uses an RNG seeded from (seed, i).
std::vector<GeneratedSequence> generator_sample(const CategoricalGenerator& g,
                                                std::uint64_t seed, std::size_t n);

/// Logistic model over normalised n-gram counts of orders 1..feature_order.
/// Orders >= 2 see the sequence framed by begin/finish markers.
class Discriminator {
 public:
  explicit Discriminator(std::size_t feature_order = 2);

  std::size_t feature_order() const { return feature_order_; }
  double bias() const { return bias_; }
  const std::map<std::vector<Symbol>, double>& weights() const { return weights_; }

  std::map<std::vector<Symbol>, double> features(std::span<const Symbol> sequence) const;
  double logit(std::span<const Symbol> sequence) const;
  /// Probability that the sequence is real; clamped into (0, 1).
  double score(std::span<const Symbol> sequence) const;

  void set_weight(std::vector<Symbol> feature, double weight) {
    weights_[std::move(feature)] = weight;
  }
  void set_bias(double bias) { bias_ = bias; }

  bool operator==(const Discriminator&) const = default;

 private:
  std::size_t feature_order_;
  std::map<std::vector<Symbol>, double> weights_;
  double bias_ = 0.0;
};

struct DiscriminatorUpdate {
  Discriminator discriminator;
  /// Mean binary cross-entropy before the step.
  double loss = 0.0;
};

/// One gradient-descent step on mean binary cross-entropy, real labelled 1
/// and fake labelled 0.
DiscriminatorUpdate discriminator_step(const Discriminator& d,
                                       const std::vector<std::vector<Symbol>>& real,
                                       const std::vector<std::vector<Symbol>>& fake,
                                       double learning_rate);

/// REINFORCE ascent on whole-sequence rewards:
///   logits[ctx] += lr * (1/n) Σ_i (R_i - b) Σ_{t: ctx_t = ctx} (e_{a_t} - π(·|ctx))
/// with b the batch mean when `baseline` is set, else 0.
CategoricalGenerator reinforce_step(const CategoricalGenerator& g,
                                    const std::vector<GeneratedSequence>& samples,
                                    std::span<const double> rewards, bool baseline,
                                    double learning_rate);

using LogitGradient = std::map<SymbolContext, std::vector<double>>;

struct ExactReward {
  double expected = 0.0;
  LogitGradient gradient;
};

using RewardFunction = std::function<double(const std::vector<Symbol>&)>;

inline constexpr std::size_t kMaxEnumeratedSequences = 1000000;

/// Expected reward over every sequence of up to max_length symbols and its
/// gradient in logit space, computed by recursion over the prefix tree.
/// Throws ValidationError when more than kMaxEnumeratedSequences sequences
/// would be visited.
ExactReward exact_expected_reward(const CategoricalGenerator& g,
                                  const RewardFunction& reward,
                                  std::size_t max_length);

/// Number of complete sequences a generator can emit within max_length.
double count_sequences(const CategoricalGenerator& g, std::size_t max_length);

struct AdversarialConfig {
  std::size_t epochs = 40;
  std::size_t batch_size = 64;
  std::size_t g_steps = 1;
  std::size_t d_steps = 1;
  double generator_lr = 2.0;
  double discriminator_lr = 1.0;
  std::size_t generator_order = 2;
  std::size_t discriminator_order = 2;
  std::size_t max_length = 16;
  bool baseline = true;
  /// Frozen real-data LM used for the NLL diagnostic.
  std::size_t lm_order = 2;
  double lm_alpha = 0.01;
  std::uint64_t seed = 0;
};

nlohmann::json adversarial_config_to_json(const AdversarialConfig& config);

struct GanCurves {
  std::vector<double> generator_loss;
  std::vector<double> discriminator_loss;
  /// Mean per-event NLL of generator samples under the real-data LM.
  std::vector<double> nll;

  bool operator==(const GanCurves&) const = default;
};

struct GanTrainState {
  /// Symbol i is token symbols[i]; the generator's end symbol is
  /// symbols.size().
  std::vector<std::string> symbols;
  CategoricalGenerator generator;
  Discriminator discriminator;
  GanCurves curves;
  std::uint64_t seed = 0;

  std::size_t epochs_completed() const { return curves.nll.size(); }
  bool operator==(const GanTrainState&) const = default;
};

/// Alternates discriminator and REINFORCE generator updates with reward
/// D(sample). Each epoch logs generator loss mean(-log D(fake)), the
/// discriminator's pre-step loss and the NLL diagnostic, all measured on
/// that epoch's batches before its updates.
GanTrainState train_adversarial(const std::vector<TokenSequence>& real,
                                const AdversarialConfig& config);

/// Decodes generator samples back to tokens.
std::vector<TokenSequence> sample_gan(const GanTrainState& state, std::uint64_t seed,
                                      std::size_t n);

std::string gan_curves_csv(const GanCurves& curves);
nlohmann::json gan_state_to_json(const GanTrainState& state);
GanTrainState gan_state_from_json(const nlohmann::json& obj);

}  // namespace clinsynth

#endif  // CLINSYNTH_ADVERSARIAL_HPP_
