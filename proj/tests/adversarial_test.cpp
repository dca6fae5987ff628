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

#include <gtest/gtest.h>

#include <cmath>

#include "clinsynth/adversarial.hpp"
#include "clinsynth/error.hpp"
#include "oracles.hpp"

namespace clinsynth {
namespace {

using Seqs = std::vector<std::vector<Symbol>>;

double reward_first_is_zero(const std::vector<Symbol>& s) {
  return !s.empty() && s[0] == 0 ? 1.0 : 0.0;
}

TEST(Generator, SoftmaxSumsToOne) {
  const auto g = oracle::random_generator(4, 2, 3, false, 1);
  for (const auto& [ctx, z] : g.table()) {
    double s = 0.0;
    for (double p : g.probabilities(ctx)) s += p;
    EXPECT_NEAR(s, 1.0, 1e-9);
  }
  const auto p = softmax(std::vector<double>{1000.0, 0.0});
  EXPECT_TRUE(std::isfinite(p[0]));
  EXPECT_DOUBLE_EQ(p[0], 1.0);
}

TEST(Generator, OneHotChainIsDeterministic) {
  CategoricalGenerator g(3, 2, 4, std::nullopt);
  // begin -> 0 -> 1 -> 2 -> 0
  const std::vector<std::pair<Symbol, Symbol>> chain = {
      {kBeginSymbol, 0}, {0, 1}, {1, 2}, {2, 0}};
  for (auto [from, to] : chain) {
    auto& z = g.mutable_logits({from});
    z.assign(3, -1000.0);
    z[static_cast<std::size_t>(to)] = 0.0;
  }
  const auto samples = generator_sample(g, 5, 20);
  for (const auto& s : samples) {
    EXPECT_EQ(s.symbols, (std::vector<Symbol>{0, 1, 2, 0}));
    EXPECT_EQ(s.log_prob, 0.0);
  }
}

TEST(Generator, UniformFrequencies) {
  CategoricalGenerator g(2, 1, 1, std::nullopt);
  const auto samples = generator_sample(g, 42, 10000);
  std::size_t zeros = 0;
  for (const auto& s : samples) zeros += s.symbols[0] == 0;
  const double f = zeros / 10000.0;
  EXPECT_GE(f, 0.48);
  EXPECT_LE(f, 0.52);
}

TEST(Generator, SeedDeterminismAndEndSymbol) {
  const auto g = oracle::random_generator(3, 2, 6, true, 4);
  const auto a = generator_sample(g, 9, 50);
  const auto b = generator_sample(g, 9, 50);
  for (std::size_t i = 0; i < a.size(); ++i) {
    EXPECT_EQ(a[i].symbols, b[i].symbols);
    EXPECT_EQ(a[i].log_prob, b[i].log_prob);
    for (Symbol s : a[i].symbols) EXPECT_NE(s, 2);
    EXPECT_LE(a[i].symbols.size(), 6u);
  }
}

TEST(Generator, LogProbMatchesSteps) {
  const auto g = oracle::random_generator(3, 2, 5, true, 8);
  for (const auto& s : generator_sample(g, 1, 30)) {
    double lp = 0.0;
    for (const auto& st : s.steps) lp += std::log(oracle::softmax(g.logits(st.context))[st.action]);
    EXPECT_NEAR(s.log_prob, lp, 1e-12);
  }
}

TEST(Discriminator, ZeroLearningRate) {
  const Discriminator d(2);
  const auto up = discriminator_step(d, {{0, 0, 0}}, {{1, 1, 1}}, 0.0);
  EXPECT_EQ(up.discriminator, d);
  EXPECT_NEAR(up.loss, std::log(2.0), 1e-15);
}

TEST(Discriminator, SeparableToyData) {
  Discriminator d(2);
  const Seqs real(8, {0, 0, 0});
  const Seqs fake(8, {1, 1, 1});
  for (int i = 0; i < 200; ++i) d = discriminator_step(d, real, fake, 0.5).discriminator;
  EXPECT_GT(d.score(std::vector<Symbol>{0, 0, 0}), 0.9);
  EXPECT_LT(d.score(std::vector<Symbol>{1, 1, 1}), 0.1);
}

TEST(Discriminator, IdenticalDistributionsNearChance) {
  const auto g = oracle::random_generator(3, 2, 5, true, 12);
  Discriminator d(2);
  std::uint64_t seed = 100;
  for (int i = 0; i < 50; ++i) {
    Seqs real, fake;
    for (const auto& s : generator_sample(g, seed++, 32)) real.push_back(s.symbols);
    for (const auto& s : generator_sample(g, seed++, 32)) fake.push_back(s.symbols);
    d = discriminator_step(d, real, fake, 0.5).discriminator;
  }
  std::size_t correct = 0, total = 0;
  for (const auto& s : generator_sample(g, 7777, 2000)) {
    correct += d.score(s.symbols) > 0.5;
    ++total;
  }
  for (const auto& s : generator_sample(g, 8888, 2000)) {
    correct += d.score(s.symbols) <= 0.5;
    ++total;
  }
  const double acc = static_cast<double>(correct) / total;
  EXPECT_GE(acc, 0.4);
  EXPECT_LE(acc, 0.6);
}

TEST(Discriminator, ScoreStaysInOpenInterval) {
  Discriminator d(1);
  d.set_weight({0}, 1e6);
  const double s = d.score(std::vector<Symbol>{0});
  EXPECT_LT(s, 1.0);
  d.set_weight({0}, -1e6);
  EXPECT_GT(d.score(std::vector<Symbol>{0}), 0.0);
}

TEST(Reinforce, LengthOneAnalyticGradient) {
  CategoricalGenerator g(2, 1, 1, std::nullopt);
  const auto exact = exact_expected_reward(g, reward_first_is_zero, 1);
  EXPECT_DOUBLE_EQ(exact.expected, 0.5);
  EXPECT_NEAR(exact.gradient.at({})[0], 0.25, 1e-15);
  const auto sf = oracle::score_function_expectation(g, 1, reward_first_is_zero);
  EXPECT_NEAR(sf.at({})[0], 0.25, 1e-15);
}

// Expectation of the reinforce_step update, by stepping on each enumerated
// sequence alone and weighting the change by its probability.
LogitGradient expected_update(const CategoricalGenerator& g, std::size_t max_length,
                              const RewardFunction& reward) {
  LogitGradient out;
  for (const auto& path : oracle::enumerate_paths(g, max_length)) {
    GeneratedSequence s;
    s.symbols = path.symbols;
    for (const auto& [ctx, a] : path.steps) s.steps.push_back({ctx, a});
    const double r = reward(path.symbols);
    const auto next = reinforce_step(g, {s}, std::vector<double>{r}, false, 1.0);
    for (const auto& [ctx, z] : next.table()) {
      const auto before = g.logits(ctx);
      auto& row = out.try_emplace(ctx, z.size(), 0.0).first->second;
      for (std::size_t k = 0; k < z.size(); ++k) row[k] += path.prob * (z[k] - before[k]);
    }
  }
  return out;
}

TEST(Reinforce, ExpectationEqualsExactGradient) {
  const RewardFunction reward = [](const std::vector<Symbol>& s) {
    double r = 0.1 * static_cast<double>(s.size());
    for (std::size_t i = 0; i < s.size(); ++i) r += (s[i] == 0 ? 0.7 : -0.2) / (1.0 + i);
    return r;
  };
  for (std::size_t v = 2; v <= 3; ++v) {
    for (std::size_t order = 1; order <= 2; ++order) {
      for (bool end : {false, true}) {
        const auto g = oracle::random_generator(v, order, 3, end, 31 * v + order + end);
        const auto exact = exact_expected_reward(g, reward, 3);
        EXPECT_NEAR(exact.expected, oracle::expected_reward(g, 3, reward), 1e-12);
        EXPECT_LT(oracle::max_abs_diff(expected_update(g, 3, reward), exact.gradient), 1e-10);
        EXPECT_LT(oracle::max_abs_diff(oracle::score_function_expectation(g, 3, reward),
                                       exact.gradient),
                  1e-10);
      }
    }
  }
}

TEST(Reinforce, PositiveRewardRaisesProbability) {
  CategoricalGenerator g(2, 1, 1, std::nullopt);
  GeneratedSequence s;
  s.symbols = {0};
  s.steps = {{{}, 0}};
  const auto next = reinforce_step(g, {s}, std::vector<double>{1.0}, false, 0.5);
  EXPECT_GT(next.probabilities({})[0], 0.5);
}

TEST(Reinforce, EqualRewardsWithBaselineNoChange) {
  const auto g = oracle::random_generator(3, 2, 4, false, 5);
  const auto samples = generator_sample(g, 3, 16);
  const std::vector<double> rewards(16, 0.37);
  EXPECT_EQ(reinforce_step(g, samples, rewards, true, 1.0), g);
}

TEST(ExactReward, OneHotGenerator) {
  CategoricalGenerator g(2, 1, 1, std::nullopt);
  g.mutable_logits({}) = {0.0, -1000.0};
  EXPECT_DOUBLE_EQ(exact_expected_reward(g, reward_first_is_zero, 1).expected, 1.0);
}

TEST(ExactReward, FiniteDifferences) {
  const RewardFunction reward = [](const std::vector<Symbol>& s) {
    double r = 0.0;
    for (Symbol x : s) r = 0.5 * r + (x == 1 ? 1.0 : 0.25);
    return r;
  };
  constexpr double kEps = 1e-5;
  double worst = 0.0;
  for (bool end : {false, true}) {
    const auto g = oracle::random_generator(3, 2, 3, end, 77 + end);
    const auto exact = exact_expected_reward(g, reward, 3);
    for (const auto& [ctx, row] : exact.gradient) {
      for (std::size_t k = 0; k < row.size(); ++k) {
        auto plus = g;
        auto minus = g;
        plus.mutable_logits(ctx)[k] += kEps;
        minus.mutable_logits(ctx)[k] -= kEps;
        const double fd = (oracle::expected_reward(plus, 3, reward) -
                           oracle::expected_reward(minus, 3, reward)) /
                          (2.0 * kEps);
        const double rel = std::abs(fd - row[k]) / std::max(1e-8, std::abs(row[k]) + std::abs(fd));
        worst = std::max(worst, rel);
      }
    }
  }
  EXPECT_LT(worst, 1e-4);
}

TEST(ExactReward, RefusesHugeSpaces) {
  CategoricalGenerator g(10, 1, 12, std::nullopt);
  EXPECT_THROW(exact_expected_reward(g, reward_first_is_zero, 12), ValidationError);
}

std::vector<TokenSequence> ab_language(std::uint64_t seed, std::size_t n) {
  Rng rng(seed);
  std::vector<TokenSequence> out;
  for (std::size_t i = 0; i < n; ++i) {
    TokenSequence t;
    const std::size_t reps = 1 + rng.below(4);
    for (std::size_t r = 0; r < reps; ++r) {
      t.push_back("a");
      t.push_back("b");
    }
    out.push_back(t);
  }
  return out;
}

TEST(Train, ZeroEpochs) {
  AdversarialConfig c;
  c.epochs = 0;
  const auto st = train_adversarial(ab_language(1, 20), c);
  EXPECT_EQ(st.epochs_completed(), 0u);
  EXPECT_TRUE(st.curves.generator_loss.empty());
  EXPECT_TRUE(st.generator.table().empty());
}

TEST(Train, CurveLengthsAndDeterminism) {
  AdversarialConfig c;
  c.epochs = 5;
  c.batch_size = 16;
  c.max_length = 8;
  c.seed = 3;
  const auto a = train_adversarial(ab_language(2, 50), c);
  EXPECT_EQ(a.curves.generator_loss.size(), 5u);
  EXPECT_EQ(a.curves.discriminator_loss.size(), 5u);
  EXPECT_EQ(a.curves.nll.size(), 5u);
  EXPECT_EQ(a, train_adversarial(ab_language(2, 50), c));
  EXPECT_EQ(gan_state_from_json(gan_state_to_json(a)), a);
  const auto samples = sample_gan(a, 4, 10);
  EXPECT_EQ(samples.size(), 10u);
  for (const auto& s : samples) {
    for (const auto& t : s) EXPECT_TRUE(t == "a" || t == "b");
  }
}

TEST(Train, NllTrendOnToyLanguage) {
  int improved = 0;
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    AdversarialConfig c;
    c.epochs = 30;
    c.max_length = 8;
    c.seed = seed;
    const auto st = train_adversarial(ab_language(1000 + seed, 200), c);
    improved += st.curves.nll.back() < st.curves.nll.front();
  }
  EXPECT_GE(improved, 8);
}

}  // namespace
}  // namespace clinsynth
