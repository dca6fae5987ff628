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

#include "clinsynth/decoding.hpp"
#include "clinsynth/error.hpp"
#include "clinsynth/ngram.hpp"
#include "clinsynth/rng.hpp"

namespace clinsynth {
namespace {

using Toks = TokenSequence;

Vocabulary vocab_of(std::initializer_list<const char*> toks) {
  std::vector<std::string> v(toks.begin(), toks.end());
  return Vocabulary(v);
}

TEST(NGram, SingleContinuationMle) {
  const NGramModel m = train_ngram({{"a", "b"}}, 2, 0.0, vocab_of({"a", "b"}));
  const Vocabulary& v = m.vocabulary();
  const std::vector<TokenId> ctx = {v.encode("a")};
  EXPECT_DOUBLE_EQ(m.probability(ctx, v.encode("b")), 1.0);
}

TEST(NGram, UnseenContextIsUniform) {
  const NGramModel m = train_ngram({{"a", "b"}}, 2, 0.5, vocab_of({"a", "b", "c"}));
  const std::vector<TokenId> ctx = {m.vocabulary().encode("c")};
  const auto d = m.distribution(ctx);
  const double u = 1.0 / static_cast<double>(m.outcome_count());
  EXPECT_EQ(d[Vocabulary::kStart], 0.0);
  for (std::size_t i = 1; i < d.size(); ++i) EXPECT_NEAR(d[i], u, 1e-15);
}

TEST(NGram, UnseenContextUniformAtZeroAlpha) {
  const NGramModel m = train_ngram({{"a"}}, 2, 0.0, vocab_of({"a", "b"}));
  const std::vector<TokenId> ctx = {m.vocabulary().encode("b")};
  EXPECT_NEAR(m.probability(ctx, m.vocabulary().encode("a")), 1.0 / 4.0, 1e-15);
}

TEST(NGram, UnigramCountEnumeration) {
  const NGramModel m =
      train_ngram({{"a", "b", "a", "b", "a"}}, 1, 0.0, vocab_of({"a", "b"}), false);
  const std::vector<TokenId> none;
  EXPECT_DOUBLE_EQ(m.probability(none, m.vocabulary().encode("a")), 3.0 / 5.0);
  EXPECT_DOUBLE_EQ(m.probability(none, m.vocabulary().encode("b")), 2.0 / 5.0);
}

TEST(NGram, PaddingAddsEndEvent) {
  const NGramModel m = train_ngram({{"a", "b", "a", "b", "a"}}, 1, 0.0, vocab_of({"a", "b"}));
  const std::vector<TokenId> none;
  EXPECT_DOUBLE_EQ(m.probability(none, m.vocabulary().encode("a")), 3.0 / 6.0);
  EXPECT_DOUBLE_EQ(m.probability(none, Vocabulary::kEnd), 1.0 / 6.0);
}

TEST(NGram, DistributionsSumToOne) {
  Rng rng(3);
  std::vector<Toks> corpus;
  for (int i = 0; i < 20; ++i) {
    Toks t;
    for (int j = 0; j < 6; ++j) t.push_back(std::string(1, static_cast<char>('a' + rng.below(4))));
    corpus.push_back(t);
  }
  const NGramModel m = train_ngram(corpus, 3, 0.1, vocab_of({"a", "b", "c", "d"}));
  for (const auto& [ctx, counts] : m.counts()) {
    double s = 0.0;
    for (double p : m.distribution(ctx)) s += p;
    EXPECT_NEAR(s, 1.0, 1e-12);
  }
}

TEST(Perplexity, UniformModelGivesVocabSize) {
  // Outcomes: </s>, <unk>, a, b.
  const NGramModel m(1, 1.0, vocab_of({"a", "b"}));
  ASSERT_EQ(m.outcome_count(), 4u);
  EXPECT_NEAR(score_perplexity(m, {{"a", "b", "b"}, {"a"}}), 4.0, 1e-12);
}

TEST(Perplexity, DeterministicModelGivesOne) {
  const NGramModel m = train_ngram({{"a", "b"}}, 2, 0.0, vocab_of({"a", "b"}));
  EXPECT_NEAR(score_perplexity(m, {{"a", "b"}}), 1.0, 1e-15);
}

TEST(Perplexity, DirectLogProb) {
  const NGramModel m = train_ngram({{"a", "a", "a", "b"}}, 1, 0.0, vocab_of({"a", "b"}), false);
  EXPECT_NEAR(score_perplexity(m, {{"a", "b"}}), std::pow(3.0 / 16.0, -0.5), 1e-12);
  EXPECT_NEAR(score_perplexity(m, {{"a", "b"}}), 2.3094010767585, 1e-9);
}

TEST(Perplexity, ZeroProbabilityNamesEvent) {
  const NGramModel m = train_ngram({{"a"}}, 1, 0.0, vocab_of({"a", "b"}), false);
  try {
    score_perplexity(m, {{"b"}});
    FAIL();
  } catch (const ValidationError& e) {
    EXPECT_NE(std::string(e.what()).find("\"b\""), std::string::npos);
  }
}

TEST(Perplexity, MleBeatsSmoothedOnTrainingData) {
  Rng rng(17);
  for (int trial = 0; trial < 100; ++trial) {
    const std::size_t order = 1 + rng.below(3);
    std::vector<Toks> corpus;
    const std::size_t docs = 1 + rng.below(6);
    for (std::size_t d = 0; d < docs; ++d) {
      Toks t;
      const std::size_t len = 1 + rng.below(10);
      for (std::size_t i = 0; i < len; ++i) {
        t.push_back(std::string(1, static_cast<char>('a' + rng.below(5))));
      }
      corpus.push_back(t);
    }
    const Vocabulary v = vocab_of({"a", "b", "c", "d", "e"});
    const double mle = score_perplexity(train_ngram(corpus, order, 0.0, v), corpus);
    const double smooth = score_perplexity(train_ngram(corpus, order, 0.5, v), corpus);
    EXPECT_LE(mle, smooth) << "trial " << trial;
  }
}

TEST(NGram, JsonRoundTrip) {
  const NGramModel m = train_ngram({{"x", "y", "x"}, {"y"}}, 2, 0.25, vocab_of({"x", "y"}));
  EXPECT_EQ(ngram_from_json(ngram_to_json(m)), m);
}

// ---------------------------------------------------------------------------

TEST(Decoding, TemperatureOneIsIdentity) {
  const std::vector<double> p = {0.2, 0.7, 0.1};
  const auto q = apply_temperature(p, 1.0);
  for (std::size_t i = 0; i < p.size(); ++i) EXPECT_NEAR(q[i], p[i], 1e-12);
}

TEST(Decoding, TemperatureLimitIsArgmax) {
  EXPECT_EQ(apply_temperature(std::vector<double>{0.2, 0.7, 0.1}, 1e-9),
            (std::vector<double>{0.0, 1.0, 0.0}));
}

TEST(Decoding, TemperatureSquares) {
  const auto q = apply_temperature(std::vector<double>{2.0 / 3.0, 1.0 / 3.0}, 0.5);
  EXPECT_NEAR(q[0], 0.8, 1e-12);
  EXPECT_NEAR(q[1], 0.2, 1e-12);
}

TEST(Decoding, TemperaturePreservesArgmax) {
  Rng rng(5);
  for (int t = 0; t < 200; ++t) {
    std::vector<double> p(6);
    double s = 0.0;
    for (auto& v : p) s += v = rng.uniform() + 1e-3;
    for (auto& v : p) v /= s;
    const double temp = 0.05 + 5.0 * rng.uniform();
    EXPECT_EQ(argmax(apply_temperature(p, temp)), argmax(p));
  }
}

TEST(Decoding, TopK) {
  const std::vector<double> p = {0.5, 0.3, 0.2};
  EXPECT_EQ(truncate_top_k(p, 3), p);
  EXPECT_EQ(truncate_top_k(p, std::nullopt), p);
  EXPECT_EQ(truncate_top_k(p, 1), (std::vector<double>{1.0, 0.0, 0.0}));
  const auto q = truncate_top_k(p, 2);
  EXPECT_NEAR(q[0], 0.625, 1e-12);
  EXPECT_NEAR(q[1], 0.375, 1e-12);
  EXPECT_EQ(q[2], 0.0);
}

TEST(Decoding, TopP) {
  const std::vector<double> p = {0.1, 0.6, 0.3};
  const auto q = truncate_top_p(p, 0.8);
  EXPECT_EQ(q[0], 0.0);
  EXPECT_NEAR(q[1], 2.0 / 3.0, 1e-12);
  EXPECT_NEAR(q[2], 1.0 / 3.0, 1e-12);
  const auto all = truncate_top_p(p, 1.0);
  for (std::size_t i = 0; i < p.size(); ++i) EXPECT_NEAR(all[i], p[i], 1e-12);
}

TEST(Decoding, ConfigValidation) {
  SamplerConfig c;
  c.temperature = 0.0;
  EXPECT_THROW(c.validate(), ValidationError);
  SamplerConfig both;
  both.top_k = 2;
  both.top_p = 0.5;
  EXPECT_THROW(both.validate(), ValidationError);
  EXPECT_THROW(sampler_config_from_json({{"top_k", "some"}}), ValidationError);
  const SamplerConfig k = sampler_config_from_json({{"top_k", 7}, {"temperature", 0.5}});
  EXPECT_EQ(*k.top_k, 7u);
}

// Unigram with p(a)=0.8, p(b)=0.2 and no mass on the end token.
NGramModel eighty_twenty() {
  NGramModel m(1, 0.0, vocab_of({"a", "b"}));
  ContextCounts c;
  c.total = 5.0;
  c.next[m.vocabulary().encode("a")] = 4.0;
  c.next[m.vocabulary().encode("b")] = 1.0;
  m.set_counts({}, c);
  return m;
}

TEST(Sampling, FrequenciesMatchDistribution) {
  const NGramModel m = eighty_twenty();
  SamplerConfig cfg;
  cfg.max_length = 1;
  Rng rng(2024);
  std::size_t a = 0;
  constexpr std::size_t kDraws = 10000;
  for (std::size_t i = 0; i < kDraws; ++i) {
    const auto ids = sample_ids(m, cfg, rng);
    ASSERT_EQ(ids.size(), 1u);
    a += ids[0] == m.vocabulary().encode("a");
  }
  EXPECT_NEAR(static_cast<double>(a) / kDraws, 0.8, 0.02);
}

TEST(Sampling, TopKFrequencies) {
  NGramModel m(1, 0.0, vocab_of({"a", "b", "c"}));
  ContextCounts c;
  c.total = 10.0;
  c.next[m.vocabulary().encode("a")] = 5.0;
  c.next[m.vocabulary().encode("b")] = 3.0;
  c.next[m.vocabulary().encode("c")] = 2.0;
  m.set_counts({}, c);
  SamplerConfig cfg;
  cfg.max_length = 1;
  cfg.top_k = 2;
  Rng rng(9);
  std::map<std::string, std::size_t> hist;
  for (int i = 0; i < 10000; ++i) ++hist[m.vocabulary().decode(sample_ids(m, cfg, rng)[0])];
  EXPECT_EQ(hist.count("c"), 0u);
  EXPECT_NEAR(hist["a"] / 10000.0, 0.625, 0.02);
}

TEST(Sampling, DeterministicChain) {
  const NGramModel m = train_ngram({{"x", "y", "z"}}, 2, 0.0, vocab_of({"x", "y", "z"}));
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    SamplerConfig cfg;
    cfg.seed = seed;
    cfg.temperature = 2.0;
    EXPECT_EQ(sample_sequence(m, cfg), (Toks{"x", "y", "z"}));
  }
}

TEST(Sampling, SeedDeterminism) {
  const NGramModel m = train_ngram({{"a", "b", "a"}, {"b", "b"}}, 2, 0.3, vocab_of({"a", "b"}));
  SamplerConfig cfg;
  cfg.seed = 77;
  EXPECT_EQ(sample_sequence(m, cfg), sample_sequence(m, cfg));
}

}  // namespace
}  // namespace clinsynth
