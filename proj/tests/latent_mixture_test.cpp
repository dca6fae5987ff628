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

#include "clinsynth/error.hpp"
#include "clinsynth/latent_mixture.hpp"
#include "clinsynth/ngram.hpp"
#include "clinsynth/rng.hpp"

namespace clinsynth {
namespace {

using Docs = std::vector<TokenSequence>;

Docs random_docs(Rng& rng, std::size_t n, std::size_t vocab) {
  Docs docs;
  for (std::size_t d = 0; d < n; ++d) {
    TokenSequence t;
    const std::size_t len = 2 + rng.below(10);
    // Two loose topics so the mixture has something to find.
    const char base = rng.bernoulli(0.5) ? 'a' : static_cast<char>('a' + vocab / 2);
    for (std::size_t i = 0; i < len; ++i) {
      t.push_back(std::string(1, static_cast<char>(base + rng.below(vocab / 2 + 1))));
    }
    docs.push_back(t);
  }
  return docs;
}

Docs separable() {
  Docs docs;
  for (int i = 0; i < 10; ++i) docs.push_back({"a", "a", "a", "a"});
  for (int i = 0; i < 10; ++i) docs.push_back({"b", "b", "b", "b"});
  return docs;
}

TEST(Em, LowerBoundMonotone) {
  Rng rng(2);
  for (std::uint64_t init = 0; init < 100; ++init) {
    const Docs docs = random_docs(rng, 12, 6);
    EmOptions o;
    o.components = 2 + init % 2;
    o.iterations = 15;
    o.order = 1 + init % 2;
    o.alpha = 0.05 + 0.1 * (init % 3);
    o.seed = init;
    const MixtureModel m = fit_em(docs, o);
    ASSERT_EQ(m.curve.lower_bound.size(), 15u);
    for (std::size_t t = 1; t < m.curve.lower_bound.size(); ++t) {
      ASSERT_GE(m.curve.lower_bound[t], m.curve.lower_bound[t - 1] - 1e-9)
          << "init " << init << " iteration " << t;
    }
  }
}

TEST(Em, SingleComponentEqualsPlainFit) {
  Rng rng(5);
  const Docs docs = random_docs(rng, 8, 4);
  EmOptions o;
  o.components = 1;
  o.iterations = 3;
  o.order = 2;
  o.alpha = 0.2;
  const MixtureModel m = fit_em(docs, o);
  const NGramModel single = train_ngram(docs, 2, 0.2, m.components[0].vocabulary());
  double ll = 0.0;
  for (const auto& d : docs) ll += single.log_probability(single.vocabulary().encode(d)).log_prob;
  EXPECT_DOUBLE_EQ(m.weights[0], 1.0);
  EXPECT_DOUBLE_EQ(m.curve.log_likelihood.back(), ll);
  EXPECT_DOUBLE_EQ(mixture_log_likelihood(m, docs), ll);
}

TEST(Em, SeparableRecovery) {
  EmOptions o;
  o.components = 2;
  o.iterations = 30;
  o.seed = 4;
  const MixtureModel m = fit_em(separable(), o);
  EXPECT_NEAR(m.weights[0], 0.5, 0.05);
  EXPECT_NEAR(m.weights[1], 0.5, 0.05);
  for (const auto& r : m.responsibilities) {
    EXPECT_GT(std::max(r[0], r[1]), 0.99);
  }
  // Documents of the same kind share a component.
  const auto hard = [&](std::size_t i) { return m.responsibilities[i][0] > 0.5 ? 0 : 1; };
  EXPECT_EQ(hard(0), hard(9));
  EXPECT_NE(hard(0), hard(10));
}

TEST(Em, ZeroIterations) {
  EmOptions o;
  o.iterations = 0;
  o.seed = 8;
  const MixtureModel a = fit_em(separable(), o);
  EXPECT_TRUE(a.curve.lower_bound.empty());
  EXPECT_EQ(a, fit_em(separable(), o));
}

TEST(Em, Validation) {
  EmOptions o;
  o.components = 3;
  EXPECT_THROW(fit_em({{"a"}, {"b"}}, o), ValidationError);
  o.components = 1;
  o.alpha = 0.0;
  EXPECT_THROW(fit_em({{"a"}}, o), ValidationError);
}

TEST(MixtureLikelihood, IdenticalComponentsCollapse) {
  const Docs docs = {{"a", "b"}, {"b", "b", "a"}, {"a"}};
  const NGramModel lm = train_ngram(docs, 1, 0.5, Vocabulary({"a", "b"}));
  MixtureModel m;
  m.weights = {0.5, 0.5};
  m.components = {lm, lm};
  double direct = 0.0;
  for (const auto& d : docs) direct += lm.log_probability(lm.vocabulary().encode(d)).log_prob;
  EXPECT_NEAR(mixture_log_likelihood(m, docs), direct, 1e-12);
}

TEST(MixtureLikelihood, BruteForceSummation) {
  const Docs docs = {{"a", "b"}, {"b", "b", "a"}, {"a"}};
  const Vocabulary v({"a", "b"});
  const NGramModel p = train_ngram({{"a", "a", "b"}}, 1, 0.5, v);
  const NGramModel q = train_ngram({{"b", "b"}}, 1, 0.5, v);
  MixtureModel m;
  m.weights = {0.3, 0.7};
  m.components = {p, q};
  double total = 0.0;
  for (const auto& d : docs) {
    double pd = 1.0, qd = 1.0;
    const auto ids = v.encode(d);
    for (TokenId id : ids) {
      pd *= p.probability({}, id);
      qd *= q.probability({}, id);
    }
    pd *= p.probability({}, Vocabulary::kEnd);
    qd *= q.probability({}, Vocabulary::kEnd);
    total += std::log(0.3 * pd + 0.7 * qd);
  }
  EXPECT_NEAR(mixture_log_likelihood(m, docs), total, 1e-12);
}

TEST(Sampling, ZeroWeightComponentNeverDrawn) {
  const Vocabulary v({"a", "b"});
  MixtureModel m;
  m.weights = {1.0, 0.0};
  m.components = {train_ngram({{"a", "a"}}, 1, 0.0, v), train_ngram({{"b", "b"}}, 1, 0.0, v)};
  for (std::uint64_t s = 0; s < 100; ++s) {
    SamplerConfig c;
    c.seed = s;
    for (const auto& t : sample_mixture(m, c)) EXPECT_EQ(t, "a");
  }
}

TEST(Sampling, SingleComponentMatchesComponentSampler) {
  const Vocabulary v({"a", "b", "c"});
  MixtureModel m;
  m.weights = {1.0};
  m.components = {train_ngram({{"a", "b", "c"}, {"c", "a"}}, 2, 0.3, v)};
  SamplerConfig c;
  std::map<std::string, int> via_mix, direct;
  for (std::uint64_t s = 0; s < 4000; ++s) {
    c.seed = s;
    const auto a = sample_mixture(m, c);
    const auto b = sample_sequence(m.components[0], c);
    ++via_mix[a.empty() ? "" : a[0]];
    ++direct[b.empty() ? "" : b[0]];
  }
  for (const auto& [tok, n] : direct) EXPECT_NEAR(via_mix[tok] / 4000.0, n / 4000.0, 0.03) << tok;
}

TEST(Sampling, SeparableFrequencies) {
  EmOptions o;
  o.iterations = 20;
  o.seed = 4;
  const MixtureModel m = fit_em(separable(), o);
  std::size_t a = 0, n = 0;
  for (std::uint64_t s = 0; s < 1000; ++s) {
    SamplerConfig c;
    c.seed = s;
    c.max_length = 4;
    const auto t = sample_mixture(m, c);
    if (t.empty()) continue;
    ++n;
    a += t[0] == "a";
  }
  EXPECT_NEAR(static_cast<double>(a) / n, 0.5, 0.05);
}

TEST(Serialization, RoundTripAndCsv) {
  EmOptions o;
  o.iterations = 4;
  const MixtureModel m = fit_em(separable(), o);
  EXPECT_EQ(mixture_from_json(mixture_to_json(m)), m);
  const std::string csv = mixture_curve_csv(m.curve);
  EXPECT_EQ(csv.substr(0, csv.find('\n')), "iteration,lower_bound,log_likelihood,log_prior");
}

}  // namespace
}  // namespace clinsynth
