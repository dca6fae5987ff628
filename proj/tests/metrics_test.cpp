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
#include "clinsynth/io.hpp"
#include "clinsynth/metrics.hpp"
#include "clinsynth/rng.hpp"
#include "oracles.hpp"

namespace clinsynth {
namespace {

using Toks = TokenSequence;

Toks words(const char* s) { return split_whitespace(s); }

TEST(Bleu, Identity) {
  const auto r = bleu(words("a b c d e"), {words("a b c d e")});
  EXPECT_DOUBLE_EQ(r.bleu, 1.0);
  EXPECT_DOUBLE_EQ(r.bp, 1.0);
}

TEST(Bleu, DisjointIsZero) {
  const auto r = bleu(words("a b c d"), {words("e f g h")});
  EXPECT_EQ(r.bleu, 0.0);
  EXPECT_EQ(r.precisions[0], 0.0);
}

TEST(Bleu, ClippedBigramCase) {
  BleuOptions o;
  o.max_order = 2;
  const auto r = bleu(words("the cat the cat"), {words("the cat sat")}, o);
  EXPECT_DOUBLE_EQ(r.bp, 1.0);
  EXPECT_DOUBLE_EQ(r.precisions[0], 0.5);
  EXPECT_DOUBLE_EQ(r.precisions[1], 1.0 / 3.0);
  EXPECT_NEAR(r.bleu, std::sqrt(1.0 / 6.0), 1e-12);
}

TEST(Bleu, BrevityPenalty) {
  const auto r = bleu(words("a b"), {words("a b c d")}, {2, std::nullopt, false});
  EXPECT_NEAR(r.bp, std::exp(1.0 - 2.0), 1e-15);
}

TEST(Bleu, ClosestReferenceLengthPrefersShorterOnTie) {
  const auto r = bleu(words("a b c"), {words("a b c d"), words("a b")});
  EXPECT_EQ(r.reference_length, 2u);
}

TEST(Bleu, SmoothingOnlyAboveUnigrams) {
  BleuOptions o{2, std::nullopt, true};
  const auto r = bleu(words("a x"), {words("a b")}, o);
  EXPECT_DOUBLE_EQ(r.precisions[0], 0.5);
  EXPECT_DOUBLE_EQ(r.precisions[1], 0.5);
  EXPECT_GT(r.bleu, 0.0);
}

TEST(Bleu, WeightValidation) {
  EXPECT_THROW(bleu(words("a"), {words("a")}, {2, std::vector<double>{0.5}, false}),
               ValidationError);
  EXPECT_THROW(bleu(words("a"), {words("a")}, {2, std::vector<double>{0.7, 0.7}, false}),
               ValidationError);
  EXPECT_THROW(bleu({}, {words("a")}), ValidationError);
}

TEST(Bleu, MatchesOracleOnRandomCases) {
  Rng rng(123);
  for (int t = 0; t < 1000; ++t) {
    const std::size_t vocab = 1 + rng.below(10);
    const std::size_t N = 1 + rng.below(4);
    const Toks cand = oracle::random_tokens(rng, 1 + rng.below(20), vocab);
    std::vector<Toks> refs;
    const std::size_t nref = 1 + rng.below(3);
    for (std::size_t i = 0; i < nref; ++i) refs.push_back(oracle::random_tokens(rng, 1 + rng.below(20), vocab));
    const bool smooth = rng.bernoulli(0.3);
    const auto got = bleu(cand, refs, {N, std::nullopt, smooth});
    const auto want = oracle::bleu(cand, refs, N, {}, smooth);
    ASSERT_NEAR(got.bleu, want.bleu, 1e-12) << "case " << t;
    ASSERT_NEAR(got.bp, want.bp, 1e-12);
    for (std::size_t n = 0; n < N; ++n) ASSERT_NEAR(got.precisions[n], want.p[n], 1e-12);
  }
}

TEST(Bleu, CorpusMicroSumsCounts) {
  const std::vector<BleuPair> pairs = {{words("a b c"), {words("a b d")}},
                                       {words("x y"), {words("x y z w")}}};
  const CorpusBleu cb = corpus_bleu(pairs, {1, std::nullopt, false});
  EXPECT_EQ(cb.micro.clipped[0], 4u);
  EXPECT_EQ(cb.micro.totals[0], 5u);
  EXPECT_EQ(cb.micro.candidate_length, 5u);
  EXPECT_EQ(cb.micro.reference_length, 7u);
  EXPECT_NEAR(cb.micro.bleu, std::exp(1.0 - 7.0 / 5.0) * 0.8, 1e-12);
  EXPECT_NEAR(cb.macro, (cb.pairs[0].bleu + cb.pairs[1].bleu) / 2.0, 1e-15);
}

// ---------------------------------------------------------------------------

TEST(Wer, Identical) {
  const auto r = wer(words("a b c"), words("a b c"));
  EXPECT_EQ(r.wer, 0.0);
  EXPECT_EQ(r.errors(), 0u);
}

TEST(Wer, SingleDeletion) {
  const auto r = wer(words("the quick brown fox"), words("the quick fox"));
  EXPECT_EQ(r.deletions, 1u);
  EXPECT_EQ(r.substitutions + r.insertions, 0u);
  EXPECT_DOUBLE_EQ(r.wer, 0.25);
}

TEST(Wer, SubstitutionAndInsertion) {
  const auto r = wer(words("a b c"), words("x b c d"));
  EXPECT_EQ(r.substitutions, 1u);
  EXPECT_EQ(r.insertions, 1u);
  EXPECT_EQ(r.deletions, 0u);
  EXPECT_DOUBLE_EQ(r.wer, 2.0 / 3.0);
}

TEST(Wer, CanExceedOne) {
  EXPECT_DOUBLE_EQ(wer(words("a"), words("x y z")).wer, 3.0);
}

TEST(Wer, EmptyReferenceThrows) { EXPECT_THROW(wer({}, words("a")), ValidationError); }

void check_alignment(const Toks& r, const Toks& h, const WerReport& rep) {
  EXPECT_EQ(replay_alignment(r, h, rep.alignment), h);
  std::size_t s = 0, d = 0, i = 0;
  for (const auto& a : rep.alignment) {
    s += a.op == EditOp::kSubstitution;
    d += a.op == EditOp::kDeletion;
    i += a.op == EditOp::kInsertion;
  }
  EXPECT_EQ(s, rep.substitutions);
  EXPECT_EQ(d, rep.deletions);
  EXPECT_EQ(i, rep.insertions);
}

TEST(Wer, ExhaustiveSmallPairs) {
  // Every pair over {a,b,c} with |ref| >= 1 and |ref| + |hyp| <= 6.
  std::vector<std::vector<Toks>> by_len(7);
  by_len[0] = {{}};
  for (std::size_t l = 1; l <= 6; ++l) {
    for (const auto& t : by_len[l - 1]) {
      for (const char* s : {"a", "b", "c"}) {
        Toks n = t;
        n.push_back(s);
        by_len[l].push_back(n);
      }
    }
  }
  for (std::size_t lr = 1; lr <= 6; ++lr) {
    for (std::size_t lh = 0; lr + lh <= 6; ++lh) {
      for (const auto& r : by_len[lr]) {
        for (const auto& h : by_len[lh]) {
          const auto rep = wer(r, h);
          ASSERT_EQ(rep.errors(), oracle::edits_exhaustive(r, h));
          check_alignment(r, h, rep);
        }
      }
    }
  }
}

TEST(Wer, RandomPairsAgainstMemoOracle) {
  Rng rng(8);
  for (int t = 0; t < 500; ++t) {
    const Toks r = oracle::random_tokens(rng, 1 + rng.below(12), 3);
    const Toks h = oracle::random_tokens(rng, rng.below(13), 3);
    const auto rep = wer(r, h);
    ASSERT_EQ(rep.errors(), oracle::edits_memo(r, h));
    ASSERT_DOUBLE_EQ(rep.wer, static_cast<double>(rep.errors()) / r.size());
    check_alignment(r, h, rep);
  }
}

TEST(Wer, CorpusAggregate) {
  const CorpusWer cw = corpus_wer({{words("a b c d"), words("a b c")}, {words("x y"), words("x z")}});
  EXPECT_EQ(cw.reference_length, 6u);
  EXPECT_DOUBLE_EQ(cw.wer, 2.0 / 6.0);
}

// ---------------------------------------------------------------------------

Toks long_reference(std::size_t n, std::uint64_t seed) {
  Rng rng(seed);
  Toks t;
  for (std::size_t i = 0; i < n; ++i) t.push_back("w" + std::to_string(rng.below(50)));
  return t;
}

Vocabulary noise_vocab() {
  std::vector<std::string> v;
  for (int i = 0; i < 50; ++i) v.push_back("w" + std::to_string(i));
  return Vocabulary(v);
}

TEST(Corrupt, ZeroRatesIsIdentity) {
  const Toks ref = long_reference(200, 1);
  const Toks out = corrupt_transcript(ref, {}, noise_vocab(), 5);
  EXPECT_EQ(out, ref);
  EXPECT_EQ(wer(ref, out).wer, 0.0);
}

TEST(Corrupt, SubstitutionRateRecovered) {
  const Toks ref = long_reference(10000, 2);
  const Toks out = corrupt_transcript(ref, {0.1, 0.0, 0.0}, noise_vocab(), 6);
  const double w = wer(ref, out).wer;
  EXPECT_GE(w, 0.08);
  EXPECT_LE(w, 0.12);
}

TEST(Corrupt, ChannelOrdering) {
  const Toks ref = long_reference(10000, 3);
  const double high = wer(ref, corrupt_transcript(ref, {0.09, 0.03, 0.03}, noise_vocab(), 7)).wer;
  const double low = wer(ref, corrupt_transcript(ref, {0.03, 0.01, 0.01}, noise_vocab(), 8)).wer;
  EXPECT_NEAR(high, 0.15, 0.02);
  EXPECT_NEAR(low, 0.05, 0.02);
  EXPECT_GT(high, low);
}

TEST(Corrupt, SeedDeterminismAndValidation) {
  const Toks ref = long_reference(100, 4);
  EXPECT_EQ(corrupt_transcript(ref, {0.2, 0.1, 0.1}, noise_vocab(), 1),
            corrupt_transcript(ref, {0.2, 0.1, 0.1}, noise_vocab(), 1));
  EXPECT_THROW((CorruptionRates{1.5, 0.0, 0.0}.validate()), ValidationError);
}

}  // namespace
}  // namespace clinsynth
