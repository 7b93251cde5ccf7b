/* Copyright 2026 The PNE Contrast Authors. All Rights Reserved.

Licensed under the Apache License, Version 2.0 (the "License");
you may not use this file except in compliance with the License.
You may obtain a copy of the License at

    http://www.apache.org/licenses/LICENSE-2.0

Unless required by applicable law or agreed to in writing, software
distributed under the License is distributed on an "AS IS" BASIS,
WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
See the License for the specific language governing permissions and
limitations under the License.
==============================================================================*/

#include <algorithm>
#include <cmath>
#include <limits>
#include <vector>

#include <gtest/gtest.h>

#include "pne/core.hpp"
#include "pne/error.hpp"
#include "pne/random.hpp"

namespace pne {
namespace {

TEST(Softmax, SymmetricLogits) {
  const Vec p = softmax(Vec{0.0, 0.0});
  EXPECT_DOUBLE_EQ(p[0], 0.5);
  EXPECT_DOUBLE_EQ(p[1], 0.5);
}

TEST(Softmax, LargeGapSaturates) {
  const Vec p = softmax(Vec{100.0, 0.0});
  EXPECT_NEAR(p[0], 1.0, 1e-9);
  EXPECT_NEAR(p[1], 0.0, 1e-9);
}

TEST(Softmax, UnitGap) {
  const Vec p = softmax(Vec{1.0, 0.0});
  const double e = std::exp(1.0);
  EXPECT_NEAR(p[0], e / (e + 1.0), 1e-15);
  EXPECT_NEAR(p[0], 0.731059, 1e-6);
  EXPECT_NEAR(p[1], 0.268941, 1e-6);
}

TEST(Softmax, ShiftInvariantAndFiniteForHugeLogits) {
  const Vec a = softmax(Vec{1000.0, 999.0, 998.0});
  const Vec b = softmax(Vec{2.0, 1.0, 0.0});
  for (std::size_t i = 0; i < 3; ++i) EXPECT_NEAR(a[i], b[i], 1e-15);
}

TEST(Softmax, RejectsNonFinite) {
  EXPECT_THROW(softmax(Vec{std::numeric_limits<double>::quiet_NaN(), 0.0}),
               InvalidInput);
  EXPECT_THROW(softmax(Vec{std::numeric_limits<double>::infinity(), 0.0}),
               InvalidInput);
}

TEST(L2Normalize, Examples) {
  const Vec v = l2_normalize(Vec{3.0, 4.0});
  EXPECT_DOUBLE_EQ(v[0], 0.6);
  EXPECT_DOUBLE_EQ(v[1], 0.8);
  const Vec axis = l2_normalize(Vec{2.0, 0.0, 0.0});
  EXPECT_EQ(axis, (Vec{1.0, 0.0, 0.0}));
  const Vec unit{0.6, 0.8};
  const Vec same = l2_normalize(unit);
  EXPECT_NEAR(same[0], 0.6, 1e-15);
  EXPECT_NEAR(same[1], 0.8, 1e-15);
}

TEST(L2Normalize, ZeroVectorIsDegenerate) {
  EXPECT_THROW(l2_normalize(Vec{0.0, 0.0}), DegenerateInput);
}

TEST(DotSimilarity, Examples) {
  const Vec a = l2_normalize(Vec{1.0, 2.0, 3.0});
  EXPECT_NEAR(dot_similarity(a, a), 1.0, 1e-15);
  EXPECT_EQ(dot_similarity(Vec{1.0, 0.0}, Vec{0.0, 1.0}), 0.0);
  EXPECT_EQ(dot_similarity(Vec{1.0, 0.0}, Vec{-1.0, 0.0}), -1.0);
  EXPECT_THROW(dot_similarity(Vec{1.0}, Vec{1.0, 0.0}), InvalidInput);
}

TEST(Argmax, FirstMaximumWins) {
  EXPECT_EQ(argmax(Vec{0.2, 0.8}), 1);
  EXPECT_EQ(argmax(Vec{0.5, 0.5}), 0);
  EXPECT_EQ(argmax(Vec{0.1, 0.3, 0.6}), 2);
}

TEST(ScoreMap, ArgmaxPredict) {
  const ScoreMap scores(1, 3, 3, {0.2, 0.8, 0.0, 0.5, 0.5, 0.0, 0.1, 0.3, 0.6});
  const PredictionMap preds = argmax_predict(scores);
  EXPECT_EQ(preds.ids(), (std::vector<ClassId>{1, 0, 2}));
}

TEST(ScoreMap, RejectsRowsThatDoNotSumToOne) {
  EXPECT_THROW(ScoreMap(1, 1, 2, {0.5, 0.6}), InvalidInput);
  EXPECT_THROW(ScoreMap(1, 1, 2, {0.5}), InvalidInput);
}

TEST(ScoreMap, FromLogitsMatchesSoftmax) {
  const ScoreMap s = ScoreMap::from_logits(1, 2, 2, Vec{1.0, 0.0, 0.0, 0.0});
  EXPECT_NEAR(s.probability(0, 0), 0.731059, 1e-6);
  EXPECT_DOUBLE_EQ(s.probability(1, 1), 0.5);
}

TEST(ClassMap, ValidatesIds) {
  EXPECT_THROW(LabelMap(1, 2, 2, {0, 2}), InvalidInput);
  EXPECT_THROW(LabelMap(1, 2, 2, {0}), InvalidInput);
  const LabelMap ok(1, 2, 2, {0, 1});
  EXPECT_EQ(ok[1], 1);
}

TEST(EmbeddingMap, NormalizeRows) {
  EmbeddingMap e(1, 2, 2, {3.0, 4.0, 0.0, 2.0});
  EXPECT_FALSE(e.is_normalized());
  e.normalize();
  EXPECT_TRUE(e.is_normalized());
  EXPECT_DOUBLE_EQ(e[0][0], 0.6);
  EXPECT_DOUBLE_EQ(e[1][1], 1.0);
}

TEST(Random, DerivedSeedsAreStableAndDistinct) {
  EXPECT_EQ(derive_seed(7, "a"), derive_seed(7, "a"));
  EXPECT_NE(derive_seed(7, "a"), derive_seed(7, "b"));
  EXPECT_NE(derive_seed(7, "a"), derive_seed(8, "a"));
  EXPECT_NE(derive_seed(1, 2, 3), derive_seed(1, 3, 2));
}

TEST(Random, SampleWithoutReplacement) {
  Rng rng = make_rng(3, "test");
  std::vector<int> pool(50);
  for (int i = 0; i < 50; ++i) pool[static_cast<std::size_t>(i)] = i;
  const auto picked = sample_without_replacement(pool, 20, rng);
  ASSERT_EQ(picked.size(), 20u);
  EXPECT_TRUE(std::is_sorted(picked.begin(), picked.end()));
  EXPECT_EQ(std::adjacent_find(picked.begin(), picked.end()), picked.end());
  EXPECT_EQ(sample_without_replacement(pool, 80, rng).size(), 50u);
}

}  // namespace
}  // namespace pne
