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
#include <set>
#include <vector>

#include <gtest/gtest.h>

#include "pne/sampling.hpp"
#include "pne/validation.hpp"

namespace pne {
namespace {

constexpr ClassId A = 0;
constexpr ClassId B = 1;

ScoreMap one_hot_scores(const PredictionMap& preds) {
  Vec probs(preds.pixels() * preds.classes(), 0.0);
  for (PixelId p = 0; p < preds.pixels(); ++p) {
    probs[p * preds.classes() + static_cast<std::size_t>(preds[p])] = 1.0;
  }
  return ScoreMap(preds.height(), preds.width(), preds.classes(), probs);
}

TEST(Partition, TwoByTwoExample) {
  const LabelMap labels(2, 2, 2, {A, A, B, B});
  const PredictionMap preds(2, 2, 2, {A, B, B, B});
  const PixelPartition part = partition_pixels(labels, preds);
  EXPECT_EQ(part.correct(A), (std::vector<PixelId>{0}));
  EXPECT_EQ(part.correct(B), (std::vector<PixelId>{2, 3}));
  ASSERT_EQ(part.anchor_groups.size(), 1u);
  EXPECT_EQ(part.anchor_groups.at(GroupKey{B, A}), (std::vector<PixelId>{1}));
}

TEST(Partition, PerfectPredictionHasNoAnchors) {
  const LabelMap labels(2, 2, 2, {A, B, B, A});
  const PredictionMap preds(2, 2, 2, {A, B, B, A});
  EXPECT_TRUE(partition_pixels(labels, preds).anchor_groups.empty());
}

TEST(Partition, AllWrongIsOneGroup) {
  const LabelMap labels(2, 2, 2, {A, A, A, A});
  const PredictionMap preds(2, 2, 2, {B, B, B, B});
  const PixelPartition part = partition_pixels(labels, preds);
  ASSERT_EQ(part.anchor_groups.size(), 1u);
  EXPECT_EQ(part.anchor_groups.at(GroupKey{B, A}).size(), 4u);
}

TEST(Partition, ShapeMismatch) {
  EXPECT_THROW(partition_pixels(LabelMap(2, 2, 2, {0, 0, 0, 0}),
                                PredictionMap(1, 4, 2, {0, 0, 0, 0})),
               InvalidInput);
}

PixelPartition synthetic_partition(std::size_t per_group, std::size_t groups) {
  PixelPartition part;
  part.correct_sets.resize(groups + 1);
  PixelId next = 0;
  for (std::size_t g = 0; g < groups; ++g) {
    auto& ids = part.anchor_groups[GroupKey{0, static_cast<ClassId>(g + 1)}];
    for (std::size_t i = 0; i < per_group; ++i) ids.push_back(next++);
  }
  return part;
}

TEST(CapAnchors, UnderCapUnchanged) {
  Rng rng(1);
  const PixelPartition part = synthetic_partition(50, 3);
  EXPECT_EQ(cap_anchors(part, SamplingConfig{}, rng).anchor_groups, part.anchor_groups);
}

TEST(CapAnchors, OverCapKeepsExactlyCap) {
  const PixelPartition part = synthetic_partition(100, 5);
  Rng rng(1);
  const PixelPartition capped = cap_anchors(part, SamplingConfig{}, rng);
  EXPECT_EQ(capped.anchor_count(), 200u);
  for (const auto& [key, ids] : capped.anchor_groups) {
    EXPECT_EQ(ids.size(), 40u);
    const auto& full = part.anchor_groups.at(key);
    for (PixelId p : ids) {
      EXPECT_TRUE(std::find(full.begin(), full.end(), p) != full.end());
    }
  }
}

TEST(CapAnchors, Deterministic) {
  const PixelPartition part = synthetic_partition(97, 7);
  Rng a(42), b(42);
  EXPECT_EQ(cap_anchors(part, SamplingConfig{}, a).anchor_groups,
            cap_anchors(part, SamplingConfig{}, b).anchor_groups);
}

TEST(DrawSamples, MinRule) {
  // Label k = 1 has 10 correct pixels, predicted class l = 0 has 3.
  std::vector<ClassId> labels, preds;
  for (int i = 0; i < 10; ++i) labels.push_back(B), preds.push_back(B);
  for (int i = 0; i < 3; ++i) labels.push_back(A), preds.push_back(A);
  for (int i = 0; i < 3; ++i) labels.push_back(B), preds.push_back(A);
  const LabelMap lm(1, 16, 2, labels);
  const PredictionMap pm(1, 16, 2, preds);
  const auto sets = build_sample_sets(lm, pm, one_hot_scores(pm), SamplingConfig{});
  ASSERT_EQ(sets.size(), 1u);
  EXPECT_EQ(sets[0].group, (GroupKey{A, B}));
  EXPECT_EQ(sets[0].positives.size(), 3u);
  EXPECT_EQ(sets[0].negatives.size(), 3u);
  EXPECT_EQ(sets[0].anchors.size(), 3u);
}

TEST(DrawSamples, EmptyNegativePoolSkipsGroup) {
  const LabelMap labels(1, 3, 2, {A, A, A});
  const PredictionMap preds(1, 3, 2, {A, B, B});
  const PixelPartition part = partition_pixels(labels, preds);
  Rng rng(0);
  EXPECT_FALSE(draw_samples(GroupKey{B, A}, part, one_hot_scores(preds),
                            SamplingConfig{}, rng)
                   .has_value());
  EXPECT_TRUE(build_sample_sets(labels, preds, one_hot_scores(preds), SamplingConfig{})
                  .empty());
}

TEST(DrawSamples, PositiveScoresComeFromLabelClass) {
  const LabelMap labels(1, 4, 2, {A, A, B, B});
  const PredictionMap preds(1, 4, 2, {A, B, B, B});
  const ScoreMap scores(1, 4, 2, {0.7, 0.3, 0.4, 0.6, 0.1, 0.9, 0.2, 0.8});
  const auto sets = build_sample_sets(labels, preds, scores, SamplingConfig{});
  ASSERT_EQ(sets.size(), 1u);
  EXPECT_EQ(sets[0].positives, (std::vector<PixelId>{0}));
  EXPECT_EQ(sets[0].positive_scores, (Vec{0.7}));
}

TEST(DrawSamples, SameSeedSameSets) {
  Rng rng(9);
  const RandomMaps m = random_maps(rng, 16, 16, 4, 2, 0.5);
  SamplingConfig cfg;
  cfg.seed = 123;
  const auto a = build_sample_sets(m.labels, m.preds, m.scores, cfg);
  const auto b = build_sample_sets(m.labels, m.preds, m.scores, cfg);
  ASSERT_EQ(a.size(), b.size());
  for (std::size_t i = 0; i < a.size(); ++i) {
    EXPECT_EQ(a[i].group, b[i].group);
    EXPECT_EQ(a[i].anchors, b[i].anchors);
    EXPECT_EQ(a[i].positives, b[i].positives);
    EXPECT_EQ(a[i].negatives, b[i].negatives);
  }
  cfg.seed = 124;
  const auto c = build_sample_sets(m.labels, m.preds, m.scores, cfg);
  bool differs = false;
  for (std::size_t i = 0; i < std::min(a.size(), c.size()); ++i) {
    differs |= a[i].positives != c[i].positives || a[i].negatives != c[i].negatives;
  }
  EXPECT_TRUE(differs);
}

TEST(DrawSamples, ContractsOnRandomMaps) {
  Rng rng(5);
  for (int t = 0; t < 50; ++t) {
    const RandomMaps m = random_maps(rng, 20, 20, 5, 2, 0.4);
    SamplingConfig cfg;
    cfg.seed = static_cast<std::uint64_t>(t);
    std::size_t anchors = 0;
    std::set<PixelId> seen;
    for (const SampleSets& s : build_sample_sets(m.labels, m.preds, m.scores, cfg)) {
      EXPECT_EQ(s.positives.size(), s.negatives.size());
      EXPECT_LE(s.positives.size(), cfg.pairs_per_group);
      for (PixelId p : s.anchors) {
        EXPECT_EQ(m.labels[p], s.group.label);
        EXPECT_EQ(m.preds[p], s.group.predicted);
        EXPECT_TRUE(seen.insert(p).second);
      }
      for (PixelId p : s.positives) {
        EXPECT_EQ(m.labels[p], s.group.label);
        EXPECT_EQ(m.preds[p], s.group.label);
      }
      for (PixelId p : s.negatives) {
        EXPECT_EQ(m.labels[p], s.group.predicted);
        EXPECT_EQ(m.preds[p], s.group.predicted);
      }
      anchors += s.anchors.size();
    }
    EXPECT_LE(anchors, cfg.anchor_cap);
  }
}

TEST(LabelGroupedSets, PoolsAnchorsByLabel) {
  Rng rng(11);
  const RandomMaps m = random_maps(rng, 24, 24, 4, 2, 0.6);
  SamplingConfig cfg;
  cfg.seed = 3;
  const auto sets = build_label_grouped_sets(m.labels, m.preds, m.scores, cfg);
  ASSERT_FALSE(sets.empty());
  std::size_t anchors = 0;
  for (const SampleSets& s : sets) {
    const ClassId k = s.group.label;
    EXPECT_EQ(s.group.predicted, kMixedPrediction);
    EXPECT_TRUE(std::is_sorted(s.anchors.begin(), s.anchors.end()));
    for (PixelId p : s.anchors) {
      EXPECT_EQ(m.labels[p], k);
      EXPECT_NE(m.preds[p], k);
    }
    for (PixelId p : s.positives) {
      EXPECT_EQ(m.labels[p], k);
      EXPECT_EQ(m.preds[p], k);
    }
    for (PixelId p : s.negatives) EXPECT_NE(m.labels[p], k);
    EXPECT_EQ(s.negatives.size(), 3 * s.positives.size());
    anchors += s.anchors.size();
  }
  EXPECT_LE(anchors, cfg.anchor_cap);
}

}  // namespace
}  // namespace pne
