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

// Label-driven sample construction.
//
// Pixels are split by (prediction, label). Correct pixels of class c form
// i_{c,c}; misclassified pixels with label k predicted as l form the anchor
// group S_{l,k}. Each group is contrasted against positives drawn from
// i_{k,k} and negatives drawn only from i_{l,l}, the correct pixels of the
// class the anchors were confused with. Positive and negative counts are
// always equal.
//
// A conventional construction is also provided for baselines: anchors are
// pooled by label regardless of prediction, and the pooled group shares
// negatives drawn from every pixel of any other label, |C| - 1 times as many
// as positives.

#ifndef PNE_SAMPLING_HPP_
#define PNE_SAMPLING_HPP_

#include <algorithm>
#include <compare>
#include <cstdint>
#include <map>
#include <numeric>
#include <optional>
#include <vector>

#include "pne/core.hpp"
#include "pne/random.hpp"

namespace pne {

/// Identifies the anchor group S_{predicted,label}.
inline constexpr ClassId kMixedPrediction = -1;

struct GroupKey {
  ClassId predicted = 0;
  ClassId label = 0;

  friend auto operator<=>(const GroupKey&, const GroupKey&) = default;
};

struct PixelPartition {
  std::vector<std::vector<PixelId>> correct_sets;  // indexed by class
  std::map<GroupKey, std::vector<PixelId>> anchor_groups;

  std::size_t anchor_count() const {
    std::size_t n = 0;
    for (const auto& [key, ids] : anchor_groups) n += ids.size();
    return n;
  }

  const std::vector<PixelId>& correct(ClassId c) const {
    return correct_sets.at(static_cast<std::size_t>(c));
  }
};

struct SamplingConfig {
  std::size_t anchor_cap = 200;
  std::size_t pairs_per_group = 64;
  std::uint64_t seed = 0;

  void validate() const {
    if (anchor_cap < 1) throw InvalidInput("anchor_cap must be >= 1");
    if (pairs_per_group < 1) throw InvalidInput("pairs_per_group must be >= 1");
  }
};

/// Anchors of one group with their matched positive and negative pixels.
/// `positive_scores[j]` is the predicted probability of the label class at
/// `positives[j]`.
struct SampleSets {
  GroupKey group;
  std::vector<PixelId> anchors;
  std::vector<PixelId> positives;
  std::vector<PixelId> negatives;
  std::vector<double> positive_scores;
};

inline PixelPartition partition_pixels(const LabelMap& labels,
                                       const PredictionMap& preds) {
  if (!labels.same_shape(preds)) {
    throw InvalidInput("partition_pixels: label and prediction shapes differ");
  }
  const std::size_t classes = std::max(labels.classes(), preds.classes());
  PixelPartition out;
  out.correct_sets.resize(classes);
  for (PixelId p = 0; p < labels.pixels(); ++p) {
    const ClassId k = labels[p];
    const ClassId l = preds[p];
    if (k == l) {
      out.correct_sets[static_cast<std::size_t>(k)].push_back(p);
    } else {
      out.anchor_groups[GroupKey{l, k}].push_back(p);
    }
  }
  return out;
}

/// Limits the total number of anchors to `cfg.anchor_cap`. Each group keeps
/// floor(cap * size / total) anchors; the leftover slots go to groups chosen
/// uniformly at random. Within a group the kept anchors are a uniform subset.
/// Groups left without anchors are removed.
inline PixelPartition cap_anchors(PixelPartition partition,
                                  const SamplingConfig& cfg, Rng& rng) {
  cfg.validate();
  const std::size_t total = partition.anchor_count();
  if (total <= cfg.anchor_cap) return partition;

  std::vector<GroupKey> keys;
  std::vector<std::size_t> quota;
  std::size_t assigned = 0;
  for (const auto& [key, ids] : partition.anchor_groups) {
    keys.push_back(key);
    quota.push_back(cfg.anchor_cap * ids.size() / total);
    assigned += quota.back();
  }
  std::vector<std::size_t> order(keys.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  for (std::size_t g :
       sample_without_replacement(order, cfg.anchor_cap - assigned, rng)) {
    ++quota[g];
  }

  std::map<GroupKey, std::vector<PixelId>> capped;
  for (std::size_t g = 0; g < keys.size(); ++g) {
    if (quota[g] == 0) continue;
    capped[keys[g]] = sample_without_replacement(
        std::move(partition.anchor_groups[keys[g]]), quota[g], rng);
  }
  partition.anchor_groups = std::move(capped);
  return partition;
}

/// Draws n = min(|i_kk|, |i_ll|, pairs_per_group) positives and as many
/// negatives for the group. Returns nullopt when n = 0; such a group carries
/// no contrastive signal and is skipped.
inline std::optional<SampleSets> draw_samples(GroupKey group,
                                              const PixelPartition& partition,
                                              const ScoreMap& scores,
                                              const SamplingConfig& cfg,
                                              Rng& rng) {
  const auto it = partition.anchor_groups.find(group);
  if (it == partition.anchor_groups.end() || it->second.empty()) {
    throw InvalidInput("draw_samples: anchor group is empty");
  }
  const auto& pos_pool = partition.correct(group.label);
  const auto& neg_pool = partition.correct(group.predicted);
  const std::size_t n =
      std::min({pos_pool.size(), neg_pool.size(), cfg.pairs_per_group});
  if (n == 0) return std::nullopt;

  SampleSets out;
  out.group = group;
  out.anchors = it->second;
  out.positives = sample_without_replacement(pos_pool, n, rng);
  out.negatives = sample_without_replacement(neg_pool, n, rng);
  out.positive_scores.reserve(n);
  for (PixelId p : out.positives) {
    out.positive_scores.push_back(scores.probability(p, group.label));
  }
  return out;
}

/// Draws every group of the partition. Each group uses its own stream
/// seeded from (cfg.seed, predicted, label), so the result does not depend on
/// the order groups are visited in. Skipped groups are omitted.
inline std::vector<SampleSets> draw_all_samples(const PixelPartition& partition,
                                                const ScoreMap& scores,
                                                const SamplingConfig& cfg) {
  cfg.validate();
  std::vector<SampleSets> out;
  for (const auto& [key, ids] : partition.anchor_groups) {
    if (ids.empty()) continue;
    Rng rng(derive_seed(cfg.seed, static_cast<std::uint64_t>(key.predicted),
                        static_cast<std::uint64_t>(key.label)));
    if (auto sets = draw_samples(key, partition, scores, cfg, rng)) {
      out.push_back(std::move(*sets));
    }
  }
  return out;
}

/// partition -> cap -> draw, with the cap stream derived from cfg.seed.
inline std::vector<SampleSets> build_sample_sets(const LabelMap& labels,
                                                 const PredictionMap& preds,
                                                 const ScoreMap& scores,
                                                 const SamplingConfig& cfg) {
  Rng cap_rng = make_rng(cfg.seed, "cap_anchors");
  const PixelPartition capped =
      cap_anchors(partition_pixels(labels, preds), cfg, cap_rng);
  return draw_all_samples(capped, scores, cfg);
}

/// Conventional sets: one group per label k holding every capped anchor of
/// that label, n = min(|i_kk|, pairs_per_group) positives from i_kk and
/// min(pool, (classes - 1) * n) negatives drawn uniformly from all pixels
/// whose label differs from k. Groups carry predicted = kMixedPrediction.
inline std::vector<SampleSets> build_label_grouped_sets(const LabelMap& labels,
                                                        const PredictionMap& preds,
                                                        const ScoreMap& scores,
                                                        const SamplingConfig& cfg) {
  Rng cap_rng = make_rng(cfg.seed, "cap_anchors");
  const PixelPartition capped =
      cap_anchors(partition_pixels(labels, preds), cfg, cap_rng);
  std::map<ClassId, std::vector<PixelId>> pooled;
  for (const auto& [key, ids] : capped.anchor_groups) {
    auto& dst = pooled[key.label];
    dst.insert(dst.end(), ids.begin(), ids.end());
  }
  const std::size_t classes = capped.correct_sets.size();
  std::vector<SampleSets> out;
  for (auto& [k, anchors] : pooled) {
    const auto& pos_pool = capped.correct(k);
    const std::size_t n = std::min(pos_pool.size(), cfg.pairs_per_group);
    if (n == 0) continue;
    std::vector<PixelId> neg_pool;
    for (PixelId p = 0; p < labels.pixels(); ++p) {
      if (labels[p] != k) neg_pool.push_back(p);
    }
    const std::size_t m = std::min(neg_pool.size(), (classes - 1) * n);
    if (m == 0) continue;
    Rng rng(derive_seed(derive_seed(cfg.seed, "label_grouped"),
                        static_cast<std::uint64_t>(k), 0));
    SampleSets sets;
    sets.group = GroupKey{kMixedPrediction, k};
    std::sort(anchors.begin(), anchors.end());
    sets.anchors = std::move(anchors);
    sets.positives = sample_without_replacement(pos_pool, n, rng);
    sets.negatives = sample_without_replacement(std::move(neg_pool), m, rng);
    for (PixelId p : sets.positives) {
      sets.positive_scores.push_back(scores.probability(p, k));
    }
    out.push_back(std::move(sets));
  }
  return out;
}

}  // namespace pne

#endif  // PNE_SAMPLING_HPP_
