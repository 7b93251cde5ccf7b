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

// Self-checks run by `oracle-test`: production code against the brute-force
// references and exact identities, over seeded random inputs.

#ifndef PNE_VALIDATION_HPP_
#define PNE_VALIDATION_HPP_

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "json.hpp"
#include "pne/core.hpp"
#include "pne/gradients.hpp"
#include "pne/losses.hpp"
#include "pne/random.hpp"
#include "pne/reference.hpp"
#include "pne/sampling.hpp"

namespace pne {

/// A random labelled grid with predictions, scores and unit embeddings.
struct RandomMaps {
  LabelMap labels;
  PredictionMap preds;
  ScoreMap scores;
  EmbeddingMap embeddings;
};

/// Labels iid uniform; each prediction keeps the label with probability
/// `accuracy`, otherwise it is another uniform class. Scores are the
/// softmax of N(0, 1) logits with +3 on the predicted class.
inline RandomMaps random_maps(Rng& rng, std::size_t height, std::size_t width,
                              std::size_t classes, std::size_t dim,
                              double accuracy) {
  const std::size_t n = height * width;
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::normal_distribution<double> normal(0.0, 1.0);
  std::vector<ClassId> labels(n), preds(n);
  Vec logits(n * classes);
  Vec emb(n * dim);
  for (std::size_t p = 0; p < n; ++p) {
    labels[p] = static_cast<ClassId>(uniform_index(rng, classes));
    preds[p] = labels[p];
    if (unit(rng) >= accuracy) {
      const auto shift = 1 + uniform_index(rng, classes - 1);
      preds[p] = static_cast<ClassId>((static_cast<std::size_t>(labels[p]) + shift) %
                                      classes);
    }
    for (std::size_t c = 0; c < classes; ++c) {
      logits[p * classes + c] =
          normal(rng) + (static_cast<ClassId>(c) == preds[p] ? 3.0 : 0.0);
    }
    const Vec u = random_unit_vector(rng, dim);
    std::copy(u.begin(), u.end(), emb.begin() + static_cast<std::ptrdiff_t>(p * dim));
  }
  return RandomMaps{LabelMap(height, width, classes, std::move(labels)),
                    PredictionMap(height, width, classes, std::move(preds)),
                    ScoreMap::from_logits(height, width, classes, logits),
                    EmbeddingMap(height, width, dim, std::move(emb))};
}

struct CheckResult {
  std::string name;
  double measured = 0.0;   // worst deviation or violation count
  double tolerance = 0.0;  // pass iff measured <= tolerance
  std::size_t cases = 0;

  bool passed() const { return std::isfinite(measured) && measured <= tolerance; }
};

inline nlohmann::ordered_json to_json(const CheckResult& r) {
  nlohmann::ordered_json j;
  j["name"] = r.name;
  j["passed"] = r.passed();
  j["measured"] = r.measured;
  j["tolerance"] = r.tolerance;
  j["cases"] = r.cases;
  return j;
}

/// Sum form against mean form of PNE with |P| = |N| and uniform weights.
inline CheckResult check_equal_count_identity(std::size_t cases,
                                              std::uint64_t seed) {
  static constexpr double kTaus[] = {0.1, 0.3, 1.0, 5.0, 10.0};
  Rng rng = make_rng(seed, "equal_count_identity");
  std::uniform_real_distribution<double> sim(-1.0, 1.0);
  CheckResult r{"equal_count_identity", 0.0, 1e-12, cases};
  for (std::size_t t = 0; t < cases; ++t) {
    const std::size_t n = 1 + uniform_index(rng, 64);
    const double tau = kTaus[t % 5];
    Vec pos(n), neg(n);
    for (double& s : pos) s = sim(rng);
    for (double& s : neg) s = sim(rng);
    const Vec ones(n, 1.0);
    const double sums = pne_terms(pos, ones, neg, tau).value;
    r.measured = std::max(r.measured, std::abs(sums - pne_mean_form(pos, neg, tau)));
  }
  return r;
}

/// PNE drift under joint replication x{2, 4, 8} of positives and negatives.
inline CheckResult check_joint_replication(std::size_t cases, std::uint64_t seed) {
  static constexpr std::size_t kMultipliers[] = {2, 4, 8};
  Rng rng = make_rng(seed, "joint_replication");
  CheckResult r{"pne_joint_replication_drift", 0.0, 1e-12, cases};
  for (std::size_t t = 0; t < cases; ++t) {
    const std::size_t n = 1 + uniform_index(rng, 16);
    const ContrastInstance inst = random_instance(rng, 8, n, n, t % 2 == 1);
    const BalanceReport b =
        balance_diagnostic(ContrastKind::pne, inst, 1.0, kMultipliers);
    const double base = pne_group_loss(inst, 1.0);
    for (const ReplicationPoint& pt : b.joint_replication) {
      r.measured = std::max(r.measured, std::abs(pt.value - base));
    }
  }
  return r;
}

/// Counts instances where NCE fails to increase strictly as the negatives
/// are replicated x{1, 2, 4, 8}.
inline CheckResult check_negative_replication(std::size_t cases,
                                              std::uint64_t seed) {
  static constexpr std::size_t kMultipliers[] = {1, 2, 4, 8};
  Rng rng = make_rng(seed, "negative_replication");
  CheckResult r{"nce_negative_replication_violations", 0.0, 0.0, cases};
  for (std::size_t t = 0; t < cases; ++t) {
    const std::size_t n = 1 + uniform_index(rng, 16);
    const ContrastInstance inst = random_instance(rng, 8, n, n, false);
    const BalanceReport b =
        balance_diagnostic(ContrastKind::nce, inst, 1.0, kMultipliers);
    for (std::size_t i = 1; i < b.negative_replication.size(); ++i) {
      if (!(b.negative_replication[i].value > b.negative_replication[i - 1].value)) {
        r.measured += 1.0;
        break;
      }
    }
  }
  return r;
}

/// One positive and m negatives, all at similarity 0, tau = 1: NCE must be
/// log(1 + m).
inline CheckResult check_nce_spot_values(std::size_t max_m) {
  CheckResult r{"nce_spot_log1p_m", 0.0, 1e-12, max_m};
  for (std::size_t m = 1; m <= max_m; ++m) {
    const Vec pos{0.0};
    const Vec neg(m, 0.0);
    const double v = nce_terms(pos, neg, 1.0).value;
    r.measured = std::max(r.measured, std::abs(v - std::log1p(static_cast<double>(m))));
  }
  return r;
}

/// Grouped PNE against the flat enumeration on random 8x8 maps with 3-5
/// classes, for both weightings.
inline CheckResult check_grouping_oracle(std::size_t cases, std::uint64_t seed) {
  Rng rng = make_rng(seed, "grouping_oracle");
  CheckResult r{"grouping_oracle", 0.0, 1e-12, cases};
  for (std::size_t t = 0; t < cases; ++t) {
    const std::size_t classes = 3 + t % 3;
    const RandomMaps m = random_maps(rng, 8, 8, classes, 8, 0.6);
    SamplingConfig sc;
    sc.seed = derive_seed(seed, t, 0);
    sc.pairs_per_group = 1 + t % 10;
    sc.anchor_cap = 10 + t % 40;
    const auto sets = build_sample_sets(m.labels, m.preds, m.scores, sc);
    for (Weighting w : {Weighting::per_positive_softmax, Weighting::uniform}) {
      ContrastConfig cc;
      cc.weighting = w;
      cc.temperature = t % 2 == 0 ? 1.0 : 0.5;
      const double got = pne_full_loss(sets, m.embeddings, cc).value;
      const double want = reference::grouped_pne(
          sets, m.embeddings, classes, cc.temperature,
          w == Weighting::per_positive_softmax);
      r.measured = std::max(r.measured, std::abs(got - want));
    }
  }
  return r;
}

/// Counts sample-set contract violations on random maps: |P| != |N|,
/// positives outside i_kk, negatives outside i_ll, anchors outside S_lk or
/// more anchors than the cap.
inline CheckResult check_sampling_contracts(std::size_t cases,
                                            std::uint64_t seed) {
  Rng rng = make_rng(seed, "sampling_contracts");
  CheckResult r{"sampling_contract_violations", 0.0, 0.0, cases};
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  for (std::size_t t = 0; t < cases; ++t) {
    const std::size_t side = 4 + uniform_index(rng, 29);
    const std::size_t classes = 2 + uniform_index(rng, 7);
    const RandomMaps m = random_maps(rng, side, side, classes, 2, unit(rng));
    SamplingConfig sc;
    sc.seed = derive_seed(seed, t, 1);
    const auto sets = build_sample_sets(m.labels, m.preds, m.scores, sc);
    std::size_t anchors = 0;
    for (const SampleSets& s : sets) {
      anchors += s.anchors.size();
      const ClassId l = s.group.predicted, k = s.group.label;
      bool bad = s.positives.size() != s.negatives.size() || s.positives.empty() ||
                 s.positive_scores.size() != s.positives.size();
      for (PixelId p : s.positives) bad |= m.labels[p] != k || m.preds[p] != k;
      for (PixelId p : s.negatives) bad |= m.labels[p] != l || m.preds[p] != l;
      for (PixelId p : s.anchors) bad |= m.labels[p] != k || m.preds[p] != l;
      if (bad) r.measured += 1.0;
    }
    if (anchors > sc.anchor_cap) r.measured += 1.0;
  }
  return r;
}

/// Normalized weights average to one; with equal scores, weighted and
/// unweighted PNE coincide. Reports the worst deviation of either.
inline CheckResult check_weight_normalization(std::size_t cases,
                                              std::uint64_t seed) {
  Rng rng = make_rng(seed, "weight_normalization");
  CheckResult r{"weight_normalization", 0.0, 1e-12, cases};
  std::uniform_real_distribution<double> score(1e-3, 1.0);
  for (std::size_t t = 0; t < cases; ++t) {
    const std::size_t n = 1 + uniform_index(rng, 64);
    Vec scores(n);
    for (double& s : scores) s = score(rng);
    const Vec w = per_positive_weights(scores);
    double mean = 0.0;
    for (double x : w) mean += x;
    mean /= static_cast<double>(n);
    r.measured = std::max(r.measured, std::abs(mean - 1.0));

    ContrastInstance inst = random_instance(rng, 8, n, n, false);
    inst.positive_scores.assign(n, score(rng));
    r.measured = std::max(r.measured,
                          std::abs(pne_group_loss(inst, 1.0) - pne_basic(inst, 1.0)));
  }
  return r;
}

/// Every oracle check with the sizes used by `oracle-test`.
inline std::vector<CheckResult> run_oracle_suite(std::uint64_t seed) {
  return {check_equal_count_identity(1000, seed),
          check_joint_replication(200, seed),
          check_negative_replication(200, seed),
          check_nce_spot_values(64),
          check_grouping_oracle(50, seed),
          check_sampling_contracts(1000, seed),
          check_weight_normalization(1000, seed)};
}

}  // namespace pne

#endif  // PNE_VALIDATION_HPP_
