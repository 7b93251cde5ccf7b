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

// Brute-force reference evaluations used to cross-check the production
// losses. Deliberately written without the loss module: plain exp/log, no
// log-space stabilization, no grouping helpers.

#ifndef PNE_REFERENCE_HPP_
#define PNE_REFERENCE_HPP_

#include <cmath>
#include <span>
#include <vector>

#include "pne/core.hpp"
#include "pne/sampling.hpp"

namespace pne::reference {

/// Flat enumeration of the grouped PNE objective: for every ordered class
/// pair (l, k), l != k, and every anchor of S_{l,k}, accumulate
/// log(1 + sum_n exp(a.n/tau) / sum_p (w_p/mean w) exp(a.p/tau)), then
/// divide by the total anchor count.
inline double grouped_pne(std::span<const SampleSets> sets,
                          const EmbeddingMap& emb, std::size_t classes,
                          double tau, bool weighted) {
  double total = 0.0;
  std::size_t anchors = 0;
  for (std::size_t l = 0; l < classes; ++l) {
    for (std::size_t k = 0; k < classes; ++k) {
      if (l == k) continue;
      for (const SampleSets& s : sets) {
        if (s.group.predicted != static_cast<ClassId>(l) ||
            s.group.label != static_cast<ClassId>(k)) {
          continue;
        }
        double mean_score = 0.0;
        for (double w : s.positive_scores) mean_score += w;
        mean_score /= static_cast<double>(s.positive_scores.size());

        for (PixelId a : s.anchors) {
          double num = 0.0;
          for (PixelId n : s.negatives) {
            double d = 0.0;
            for (std::size_t i = 0; i < emb.dim(); ++i) d += emb[a][i] * emb[n][i];
            num += std::exp(d / tau);
          }
          double den = 0.0;
          for (std::size_t j = 0; j < s.positives.size(); ++j) {
            double d = 0.0;
            for (std::size_t i = 0; i < emb.dim(); ++i) {
              d += emb[a][i] * emb[s.positives[j]][i];
            }
            const double w = weighted ? s.positive_scores[j] / mean_score : 1.0;
            den += w * std::exp(d / tau);
          }
          total += std::log(1.0 + num / den);
          ++anchors;
        }
      }
    }
  }
  return anchors == 0 ? 0.0 : total / static_cast<double>(anchors);
}

/// Ratio-of-sums PNE on raw similarities, no stabilization.
inline double pne_ratio_of_sums(std::span<const double> pos_sims,
                                std::span<const double> neg_sims, double tau) {
  double num = 0.0, den = 0.0;
  for (double s : neg_sims) num += std::exp(s / tau);
  for (double s : pos_sims) den += std::exp(s / tau);
  return std::log(1.0 + num / den);
}

}  // namespace pne::reference

#endif  // PNE_REFERENCE_HPP_
