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

// Test-side oracles. Written from the loss and metric definitions directly,
// in long double, without the production kernels or grouping code.

#ifndef PNE_TESTS_ORACLES_HPP_
#define PNE_TESTS_ORACLES_HPP_

#include <cmath>
#include <cstddef>
#include <span>
#include <vector>

#include "pne/core.hpp"
#include "pne/sampling.hpp"

namespace oracle {

using Real = long double;

inline Real dot(std::span<const double> a, std::span<const double> b) {
  Real s = 0;
  for (std::size_t i = 0; i < a.size(); ++i) s += Real(a[i]) * Real(b[i]);
  return s;
}

// log(1 + sum_n exp(s-/tau) / sum_p w_p exp(s+/tau))
inline Real pne(const std::vector<double>& pos, const std::vector<double>& w,
                const std::vector<double>& neg, double tau) {
  Real num = 0, den = 0;
  for (double s : neg) num += std::exp(Real(s) / tau);
  for (std::size_t j = 0; j < pos.size(); ++j) {
    den += (w.empty() ? Real(1) : Real(w[j])) * std::exp(Real(pos[j]) / tau);
  }
  return std::log1p(num / den);
}

// log(1 + mean_n exp(s-/tau) / mean_p exp(s+/tau))
inline Real pne_means(const std::vector<double>& pos,
                      const std::vector<double>& neg, double tau) {
  Real num = 0, den = 0;
  for (double s : neg) num += std::exp(Real(s) / tau);
  for (double s : pos) den += std::exp(Real(s) / tau);
  num /= Real(neg.size());
  den /= Real(pos.size());
  return std::log1p(num / den);
}

// mean_p log(1 + sum_n exp(s-/tau) / exp(s+_p/tau))
inline Real nce(const std::vector<double>& pos, const std::vector<double>& neg,
                double tau) {
  Real num = 0;
  for (double s : neg) num += std::exp(Real(s) / tau);
  Real total = 0;
  for (double s : pos) total += std::log1p(num / std::exp(Real(s) / tau));
  return total / Real(pos.size());
}

inline std::vector<double> normalized_scores(const std::vector<double>& scores) {
  Real mean = 0;
  for (double s : scores) mean += s;
  mean /= Real(scores.size());
  std::vector<double> w;
  for (double s : scores) w.push_back(static_cast<double>(Real(s) / mean));
  return w;
}

// Walks the grid pixel by pixel. Every pixel listed as an anchor of some set
// contributes one PNE term against that set's positives and negatives; the
// total is divided by the number of anchor terms.
inline Real flat_grouped_pne(std::span<const pne::SampleSets> sets,
                             const pne::EmbeddingMap& emb, double tau,
                             bool weighted) {
  Real total = 0;
  std::size_t terms = 0;
  for (pne::PixelId p = 0; p < emb.pixels(); ++p) {
    for (const pne::SampleSets& s : sets) {
      for (pne::PixelId a : s.anchors) {
        if (a != p) continue;
        std::vector<double> pos, neg;
        for (pne::PixelId q : s.positives) pos.push_back(double(dot(emb[p], emb[q])));
        for (pne::PixelId q : s.negatives) neg.push_back(double(dot(emb[p], emb[q])));
        const std::vector<double> w =
            weighted ? normalized_scores(s.positive_scores) : std::vector<double>{};
        total += pne(pos, w, neg, tau);
        ++terms;
      }
    }
  }
  return terms == 0 ? Real(0) : total / Real(terms);
}

inline Real squared_distance(std::span<const double> a, std::span<const double> b) {
  Real s = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const Real d = Real(a[i]) - Real(b[i]);
    s += d * d;
  }
  return s;
}

// Every unordered same-label pair.
inline Real alignment(const pne::EmbeddingMap& emb, const pne::LabelMap& labels) {
  Real sum = 0;
  std::size_t pairs = 0;
  for (pne::PixelId i = 0; i < emb.pixels(); ++i) {
    for (pne::PixelId j = i + 1; j < emb.pixels(); ++j) {
      if (labels[i] != labels[j]) continue;
      sum += squared_distance(emb[i], emb[j]);
      ++pairs;
    }
  }
  return sum / Real(pairs);
}

inline Real uniformity(const pne::EmbeddingMap& emb) {
  Real sum = 0;
  std::size_t pairs = 0;
  for (pne::PixelId i = 0; i < emb.pixels(); ++i) {
    for (pne::PixelId j = i + 1; j < emb.pixels(); ++j) {
      sum += std::exp(-2 * squared_distance(emb[i], emb[j]));
      ++pairs;
    }
  }
  return std::log(sum / Real(pairs));
}

}  // namespace oracle

#endif  // PNE_TESTS_ORACLES_HPP_
