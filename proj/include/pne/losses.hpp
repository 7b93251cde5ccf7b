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

// Contrastive and classification losses.
//
// With s+ / s- the anchor's dot similarity to a positive / negative and tau
// the temperature:
//
//   NCE  = mean_j log(1 + sum_k exp(s-_k/tau) / exp(s+_j/tau))
//   PNE  = log(1 + sum_k exp(s-_k/tau) / sum_j (w_j/mean(w)) exp(s+_j/tau))
//
// NCE contrasts every positive against the whole negative set, so its value
// grows with the number of negatives. PNE compares aggregate negative mass
// to aggregate positive mass; with |P| = |N| it only depends on the mean
// exponentiated similarities. The grouped PNE averages the per-anchor loss
// over all retained misclassified anchors.
//
// Every exponential sum is evaluated in log space so small temperatures
// cannot overflow.

#ifndef PNE_LOSSES_HPP_
#define PNE_LOSSES_HPP_

#include <algorithm>
#include <cmath>
#include <concepts>
#include <limits>
#include <map>
#include <numeric>
#include <span>
#include <string>
#include <type_traits>
#include <vector>

#include "pne/core.hpp"
#include "pne/sampling.hpp"

namespace pne {

enum class Weighting { uniform, per_positive_softmax };

struct ContrastConfig {
  double temperature = 1.0;
  double alpha = 1.3;
  Weighting weighting = Weighting::per_positive_softmax;

  void validate() const {
    if (!(temperature > 0.0) || !std::isfinite(temperature)) {
      throw InvalidInput("temperature must be positive and finite");
    }
    if (!(alpha >= 0.0) || !std::isfinite(alpha)) {
      throw InvalidInput("alpha must be non-negative and finite");
    }
  }
};

/// One anchor with its positive and negative embeddings. An empty
/// `positive_scores` means uniform weighting; otherwise it holds the raw
/// predicted probability of each positive.
template <std::floating_point Real>
struct BasicContrastInstance {
  std::vector<Real> anchor;
  std::vector<std::vector<Real>> positives;
  std::vector<std::vector<Real>> negatives;
  std::vector<Real> positive_scores;

  template <std::floating_point Other>
  BasicContrastInstance<Other> cast() const {
    const auto conv = [](const std::vector<Real>& v) {
      return std::vector<Other>(v.begin(), v.end());
    };
    BasicContrastInstance<Other> out;
    out.anchor = conv(anchor);
    for (const auto& p : positives) out.positives.push_back(conv(p));
    for (const auto& n : negatives) out.negatives.push_back(conv(n));
    out.positive_scores = conv(positive_scores);
    return out;
  }
};

using ContrastInstance = BasicContrastInstance<double>;

/// Loss value with its derivatives with respect to each similarity.
template <std::floating_point Real>
struct BasicSimilarityTerms {
  Real value = 0;
  std::vector<Real> d_positive;
  std::vector<Real> d_negative;
};

using SimilarityTerms = BasicSimilarityTerms<double>;

/// Scalar loss plus gradients for every participating pixel embedding.
struct LossResult {
  double value = 0.0;
  std::map<PixelId, Vec> gradients;
  double positive_similarity_grad = 0.0;  // sum of dL/ds+
  double negative_similarity_grad = 0.0;  // sum of dL/ds-
  std::size_t anchors = 0;
};

namespace detail {

template <std::floating_point Real>
Real log_sum_exp(std::span<const Real> xs) {
  if (xs.empty()) return -std::numeric_limits<Real>::infinity();
  const Real top = *std::max_element(xs.begin(), xs.end());
  if (!std::isfinite(top)) return top;
  Real s = 0;
  for (Real x : xs) s += std::exp(x - top);
  return top + std::log(s);
}

template <std::floating_point Real>
Real log_add_exp(Real a, Real b) {
  constexpr Real neg_inf = -std::numeric_limits<Real>::infinity();
  if (a == neg_inf) return b;
  if (b == neg_inf) return a;
  return std::max(a, b) + std::log1p(std::exp(-std::abs(a - b)));
}

/// log(1 + exp(x)) without overflow.
template <std::floating_point Real>
Real softplus(Real x) {
  return x > 0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x));
}

template <std::floating_point Real>
Real dot(std::span<const Real> a, std::span<const Real> b) {
  if (a.size() != b.size()) throw InvalidInput("dot: size mismatch");
  Real s = 0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

template <std::floating_point Real>
std::vector<Real> similarities(std::span<const Real> anchor,
                               const std::vector<std::vector<Real>>& others) {
  std::vector<Real> out;
  out.reserve(others.size());
  for (const auto& v : others) out.push_back(dot<Real>(anchor, v));
  return out;
}

template <std::floating_point Real>
void require_temperature(Real tau) {
  if (!(tau > 0) || !std::isfinite(tau)) {
    throw InvalidInput("temperature must be positive and finite");
  }
}

template <std::floating_point Real>
BasicSimilarityTerms<Real> pne_terms(std::span<const Real> pos_sims,
                                     std::span<const Real> weights,
                                     std::span<const Real> neg_sims, Real tau) {
  require_temperature(tau);
  if (pos_sims.empty()) throw InvalidInput("PNE: positive set is empty");
  if (weights.size() != pos_sims.size()) {
    throw InvalidInput("PNE: weight count differs from positive count");
  }
  BasicSimilarityTerms<Real> out;
  out.d_positive.assign(pos_sims.size(), 0);
  out.d_negative.assign(neg_sims.size(), 0);
  if (neg_sims.empty()) return out;

  std::vector<Real> pos_logits(pos_sims.size());
  for (std::size_t j = 0; j < pos_sims.size(); ++j) {
    if (!(weights[j] > 0)) throw InvalidInput("PNE: non-positive weight");
    pos_logits[j] = std::log(weights[j]) + pos_sims[j] / tau;
  }
  std::vector<Real> neg_logits(neg_sims.size());
  for (std::size_t k = 0; k < neg_sims.size(); ++k) {
    neg_logits[k] = neg_sims[k] / tau;
  }
  const Real log_a = log_sum_exp<Real>(pos_logits);
  const Real log_b = log_sum_exp<Real>(neg_logits);
  const Real log_ab = log_add_exp(log_a, log_b);

  out.value = softplus(log_b - log_a);
  const Real neg_share = std::exp(log_b - log_ab);  // B / (A + B)
  for (std::size_t j = 0; j < pos_sims.size(); ++j) {
    out.d_positive[j] = -std::exp(pos_logits[j] - log_a) * neg_share / tau;
  }
  for (std::size_t k = 0; k < neg_sims.size(); ++k) {
    out.d_negative[k] = std::exp(neg_logits[k] - log_ab) / tau;
  }
  return out;
}

template <std::floating_point Real>
BasicSimilarityTerms<Real> nce_terms(std::span<const Real> pos_sims,
                                     std::span<const Real> neg_sims, Real tau,
                                     bool with_gradient = true) {
  require_temperature(tau);
  if (pos_sims.empty()) throw InvalidInput("NCE: positive set is empty");
  BasicSimilarityTerms<Real> out;
  out.d_positive.assign(pos_sims.size(), 0);
  out.d_negative.assign(neg_sims.size(), 0);
  if (neg_sims.empty()) return out;

  std::vector<Real> neg_logits(neg_sims.size());
  for (std::size_t k = 0; k < neg_sims.size(); ++k) {
    neg_logits[k] = neg_sims[k] / tau;
  }
  const Real log_b = log_sum_exp<Real>(neg_logits);
  const Real inv_count = Real(1) / static_cast<Real>(pos_sims.size());

  // dL/ds-_k = (1/|P|tau) sum_j exp(s-_k/tau) / D_j with D_j = e+_j + B,
  // which factors into (exp(s-_k/tau) / B) * sum_j (B / D_j).
  Real total = 0;
  Real neg_share_sum = 0;
  for (std::size_t j = 0; j < pos_sims.size(); ++j) {
    const Real pos_logit = pos_sims[j] / tau;
    total += softplus(log_b - pos_logit);
    if (!with_gradient) continue;
    const Real neg_share = std::exp(log_b - log_add_exp(pos_logit, log_b));
    out.d_positive[j] = -inv_count * neg_share / tau;
    neg_share_sum += neg_share;
  }
  out.value = total * inv_count;
  if (with_gradient) {
    for (std::size_t k = 0; k < neg_sims.size(); ++k) {
      out.d_negative[k] =
          inv_count * std::exp(neg_logits[k] - log_b) * neg_share_sum / tau;
    }
  }
  return out;
}

template <std::floating_point Real>
std::vector<Real> per_positive_weights(std::span<const Real> scores) {
  if (scores.empty()) throw InvalidInput("per_positive_weights: empty list");
  Real total = 0;
  for (Real s : scores) {
    if (!(s > 0 && s <= 1)) {
      throw InvalidInput("per_positive_weights: score outside (0, 1]");
    }
    total += s;
  }
  const Real mean = total / static_cast<Real>(scores.size());
  std::vector<Real> out(scores.size());
  for (std::size_t j = 0; j < scores.size(); ++j) out[j] = scores[j] / mean;
  return out;
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Similarity-level kernels
// ---------------------------------------------------------------------------

/// PNE on precomputed similarities. `weights` are the already normalized
/// per-positive weights (all ones for the unweighted form).
inline SimilarityTerms pne_terms(std::span<const double> pos_sims,
                                 std::span<const double> weights,
                                 std::span<const double> neg_sims, double tau) {
  return detail::pne_terms<double>(pos_sims, weights, neg_sims, tau);
}

inline SimilarityTerms nce_terms(std::span<const double> pos_sims,
                                 std::span<const double> neg_sims, double tau) {
  return detail::nce_terms<double>(pos_sims, neg_sims, tau);
}

/// Scores divided by their mean, so the returned weights average to one.
inline Vec per_positive_weights(std::span<const double> scores) {
  return detail::per_positive_weights<double>(scores);
}

template <std::floating_point Real>
std::vector<Real> weights_for(const BasicContrastInstance<Real>& inst) {
  if (inst.positive_scores.empty()) {
    return std::vector<Real>(inst.positives.size(), Real(1));
  }
  if (inst.positive_scores.size() != inst.positives.size()) {
    throw InvalidInput("positive score count differs from positive count");
  }
  return detail::per_positive_weights<Real>(inst.positive_scores);
}

// ---------------------------------------------------------------------------
// Instance-level losses
// ---------------------------------------------------------------------------

template <std::floating_point Real>
Real nce_loss(const BasicContrastInstance<Real>& inst,
              std::type_identity_t<Real> tau) {
  return detail::nce_terms<Real>(
             detail::similarities<Real>(inst.anchor, inst.positives),
             detail::similarities<Real>(inst.anchor, inst.negatives), tau,
             false)
      .value;
}

/// Unweighted PNE. Ignores `positive_scores`.
template <std::floating_point Real>
Real pne_basic(const BasicContrastInstance<Real>& inst,
               std::type_identity_t<Real> tau) {
  const std::vector<Real> ones(inst.positives.size(), Real(1));
  return detail::pne_terms<Real>(
             detail::similarities<Real>(inst.anchor, inst.positives), ones,
             detail::similarities<Real>(inst.anchor, inst.negatives), tau)
      .value;
}

/// PNE with per-positive weights taken from `positive_scores`. Equals
/// pne_basic when the scores are empty or all equal.
template <std::floating_point Real>
Real pne_group_loss(const BasicContrastInstance<Real>& inst,
                    std::type_identity_t<Real> tau) {
  return detail::pne_terms<Real>(
             detail::similarities<Real>(inst.anchor, inst.positives),
             weights_for(inst),
             detail::similarities<Real>(inst.anchor, inst.negatives), tau)
      .value;
}

/// log(1 + mean_k exp(s-_k/tau) / mean_j exp(s+_j/tau)), the form PNE takes
/// when |P| = |N|. Evaluated through means, not sums.
inline double pne_mean_form(std::span<const double> pos_sims,
                            std::span<const double> neg_sims, double tau) {
  detail::require_temperature(tau);
  if (pos_sims.empty()) throw InvalidInput("PNE: positive set is empty");
  if (neg_sims.empty()) return 0.0;
  double shift = pos_sims[0] / tau;
  for (double s : pos_sims) shift = std::max(shift, s / tau);
  for (double s : neg_sims) shift = std::max(shift, s / tau);
  double pos_mean = 0.0;
  for (double s : pos_sims) pos_mean += std::exp(s / tau - shift);
  pos_mean /= static_cast<double>(pos_sims.size());
  double neg_mean = 0.0;
  for (double s : neg_sims) neg_mean += std::exp(s / tau - shift);
  neg_mean /= static_cast<double>(neg_sims.size());
  return std::log1p(neg_mean / pos_mean);
}

/// -log softmax(logits)[true_class].
template <std::floating_point Real>
Real pixel_cross_entropy(std::span<const Real> logits, ClassId true_class) {
  if (true_class < 0 || static_cast<std::size_t>(true_class) >= logits.size()) {
    throw InvalidInput("pixel_cross_entropy: class id " +
                       std::to_string(true_class) + " out of range");
  }
  for (Real x : logits) {
    if (!std::isfinite(x)) {
      throw InvalidInput("pixel_cross_entropy: non-finite logit");
    }
  }
  return detail::log_sum_exp<Real>(logits) -
         logits[static_cast<std::size_t>(true_class)];
}

inline double pixel_cross_entropy(const Vec& logits, ClassId true_class) {
  return pixel_cross_entropy<double>(logits, true_class);
}

inline double combined_loss(double ce, double contrast, double alpha) {
  if (!std::isfinite(ce) || !std::isfinite(contrast)) {
    throw InvalidInput("combined_loss: non-finite input");
  }
  if (!(alpha >= 0.0)) throw InvalidInput("combined_loss: alpha must be >= 0");
  return ce + alpha * contrast;
}

// ---------------------------------------------------------------------------
// Grouped losses over a pixel grid
// ---------------------------------------------------------------------------

enum class ContrastKind { nce, pne };

namespace detail {

inline void add_scaled(Vec& dst, std::span<const double> src, double scale) {
  if (dst.empty()) dst.assign(src.size(), 0.0);
  for (std::size_t i = 0; i < src.size(); ++i) dst[i] += scale * src[i];
}

}  // namespace detail

/// Averages the per-anchor loss over every anchor of every sample set.
/// Anchors in one group share that group's positives and negatives. Groups
/// are reduced in (predicted, label) order and anchors in pixel-id order.
/// With no sample sets the value is 0 and no gradients are produced. PNE
/// requires |P| = |N| in every set; NCE accepts any counts.
inline LossResult grouped_contrast_loss(std::span<const SampleSets> sets,
                                        const EmbeddingMap& embeddings,
                                        const ContrastConfig& cfg,
                                        ContrastKind kind) {
  cfg.validate();
  std::vector<const SampleSets*> ordered;
  for (const SampleSets& s : sets) ordered.push_back(&s);
  std::stable_sort(ordered.begin(), ordered.end(),
                   [](const SampleSets* a, const SampleSets* b) {
                     return a->group < b->group;
                   });

  LossResult out;
  for (const SampleSets* set : ordered) out.anchors += set->anchors.size();
  if (out.anchors == 0) return out;
  const double scale = 1.0 / static_cast<double>(out.anchors);
  const double tau = cfg.temperature;
  const std::size_t dim = embeddings.dim();

  // Dense accumulation buffer, folded into the sparse map at the end.
  Vec dense(embeddings.pixels() * dim, 0.0);
  std::vector<char> touched(embeddings.pixels(), 0);
  const auto row = [&](PixelId p) { return dense.data() + p * dim; };
  const auto axpy = [dim](double* dst, const double* src, double g) {
    for (std::size_t i = 0; i < dim; ++i) dst[i] += g * src[i];
  };

  Vec pos_sims, neg_sims;
  for (const SampleSets* set : ordered) {
    if (kind == ContrastKind::pne &&
        set->positives.size() != set->negatives.size()) {
      throw InvalidInput("sample set violates |P| = |N|");
    }
    Vec weights(set->positives.size(), 1.0);
    if (kind == ContrastKind::pne &&
        cfg.weighting == Weighting::per_positive_softmax) {
      weights = per_positive_weights(set->positive_scores);
    }
    std::vector<PixelId> anchors = set->anchors;
    std::sort(anchors.begin(), anchors.end());
    for (PixelId p : anchors) touched[p] = 1;
    for (PixelId p : set->positives) touched[p] = 1;
    for (PixelId p : set->negatives) touched[p] = 1;

    for (PixelId a : anchors) {
      const auto anchor = embeddings[a];
      pos_sims.clear();
      neg_sims.clear();
      for (PixelId p : set->positives) {
        pos_sims.push_back(dot_similarity(anchor, embeddings[p]));
      }
      for (PixelId n : set->negatives) {
        neg_sims.push_back(dot_similarity(anchor, embeddings[n]));
      }
      const SimilarityTerms terms =
          kind == ContrastKind::pne
              ? pne_terms(pos_sims, weights, neg_sims, tau)
              : nce_terms(pos_sims, neg_sims, tau);
      out.value += terms.value;

      double* anchor_grad = row(a);
      for (std::size_t j = 0; j < set->positives.size(); ++j) {
        const PixelId p = set->positives[j];
        const double g = scale * terms.d_positive[j];
        axpy(anchor_grad, embeddings[p].data(), g);
        axpy(row(p), anchor.data(), g);
        out.positive_similarity_grad += g;
      }
      for (std::size_t k = 0; k < set->negatives.size(); ++k) {
        const PixelId n = set->negatives[k];
        const double g = scale * terms.d_negative[k];
        axpy(anchor_grad, embeddings[n].data(), g);
        axpy(row(n), anchor.data(), g);
        out.negative_similarity_grad += g;
      }
    }
  }
  for (PixelId p = 0; p < touched.size(); ++p) {
    if (touched[p]) out.gradients.emplace(p, Vec(row(p), row(p) + dim));
  }
  out.value *= scale;
  return out;
}

/// The grouped PNE objective over misclassified anchors.
inline LossResult pne_full_loss(std::span<const SampleSets> sets,
                                const EmbeddingMap& embeddings,
                                const ContrastConfig& cfg) {
  return grouped_contrast_loss(sets, embeddings, cfg, ContrastKind::pne);
}

/// Same anchors and samples, per-positive NCE instead of PNE.
inline LossResult nce_full_loss(std::span<const SampleSets> sets,
                                const EmbeddingMap& embeddings,
                                const ContrastConfig& cfg) {
  return grouped_contrast_loss(sets, embeddings, cfg, ContrastKind::nce);
}

}  // namespace pne

#endif  // PNE_LOSSES_HPP_
