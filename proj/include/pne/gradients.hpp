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

// Closed-form gradients, a central-difference validator and the
// positive/negative balance diagnostic.
//
// For PNE with A = sum_j w_j exp(s+_j/tau) and B = sum_k exp(s-_k/tau):
//
//   dL/ds-_k =  exp(s-_k/tau) / (tau (A + B))
//   dL/ds+_j = -B w_j exp(s+_j/tau) / (tau A (A + B))
//
// Both sums equal B / (tau (A + B)) in magnitude, so the similarity
// gradients are balanced exactly. NCE has the same balance; what differs is
// how the loss value scales with the number of negatives.

#ifndef PNE_GRADIENTS_HPP_
#define PNE_GRADIENTS_HPP_

#include <algorithm>
#include <cmath>
#include <concepts>
#include <functional>
#include <numeric>
#include <span>
#include <string>
#include <vector>

#include "pne/core.hpp"
#include "pne/losses.hpp"
#include "pne/random.hpp"

namespace pne {

/// Gradients of an instance-level loss with respect to each embedding, and
/// the similarity-level derivatives they were built from.
struct InstanceGradient {
  double value = 0.0;
  Vec anchor;
  std::vector<Vec> positives;
  std::vector<Vec> negatives;
  Vec d_positive_sim;
  Vec d_negative_sim;

  double positive_sum() const {
    return std::accumulate(d_positive_sim.begin(), d_positive_sim.end(), 0.0);
  }
  double negative_sum() const {
    return std::accumulate(d_negative_sim.begin(), d_negative_sim.end(), 0.0);
  }
};

namespace detail {

/// Maps similarity derivatives to embedding derivatives through s = a . x.
inline InstanceGradient chain_to_embeddings(const ContrastInstance& inst,
                                            SimilarityTerms terms) {
  InstanceGradient g;
  g.value = terms.value;
  const std::size_t dim = inst.anchor.size();
  g.anchor.assign(dim, 0.0);
  for (std::size_t j = 0; j < inst.positives.size(); ++j) {
    add_scaled(g.anchor, inst.positives[j], terms.d_positive[j]);
    Vec d(dim, 0.0);
    add_scaled(d, inst.anchor, terms.d_positive[j]);
    g.positives.push_back(std::move(d));
  }
  for (std::size_t k = 0; k < inst.negatives.size(); ++k) {
    add_scaled(g.anchor, inst.negatives[k], terms.d_negative[k]);
    Vec d(dim, 0.0);
    add_scaled(d, inst.anchor, terms.d_negative[k]);
    g.negatives.push_back(std::move(d));
  }
  g.d_positive_sim = std::move(terms.d_positive);
  g.d_negative_sim = std::move(terms.d_negative);
  return g;
}

}  // namespace detail

/// Gradient of pne_group_loss (weighted when the instance carries scores).
inline InstanceGradient grad_pne(const ContrastInstance& inst, double tau) {
  return detail::chain_to_embeddings(
      inst, pne_terms(detail::similarities<double>(inst.anchor, inst.positives),
                      weights_for(inst),
                      detail::similarities<double>(inst.anchor, inst.negatives), tau));
}

/// Gradient of pne_basic; positive scores are ignored.
inline InstanceGradient grad_pne_basic(const ContrastInstance& inst,
                                       double tau) {
  const Vec ones(inst.positives.size(), 1.0);
  return detail::chain_to_embeddings(
      inst, pne_terms(detail::similarities<double>(inst.anchor, inst.positives), ones,
                      detail::similarities<double>(inst.anchor, inst.negatives), tau));
}

inline InstanceGradient grad_nce(const ContrastInstance& inst, double tau) {
  return detail::chain_to_embeddings(
      inst, nce_terms(detail::similarities<double>(inst.anchor, inst.positives),
                      detail::similarities<double>(inst.anchor, inst.negatives), tau));
}

/// softmax(logits) - one_hot(true_class).
inline Vec grad_ce(std::span<const double> logits, ClassId true_class) {
  if (true_class < 0 || static_cast<std::size_t>(true_class) >= logits.size()) {
    throw InvalidInput("grad_ce: class id " + std::to_string(true_class) +
                       " out of range");
  }
  Vec g = softmax(logits);
  g[static_cast<std::size_t>(true_class)] -= 1.0;
  return g;
}

// ---------------------------------------------------------------------------
// Finite differences
// ---------------------------------------------------------------------------

struct GradCheckReport {
  double max_relative_error = 0.0;
  Vec per_parameter_errors;  // one entry per checked parameter block
  double step = 1e-5;
  std::size_t instances = 0;
  std::size_t non_finite = 0;  // perturbed evaluations that were not finite

  bool passed(double tolerance) const {
    return non_finite == 0 && max_relative_error < tolerance;
  }

  void merge(const GradCheckReport& other) {
    max_relative_error = std::max(max_relative_error, other.max_relative_error);
    per_parameter_errors.insert(per_parameter_errors.end(),
                                other.per_parameter_errors.begin(),
                                other.per_parameter_errors.end());
    instances += other.instances;
    non_finite += other.non_finite;
  }
};

/// ||a - n|| / max(||a||, ||n||, 1e-12).
inline double relative_error(std::span<const double> analytic,
                             std::span<const double> numeric) {
  double diff = 0.0, na = 0.0, nn = 0.0;
  for (std::size_t i = 0; i < analytic.size(); ++i) {
    diff += (analytic[i] - numeric[i]) * (analytic[i] - numeric[i]);
    na += analytic[i] * analytic[i];
    nn += numeric[i] * numeric[i];
  }
  return std::sqrt(diff) / std::max({std::sqrt(na), std::sqrt(nn), 1e-12});
}

/// Precision the finite-difference checker evaluates losses in. Extended
/// precision keeps cancellation noise in (L(x+h) - L(x-h)) well below the
/// truncation error of the central difference.
using CheckReal = long double;
using CheckInstance = BasicContrastInstance<CheckReal>;

/// Central-difference check of `analytic` against `loss`. Each entry of
/// `params` is a mutable parameter block; `loss` must read its input through
/// those blocks. Blocks are restored after every perturbation.
template <std::floating_point Real>
GradCheckReport check_blocks(const std::function<Real()>& loss,
                             std::span<const std::span<Real>> params,
                             std::span<const Vec> analytic, double h = 1e-5) {
  if (!(h > 0.0)) throw InvalidInput("finite_diff_check: step must be > 0");
  if (params.size() != analytic.size()) {
    throw InvalidInput("finite_diff_check: block count mismatch");
  }
  GradCheckReport report;
  report.step = h;
  report.instances = 1;
  const Real step = static_cast<Real>(h);
  for (std::size_t b = 0; b < params.size(); ++b) {
    std::span<Real> block = params[b];
    Vec numeric(block.size(), 0.0);
    for (std::size_t i = 0; i < block.size(); ++i) {
      const Real saved = block[i];
      block[i] = saved + step;
      const Real up = loss();
      block[i] = saved - step;
      const Real down = loss();
      block[i] = saved;
      if (!std::isfinite(up) || !std::isfinite(down)) {
        ++report.non_finite;
        continue;
      }
      numeric[i] = static_cast<double>((up - down) / (2 * step));
    }
    const double err = relative_error(analytic[b], numeric);
    report.per_parameter_errors.push_back(err);
    report.max_relative_error = std::max(report.max_relative_error, err);
  }
  return report;
}

/// Checks an instance-level contrastive gradient. The loss is re-evaluated
/// on the raw perturbed vectors without renormalizing them.
inline GradCheckReport finite_diff_check(
    const std::function<CheckReal(const CheckInstance&)>& loss,
    const InstanceGradient& analytic, const ContrastInstance& instance,
    double h = 1e-5) {
  CheckInstance inst = instance.cast<CheckReal>();
  std::vector<std::span<CheckReal>> blocks{inst.anchor};
  std::vector<Vec> expected{analytic.anchor};
  for (std::size_t j = 0; j < inst.positives.size(); ++j) {
    blocks.emplace_back(inst.positives[j]);
    expected.push_back(analytic.positives[j]);
  }
  for (std::size_t k = 0; k < inst.negatives.size(); ++k) {
    blocks.emplace_back(inst.negatives[k]);
    expected.push_back(analytic.negatives[k]);
  }
  return check_blocks<CheckReal>([&] { return loss(inst); }, blocks,
                                 expected, h);
}

/// Checks grad_ce against pixel_cross_entropy at the given logits.
inline GradCheckReport finite_diff_check_ce(const Vec& logits,
                                            ClassId true_class,
                                            double h = 1e-5) {
  const Vec analytic = grad_ce(logits, true_class);
  std::vector<CheckReal> x(logits.begin(), logits.end());
  std::vector<std::span<CheckReal>> blocks{x};
  std::vector<Vec> expected{analytic};
  return check_blocks<CheckReal>(
      [&] { return pixel_cross_entropy<CheckReal>(x, true_class); }, blocks,
      expected, h);
}

// ---------------------------------------------------------------------------
// Balance diagnostic
// ---------------------------------------------------------------------------

struct ReplicationPoint {
  std::size_t multiplier = 1;
  double value = 0.0;
};

struct BalanceReport {
  double positive_grad_sum = 0.0;  // sum of dL/ds+
  double negative_grad_sum = 0.0;  // sum of dL/ds-
  std::vector<ReplicationPoint> negative_replication;  // negatives x m
  std::vector<ReplicationPoint> joint_replication;     // both sets x m
};

inline ContrastInstance replicate(const ContrastInstance& inst,
                                  std::size_t pos_times,
                                  std::size_t neg_times) {
  ContrastInstance out;
  out.anchor = inst.anchor;
  for (std::size_t r = 0; r < pos_times; ++r) {
    out.positives.insert(out.positives.end(), inst.positives.begin(),
                         inst.positives.end());
    out.positive_scores.insert(out.positive_scores.end(),
                               inst.positive_scores.begin(),
                               inst.positive_scores.end());
  }
  for (std::size_t r = 0; r < neg_times; ++r) {
    out.negatives.insert(out.negatives.end(), inst.negatives.begin(),
                         inst.negatives.end());
  }
  return out;
}

inline BalanceReport balance_diagnostic(
    ContrastKind kind, const ContrastInstance& inst, double tau,
    std::span<const std::size_t> multipliers) {
  const auto value = [&](const ContrastInstance& x) {
    return kind == ContrastKind::pne ? pne_group_loss(x, tau)
                                     : nce_loss(x, tau);
  };
  const InstanceGradient g =
      kind == ContrastKind::pne ? grad_pne(inst, tau) : grad_nce(inst, tau);
  BalanceReport out;
  out.positive_grad_sum = g.positive_sum();
  out.negative_grad_sum = g.negative_sum();
  for (std::size_t m : multipliers) {
    if (m < 1) throw InvalidInput("balance_diagnostic: multiplier must be >= 1");
    out.negative_replication.push_back({m, value(replicate(inst, 1, m))});
    out.joint_replication.push_back({m, value(replicate(inst, m, m))});
  }
  return out;
}

// ---------------------------------------------------------------------------
// Seeded random instances
// ---------------------------------------------------------------------------

inline Vec random_unit_vector(Rng& rng, std::size_t dim) {
  std::normal_distribution<double> normal(0.0, 1.0);
  Vec v(dim);
  for (;;) {
    for (double& x : v) x = normal(rng);
    if (squared_norm(v) > 1e-12) return l2_normalize(v);
  }
}

/// Anchor, positives and negatives uniform on the unit sphere. Scores, when
/// requested, are uniform in [0.05, 1].
inline ContrastInstance random_instance(Rng& rng, std::size_t dim,
                                        std::size_t positives,
                                        std::size_t negatives,
                                        bool with_scores) {
  ContrastInstance inst;
  inst.anchor = random_unit_vector(rng, dim);
  for (std::size_t j = 0; j < positives; ++j) {
    inst.positives.push_back(random_unit_vector(rng, dim));
  }
  for (std::size_t k = 0; k < negatives; ++k) {
    inst.negatives.push_back(random_unit_vector(rng, dim));
  }
  if (with_scores) {
    std::uniform_real_distribution<double> score(0.05, 1.0);
    for (std::size_t j = 0; j < positives; ++j) {
      inst.positive_scores.push_back(score(rng));
    }
  }
  return inst;
}

/// Gradient-check results for each loss over seeded random instances.
struct GradientSuiteReport {
  GradCheckReport nce;
  GradCheckReport pne_basic;
  GradCheckReport pne_weighted;
  GradCheckReport cross_entropy;

  double max_relative_error() const {
    return std::max({nce.max_relative_error, pne_basic.max_relative_error,
                     pne_weighted.max_relative_error,
                     cross_entropy.max_relative_error});
  }
  bool passed(double tolerance) const {
    return nce.passed(tolerance) && pne_basic.passed(tolerance) &&
           pne_weighted.passed(tolerance) && cross_entropy.passed(tolerance);
  }
};

/// Runs `trials` random instances per loss. Dimensions cycle through
/// {2, 8, 32}, set sizes through {1, 5, 64} and temperatures through
/// {0.3, 1, 5}.
inline GradientSuiteReport run_gradient_suite(std::size_t trials,
                                              std::uint64_t seed,
                                              double h = 1e-5) {
  static constexpr std::size_t kDims[] = {2, 8, 32};
  static constexpr std::size_t kSizes[] = {1, 5, 64};
  static constexpr double kTaus[] = {0.3, 1.0, 5.0};

  GradientSuiteReport out;
  out.nce.step = out.pne_basic.step = out.pne_weighted.step =
      out.cross_entropy.step = h;
  Rng rng = make_rng(seed, "gradient_suite");
  for (std::size_t t = 0; t < trials; ++t) {
    const std::size_t dim = kDims[t % 3];
    const std::size_t n_pos = kSizes[(t / 3) % 3];
    const std::size_t n_neg = kSizes[(t / 9) % 3];
    const double tau = kTaus[(t / 27) % 3];

    const ContrastInstance plain = random_instance(rng, dim, n_pos, n_neg, false);
    out.nce.merge(finite_diff_check(
        [tau](const CheckInstance& x) { return nce_loss(x, tau); },
        grad_nce(plain, tau), plain, h));
    out.pne_basic.merge(finite_diff_check(
        [tau](const CheckInstance& x) { return pne_basic(x, tau); },
        grad_pne_basic(plain, tau), plain, h));

    const ContrastInstance scored =
        random_instance(rng, dim, n_pos, n_neg, true);
    out.pne_weighted.merge(finite_diff_check(
        [tau](const CheckInstance& x) { return pne_group_loss(x, tau); },
        grad_pne(scored, tau), scored, h));

    std::normal_distribution<double> normal(0.0, 3.0);
    const std::size_t classes = 2 + t % 7;
    Vec logits(classes);
    for (double& x : logits) x = normal(rng);
    out.cross_entropy.merge(finite_diff_check_ce(
        logits, static_cast<ClassId>(uniform_index(rng, classes)), h));
  }
  return out;
}

}  // namespace pne

#endif  // PNE_GRADIENTS_HPP_
