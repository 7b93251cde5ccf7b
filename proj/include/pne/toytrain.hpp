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

// Desk-scale training harness.
//
// Scenes are grids of pixels whose raw feature vectors come from
// class-conditional Gaussians. Pairs of classes can be made confusable: a
// fraction of their pixels is drawn from a component shared by both classes,
// split only by a small offset along the last feature axis.
//
// The model is per-pixel:
//
//   hidden     = tanh(W_f x + b_f)                 shared extractor
//   logits     = W_s hidden + b_s                  segmentation head
//   embedding  = normalize(W_2 tanh(W_1 hidden + b_1) + b_2)
//                                                  projection head
//
// so contrastive gradients reach the segmentation head only through the
// shared hidden representation. Training is SGD with momentum, classic
// weight decay and the poly learning-rate schedule.

#ifndef PNE_TOYTRAIN_HPP_
#define PNE_TOYTRAIN_HPP_

#include <Eigen/Dense>

#include <chrono>
#include <cmath>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "pne/core.hpp"
#include "pne/losses.hpp"
#include "pne/metrics.hpp"
#include "pne/random.hpp"
#include "pne/sampling.hpp"

namespace pne {

// ---------------------------------------------------------------------------
// Scenes
// ---------------------------------------------------------------------------

struct SceneSpec {
  std::size_t height = 32;
  std::size_t width = 32;
  std::size_t classes = 4;
  std::size_t feature_dim = 6;
  std::vector<Vec> means;    // classes x feature_dim
  std::vector<Vec> stddevs;  // classes x feature_dim, diagonal covariance
  std::vector<std::pair<ClassId, ClassId>> confusion_pairs;
  double hard_fraction = 0.0;    // share of a paired class drawn from the shared component
  double hard_separation = 0.0;  // offset between the paired classes along the last axis
  double hard_stddev = 0.1;
  std::size_t regions = 12;  // Voronoi cells in the label layout
  std::uint64_t seed = 0;

  void validate() const {
    if (classes < 2) throw InvalidInput("scene: need at least 2 classes");
    if (height * width < 1) throw InvalidInput("scene: empty grid");
    if (feature_dim < 1) throw InvalidInput("scene: feature_dim must be >= 1");
    if (regions < 1) throw InvalidInput("scene: regions must be >= 1");
    if (means.size() != classes || stddevs.size() != classes) {
      throw InvalidInput("scene: need one mean and stddev per class");
    }
    for (std::size_t c = 0; c < classes; ++c) {
      if (means[c].size() != feature_dim || stddevs[c].size() != feature_dim) {
        throw InvalidInput("scene: mean/stddev length differs from feature_dim");
      }
      for (std::size_t d = 0; d < feature_dim; ++d) {
        if (!std::isfinite(means[c][d])) {
          throw InvalidInput("scene: non-finite mean");
        }
        if (!(stddevs[c][d] >= 0.0) || !std::isfinite(stddevs[c][d])) {
          throw InvalidInput("scene: covariance must be finite and non-negative");
        }
      }
    }
    if (!(hard_stddev >= 0.0) || !std::isfinite(hard_stddev)) {
      throw InvalidInput("scene: covariance must be finite and non-negative");
    }
    if (!(hard_fraction >= 0.0 && hard_fraction <= 1.0)) {
      throw InvalidInput("scene: hard_fraction outside [0, 1]");
    }
    if (!std::isfinite(hard_separation)) {
      throw InvalidInput("scene: non-finite hard_separation");
    }
    for (const auto& [a, b] : confusion_pairs) {
      if (a < 0 || b < 0 || static_cast<std::size_t>(a) >= classes ||
          static_cast<std::size_t>(b) >= classes || a == b) {
        throw InvalidInput("scene: invalid confusion pair");
      }
    }
  }
};

/// Class c centred on `separation * e_c` with isotropic noise; the trailing
/// feature axes carry noise only.
inline SceneSpec isotropic_scene(std::size_t classes, std::size_t feature_dim,
                                 double separation, double noise) {
  SceneSpec spec;
  spec.classes = classes;
  spec.feature_dim = feature_dim;
  for (std::size_t c = 0; c < classes; ++c) {
    Vec mean(feature_dim, 0.0);
    mean[c % feature_dim] = separation;
    spec.means.push_back(mean);
    spec.stddevs.emplace_back(feature_dim, noise);
  }
  return spec;
}

/// Four well separated classes with no noise.
inline SceneSpec separable_scene() { return isotropic_scene(4, 6, 3.0, 0.0); }

/// Four classes in two confusable pairs, (0, 1) and (2, 3). Easy pixels are
/// clean; one pixel in ten of each class comes from the shared component,
/// split by 0.3 against a spread of 0.08. The benchmark used for comparing
/// loss modes.
inline SceneSpec confusable_scene() {
  SceneSpec spec = isotropic_scene(4, 6, 2.0, 0.2);
  spec.confusion_pairs = {{0, 1}, {2, 3}};
  spec.hard_fraction = 0.1;
  spec.hard_separation = 0.3;
  spec.hard_stddev = 0.08;
  return spec;
}

struct Scene {
  Eigen::MatrixXd raw;  // feature_dim x pixels; column p is pixel p
  LabelMap labels;
};

namespace detail {

inline std::vector<ClassId> voronoi_layout(const SceneSpec& spec, Rng& rng) {
  std::uniform_real_distribution<double> uy(0.0, static_cast<double>(spec.height));
  std::uniform_real_distribution<double> ux(0.0, static_cast<double>(spec.width));
  std::vector<std::pair<double, double>> sites(spec.regions);
  for (auto& s : sites) s = {uy(rng), ux(rng)};
  std::vector<ClassId> ids(spec.height * spec.width);
  for (std::size_t r = 0; r < spec.height; ++r) {
    for (std::size_t c = 0; c < spec.width; ++c) {
      std::size_t best = 0;
      double best_d = std::numeric_limits<double>::infinity();
      for (std::size_t i = 0; i < sites.size(); ++i) {
        const double dy = static_cast<double>(r) + 0.5 - sites[i].first;
        const double dx = static_cast<double>(c) + 0.5 - sites[i].second;
        const double d = dy * dy + dx * dx;
        if (d < best_d) {
          best_d = d;
          best = i;
        }
      }
      ids[r * spec.width + c] = static_cast<ClassId>(best % spec.classes);
    }
  }
  return ids;
}

}  // namespace detail

inline Scene gen_scene(const SceneSpec& spec, Rng& rng) {
  spec.validate();
  std::vector<ClassId> ids = detail::voronoi_layout(spec, rng);
  const std::size_t n = ids.size();
  const std::size_t f = spec.feature_dim;

  std::vector<std::optional<ClassId>> partner(spec.classes);
  for (const auto& [a, b] : spec.confusion_pairs) {
    if (!partner[static_cast<std::size_t>(a)]) partner[static_cast<std::size_t>(a)] = b;
    if (!partner[static_cast<std::size_t>(b)]) partner[static_cast<std::size_t>(b)] = a;
  }

  std::normal_distribution<double> normal(0.0, 1.0);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  Eigen::MatrixXd raw(f, n);
  for (std::size_t p = 0; p < n; ++p) {
    const auto c = static_cast<std::size_t>(ids[p]);
    const bool hard = partner[c] && unit(rng) < spec.hard_fraction;
    if (hard) {
      const auto o = static_cast<std::size_t>(*partner[c]);
      // Lower class id sits on the positive side of the split axis.
      const double side = c < o ? 0.5 : -0.5;
      for (std::size_t d = 0; d < f; ++d) {
        double centre = 0.5 * (spec.means[c][d] + spec.means[o][d]);
        if (d + 1 == f) centre += side * spec.hard_separation;
        raw(static_cast<Eigen::Index>(d), static_cast<Eigen::Index>(p)) =
            centre + spec.hard_stddev * normal(rng);
      }
    } else {
      for (std::size_t d = 0; d < f; ++d) {
        raw(static_cast<Eigen::Index>(d), static_cast<Eigen::Index>(p)) =
            spec.means[c][d] + spec.stddevs[c][d] * normal(rng);
      }
    }
  }
  return Scene{std::move(raw),
               LabelMap(spec.height, spec.width, spec.classes, std::move(ids))};
}

/// Scene drawn from the spec's own seed.
inline Scene gen_scene(const SceneSpec& spec) {
  Rng rng(derive_seed(spec.seed, "scene"));
  return gen_scene(spec, rng);
}

// ---------------------------------------------------------------------------
// Model
// ---------------------------------------------------------------------------

struct ModelDims {
  std::size_t raw = 6;
  std::size_t hidden = 32;
  std::size_t proj_hidden = 32;
  std::size_t embed = 16;
  std::size_t classes = 4;
};

/// A contiguous slice of the flat parameter vector.
struct ParamGroup {
  std::string name;
  Eigen::Index offset = 0;
  Eigen::Index rows = 0;
  Eigen::Index cols = 0;

  Eigen::Index size() const { return rows * cols; }
};

/// All parameters live in one flat vector so the optimizer and the
/// finite-difference checks can treat them uniformly.
class ToyModel {
 public:
  using MatrixView = Eigen::Map<Eigen::MatrixXd>;
  using ConstMatrixView = Eigen::Map<const Eigen::MatrixXd>;

  explicit ToyModel(ModelDims dims) : dims_(dims) {
    if (dims.raw < 1 || dims.hidden < 1 || dims.proj_hidden < 1 ||
        dims.embed < 2 || dims.classes < 2) {
      throw InvalidInput("ToyModel: invalid dimensions");
    }
    const auto add = [this](std::string name, std::size_t rows, std::size_t cols) {
      const Eigen::Index offset = groups_.empty()
                                      ? 0
                                      : groups_.back().offset + groups_.back().size();
      groups_.push_back({std::move(name), offset, static_cast<Eigen::Index>(rows),
                         static_cast<Eigen::Index>(cols)});
    };
    add("feature.weight", dims.hidden, dims.raw);
    add("feature.bias", dims.hidden, 1);
    add("seg.weight", dims.classes, dims.hidden);
    add("seg.bias", dims.classes, 1);
    add("proj1.weight", dims.proj_hidden, dims.hidden);
    add("proj1.bias", dims.proj_hidden, 1);
    add("proj2.weight", dims.embed, dims.proj_hidden);
    add("proj2.bias", dims.embed, 1);
    params_ = Eigen::VectorXd::Zero(groups_.back().offset + groups_.back().size());
  }

  /// Weights ~ N(0, 1/fan_in), biases zero.
  static ToyModel random(ModelDims dims, Rng& rng) {
    ToyModel m(dims);
    std::normal_distribution<double> normal(0.0, 1.0);
    for (const ParamGroup& g : m.groups_) {
      if (g.cols == 1) continue;
      const double scale = 1.0 / std::sqrt(static_cast<double>(g.cols));
      for (Eigen::Index i = 0; i < g.size(); ++i) {
        m.params_[g.offset + i] = scale * normal(rng);
      }
    }
    return m;
  }

  const ModelDims& dims() const noexcept { return dims_; }
  const std::vector<ParamGroup>& groups() const noexcept { return groups_; }
  Eigen::VectorXd& params() noexcept { return params_; }
  const Eigen::VectorXd& params() const noexcept { return params_; }

  enum Slot { kFeatureW, kFeatureB, kSegW, kSegB, kProj1W, kProj1B, kProj2W, kProj2B };

  ConstMatrixView view(Slot s) const { return view(params_, s); }

  /// Reinterprets any vector with the parameter layout (e.g. a gradient).
  ConstMatrixView view(const Eigen::VectorXd& flat, Slot s) const {
    const ParamGroup& g = groups_[s];
    return ConstMatrixView(flat.data() + g.offset, g.rows, g.cols);
  }
  MatrixView view(Eigen::VectorXd& flat, Slot s) const {
    const ParamGroup& g = groups_[s];
    return MatrixView(flat.data() + g.offset, g.rows, g.cols);
  }

 private:
  ModelDims dims_;
  std::vector<ParamGroup> groups_;
  Eigen::VectorXd params_;
};

struct TrunkActivations {
  Eigen::MatrixXd hidden;  // hidden x pixels
  Eigen::MatrixXd logits;  // classes x pixels
};

struct ProjectionActivations {
  Eigen::MatrixXd inner;       // proj_hidden x m, after tanh
  Eigen::MatrixXd raw;         // embed x m, before normalization
  Eigen::VectorXd norms;       // length m
  Eigen::MatrixXd embeddings;  // embed x m, unit columns
};

namespace detail {

/// Elementwise tanh through one vectorized exp: sign(x) (1 - t) / (1 + t)
/// with t = exp(-2|x|).
inline Eigen::MatrixXd tanh_of(const Eigen::MatrixXd& x) {
  const Eigen::ArrayXXd t = (-2.0 * x.array().abs()).exp();
  return (x.array().sign() * (1.0 - t) / (1.0 + t)).matrix();
}

}  // namespace detail

inline TrunkActivations forward_trunk(const ToyModel& model,
                                      const Eigen::MatrixXd& raw) {
  if (static_cast<std::size_t>(raw.rows()) != model.dims().raw) {
    throw InvalidInput("forward: raw feature dimension does not match model");
  }
  TrunkActivations a;
  a.hidden = detail::tanh_of((model.view(ToyModel::kFeatureW) * raw).colwise() +
                             model.view(ToyModel::kFeatureB).col(0));
  a.logits = (model.view(ToyModel::kSegW) * a.hidden).colwise() +
             model.view(ToyModel::kSegB).col(0);
  return a;
}

/// Projects hidden columns to unit embeddings. A zero projection maps to the
/// first basis vector so outputs are always unit length.
inline ProjectionActivations project(const ToyModel& model,
                                     const Eigen::MatrixXd& hidden) {
  ProjectionActivations p;
  p.inner = detail::tanh_of((model.view(ToyModel::kProj1W) * hidden).colwise() +
                            model.view(ToyModel::kProj1B).col(0));
  p.raw = (model.view(ToyModel::kProj2W) * p.inner).colwise() +
          model.view(ToyModel::kProj2B).col(0);
  p.norms = p.raw.colwise().norm().transpose();
  p.embeddings = p.raw;
  for (Eigen::Index j = 0; j < p.raw.cols(); ++j) {
    if (p.norms[j] > 0.0) {
      p.embeddings.col(j) /= p.norms[j];
    } else {
      p.embeddings.col(j).setZero();
      p.embeddings(0, j) = 1.0;
    }
  }
  return p;
}

namespace detail {

/// Softmax of every column, max-shifted.
inline Eigen::MatrixXd softmax_columns(const Eigen::MatrixXd& logits) {
  if (!logits.allFinite()) throw InvalidInput("softmax: non-finite logit");
  Eigen::MatrixXd e =
      (logits.rowwise() - logits.colwise().maxCoeff()).array().exp().matrix();
  return e.array().rowwise() / e.colwise().sum().array();
}

inline Vec column_softmax(const Eigen::MatrixXd& logits) {
  const Eigen::MatrixXd probs = softmax_columns(logits);
  return Vec(probs.data(), probs.data() + probs.size());
}

inline EmbeddingMap to_embedding_map(const Eigen::MatrixXd& emb,
                                     std::size_t height, std::size_t width) {
  return EmbeddingMap(height, width, static_cast<std::size_t>(emb.rows()),
                      Vec(emb.data(), emb.data() + emb.size()));
}

}  // namespace detail

struct ForwardResult {
  ScoreMap scores;
  EmbeddingMap embeddings;
};

/// Full per-pixel evaluation of a height x width grid.
inline ForwardResult forward(const ToyModel& model, const Eigen::MatrixXd& raw,
                             std::size_t height, std::size_t width) {
  if (static_cast<std::size_t>(raw.cols()) != height * width) {
    throw InvalidInput("forward: pixel count does not match grid");
  }
  const TrunkActivations trunk = forward_trunk(model, raw);
  const ProjectionActivations proj = project(model, trunk.hidden);
  return ForwardResult{
      ScoreMap(height, width, model.dims().classes,
               detail::column_softmax(trunk.logits)),
      detail::to_embedding_map(proj.embeddings, height, width)};
}

// ---------------------------------------------------------------------------
// Training
// ---------------------------------------------------------------------------

/// base * (1 - iter/total)^0.9
inline double poly_lr(double base, std::size_t iter, std::size_t total) {
  if (iter > total) throw InvalidInput("poly_lr: iteration beyond total");
  if (total == 0) return base;
  return base * std::pow(1.0 - static_cast<double>(iter) /
                                   static_cast<double>(total),
                         0.9);
}

enum class LossMode { ce, ce_nce, ce_pne };

inline std::string to_string(LossMode m) {
  switch (m) {
    case LossMode::ce: return "ce";
    case LossMode::ce_nce: return "ce+nce";
    case LossMode::ce_pne: return "ce+pne";
  }
  return "?";
}

/// How CE+NCE builds its sets: `conventional` pools anchors by label and
/// draws negatives from every other label; `grouped` reuses the PNE sets.
enum class NceSampling { conventional, grouped };

inline std::string to_string(NceSampling s) {
  return s == NceSampling::conventional ? "conventional" : "grouped";
}

struct TrainConfig {
  double base_lr = 0.01;
  double momentum = 0.9;
  double weight_decay = 0.0005;
  std::size_t iterations = 2000;
  std::size_t batch_size = 4;
  std::size_t eval_every = 200;
  std::size_t hidden_dim = 32;
  std::size_t proj_hidden_dim = 32;
  std::size_t embed_dim = 16;
  LossMode mode = LossMode::ce_pne;
  NceSampling nce_sampling = NceSampling::conventional;
  ContrastConfig contrast;
  SamplingConfig sampling;

  void validate() const {
    if (!(base_lr > 0.0) || !std::isfinite(base_lr)) {
      throw InvalidInput("base_lr must be positive");
    }
    if (!(momentum >= 0.0 && momentum < 1.0)) {
      throw InvalidInput("momentum must be in [0, 1)");
    }
    if (!(weight_decay >= 0.0) || !std::isfinite(weight_decay)) {
      throw InvalidInput("weight_decay must be non-negative");
    }
    if (batch_size < 1) throw InvalidInput("batch_size must be >= 1");
    if (eval_every < 1) throw InvalidInput("eval_every must be >= 1");
    if (hidden_dim < 1 || proj_hidden_dim < 1 || embed_dim < 2) {
      throw InvalidInput("model dimensions too small");
    }
    contrast.validate();
    sampling.validate();
  }

  ModelDims dims(const SceneSpec& spec) const {
    return ModelDims{spec.feature_dim, hidden_dim, proj_hidden_dim, embed_dim,
                     spec.classes};
  }
};

/// Sample sets for each scene of a batch.
using BatchSamples = std::vector<std::vector<SampleSets>>;

struct Objective {
  double ce = 0.0;
  double contrast = 0.0;  // mean over scenes of the grouped contrastive loss
  double total = 0.0;     // ce + alpha * contrast
  Eigen::VectorXd grad;
  BatchSamples samples;
};

inline std::vector<TrunkActivations> forward_batch(const ToyModel& model,
                                                   std::span<const Scene> batch) {
  std::vector<TrunkActivations> out;
  out.reserve(batch.size());
  for (const Scene& scene : batch) out.push_back(forward_trunk(model, scene.raw));
  return out;
}

/// Draws anchors and samples for every scene from the model's current
/// predictions. The stream for scene b at iteration t is derived from
/// (sampling seed, t, b).
inline BatchSamples sample_batch(const ToyModel& model,
                                 std::span<const Scene> batch,
                                 std::span<const TrunkActivations> trunks,
                                 const TrainConfig& cfg, std::size_t iter) {
  BatchSamples out;
  for (std::size_t b = 0; b < batch.size(); ++b) {
    const Scene& scene = batch[b];
    const ScoreMap scores(scene.labels.height(), scene.labels.width(),
                          model.dims().classes,
                          detail::column_softmax(trunks[b].logits));
    SamplingConfig sc = cfg.sampling;
    sc.seed = derive_seed(cfg.sampling.seed, iter, b);
    const PredictionMap preds = argmax_predict(scores);
    out.push_back(cfg.mode == LossMode::ce_nce &&
                          cfg.nce_sampling == NceSampling::conventional
                      ? build_label_grouped_sets(scene.labels, preds, scores, sc)
                      : build_sample_sets(scene.labels, preds, scores, sc));
  }
  return out;
}

inline BatchSamples sample_batch(const ToyModel& model,
                                 std::span<const Scene> batch,
                                 const TrainConfig& cfg, std::size_t iter) {
  return sample_batch(model, batch, forward_batch(model, batch), cfg, iter);
}

/// CE over every pixel of the batch plus alpha times the per-scene grouped
/// contrastive loss averaged over scenes. In CE mode no samples are used.
/// With alpha = 0 the contrastive value is still reported but contributes
/// nothing to the gradient.
inline Objective evaluate_objective(const ToyModel& model,
                                    std::span<const Scene> batch,
                                    std::span<const TrunkActivations> trunks,
                                    const TrainConfig& cfg,
                                    const BatchSamples& samples,
                                    bool with_grad = true) {
  const ModelDims& dims = model.dims();
  const bool contrastive = cfg.mode != LossMode::ce;
  if (contrastive && samples.size() != batch.size()) {
    throw InvalidInput("evaluate_objective: one sample list per scene required");
  }
  std::size_t total_pixels = 0;
  for (const Scene& s : batch) total_pixels += s.labels.pixels();
  const double ce_scale = 1.0 / static_cast<double>(total_pixels);
  const double contrast_scale = 1.0 / static_cast<double>(batch.size());
  const double alpha = cfg.contrast.alpha;

  Objective out;
  if (contrastive) out.samples = samples;
  if (with_grad) out.grad = Eigen::VectorXd::Zero(model.params().size());

  for (std::size_t b = 0; b < batch.size(); ++b) {
    const Scene& scene = batch[b];
    const TrunkActivations& trunk = trunks[b];
    const Eigen::Index n = trunk.logits.cols();

    // CE = log-sum-exp(z) - z_y per pixel; its gradient is softmax - onehot.
    const Eigen::MatrixXd probs = detail::softmax_columns(trunk.logits);
    const Eigen::RowVectorXd shift = trunk.logits.colwise().maxCoeff();
    const Eigen::RowVectorXd lse =
        shift.array() +
        (trunk.logits.rowwise() - shift).array().exp().colwise().sum().log();
    Eigen::MatrixXd d_logits;
    if (with_grad) d_logits = ce_scale * probs;
    double scene_ce = 0.0;
    for (Eigen::Index p = 0; p < n; ++p) {
      const auto y = static_cast<Eigen::Index>(scene.labels[static_cast<PixelId>(p)]);
      scene_ce += lse[p] - trunk.logits(y, p);
      if (with_grad) d_logits(y, p) -= ce_scale;
    }
    out.ce += ce_scale * scene_ce;

    Eigen::MatrixXd d_hidden;
    if (with_grad) d_hidden = model.view(ToyModel::kSegW).transpose() * d_logits;

    if (contrastive && !samples[b].empty()) {
      // Only pixels that take part in a pair need an embedding.
      std::vector<PixelId> used;
      for (const SampleSets& s : samples[b]) {
        used.insert(used.end(), s.anchors.begin(), s.anchors.end());
        used.insert(used.end(), s.positives.begin(), s.positives.end());
        used.insert(used.end(), s.negatives.begin(), s.negatives.end());
      }
      std::sort(used.begin(), used.end());
      used.erase(std::unique(used.begin(), used.end()), used.end());

      const auto m = static_cast<Eigen::Index>(used.size());
      Eigen::MatrixXd hidden_used(trunk.hidden.rows(), m);
      for (Eigen::Index j = 0; j < m; ++j) {
        hidden_used.col(j) = trunk.hidden.col(static_cast<Eigen::Index>(used[j]));
      }
      const ProjectionActivations proj = project(model, hidden_used);

      EmbeddingMap emb(scene.labels.height(), scene.labels.width(), dims.embed);
      for (Eigen::Index j = 0; j < m; ++j) {
        auto row = emb[used[static_cast<std::size_t>(j)]];
        for (std::size_t d = 0; d < dims.embed; ++d) {
          row[d] = proj.embeddings(static_cast<Eigen::Index>(d), j);
        }
      }
      const LossResult lr = cfg.mode == LossMode::ce_pne
                                ? pne_full_loss(samples[b], emb, cfg.contrast)
                                : nce_full_loss(samples[b], emb, cfg.contrast);
      out.contrast += contrast_scale * lr.value;

      if (with_grad && alpha != 0.0) {
        const double scale = alpha * contrast_scale;
        Eigen::MatrixXd d_emb = Eigen::MatrixXd::Zero(dims.embed, m);
        for (Eigen::Index j = 0; j < m; ++j) {
          const auto it = lr.gradients.find(used[static_cast<std::size_t>(j)]);
          if (it == lr.gradients.end()) continue;
          for (std::size_t d = 0; d < dims.embed; ++d) {
            d_emb(static_cast<Eigen::Index>(d), j) = scale * it->second[d];
          }
        }
        // d(u/|u|)/du applied to the incoming gradient.
        Eigen::MatrixXd d_raw(dims.embed, m);
        for (Eigen::Index j = 0; j < m; ++j) {
          if (proj.norms[j] > 0.0) {
            const auto e = proj.embeddings.col(j);
            d_raw.col(j) = (d_emb.col(j) - e * e.dot(d_emb.col(j))) / proj.norms[j];
          } else {
            d_raw.col(j).setZero();
          }
        }
        model.view(out.grad, ToyModel::kProj2W) += d_raw * proj.inner.transpose();
        model.view(out.grad, ToyModel::kProj2B) += d_raw.rowwise().sum();
        const Eigen::MatrixXd d_inner =
            ((model.view(ToyModel::kProj2W).transpose() * d_raw).array() *
             (1.0 - proj.inner.array().square()))
                .matrix();
        model.view(out.grad, ToyModel::kProj1W) += d_inner * hidden_used.transpose();
        model.view(out.grad, ToyModel::kProj1B) += d_inner.rowwise().sum();
        const Eigen::MatrixXd d_hidden_used =
            model.view(ToyModel::kProj1W).transpose() * d_inner;
        for (Eigen::Index j = 0; j < m; ++j) {
          d_hidden.col(static_cast<Eigen::Index>(used[static_cast<std::size_t>(j)])) +=
              d_hidden_used.col(j);
        }
      }
    }

    if (with_grad) {
      model.view(out.grad, ToyModel::kSegW) += d_logits * trunk.hidden.transpose();
      model.view(out.grad, ToyModel::kSegB) += d_logits.rowwise().sum();
      const Eigen::MatrixXd d_pre =
          (d_hidden.array() * (1.0 - trunk.hidden.array().square())).matrix();
      model.view(out.grad, ToyModel::kFeatureW) += d_pre * scene.raw.transpose();
      model.view(out.grad, ToyModel::kFeatureB) += d_pre.rowwise().sum();
    }
  }
  out.total = contrastive ? out.ce + alpha * out.contrast : out.ce;
  return out;
}

inline Objective evaluate_objective(const ToyModel& model,
                                    std::span<const Scene> batch,
                                    const TrainConfig& cfg,
                                    const BatchSamples& samples,
                                    bool with_grad = true) {
  return evaluate_objective(model, batch, forward_batch(model, batch), cfg,
                            samples, with_grad);
}

/// SGD with momentum and classic (coupled) weight decay:
///   g <- grad + wd * theta;  v <- mu * v + g;  theta <- theta - lr * v
class SgdMomentum {
 public:
  void step(Eigen::VectorXd& params, const Eigen::VectorXd& grad, double lr,
            double momentum, double weight_decay) {
    if (velocity_.size() != params.size()) {
      velocity_ = Eigen::VectorXd::Zero(params.size());
    }
    velocity_ = momentum * velocity_ + (grad + weight_decay * params);
    params -= lr * velocity_;
  }

  const Eigen::VectorXd& velocity() const noexcept { return velocity_; }

 private:
  Eigen::VectorXd velocity_;
};

struct StepResult {
  double ce = 0.0;
  double contrast = 0.0;
  double total = 0.0;
  double learning_rate = 0.0;
};

/// One optimization step at iteration `iter` (0-based) of `cfg.iterations`.
inline StepResult train_step(ToyModel& model, SgdMomentum& optimizer,
                             std::span<const Scene> batch,
                             const TrainConfig& cfg, std::size_t iter) {
  const std::vector<TrunkActivations> trunks = forward_batch(model, batch);
  const BatchSamples samples = cfg.mode == LossMode::ce
                                   ? BatchSamples{}
                                   : sample_batch(model, batch, trunks, cfg, iter);
  const Objective obj = evaluate_objective(model, batch, trunks, cfg, samples);
  if (!std::isfinite(obj.total) || !obj.grad.allFinite()) {
    throw TrainingDivergence(iter, "non-finite objective or gradient");
  }
  const double lr = poly_lr(cfg.base_lr, iter, cfg.iterations);
  optimizer.step(model.params(), obj.grad, lr, cfg.momentum, cfg.weight_decay);
  return StepResult{obj.ce, obj.contrast, obj.total, lr};
}

// ---------------------------------------------------------------------------
// Experiments
// ---------------------------------------------------------------------------

/// Training batch for iteration `iter`: fresh scenes drawn from streams
/// keyed by (scene seed, iter, index).
inline std::vector<Scene> training_batch(const SceneSpec& spec,
                                         std::size_t batch_size,
                                         std::size_t iter) {
  std::vector<Scene> batch;
  batch.reserve(batch_size);
  for (std::size_t b = 0; b < batch_size; ++b) {
    Rng rng(derive_seed(derive_seed(spec.seed, "train"), iter, b));
    batch.push_back(gen_scene(spec, rng));
  }
  return batch;
}

inline Scene evaluation_scene(const SceneSpec& spec) {
  Rng rng(derive_seed(spec.seed, "eval"));
  return gen_scene(spec, rng);
}

inline EvalRecord evaluate(const ToyModel& model, const Scene& scene,
                           std::size_t iteration, std::uint64_t metric_seed) {
  const ForwardResult fwd =
      forward(model, scene.raw, scene.labels.height(), scene.labels.width());
  const IouResult iou =
      miou(argmax_predict(fwd.scores), scene.labels, model.dims().classes);
  EvalRecord r;
  r.iteration = iteration;
  r.miou = iou.mean;
  r.per_class_iou = iou.per_class;
  r.alignment = alignment(fwd.embeddings, scene.labels, kDefaultPairBudget, metric_seed);
  r.uniformity = uniformity(fwd.embeddings, kDefaultPairBudget, metric_seed);
  return r;
}

/// Trains one model in `cfg.mode` and evaluates it on a held-out scene at
/// iteration 0, every `eval_every` iterations and after the last step.
/// Model initialization and sampling streams derive from the sampling seed;
/// scene streams from the scene seed. The trained model is copied to
/// `final_model` when given.
inline ExperimentReport run_experiment(const TrainConfig& cfg,
                                       const SceneSpec& spec,
                                       ToyModel* final_model = nullptr) {
  cfg.validate();
  spec.validate();
  const auto started = std::chrono::steady_clock::now();
  const std::uint64_t seed = cfg.sampling.seed;

  Rng init_rng = make_rng(seed, "model_init");
  ToyModel model = ToyModel::random(cfg.dims(spec), init_rng);
  SgdMomentum optimizer;
  const Scene eval_scene = evaluation_scene(spec);
  const std::uint64_t metric_seed = derive_seed(seed, "metrics");

  ExperimentReport report;
  report.records.push_back(evaluate(model, eval_scene, 0, metric_seed));
  for (std::size_t iter = 0; iter < cfg.iterations; ++iter) {
    const std::vector<Scene> batch = training_batch(spec, cfg.batch_size, iter);
    const StepResult step = train_step(model, optimizer, batch, cfg, iter);
    const std::size_t done = iter + 1;
    if (done % cfg.eval_every == 0 || done == cfg.iterations) {
      EvalRecord r = evaluate(model, eval_scene, done, metric_seed);
      r.ce_loss = step.ce;
      r.contrast_loss = step.contrast;
      r.total_loss = step.total;
      report.records.push_back(std::move(r));
    }
  }
  if (final_model != nullptr) *final_model = model;
  report.wall_clock_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - started)
          .count();
  return report;
}

}  // namespace pne

#endif  // PNE_TOYTRAIN_HPP_
