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

// Pixel-grid primitives: per-pixel embeddings, class maps and score maps,
// plus the small vector kernels (softmax, normalization, dot product) that
// every loss is written in terms of.
//
// Pixels are addressed by a row-major id, `row * width + col`. All loss
// reductions iterate in ascending id order so results are reproducible.

#ifndef PNE_CORE_HPP_
#define PNE_CORE_HPP_

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <numeric>
#include <span>
#include <string>
#include <vector>

#include "pne/error.hpp"

namespace pne {

using PixelId = std::size_t;
using ClassId = int;
using Vec = std::vector<double>;

inline constexpr double kUnitNormTolerance = 1e-9;
inline constexpr double kProbabilitySumTolerance = 1e-9;

// ---------------------------------------------------------------------------
// Vector kernels
// ---------------------------------------------------------------------------

/// Numerically stable softmax (max is subtracted before exponentiation).
inline Vec softmax(std::span<const double> logits) {
  if (logits.empty()) throw InvalidInput("softmax: empty logits");
  for (double x : logits) {
    if (!std::isfinite(x)) throw InvalidInput("softmax: non-finite logit");
  }
  const double top = *std::max_element(logits.begin(), logits.end());
  Vec out(logits.size());
  double total = 0.0;
  for (std::size_t i = 0; i < logits.size(); ++i) {
    out[i] = std::exp(logits[i] - top);
    total += out[i];
  }
  for (double& p : out) p /= total;
  return out;
}

inline double squared_norm(std::span<const double> v) {
  double s = 0.0;
  for (double x : v) s += x * x;
  return s;
}

inline Vec l2_normalize(std::span<const double> v) {
  const double norm = std::sqrt(squared_norm(v));
  if (!(norm > 0.0) || !std::isfinite(norm)) {
    throw DegenerateInput("l2_normalize: vector has zero or non-finite norm");
  }
  Vec out(v.begin(), v.end());
  for (double& x : out) x /= norm;
  return out;
}

/// Cosine similarity of two unit vectors.
inline double dot_similarity(std::span<const double> a,
                             std::span<const double> b) {
  if (a.size() != b.size()) throw InvalidInput("dot_similarity: size mismatch");
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

/// Index of the largest entry; ties go to the lowest index.
inline ClassId argmax(std::span<const double> v) {
  return static_cast<ClassId>(std::max_element(v.begin(), v.end()) - v.begin());
}

// ---------------------------------------------------------------------------
// Pixel maps
// ---------------------------------------------------------------------------

/// One D-dimensional vector per pixel, stored contiguously.
class EmbeddingMap {
 public:
  EmbeddingMap(std::size_t height, std::size_t width, std::size_t dim)
      : EmbeddingMap(height, width, dim, Vec(height * width * dim, 0.0)) {}

  EmbeddingMap(std::size_t height, std::size_t width, std::size_t dim,
               Vec data)
      : height_(height), width_(width), dim_(dim), data_(std::move(data)) {
    if (dim_ < 2) throw InvalidInput("EmbeddingMap: dim must be >= 2");
    if (height_ * width_ < 1) throw InvalidInput("EmbeddingMap: empty grid");
    if (data_.size() != height_ * width_ * dim_) {
      throw InvalidInput("EmbeddingMap: data size does not match shape");
    }
  }

  std::size_t height() const noexcept { return height_; }
  std::size_t width() const noexcept { return width_; }
  std::size_t dim() const noexcept { return dim_; }
  std::size_t pixels() const noexcept { return height_ * width_; }

  std::span<const double> operator[](PixelId p) const {
    return {data_.data() + p * dim_, dim_};
  }
  std::span<double> operator[](PixelId p) {
    return {data_.data() + p * dim_, dim_};
  }

  const Vec& data() const noexcept { return data_; }

  /// Rescales every pixel vector to unit length.
  void normalize() {
    for (PixelId p = 0; p < pixels(); ++p) {
      const Vec unit = l2_normalize((*this)[p]);
      std::copy(unit.begin(), unit.end(), (*this)[p].begin());
    }
  }

  bool is_normalized(double tol = kUnitNormTolerance) const {
    for (PixelId p = 0; p < pixels(); ++p) {
      if (std::abs(std::sqrt(squared_norm((*this)[p])) - 1.0) > tol) {
        return false;
      }
    }
    return true;
  }

 private:
  std::size_t height_;
  std::size_t width_;
  std::size_t dim_;
  Vec data_;
};

/// Per-pixel probability vectors over `classes` classes.
class ScoreMap {
 public:
  ScoreMap(std::size_t height, std::size_t width, std::size_t classes,
           Vec probabilities)
      : height_(height),
        width_(width),
        classes_(classes),
        data_(std::move(probabilities)) {
    if (classes_ < 1) throw InvalidInput("ScoreMap: no classes");
    if (height_ * width_ < 1) throw InvalidInput("ScoreMap: empty grid");
    if (data_.size() != height_ * width_ * classes_) {
      throw InvalidInput("ScoreMap: data size does not match shape");
    }
    for (PixelId p = 0; p < pixels(); ++p) {
      double total = 0.0;
      for (double v : (*this)[p]) {
        if (!(v >= 0.0)) throw InvalidInput("ScoreMap: negative probability");
        total += v;
      }
      if (std::abs(total - 1.0) > kProbabilitySumTolerance) {
        throw InvalidInput("ScoreMap: probabilities do not sum to 1 at pixel " +
                           std::to_string(p));
      }
    }
  }

  /// Applies softmax to each pixel's logits.
  static ScoreMap from_logits(std::size_t height, std::size_t width,
                              std::size_t classes,
                              std::span<const double> logits) {
    if (logits.size() != height * width * classes) {
      throw InvalidInput("ScoreMap::from_logits: size does not match shape");
    }
    Vec probs;
    probs.reserve(logits.size());
    for (std::size_t p = 0; p < height * width; ++p) {
      const Vec s = softmax(logits.subspan(p * classes, classes));
      probs.insert(probs.end(), s.begin(), s.end());
    }
    return ScoreMap(height, width, classes, std::move(probs));
  }

  std::size_t height() const noexcept { return height_; }
  std::size_t width() const noexcept { return width_; }
  std::size_t classes() const noexcept { return classes_; }
  std::size_t pixels() const noexcept { return height_ * width_; }

  std::span<const double> operator[](PixelId p) const {
    return {data_.data() + p * classes_, classes_};
  }

  double probability(PixelId p, ClassId c) const {
    return data_[p * classes_ + static_cast<std::size_t>(c)];
  }

 private:
  std::size_t height_;
  std::size_t width_;
  std::size_t classes_;
  Vec data_;
};

/// Grid of class ids. `Tag` keeps ground truth and predictions apart at the
/// type level while sharing one implementation.
template <typename Tag>
class ClassMap {
 public:
  ClassMap(std::size_t height, std::size_t width, std::size_t classes,
           std::vector<ClassId> ids)
      : height_(height), width_(width), classes_(classes), ids_(std::move(ids)) {
    if (height_ * width_ < 1) throw InvalidInput("ClassMap: empty grid");
    if (ids_.size() != height_ * width_) {
      throw InvalidInput("ClassMap: data size does not match shape");
    }
    for (ClassId c : ids_) {
      if (c < 0 || static_cast<std::size_t>(c) >= classes_) {
        throw InvalidInput("ClassMap: class id " + std::to_string(c) +
                           " outside [0, " + std::to_string(classes_) + ")");
      }
    }
  }

  std::size_t height() const noexcept { return height_; }
  std::size_t width() const noexcept { return width_; }
  std::size_t classes() const noexcept { return classes_; }
  std::size_t pixels() const noexcept { return height_ * width_; }

  ClassId operator[](PixelId p) const { return ids_[p]; }
  const std::vector<ClassId>& ids() const noexcept { return ids_; }

  template <typename OtherTag>
  bool same_shape(const ClassMap<OtherTag>& other) const noexcept {
    return height_ == other.height() && width_ == other.width();
  }

  friend bool operator==(const ClassMap&, const ClassMap&) = default;

 private:
  std::size_t height_;
  std::size_t width_;
  std::size_t classes_;
  std::vector<ClassId> ids_;
};

struct GroundTruthTag {};
struct PredictionTag {};

using LabelMap = ClassMap<GroundTruthTag>;
using PredictionMap = ClassMap<PredictionTag>;

inline PredictionMap argmax_predict(const ScoreMap& scores) {
  std::vector<ClassId> ids(scores.pixels());
  for (PixelId p = 0; p < scores.pixels(); ++p) ids[p] = argmax(scores[p]);
  return PredictionMap(scores.height(), scores.width(), scores.classes(),
                       std::move(ids));
}

}  // namespace pne

#endif  // PNE_CORE_HPP_
