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

// Segmentation and embedding-quality metrics.
//
//   alignment  = E ||u - v||^2 over same-class pixel pairs     (in [0, 4])
//   uniformity = log E exp(-2 ||u - v||^2) over distinct pairs (in [-8, 0])
//
// Lower is better for both. When the number of pairs exceeds the budget,
// pairs are drawn uniformly with replacement from a seeded stream.

#ifndef PNE_METRICS_HPP_
#define PNE_METRICS_HPP_

#include <cmath>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "json.hpp"
#include "pne/core.hpp"
#include "pne/random.hpp"

namespace pne {

inline constexpr std::size_t kDefaultPairBudget = 100000;

struct IouResult {
  std::vector<std::optional<double>> per_class;  // nullopt: class absent
  double mean = 0.0;
};

/// IoU_c = TP / (TP + FP + FN). Classes absent from both maps are left out
/// of the mean.
inline IouResult miou(const PredictionMap& preds, const LabelMap& labels,
                      std::size_t classes) {
  if (!labels.same_shape(preds)) {
    throw InvalidInput("miou: prediction and label shapes differ");
  }
  std::vector<std::size_t> tp(classes, 0), fp(classes, 0), fn(classes, 0);
  for (PixelId p = 0; p < labels.pixels(); ++p) {
    const auto l = static_cast<std::size_t>(labels[p]);
    const auto q = static_cast<std::size_t>(preds[p]);
    if (l >= classes || q >= classes) {
      throw InvalidInput("miou: class id outside [0, classes)");
    }
    if (l == q) {
      ++tp[l];
    } else {
      ++fp[q];
      ++fn[l];
    }
  }
  IouResult out;
  out.per_class.resize(classes);
  std::size_t present = 0;
  double total = 0.0;
  for (std::size_t c = 0; c < classes; ++c) {
    const std::size_t denom = tp[c] + fp[c] + fn[c];
    if (denom == 0) continue;
    out.per_class[c] = static_cast<double>(tp[c]) / static_cast<double>(denom);
    total += *out.per_class[c];
    ++present;
  }
  out.mean = present == 0 ? 0.0 : total / static_cast<double>(present);
  return out;
}

namespace detail {

inline double squared_distance(std::span<const double> a,
                               std::span<const double> b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += (a[i] - b[i]) * (a[i] - b[i]);
  return s;
}

/// Two distinct members of `ids`, uniformly.
inline std::pair<PixelId, PixelId> random_pair(const std::vector<PixelId>& ids,
                                               Rng& rng) {
  const std::size_t i = uniform_index(rng, ids.size());
  std::size_t j = uniform_index(rng, ids.size() - 1);
  if (j >= i) ++j;
  return {ids[i], ids[j]};
}

inline double pair_count(std::size_t n) {
  return 0.5 * static_cast<double>(n) * static_cast<double>(n - (n > 0));
}

}  // namespace detail

/// Mean squared distance between same-class embeddings. nullopt when no
/// class has two pixels.
inline std::optional<double> alignment(const EmbeddingMap& emb,
                                       const LabelMap& labels,
                                       std::size_t pair_budget = kDefaultPairBudget,
                                       std::uint64_t seed = 0) {
  if (emb.pixels() != labels.pixels()) {
    throw InvalidInput("alignment: embedding and label sizes differ");
  }
  std::vector<std::vector<PixelId>> by_class(labels.classes());
  for (PixelId p = 0; p < labels.pixels(); ++p) {
    by_class[static_cast<std::size_t>(labels[p])].push_back(p);
  }
  double total_pairs = 0.0;
  for (const auto& ids : by_class) total_pairs += detail::pair_count(ids.size());
  if (total_pairs == 0.0) return std::nullopt;

  if (total_pairs <= static_cast<double>(pair_budget)) {
    double sum = 0.0;
    for (const auto& ids : by_class) {
      for (std::size_t i = 0; i < ids.size(); ++i) {
        for (std::size_t j = i + 1; j < ids.size(); ++j) {
          sum += detail::squared_distance(emb[ids[i]], emb[ids[j]]);
        }
      }
    }
    return sum / total_pairs;
  }

  // Pick a class with probability proportional to its pair count, then a
  // uniform pair inside it.
  std::vector<double> weights;
  for (const auto& ids : by_class) weights.push_back(detail::pair_count(ids.size()));
  std::discrete_distribution<std::size_t> pick_class(weights.begin(), weights.end());
  Rng rng = make_rng(seed, "alignment");
  double sum = 0.0;
  for (std::size_t s = 0; s < pair_budget; ++s) {
    const auto [a, b] = detail::random_pair(by_class[pick_class(rng)], rng);
    sum += detail::squared_distance(emb[a], emb[b]);
  }
  return sum / static_cast<double>(pair_budget);
}

/// log of the mean Gaussian potential exp(-2 ||u - v||^2) over distinct
/// pixel pairs. nullopt with fewer than two pixels.
inline std::optional<double> uniformity(const EmbeddingMap& emb,
                                        std::size_t pair_budget = kDefaultPairBudget,
                                        std::uint64_t seed = 0) {
  const std::size_t n = emb.pixels();
  if (n < 2) return std::nullopt;
  const double total_pairs = detail::pair_count(n);
  double sum = 0.0;
  double count = 0.0;
  if (total_pairs <= static_cast<double>(pair_budget)) {
    for (PixelId i = 0; i < n; ++i) {
      for (PixelId j = i + 1; j < n; ++j) {
        sum += std::exp(-2.0 * detail::squared_distance(emb[i], emb[j]));
      }
    }
    count = total_pairs;
  } else {
    std::vector<PixelId> all(n);
    std::iota(all.begin(), all.end(), PixelId{0});
    Rng rng = make_rng(seed, "uniformity");
    for (std::size_t s = 0; s < pair_budget; ++s) {
      const auto [a, b] = detail::random_pair(all, rng);
      sum += std::exp(-2.0 * detail::squared_distance(emb[a], emb[b]));
    }
    count = static_cast<double>(pair_budget);
  }
  return std::log(sum / count);
}

// ---------------------------------------------------------------------------
// Embedding dumps
// ---------------------------------------------------------------------------

/// Writes `to` atomically: the content goes to a sibling temporary that is
/// renamed over the target only once fully written.
inline void write_file_atomically(const std::filesystem::path& to,
                                  const std::string& content) {
  std::filesystem::path tmp = to;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot open " + tmp.string() + " for writing");
    out << content;
    out.flush();
    if (!out) throw IoError("failed writing " + tmp.string());
  }
  std::error_code ec;
  std::filesystem::rename(tmp, to, ec);
  if (ec) {
    std::filesystem::remove(tmp, ec);
    throw IoError("cannot move " + tmp.string() + " to " + to.string());
  }
}

/// CSV with header `pixel,label,pred,e0,...,e{D-1}`, one row per pixel,
/// coordinates printed with 9 significant digits. Returns the row count.
inline std::size_t dump_embeddings(const EmbeddingMap& emb,
                                   const LabelMap& labels,
                                   const PredictionMap& preds,
                                   const std::filesystem::path& path) {
  if (emb.pixels() != labels.pixels() || !labels.same_shape(preds)) {
    throw InvalidInput("dump_embeddings: inconsistent shapes");
  }
  std::string text = "pixel,label,pred";
  for (std::size_t d = 0; d < emb.dim(); ++d) text += ",e" + std::to_string(d);
  text += '\n';
  char buf[32];
  for (PixelId p = 0; p < emb.pixels(); ++p) {
    text += std::to_string(p) + ',' + std::to_string(labels[p]) + ',' +
            std::to_string(preds[p]);
    for (double x : emb[p]) {
      std::snprintf(buf, sizeof buf, ",%.9g", x);
      text += buf;
    }
    text += '\n';
  }
  write_file_atomically(path, text);
  return emb.pixels();
}

struct EmbeddingRow {
  PixelId pixel = 0;
  ClassId label = 0;
  ClassId pred = 0;
  Vec embedding;
};

inline std::vector<EmbeddingRow> read_embeddings(
    const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path.string());
  std::string line;
  std::getline(in, line);
  if (line.rfind("pixel,label,pred", 0) != 0) {
    throw IoError(path.string() + ": missing embedding header");
  }
  std::vector<EmbeddingRow> rows;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::istringstream fields(line);
    std::string cell;
    EmbeddingRow row;
    std::getline(fields, cell, ',');
    row.pixel = std::stoull(cell);
    std::getline(fields, cell, ',');
    row.label = std::stoi(cell);
    std::getline(fields, cell, ',');
    row.pred = std::stoi(cell);
    while (std::getline(fields, cell, ',')) row.embedding.push_back(std::stod(cell));
    rows.push_back(std::move(row));
  }
  return rows;
}

// ---------------------------------------------------------------------------
// Experiment reports
// ---------------------------------------------------------------------------

struct EvalRecord {
  std::size_t iteration = 0;
  double miou = 0.0;
  std::vector<std::optional<double>> per_class_iou;
  std::optional<double> alignment;
  std::optional<double> uniformity;
  // Loss components of the most recent training step (absent before the
  // first step).
  std::optional<double> ce_loss;
  std::optional<double> contrast_loss;
  std::optional<double> total_loss;
};

struct ExperimentReport {
  nlohmann::ordered_json config;  // resolved configuration, echoed verbatim
  std::vector<EvalRecord> records;  // ascending iteration
  double wall_clock_seconds = 0.0;  // not part of the serialized report

  const EvalRecord& final_record() const { return records.back(); }
};

namespace detail {

inline nlohmann::ordered_json optional_json(const std::optional<double>& v) {
  return v ? nlohmann::ordered_json(*v) : nlohmann::ordered_json(nullptr);
}

}  // namespace detail

inline nlohmann::ordered_json to_json(const EvalRecord& r) {
  nlohmann::ordered_json j;
  j["iteration"] = r.iteration;
  j["miou"] = r.miou;
  auto& per_class = j["per_class_iou"] = nlohmann::ordered_json::array();
  for (const auto& v : r.per_class_iou) per_class.push_back(detail::optional_json(v));
  j["alignment"] = detail::optional_json(r.alignment);
  j["uniformity"] = detail::optional_json(r.uniformity);
  j["ce_loss"] = detail::optional_json(r.ce_loss);
  j["contrast_loss"] = detail::optional_json(r.contrast_loss);
  j["total_loss"] = detail::optional_json(r.total_loss);
  return j;
}

/// Stable key order. Wall-clock time is left out so that identical runs
/// serialize to identical bytes.
inline nlohmann::ordered_json to_json(const ExperimentReport& report) {
  nlohmann::ordered_json j;
  j["config"] = report.config;
  auto& records = j["records"] = nlohmann::ordered_json::array();
  for (const auto& r : report.records) records.push_back(to_json(r));
  j["final"] = report.records.empty() ? nlohmann::ordered_json(nullptr)
                                      : to_json(report.records.back());
  return j;
}

}  // namespace pne

#endif  // PNE_METRICS_HPP_
