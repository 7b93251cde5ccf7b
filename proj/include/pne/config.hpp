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

// Experiment configuration as JSON.
//
// Keys are flat except for the "scene" object. Every key is optional;
// missing keys take the defaults below and unknown keys are rejected with
// their dotted path, e.g. "scene.colour".

#ifndef PNE_CONFIG_HPP_
#define PNE_CONFIG_HPP_

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "json.hpp"
#include "pne/error.hpp"
#include "pne/losses.hpp"
#include "pne/sampling.hpp"
#include "pne/toytrain.hpp"

namespace pne {

/// Scene generator parameters. Class c is centred on separation * e_c with
/// isotropic noise; confusion pairs share a component split along the last
/// feature axis. Defaults give the canonical confusable benchmark.
struct SceneConfig {
  std::size_t height = 32;
  std::size_t width = 32;
  std::size_t classes = 4;
  std::size_t feature_dim = 6;
  double separation = 2.0;
  double noise = 0.2;
  std::vector<std::pair<ClassId, ClassId>> confusion_pairs = {{0, 1}, {2, 3}};
  double hard_fraction = 0.1;
  double hard_separation = 0.3;
  double hard_stddev = 0.08;
  std::size_t regions = 12;

  SceneSpec to_spec(std::uint64_t seed) const {
    SceneSpec spec = isotropic_scene(classes, feature_dim, separation, noise);
    spec.height = height;
    spec.width = width;
    spec.confusion_pairs = confusion_pairs;
    spec.hard_fraction = hard_fraction;
    spec.hard_separation = hard_separation;
    spec.hard_stddev = hard_stddev;
    spec.regions = regions;
    spec.seed = seed;
    return spec;
  }

  friend bool operator==(const SceneConfig&, const SceneConfig&) = default;
};

struct RunConfig {
  std::uint64_t seed = 0;
  std::string out = "out";
  LossMode mode = LossMode::ce_pne;
  NceSampling nce_sampling = NceSampling::conventional;
  double temperature = 1.0;
  double alpha = 1.3;
  Weighting weighting = Weighting::per_positive_softmax;
  std::size_t anchor_cap = 200;
  std::size_t pairs_per_group = 64;
  double base_lr = 0.01;
  double momentum = 0.9;
  double weight_decay = 0.0005;
  std::size_t iterations = 2000;
  std::size_t batch_size = 4;
  std::size_t eval_every = 200;
  std::size_t hidden_dim = 32;
  std::size_t proj_hidden_dim = 32;
  std::size_t embed_dim = 16;
  SceneConfig scene;

  friend bool operator==(const RunConfig&, const RunConfig&) = default;

  /// Throws ConfigError naming the first invalid key.
  void validate() const;

  /// The global seed drives both the training streams and the scenes;
  /// individual streams are separated by name inside the trainer.
  TrainConfig train_config() const {
    TrainConfig t;
    t.base_lr = base_lr;
    t.momentum = momentum;
    t.weight_decay = weight_decay;
    t.iterations = iterations;
    t.batch_size = batch_size;
    t.eval_every = eval_every;
    t.hidden_dim = hidden_dim;
    t.proj_hidden_dim = proj_hidden_dim;
    t.embed_dim = embed_dim;
    t.mode = mode;
    t.nce_sampling = nce_sampling;
    t.contrast = ContrastConfig{temperature, alpha, weighting};
    t.sampling = SamplingConfig{anchor_cap, pairs_per_group, seed};
    return t;
  }

  SceneSpec scene_spec() const { return scene.to_spec(seed); }
};

// ---------------------------------------------------------------------------
// Enum names
// ---------------------------------------------------------------------------

inline LossMode parse_loss_mode(const std::string& s) {
  if (s == "ce") return LossMode::ce;
  if (s == "ce+nce") return LossMode::ce_nce;
  if (s == "ce+pne") return LossMode::ce_pne;
  throw ConfigError("mode", "expected one of ce, ce+nce, ce+pne; got '" + s + "'");
}

inline std::string to_string(Weighting w) {
  return w == Weighting::uniform ? "uniform" : "per_positive_softmax";
}

inline Weighting parse_weighting(const std::string& s) {
  if (s == "uniform") return Weighting::uniform;
  if (s == "per_positive_softmax") return Weighting::per_positive_softmax;
  throw ConfigError("weighting",
                    "expected uniform or per_positive_softmax; got '" + s + "'");
}

inline NceSampling parse_nce_sampling(const std::string& s) {
  if (s == "conventional") return NceSampling::conventional;
  if (s == "grouped") return NceSampling::grouped;
  throw ConfigError("nce_sampling",
                    "expected conventional or grouped; got '" + s + "'");
}

// ---------------------------------------------------------------------------
// Validation
// ---------------------------------------------------------------------------

namespace detail {

inline void require(bool ok, const char* key, const char* what) {
  if (!ok) throw ConfigError(key, what);
}

}  // namespace detail

inline void RunConfig::validate() const {
  using detail::require;
  require(temperature > 0.0 && std::isfinite(temperature), "temperature",
          "must be positive and finite");
  require(alpha >= 0.0 && std::isfinite(alpha), "alpha",
          "must be non-negative and finite");
  require(anchor_cap >= 1, "anchor_cap", "must be >= 1");
  require(pairs_per_group >= 1, "pairs_per_group", "must be >= 1");
  require(base_lr > 0.0 && std::isfinite(base_lr), "base_lr", "must be positive");
  require(momentum >= 0.0 && momentum < 1.0, "momentum", "must be in [0, 1)");
  require(weight_decay >= 0.0 && std::isfinite(weight_decay), "weight_decay",
          "must be non-negative");
  require(batch_size >= 1, "batch_size", "must be >= 1");
  require(eval_every >= 1, "eval_every", "must be >= 1");
  require(hidden_dim >= 1, "hidden_dim", "must be >= 1");
  require(proj_hidden_dim >= 1, "proj_hidden_dim", "must be >= 1");
  require(embed_dim >= 2, "embed_dim", "must be >= 2");
  require(!out.empty(), "out", "must not be empty");

  const SceneConfig& s = scene;
  require(s.height >= 1 && s.width >= 1, "scene.height", "grid must be non-empty");
  require(s.classes >= 2, "scene.classes", "must be >= 2");
  require(s.feature_dim >= 1, "scene.feature_dim", "must be >= 1");
  require(std::isfinite(s.separation), "scene.separation", "must be finite");
  require(s.noise >= 0.0 && std::isfinite(s.noise), "scene.noise",
          "covariance must be finite and non-negative");
  require(s.hard_fraction >= 0.0 && s.hard_fraction <= 1.0, "scene.hard_fraction",
          "must be in [0, 1]");
  require(std::isfinite(s.hard_separation), "scene.hard_separation",
          "must be finite");
  require(s.hard_stddev >= 0.0 && std::isfinite(s.hard_stddev),
          "scene.hard_stddev", "covariance must be finite and non-negative");
  require(s.regions >= 1, "scene.regions", "must be >= 1");
  for (const auto& [a, b] : s.confusion_pairs) {
    require(a >= 0 && b >= 0 && static_cast<std::size_t>(a) < s.classes &&
                static_cast<std::size_t>(b) < s.classes && a != b,
            "scene.confusion_pairs", "pair entries must be distinct class ids");
  }
}

// ---------------------------------------------------------------------------
// JSON
// ---------------------------------------------------------------------------

inline nlohmann::ordered_json to_json(const SceneConfig& s) {
  nlohmann::ordered_json j;
  j["height"] = s.height;
  j["width"] = s.width;
  j["classes"] = s.classes;
  j["feature_dim"] = s.feature_dim;
  j["separation"] = s.separation;
  j["noise"] = s.noise;
  auto& pairs = j["confusion_pairs"] = nlohmann::ordered_json::array();
  for (const auto& [a, b] : s.confusion_pairs) pairs.push_back({a, b});
  j["hard_fraction"] = s.hard_fraction;
  j["hard_separation"] = s.hard_separation;
  j["hard_stddev"] = s.hard_stddev;
  j["regions"] = s.regions;
  return j;
}

/// Stable key order; parse_config(to_json(c)) == c.
inline nlohmann::ordered_json to_json(const RunConfig& c) {
  nlohmann::ordered_json j;
  j["seed"] = c.seed;
  j["out"] = c.out;
  j["mode"] = to_string(c.mode);
  j["nce_sampling"] = to_string(c.nce_sampling);
  j["temperature"] = c.temperature;
  j["alpha"] = c.alpha;
  j["weighting"] = to_string(c.weighting);
  j["anchor_cap"] = c.anchor_cap;
  j["pairs_per_group"] = c.pairs_per_group;
  j["base_lr"] = c.base_lr;
  j["momentum"] = c.momentum;
  j["weight_decay"] = c.weight_decay;
  j["iterations"] = c.iterations;
  j["batch_size"] = c.batch_size;
  j["eval_every"] = c.eval_every;
  j["hidden_dim"] = c.hidden_dim;
  j["proj_hidden_dim"] = c.proj_hidden_dim;
  j["embed_dim"] = c.embed_dim;
  j["scene"] = to_json(c.scene);
  return j;
}

namespace detail {

/// Reads typed values out of one JSON object, remembering which keys were
/// consumed so the leftovers can be reported.
class ObjectReader {
 public:
  ObjectReader(const nlohmann::json& obj, std::string prefix)
      : obj_(obj), prefix_(std::move(prefix)) {
    if (!obj_.is_object()) {
      const std::string where =
          prefix_.empty() ? "<root>" : prefix_.substr(0, prefix_.size() - 1);
      throw ConfigError(where, "expected a JSON object");
    }
  }

  void number(const char* key, double& dst) {
    if (const auto* v = take(key)) {
      if (!v->is_number()) throw ConfigError(path(key), "expected a number");
      dst = v->get<double>();
    }
  }

  template <typename Unsigned>
  void count(const char* key, Unsigned& dst) {
    if (const auto* v = take(key)) {
      if (!v->is_number_integer() ||
          (!v->is_number_unsigned() && v->get<std::int64_t>() < 0)) {
        throw ConfigError(path(key), "expected a non-negative integer");
      }
      dst = v->get<Unsigned>();
    }
  }

  void string(const char* key, std::string& dst) {
    if (const auto* v = take(key)) {
      if (!v->is_string()) throw ConfigError(path(key), "expected a string");
      dst = v->get<std::string>();
    }
  }

  const nlohmann::json* take(const char* key) {
    seen_.insert(key);
    const auto it = obj_.find(key);
    return it == obj_.end() ? nullptr : &*it;
  }

  std::string path(const char* key) const { return prefix_ + key; }

  /// Throws on the first key that was never read.
  void reject_unknown() const {
    for (const auto& [key, value] : obj_.items()) {
      if (!seen_.contains(key)) throw ConfigError(prefix_ + key, "unknown key");
    }
  }

 private:
  const nlohmann::json& obj_;
  std::string prefix_;
  std::set<std::string> seen_;
};

inline SceneConfig parse_scene(const nlohmann::json& j) {
  SceneConfig s;
  ObjectReader r(j, "scene.");
  r.count("height", s.height);
  r.count("width", s.width);
  r.count("classes", s.classes);
  r.count("feature_dim", s.feature_dim);
  r.number("separation", s.separation);
  r.number("noise", s.noise);
  if (const auto* v = r.take("confusion_pairs")) {
    const std::string key = r.path("confusion_pairs");
    if (!v->is_array()) throw ConfigError(key, "expected an array of pairs");
    s.confusion_pairs.clear();
    for (const auto& pair : *v) {
      if (!pair.is_array() || pair.size() != 2 || !pair[0].is_number_integer() ||
          !pair[1].is_number_integer()) {
        throw ConfigError(key, "each pair must be [int, int]");
      }
      s.confusion_pairs.emplace_back(pair[0].get<ClassId>(), pair[1].get<ClassId>());
    }
  }
  r.number("hard_fraction", s.hard_fraction);
  r.number("hard_separation", s.hard_separation);
  r.number("hard_stddev", s.hard_stddev);
  r.count("regions", s.regions);
  r.reject_unknown();
  return s;
}

}  // namespace detail

/// Defaults, then every key present in `j`. Validates the result.
inline RunConfig parse_config(const nlohmann::json& j) {
  RunConfig c;
  detail::ObjectReader r(j, "");
  r.count("seed", c.seed);
  r.string("out", c.out);
  std::string text;
  if (r.take("mode")) {
    r.string("mode", text);
    c.mode = parse_loss_mode(text);
  }
  if (r.take("nce_sampling")) {
    r.string("nce_sampling", text);
    c.nce_sampling = parse_nce_sampling(text);
  }
  r.number("temperature", c.temperature);
  r.number("alpha", c.alpha);
  if (r.take("weighting")) {
    r.string("weighting", text);
    c.weighting = parse_weighting(text);
  }
  r.count("anchor_cap", c.anchor_cap);
  r.count("pairs_per_group", c.pairs_per_group);
  r.number("base_lr", c.base_lr);
  r.number("momentum", c.momentum);
  r.number("weight_decay", c.weight_decay);
  r.count("iterations", c.iterations);
  r.count("batch_size", c.batch_size);
  r.count("eval_every", c.eval_every);
  r.count("hidden_dim", c.hidden_dim);
  r.count("proj_hidden_dim", c.proj_hidden_dim);
  r.count("embed_dim", c.embed_dim);
  if (const auto* scene = r.take("scene")) c.scene = detail::parse_scene(*scene);
  r.reject_unknown();
  c.validate();
  return c;
}

inline RunConfig parse_config(const nlohmann::ordered_json& j) {
  return parse_config(nlohmann::json::parse(j.dump()));
}

/// Parses JSON text. Syntax errors are reported with their byte offset.
inline RunConfig parse_config_text(const std::string& text) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    throw ConfigError("<json>", "malformed JSON at byte " + std::to_string(e.byte));
  }
  return parse_config(j);
}

inline RunConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("--config", "cannot read " + path.string());
  std::stringstream buf;
  buf << in.rdbuf();
  return parse_config_text(buf.str());
}

}  // namespace pne

#endif  // PNE_CONFIG_HPP_
