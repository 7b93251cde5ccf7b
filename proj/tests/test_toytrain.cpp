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

#include <cmath>
#include <vector>

#include <gtest/gtest.h>

#include "pne/config.hpp"
#include "pne/gradients.hpp"
#include "pne/toytrain.hpp"

namespace pne {
namespace {

SceneSpec small_scene(std::uint64_t seed, std::size_t side = 12) {
  SceneSpec spec = confusable_scene();
  spec.height = spec.width = side;
  spec.regions = 6;
  spec.hard_fraction = 0.3;
  spec.seed = seed;
  return spec;
}

TrainConfig short_config(LossMode mode, std::size_t iterations) {
  TrainConfig cfg;
  cfg.mode = mode;
  cfg.iterations = iterations;
  cfg.eval_every = 10;
  cfg.batch_size = 2;
  return cfg;
}

TEST(Scene, Deterministic) {
  const SceneSpec spec = small_scene(4);
  const Scene a = gen_scene(spec);
  const Scene b = gen_scene(spec);
  EXPECT_EQ(a.labels, b.labels);
  EXPECT_EQ(a.raw, b.raw);
}

TEST(Scene, RejectsBadCovariance) {
  SceneSpec spec = small_scene(0);
  spec.stddevs[1][2] = -0.1;
  EXPECT_THROW(gen_scene(spec), InvalidInput);
  spec.stddevs[1][2] = std::nan("");
  EXPECT_THROW(gen_scene(spec), InvalidInput);
}

TEST(Scene, ConfusableDefaultsMatchConfig) {
  SceneSpec from_config = SceneConfig{}.to_spec(0);
  const SceneSpec direct = confusable_scene();
  EXPECT_EQ(from_config.means, direct.means);
  EXPECT_EQ(from_config.stddevs, direct.stddevs);
  EXPECT_EQ(from_config.confusion_pairs, direct.confusion_pairs);
  EXPECT_EQ(from_config.hard_fraction, direct.hard_fraction);
  EXPECT_EQ(from_config.hard_separation, direct.hard_separation);
  EXPECT_EQ(from_config.hard_stddev, direct.hard_stddev);
  EXPECT_EQ(from_config.height * from_config.width, 1024u);
}

TEST(Model, ZeroWeightsGiveUniformScores) {
  const ToyModel model(ModelDims{});
  const Scene scene = gen_scene(small_scene(1, 4));
  const ForwardResult f = forward(model, scene.raw, 4, 4);
  for (PixelId p = 0; p < 16; ++p) {
    for (ClassId c = 0; c < 4; ++c) EXPECT_DOUBLE_EQ(f.scores.probability(p, c), 0.25);
  }
  EXPECT_TRUE(f.embeddings.is_normalized());
}

TEST(Model, SinglePixelMatchesGrid) {
  Rng rng(2);
  const ToyModel model = ToyModel::random(ModelDims{}, rng);
  const Scene scene = gen_scene(small_scene(2, 6));
  const ForwardResult grid = forward(model, scene.raw, 6, 6);
  for (PixelId p : {PixelId{0}, PixelId{17}, PixelId{35}}) {
    const Eigen::MatrixXd one = scene.raw.col(static_cast<Eigen::Index>(p));
    const ForwardResult single = forward(model, one, 1, 1);
    for (ClassId c = 0; c < 4; ++c) {
      EXPECT_NEAR(single.scores.probability(0, c), grid.scores.probability(p, c), 1e-15);
    }
    for (std::size_t d = 0; d < 16; ++d) {
      EXPECT_NEAR(single.embeddings[0][d], grid.embeddings[p][d], 1e-15);
    }
  }
}

TEST(Model, RandomWeightsGiveFiniteUnitOutputs) {
  Rng rng(3);
  const ToyModel model = ToyModel::random(ModelDims{}, rng);
  const Scene scene = gen_scene(small_scene(3));
  const ForwardResult f = forward(model, scene.raw, 12, 12);
  EXPECT_TRUE(f.embeddings.is_normalized(1e-12));
  for (PixelId p = 0; p < f.scores.pixels(); ++p) {
    for (double x : f.scores[p]) EXPECT_TRUE(std::isfinite(x));
  }
}

TEST(Model, DimensionMismatch) {
  const ToyModel model(ModelDims{});
  EXPECT_THROW(forward(model, Eigen::MatrixXd::Zero(5, 4), 2, 2), InvalidInput);
  EXPECT_THROW(forward(model, Eigen::MatrixXd::Zero(6, 4), 3, 2), InvalidInput);
}

TEST(PolyLr, Examples) {
  EXPECT_EQ(poly_lr(0.01, 0, 100), 0.01);
  EXPECT_EQ(poly_lr(0.01, 100, 100), 0.0);
  EXPECT_NEAR(poly_lr(0.01, 50, 100), 0.0053589, 1e-7);
  EXPECT_THROW(poly_lr(0.01, 101, 100), InvalidInput);
  for (std::size_t i = 1; i <= 100; ++i) {
    EXPECT_LT(poly_lr(0.01, i, 100), poly_lr(0.01, i - 1, 100));
  }
}

TEST(Sgd, ZeroGradientAppliesOnlyWeightDecay) {
  Eigen::VectorXd theta(3);
  theta << 1.0, -2.0, 0.5;
  const Eigen::VectorXd before = theta;
  SgdMomentum opt;
  opt.step(theta, Eigen::VectorXd::Zero(3), 0.1, 0.9, 0.01);
  EXPECT_EQ(theta, (before - 0.1 * 0.01 * before).eval());
  const Eigen::VectorXd v1 = 0.01 * before;
  const Eigen::VectorXd after_one = theta;
  opt.step(theta, Eigen::VectorXd::Zero(3), 0.1, 0.9, 0.01);
  EXPECT_EQ(theta, (after_one - 0.1 * (0.9 * v1 + 0.01 * after_one)).eval());
}

// Central differences of the full objective with the sample sets held fixed.
void check_objective_gradient(LossMode mode) {
  const SceneSpec spec = small_scene(5, 8);
  TrainConfig cfg = short_config(mode, 10);
  Rng rng(6);
  ToyModel model = ToyModel::random(cfg.dims(spec), rng);
  const std::vector<Scene> batch = training_batch(spec, 2, 0);
  const BatchSamples samples =
      mode == LossMode::ce ? BatchSamples{} : sample_batch(model, batch, cfg, 0);
  if (mode != LossMode::ce) {
    std::size_t anchors = 0;
    for (const auto& s : samples) {
      for (const auto& set : s) anchors += set.anchors.size();
    }
    ASSERT_GT(anchors, 0u);
  }
  const Objective obj = evaluate_objective(model, batch, cfg, samples);
  const double h = 1e-5;
  for (const ParamGroup& g : model.groups()) {
    Vec analytic, numeric;
    for (Eigen::Index i = 0; i < g.size(); ++i) {
      double& x = model.params()[g.offset + i];
      const double saved = x;
      x = saved + h;
      const double up = evaluate_objective(model, batch, cfg, samples, false).total;
      x = saved - h;
      const double down = evaluate_objective(model, batch, cfg, samples, false).total;
      x = saved;
      numeric.push_back((up - down) / (2 * h));
      analytic.push_back(obj.grad[g.offset + i]);
    }
    EXPECT_LT(relative_error(analytic, numeric), 1e-5) << g.name;
  }
}

TEST(Objective, FiniteDifferenceCe) { check_objective_gradient(LossMode::ce); }
TEST(Objective, FiniteDifferenceCePne) { check_objective_gradient(LossMode::ce_pne); }
TEST(Objective, FiniteDifferenceCeNce) { check_objective_gradient(LossMode::ce_nce); }

TEST(Objective, ZeroAlphaContributesNothing) {
  const SceneSpec spec = small_scene(7, 8);
  TrainConfig pne = short_config(LossMode::ce_pne, 10);
  pne.contrast.alpha = 0.0;
  TrainConfig ce = short_config(LossMode::ce, 10);
  Rng rng(8);
  const ToyModel model = ToyModel::random(pne.dims(spec), rng);
  const std::vector<Scene> batch = training_batch(spec, 2, 0);
  const Objective a = evaluate_objective(model, batch, pne, sample_batch(model, batch, pne, 0));
  const Objective b = evaluate_objective(model, batch, ce, {});
  EXPECT_EQ(a.total, b.total);
  EXPECT_EQ(a.grad, b.grad);
}

TEST(Experiment, ZeroIterationsGiveSingleRecord) {
  TrainConfig cfg = short_config(LossMode::ce_pne, 0);
  const ExperimentReport r = run_experiment(cfg, small_scene(9));
  ASSERT_EQ(r.records.size(), 1u);
  EXPECT_EQ(r.records[0].iteration, 0u);
  EXPECT_FALSE(r.records[0].total_loss.has_value());
}

TEST(Experiment, AlphaZeroReproducesCeBitExactly) {
  TrainConfig ce = short_config(LossMode::ce, 30);
  TrainConfig pne = short_config(LossMode::ce_pne, 30);
  pne.contrast.alpha = 0.0;
  ToyModel a(ce.dims(small_scene(10))), b = a;
  const ExperimentReport ra = run_experiment(ce, small_scene(10), &a);
  const ExperimentReport rb = run_experiment(pne, small_scene(10), &b);
  EXPECT_EQ(a.params(), b.params());
  ASSERT_EQ(ra.records.size(), rb.records.size());
  for (std::size_t i = 0; i < ra.records.size(); ++i) {
    EXPECT_EQ(ra.records[i].miou, rb.records[i].miou);
    EXPECT_EQ(ra.records[i].ce_loss, rb.records[i].ce_loss);
    EXPECT_EQ(ra.records[i].total_loss, rb.records[i].total_loss);
  }
}

TEST(Experiment, CeFitsSeparableScene) {
  SceneSpec spec = separable_scene();
  spec.height = spec.width = 16;
  spec.seed = 11;
  TrainConfig cfg = short_config(LossMode::ce, 300);
  cfg.base_lr = 0.05;
  const ExperimentReport r = run_experiment(cfg, spec);
  EXPECT_NEAR(r.final_record().miou, 1.0, 1e-12);
}

TEST(Experiment, MergedPairIsNearChance) {
  SceneSpec spec = small_scene(12, 16);
  spec.means[1] = spec.means[0];
  spec.hard_fraction = 0.0;
  TrainConfig cfg = short_config(LossMode::ce, 300);
  ToyModel model(cfg.dims(spec));
  const ExperimentReport r = run_experiment(cfg, spec, &model);
  const auto& iou = r.final_record().per_class_iou;
  ASSERT_TRUE(iou[0] && iou[1] && iou[2] && iou[3]);
  EXPECT_LT(*iou[0], 0.75);
  EXPECT_LT(*iou[1], 0.75);
  EXPECT_GT(*iou[2], 0.9);
  EXPECT_GT(*iou[3], 0.9);
}

TEST(Experiment, Deterministic) {
  const TrainConfig cfg = short_config(LossMode::ce_pne, 20);
  ToyModel a(cfg.dims(small_scene(13))), b = a;
  run_experiment(cfg, small_scene(13), &a);
  run_experiment(cfg, small_scene(13), &b);
  EXPECT_EQ(a.params(), b.params());
}

TEST(Experiment, RecordsAtEvalInterval) {
  const TrainConfig cfg = short_config(LossMode::ce_nce, 25);
  const ExperimentReport r = run_experiment(cfg, small_scene(14));
  std::vector<std::size_t> its;
  for (const EvalRecord& e : r.records) its.push_back(e.iteration);
  EXPECT_EQ(its, (std::vector<std::size_t>{0, 10, 20, 25}));
  for (const EvalRecord& e : r.records) {
    EXPECT_TRUE(std::isfinite(e.miou));
    ASSERT_TRUE(e.alignment.has_value());
    EXPECT_TRUE(std::isfinite(*e.alignment));
  }
}

}  // namespace
}  // namespace pne
