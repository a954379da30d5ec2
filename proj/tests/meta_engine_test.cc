// Copyright 2026 The tttkit Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include "tttkit/meta_engine.h"

#include <gtest/gtest.h>

#include <cmath>
#include <cstring>
#include <set>

#include "test_support.h"
#include "tttkit/errors.h"
#include "tttkit/objectives.h"
#include "tttkit/shift_synthesis.h"

namespace tttkit {
namespace {

using testing::relative_error;
using testing::toy_inputs;
using testing::toy_model;

Model digits_model() {
  Rng rng(1);
  return Model::create(NetworkSpec::digits(), 0.75, rng);
}

std::size_t count_scalars(const Model& m, const std::vector<std::string>& names) {
  std::size_t n = 0;
  for (const auto& name : names) n += m.layout.find(name).size;
  return n;
}

TEST(Partition, LastLayerSelectsWidestShift) {
  const Model m = digits_model();
  const ParamPartition p = partition_parameters(m, "last");
  EXPECT_EQ(p.theta_beta.size(), 32u);
  EXPECT_EQ(p.beta_names, std::vector<std::string>{"block2.bn.beta"});
}

TEST(Partition, AllAndNone) {
  const Model m = digits_model();
  const ParamPartition all = partition_parameters(m, "all");
  EXPECT_EQ(all.theta_beta.size(), 8u + 16u + 32u);
  EXPECT_EQ(all.theta_gamma.size(), 2 * (8u + 16u + 32u));
  const ParamPartition none = partition_parameters(m, "none");
  EXPECT_TRUE(none.theta_beta.empty());
  EXPECT_EQ(none.theta_gamma.size(), 3 * (8u + 16u + 32u));
  EXPECT_EQ(partition_parameters(m, "0,2").theta_beta.size(), 8u + 32u);
  EXPECT_EQ(partition_parameters(m, "first").theta_beta.size(), 8u);
}

TEST(Partition, UnmatchedSelectorIsConfigError) {
  const Model m = digits_model();
  EXPECT_THROW(partition_parameters(m, "7"), ConfigError);
  EXPECT_THROW(partition_parameters(m, "middle"), ConfigError);
}

TEST(Partition, DisjointCoverOfEveryParameter) {
  const Model m = digits_model();
  for (const char* sel : {"last", "first", "all", "none", "1"}) {
    const ParamPartition p = partition_parameters(m, sel);
    std::vector<int> hits(m.params.size(), 0);
    for (auto i : p.theta_beta) ++hits[i];
    for (auto i : p.theta_gamma) ++hits[i];
    for (auto i : p.theta_frozen) ++hits[i];
    for (int h : hits) EXPECT_EQ(h, 1);
    // The adaptable set is exactly gamma, beta and alpha of every BN layer.
    std::set<std::string> adapt(p.beta_names.begin(), p.beta_names.end());
    adapt.insert(p.gamma_names.begin(), p.gamma_names.end());
    for (const auto& e : m.layout.entries()) {
      const bool bn = e.kind == ParamKind::kBnGamma || e.kind == ParamKind::kBnBeta || e.kind == ParamKind::kBnAlpha;
      EXPECT_EQ(adapt.count(e.name) == 1, bn) << e.name;
    }
    EXPECT_EQ(count_scalars(m, p.beta_names) + count_scalars(m, p.gamma_names) + count_scalars(m, p.frozen_names),
              m.params.size());
    // Idempotent.
    const ParamPartition again = partition_parameters(m, sel);
    EXPECT_EQ(again.theta_beta, p.theta_beta);
    EXPECT_EQ(again.gamma_names, p.gamma_names);
  }
}

TEST(AdaptationConfig, Validation) {
  AdaptationConfig cfg;
  EXPECT_NO_THROW(cfg.validate());
  cfg.k = 0;
  EXPECT_THROW(cfg.validate(), ConfigError);
  cfg = {};
  cfg.alpha_init = 1.5;
  EXPECT_THROW(cfg.validate(), ConfigError);
  cfg = {};
  cfg.lr = -1;
  EXPECT_THROW(cfg.validate(), ConfigError);
}

AdaptationConfig toy_config() {
  AdaptationConfig cfg;
  cfg.kappa = 0.5;
  cfg.lr = 0.2;
  cfg.alpha_lr = 0.1;
  cfg.layer_selector = "last";
  return cfg;
}

TEST(MetaTrainStep, NullStepLeavesParametersUnchanged) {
  Model m = toy_model(3);
  Rng rng(4);
  const Tensor<double> x = toy_inputs(rng, 8);
  AdaptationConfig cfg = toy_config();
  cfg.lr = 0;
  cfg.alpha_lr = 0;
  const ParamPartition part = partition_for(m, cfg);
  const AdaptedState st = meta_train_step(m, x, cfg, part);
  EXPECT_EQ(st.params, m.params);
  EXPECT_FALSE(st.skipped);
}

TEST(MetaTrainStep, RecordingWithStatefulOptimizerIsRejected) {
  Model m = toy_model(3);
  Rng rng(4);
  const Tensor<double> x = toy_inputs(rng, 4);
  const AdaptationConfig cfg = toy_config();
  NesterovSgd opt(m.params.size(), 0.9);
  InnerUpdateOptions o;
  o.record = true;
  o.optimizer = &opt;
  EXPECT_THROW(meta_train_step(m, x, cfg, partition_for(m, cfg), o), EngineError);
}

TEST(MetaTrainStep, FrozenParametersAndAlphaBounds) {
  Model m = toy_model(5);
  Rng rng(6);
  AdaptationConfig cfg = toy_config();
  cfg.lr = 20.0;  // large enough to hit the projection
  const ParamPartition part = partition_for(m, cfg);
  for (int step = 0; step < 10; ++step) {
    const AdaptedState st = meta_train_step(m, toy_inputs(rng, 8), cfg, part);
    for (auto i : part.theta_frozen) EXPECT_EQ(std::memcmp(&st.params[i], &m.params[i], sizeof(double)), 0);
    Model next = m;
    next.params = st.params;
    for (int l = 0; l < next.bn_layers(); ++l)
      for (double a : next.bn_param(l, ParamKind::kBnAlpha)) {
        EXPECT_GE(a, 0.0);
        EXPECT_LE(a, 1.0);
      }
    m.params = st.params;
  }
}

TEST(MetaTrainStep, ConvexPseudoLabelDescentWhenMinimaxDisabled) {
  // lam = 0 with every sample confident: both sub-steps descend the
  // pseudo-label cross-entropy.
  Model m = toy_model(12);
  Rng rng(13);
  const Tensor<double> x = toy_inputs(rng, 8);
  AdaptationConfig cfg = toy_config();
  cfg.lam = 0;
  cfg.kappa = 1e-6;
  cfg.lr = 1e-3;
  cfg.alpha_lr = 1e-3;
  const ParamPartition part = partition_for(m, cfg);
  const AdaptedState st = meta_train_step(m, x, cfg, part);
  EXPECT_EQ(st.split.lowconf_indices.size(), 0u);
  Model after = m;
  after.params = st.params;
  const double before_loss = pseudo_label_loss(predict_logits(m, x), st.split);
  const double after_loss = pseudo_label_loss(predict_logits(after, x), st.split);
  EXPECT_LE(after_loss, before_loss);
}

// Directional property of the adversarial pair, on low-confidence batches.
TEST(MetaTrainStep, BetaStepRaisesAndGammaStepLowersEntropy) {
  int beta_up = 0, gamma_down = 0;
  for (int seed = 0; seed < 100; ++seed) {
    Model m = toy_model(1000 + seed);
    Rng rng(2000 + seed);
    const Tensor<double> x = toy_inputs(rng, 8);
    AdaptationConfig cfg;
    cfg.lam = 1.0;
    cfg.kappa = 0.999999;
    cfg.lr = 1e-3;
    cfg.alpha_lr = 1e-3;
    cfg.layer_selector = "all";
    const double h0 = mean_entropy(predict_logits(m, x));
    ParamPartition beta_only = partition_for(m, cfg);
    ParamPartition gamma_only = beta_only;
    beta_only.theta_gamma.clear();
    gamma_only.theta_beta.clear();
    Model b = m, g = m;
    b.params = meta_train_step(m, x, cfg, beta_only).params;
    g.params = meta_train_step(m, x, cfg, gamma_only).params;
    beta_up += mean_entropy(predict_logits(b, x)) > h0 ? 1 : 0;
    gamma_down += mean_entropy(predict_logits(g, x)) < h0 ? 1 : 0;
  }
  EXPECT_GE(beta_up, 95);
  EXPECT_GE(gamma_down, 95);
}

double outer_loss_after_inner(const Model& m, const std::vector<double>& params, const Tensor<double>& xtr,
                              const Tensor<double>& xte, std::span<const int> y, const AdaptationConfig& cfg,
                              const ParamPartition& part, const ShiftDraw* shift) {
  Model probe = m;
  probe.params = params;
  InnerUpdateOptions o;
  o.shift = shift;
  const AdaptedState st = meta_train_step(probe, xtr, cfg, part, o);
  Model adapted = m;
  adapted.params = st.params;
  return cross_entropy_grad<double>(predict_logits(adapted, xte, {StatsMode::kMixed, shift}), y).loss;
}

struct MetaCase {
  Model model;
  Tensor<double> xtr, xte;
  std::vector<int> y;
  ShiftDraw shift;
};

MetaCase make_case(int seed) {
  MetaCase c{toy_model(500 + seed), {}, {}, {}, {}};
  Rng rng(600 + seed);
  c.xtr = toy_inputs(rng, 6);
  c.xte = toy_inputs(rng, 6);
  for (int i = 0; i < 6; ++i) c.y.push_back(static_cast<int>(uniform_index(rng, 3)));
  c.shift = draw_shift(0.5, c.model.spec.stem_channels(), rng);
  return c;
}

TEST(MetaGradient, SecondOrderMatchesFiniteDifferences) {
  for (int seed = 0; seed < 20; ++seed) {
    MetaCase c = make_case(seed);
    const AdaptationConfig cfg = toy_config();
    const ParamPartition part = partition_for(c.model, cfg);
    InnerUpdateOptions o;
    o.shift = &c.shift;
    o.record = true;
    const AdaptedState st = meta_train_step(c.model, c.xtr, cfg, part, o);
    const std::vector<double> g = meta_gradient(c.model, st, c.xte, c.y, cfg, part);
    double num = 0, den = 0;
    std::vector<double> p = c.model.params;
    for (std::size_t i : part.adaptable()) {
      const double keep = p[i];
      p[i] = keep + 1e-6;
      const double up = outer_loss_after_inner(c.model, p, c.xtr, c.xte, c.y, cfg, part, &c.shift);
      p[i] = keep - 1e-6;
      const double down = outer_loss_after_inner(c.model, p, c.xtr, c.xte, c.y, cfg, part, &c.shift);
      p[i] = keep;
      const double fd = (up - down) / 2e-6;
      num += (g[i] - fd) * (g[i] - fd);
      den += fd * fd;
    }
    EXPECT_LT(std::sqrt(num / den), 1e-4) << "seed " << seed;
    for (std::size_t i : part.theta_frozen) EXPECT_EQ(g[i], 0.0);
  }
}

TEST(MetaGradient, FirstOrderIsGradientAtAdaptedPoint) {
  MetaCase c = make_case(1);
  AdaptationConfig cfg = toy_config();
  cfg.second_order = false;
  const ParamPartition part = partition_for(c.model, cfg);
  const AdaptedState st = meta_train_step(c.model, c.xtr, cfg, part, {});
  const std::vector<double> g = meta_gradient(c.model, st, c.xte, c.y, cfg, part);
  std::vector<double> direct;
  loss_and_gradient<double>(
      c.model, st.params, c.xte, {}, [&](const Matrix<double>& l) { return cross_entropy_grad<double>(l, c.y); }, direct);
  for (std::size_t i : part.adaptable()) EXPECT_EQ(g[i], direct[i]);

  // And it differs from the exact second-order value for a non-trivial step.
  cfg.second_order = true;
  InnerUpdateOptions o;
  o.record = true;
  const AdaptedState rec = meta_train_step(c.model, c.xtr, cfg, part, o);
  const std::vector<double> exact = meta_gradient(c.model, rec, c.xte, c.y, cfg, part);
  double diff = 0;
  for (std::size_t i : part.adaptable()) diff = std::max(diff, std::abs(exact[i] - g[i]));
  EXPECT_GT(diff, 1e-6);
}

TEST(MetaGradient, VanishingInnerStepGivesPlainGradient) {
  MetaCase c = make_case(2);
  AdaptationConfig cfg = toy_config();
  cfg.lr = 0;
  cfg.alpha_lr = 0;
  const ParamPartition part = partition_for(c.model, cfg);
  InnerUpdateOptions o;
  o.record = true;
  const AdaptedState st = meta_train_step(c.model, c.xtr, cfg, part, o);
  const std::vector<double> g = meta_gradient(c.model, st, c.xte, c.y, cfg, part);
  std::vector<double> direct;
  loss_and_gradient<double>(
      c.model, c.model.params, c.xte, {}, [&](const Matrix<double>& l) { return cross_entropy_grad<double>(l, c.y); },
      direct);
  for (std::size_t i : part.adaptable()) EXPECT_NEAR(g[i], direct[i], 1e-15);
}

TEST(MetaGradient, UnrecordedStateIsEngineError) {
  MetaCase c = make_case(3);
  const AdaptationConfig cfg = toy_config();
  const ParamPartition part = partition_for(c.model, cfg);
  const AdaptedState st = meta_train_step(c.model, c.xtr, cfg, part, {});
  EXPECT_THROW(meta_gradient(c.model, st, c.xte, c.y, cfg, part), EngineError);
}

TEST(MetaTestStep, NullOuterRateLeavesAdaptableUnchanged) {
  MetaCase c = make_case(4);
  AdaptationConfig cfg = toy_config();
  cfg.meta_lr = 0;
  cfg.alpha_lr = 0;
  cfg.weight_decay = 0;
  const ParamPartition part = partition_for(c.model, cfg);
  InnerUpdateOptions o;
  o.record = true;
  const AdaptedState st = meta_train_step(c.model, c.xtr, cfg, part, o);
  const std::vector<double> before = c.model.params;
  NesterovSgd outer(before.size(), cfg.momentum);
  meta_test_step(c.model, st, c.xte, c.y, cfg, part, outer);
  EXPECT_EQ(c.model.params, before);
}

Corpus separable_corpus(int n, std::uint64_t seed) {
  // Two classes on a 2x3x3 grid: class decides the sign of channel 0.
  Rng rng(seed);
  Corpus c;
  c.count = n;
  c.channels = 2;
  c.height = 3;
  c.width = 3;
  c.classes = 3;
  c.provenance = "separable";
  for (int i = 0; i < n; ++i) {
    const int y = i % 2;
    c.labels.push_back(y);
    for (int ch = 0; ch < 2; ++ch)
      for (int p = 0; p < 9; ++p) {
        const double base = ch == 0 ? (y ? 0.8 : 0.2) : 0.5;
        c.images.push_back(static_cast<float>(std::clamp(base + 0.05 * standard_normal(rng), 0.0, 1.0)));
      }
  }
  return c;
}

TEST(FitSource, ZeroEpochsIsIdentity) {
  Rng rng(1);
  Model m = Model::create(NetworkSpec::toy(), 0.75, rng);
  const Model before = m;
  FitOptions opts;
  fit_source(m, {separable_corpus(32, 1)}, toy_config(), opts, rng);
  EXPECT_EQ(m.params, before.params);
}

TEST(FitSource, SeparableToyReachesZeroTrainingError) {
  double total_err = 0;
  for (std::uint64_t seed = 1; seed <= 3; ++seed) {
    Rng rng(seed);
    Model m = Model::create(NetworkSpec::toy(), 0.75, rng);
    const Corpus data = separable_corpus(64, seed);
    AdaptationConfig cfg;
    cfg.batch_size = 16;
    FitOptions opts;
    opts.warmup_epochs = 40;
    opts.meta_epochs = 10;
    opts.pretrain_lr = 0.1;
    std::vector<StepLog> log;
    opts.on_step = [&](const StepLog& s) { log.push_back(s); };
    fit_source(m, {data}, cfg, opts, rng);
    EXPECT_EQ(m.phase, BNPhase::kAdaptation);
    EXPECT_FALSE(log.empty());
    std::vector<std::size_t> all(64);
    for (std::size_t i = 0; i < 64; ++i) all[i] = i;
    const auto pred = argmax_rows(predict_logits(m, data.batch(all)));
    int wrong = 0;
    for (int i = 0; i < 64; ++i) wrong += pred[i] != data.labels[i];
    total_err += wrong / 64.0;
    for (const auto& s : log)
      for (const auto& a : s.alpha) {
        EXPECT_GE(a.min, 0.0);
        EXPECT_LE(a.max, 1.0);
      }
  }
  EXPECT_EQ(total_err, 0.0);
}

TEST(FitSource, FrozenBackboneUntouchedByMetaPhase) {
  Rng rng(3);
  Model m = Model::create(NetworkSpec::toy(), 0.75, rng);
  FitOptions warm;
  warm.warmup_epochs = 2;
  AdaptationConfig cfg;
  cfg.batch_size = 16;
  TrainerState state = TrainerState::fresh(m, cfg);
  fit_source(m, {separable_corpus(64, 3)}, cfg, warm, rng, &state);
  const Model after_warmup = m;
  FitOptions meta = warm;
  meta.meta_epochs = 3;
  fit_source(m, {separable_corpus(64, 3)}, cfg, meta, rng, &state);
  const ParamPartition part = partition_for(m, cfg);
  for (auto i : part.theta_frozen) EXPECT_EQ(m.params[i], after_warmup.params[i]);
  EXPECT_EQ(state.warmup_epochs_done, 2);
  EXPECT_EQ(state.meta_epochs_done, 3);
}

}  // namespace
}  // namespace tttkit
