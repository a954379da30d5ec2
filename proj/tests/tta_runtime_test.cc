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

#include "tttkit/tta_runtime.h"

#include <gtest/gtest.h>

#include <algorithm>
#include <numeric>

#include "test_support.h"
#include "tttkit/errors.h"

namespace tttkit {
namespace {

using testing::toy_model;

// A labeled corpus shaped for the toy network.
Corpus toy_corpus(int count, std::uint64_t seed) {
  const NetworkSpec s = NetworkSpec::toy();
  Rng rng(seed);
  Corpus c;
  c.count = count;
  c.channels = s.in_channels;
  c.height = s.height;
  c.width = s.width;
  c.classes = s.classes;
  c.images.resize(c.image_size() * count);
  for (float& v : c.images) v = static_cast<float>(uniform(rng, 0.0, 1.0));
  for (int i = 0; i < count; ++i) c.labels.push_back(static_cast<std::int32_t>(uniform_index(rng, s.classes)));
  c.seed = seed;
  c.provenance = "toy";
  return c;
}

AdaptationConfig runtime_config() {
  AdaptationConfig cfg;
  cfg.lr = 0.05;
  cfg.kappa = 0.5;
  cfg.layer_selector = "last";
  return cfg;
}

std::vector<double> adaptable_values(const Model& m) {
  std::vector<double> out;
  for (std::size_t i : partition_parameters(m, "all").adaptable()) out.push_back(m.params[i]);
  return out;
}

TEST(AdaptStream, NullAdaptationAtSourceEndpointMatchesFrozenModel) {
  Model m = toy_model(1);
  for (int l = 0; l < m.bn_layers(); ++l)
    for (double& a : m.bn_param(l, ParamKind::kBnAlpha)) a = 0.0;
  const Corpus corpus = toy_corpus(40, 2);
  AdaptationConfig cfg = runtime_config();
  cfg.lr = 0.0;
  cfg.adapt_alpha = false;
  CorpusStream frozen_stream(corpus, 8);
  const StreamResult frozen = frozen_predict(m, frozen_stream, StatsMode::kSource);
  Model adapted = m;
  deploy(adapted);
  CorpusStream stream(corpus, 8);
  const StreamResult r = adapt_stream(adapted, stream, cfg);
  EXPECT_EQ(r.predictions, frozen.predictions);
  ASSERT_EQ(r.records.size(), frozen.records.size());
  for (std::size_t b = 0; b < r.records.size(); ++b) EXPECT_EQ(r.records[b].error_rate, frozen.records[b].error_rate);
  EXPECT_EQ(adapted.params, m.params);
}

TEST(AdaptStream, OnlineStateCarriesAcrossBatches) {
  const Model base = toy_model(3);
  const Corpus corpus = toy_corpus(16, 4);
  const AdaptationConfig cfg = runtime_config();
  std::vector<std::vector<double>> after;
  Model m = base;
  deploy(m);
  CorpusStream stream(corpus, 8);
  AdaptOptions opts;
  opts.after_batch = [&](const Model& model, const MetricsRecord&) { after.push_back(model.params); };
  adapt_stream(m, stream, cfg, opts);
  ASSERT_EQ(after.size(), 2u);

  // Batch 1 alone from the deployed state reproduces the state after batch 1.
  Model first = base;
  deploy(first);
  const Corpus head = corpus.subset(std::vector<std::size_t>{0, 1, 2, 3, 4, 5, 6, 7});
  CorpusStream head_stream(head, 8);
  adapt_stream(first, head_stream, cfg);
  EXPECT_EQ(first.params, after[0]);
  EXPECT_NE(after[0], base.params);
  EXPECT_NE(after[1], after[0]);
  EXPECT_EQ(m.params, after[1]);
}

TEST(AdaptStream, EpisodicBatchesAreIndependent) {
  const Model base = toy_model(5);
  const Corpus corpus = toy_corpus(24, 6);
  AdaptationConfig cfg = runtime_config();
  cfg.reset_policy = ResetPolicy::kEpisodic;
  Model m = base;
  deploy(m);
  CorpusStream stream(corpus, 8);
  const StreamResult r = adapt_stream(m, stream, cfg);
  for (int b = 0; b < 3; ++b) {
    std::vector<std::size_t> idx(8);
    std::iota(idx.begin(), idx.end(), static_cast<std::size_t>(8 * b));
    const Corpus one = corpus.subset(idx);
    Model fresh = base;
    deploy(fresh);
    CorpusStream s(one, 8);
    const StreamResult single = adapt_stream(fresh, s, cfg);
    EXPECT_TRUE(std::equal(single.predictions.begin(), single.predictions.end(), r.predictions.begin() + 8 * b))
        << "batch " << b;
  }
}

TEST(AdaptStream, PartialBatchOfOneIsPredictedWithoutUpdate) {
  Model m = toy_model(7);
  deploy(m);
  const Corpus corpus = toy_corpus(9, 8);
  CorpusStream stream(corpus, 8);
  std::vector<double> before_last;
  AdaptOptions opts;
  int seen = 0;
  opts.after_batch = [&](const Model& model, const MetricsRecord&) {
    if (++seen == 1) before_last = model.params;
  };
  const StreamResult r = adapt_stream(m, stream, runtime_config(), opts);
  ASSERT_EQ(r.records.size(), 2u);
  EXPECT_FALSE(r.records[0].skipped);
  EXPECT_TRUE(r.records[1].skipped);
  EXPECT_EQ(r.records[1].samples, 1);
  EXPECT_EQ(r.predictions.size(), 9u);
  EXPECT_EQ(m.params, before_last);
}

TEST(AdaptStream, LabelsNeverInfluenceAdaptation) {
  const Model base = toy_model(9);
  Corpus a = toy_corpus(32, 10);
  Corpus b = a;
  std::reverse(b.labels.begin(), b.labels.end());
  Model ma = base, mb = base;
  deploy(ma);
  deploy(mb);
  CorpusStream sa(a, 8), sb(b, 8);
  const StreamResult ra = adapt_stream(ma, sa, runtime_config());
  const StreamResult rb = adapt_stream(mb, sb, runtime_config());
  EXPECT_EQ(ma.params, mb.params);
  EXPECT_EQ(ra.predictions, rb.predictions);
  EXPECT_TRUE(ra.audit.passed());
  EXPECT_EQ(ra.audit.reveals, 4u);
  EXPECT_EQ(ra.audit.labeled_batches, 4u);
}

TEST(AdaptStream, RequiresFrozenSourceStatistics) {
  Rng rng(1);
  Model m = Model::create(NetworkSpec::toy(), 0.75, rng);
  const Corpus corpus = toy_corpus(8, 1);
  CorpusStream stream(corpus, 8);
  EXPECT_THROW(adapt_stream(m, stream, runtime_config()), StatePhaseError);
}

TEST(ResetAdaptation, ImmediatelyAfterDeployIsNoOp) {
  Model m = toy_model(11);
  deploy(m);
  const std::vector<double> before = m.params;
  reset_adaptation(m);
  EXPECT_EQ(m.params, before);
}

TEST(ResetAdaptation, RestoresDeployedAlphaAndReplaysIdentically) {
  Model m = toy_model(12);
  for (double& a : m.bn_param(m.bn_layers() - 1, ParamKind::kBnAlpha)) a = 0.3;
  deploy(m);
  const std::vector<double> deployed = m.params;
  const Corpus corpus = toy_corpus(80, 13);
  CorpusStream first(corpus, 8);
  const StreamResult r1 = adapt_stream(m, first, runtime_config());
  EXPECT_NE(adaptable_values(m), std::vector<double>(adaptable_values(toy_model(12))));
  reset_adaptation(m);
  EXPECT_EQ(m.params, deployed);
  for (double a : m.bn_param(m.bn_layers() - 1, ParamKind::kBnAlpha)) EXPECT_EQ(a, 0.3);
  CorpusStream second(corpus, 8);
  const StreamResult r2 = adapt_stream(m, second, runtime_config());
  ASSERT_EQ(r1.records.size(), 10u);
  ASSERT_EQ(r2.records.size(), r1.records.size());
  for (std::size_t b = 0; b < r1.records.size(); ++b) {
    EXPECT_EQ(r1.records[b].error_rate, r2.records[b].error_rate);
    EXPECT_EQ(r1.records[b].mean_entropy, r2.records[b].mean_entropy);
    EXPECT_EQ(r1.records[b].alpha_mean, r2.records[b].alpha_mean);
  }
  EXPECT_EQ(r1.predictions, r2.predictions);
}

TEST(ResetAdaptation, WithoutSnapshotIsStateError) {
  Model m = toy_model(14);
  EXPECT_THROW(reset_adaptation(m), StatePhaseError);
}

TEST(Baselines, SourceIsStatelessAndAdaBNUsesBatchStatistics) {
  const Model m = toy_model(15);
  const Corpus corpus = toy_corpus(32, 16);
  const AdaptationConfig cfg = runtime_config();
  CorpusStream s1(corpus, 8), s2(corpus, 8), s3(corpus, 8), s4(corpus, 8);
  const StreamResult a = baseline_predict(m, s1, Baseline::kSource, cfg);
  const StreamResult b = baseline_predict(m, s2, Baseline::kSource, cfg);
  EXPECT_EQ(a.predictions, b.predictions);
  const StreamResult adabn = baseline_predict(m, s3, Baseline::kAdaBN, cfg);
  const StreamResult batch = frozen_predict(m, s4, StatsMode::kBatch);
  EXPECT_EQ(adabn.predictions, batch.predictions);
  EXPECT_TRUE(a.audit.passed());
}

TEST(Baselines, TentUpdatesAcrossBatchesWithoutTouchingTheInput) {
  const Model m = toy_model(17);
  const Corpus corpus = toy_corpus(64, 18);
  AdaptationConfig cfg = runtime_config();
  cfg.lr = 0.5;
  CorpusStream s1(corpus, 8), s2(corpus, 8);
  const StreamResult tent = baseline_predict(m, s1, Baseline::kTent, cfg);
  const StreamResult adabn = baseline_predict(m, s2, Baseline::kAdaBN, cfg);
  EXPECT_NE(tent.records.back().mean_entropy, adabn.records.back().mean_entropy);
  EXPECT_EQ(m.params, toy_model(17).params);
}

TEST(Baselines, UnknownNameIsConfigError) {
  EXPECT_EQ(parse_baseline("tent"), Baseline::kTent);
  EXPECT_THROW(parse_baseline("bn_adapt"), ConfigError);
}

TEST(HeldOutLabels, ChecksumTracksContent) {
  const HeldOutLabels a({1, 2, 3}), b({1, 2, 3}), c({3, 2, 1});
  EXPECT_EQ(a.checksum(), b.checksum());
  EXPECT_NE(a.checksum(), c.checksum());
  EXPECT_EQ(a.reveals(), 0u);
}

}  // namespace
}  // namespace tttkit
