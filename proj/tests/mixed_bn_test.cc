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

#include "tttkit/mixed_bn.h"

#include <gtest/gtest.h>

#include "test_support.h"
#include "tttkit/errors.h"

namespace tttkit {
namespace {

using testing::random_tensor;
using testing::random_vector;

// Independent two-pass reference: per-channel mean then mean squared
// deviation, accumulated in a different loop order than the library.
void reference_moments(const Tensor<double>& z, std::vector<double>& mean, std::vector<double>& var) {
  mean.assign(z.c(), 0.0);
  var.assign(z.c(), 0.0);
  const double count = static_cast<double>(z.n()) * static_cast<double>(z.plane());
  for (int i = 0; i < z.n(); ++i)
    for (int j = 0; j < z.c(); ++j)
      for (int y = 0; y < z.h(); ++y)
        for (int x = 0; x < z.w(); ++x) mean[j] += z(i, j, y, x);
  for (double& m : mean) m /= count;
  for (int i = 0; i < z.n(); ++i)
    for (int j = 0; j < z.c(); ++j)
      for (int y = 0; y < z.h(); ++y)
        for (int x = 0; x < z.w(); ++x) var[j] += (z(i, j, y, x) - mean[j]) * (z(i, j, y, x) - mean[j]);
  for (double& v : var) v /= count;
}

TEST(BatchStats, ZeroTensorHasZeroMoments) {
  const Tensor<double> z(3, 4, 2, 5);
  const auto s = batch_stats(z);
  EXPECT_EQ(s.count, 30);
  for (int j = 0; j < 4; ++j) {
    EXPECT_EQ(s.mean[j], 0.0);
    EXPECT_EQ(s.var[j], 0.0);
  }
}

TEST(BatchStats, ConstantChannelsHaveZeroVariance) {
  Tensor<double> z(2, 3, 3, 3);
  for (int i = 0; i < 2; ++i)
    for (int j = 0; j < 3; ++j)
      for (double& v : z.channel(i, j)) v = 1.5 * j - 2.0;
  const auto s = batch_stats(z);
  for (int j = 0; j < 3; ++j) {
    EXPECT_DOUBLE_EQ(s.mean[j], 1.5 * j - 2.0);
    EXPECT_EQ(s.var[j], 0.0);
  }
}

TEST(BatchStats, MatchesTwoPassReference) {
  Rng rng(11);
  for (int trial = 0; trial < 20; ++trial) {
    const Tensor<double> z = random_tensor(rng, 4, 3, 2, 2, 2.0, 0.5);
    std::vector<double> mean, var;
    reference_moments(z, mean, var);
    const auto s = batch_stats(z);
    for (int j = 0; j < 3; ++j) {
      EXPECT_NEAR(s.mean[j], mean[j], 1e-12);
      EXPECT_NEAR(s.var[j], var[j], 1e-12);
    }
  }
}

TEST(BatchStats, EmptyBatchIsDegenerate) {
  EXPECT_THROW(batch_stats(Tensor<double>(0, 3, 2, 2)), DegenerateBatchError);
}

TEST(BatchStats, SingleElementHasZeroVariance) {
  Tensor<double> z(1, 2, 1, 1);
  z(0, 0, 0, 0) = 3.0;
  z(0, 1, 0, 0) = -1.0;
  const auto s = batch_stats(z);
  EXPECT_EQ(s.count, 1);
  EXPECT_EQ(s.var[0], 0.0);
  EXPECT_EQ(s.var[1], 0.0);
}

BatchStats<double> scalar_stats(double mean, double var) { return {{mean}, {var}, 1}; }

TEST(MixedStats, EndpointsAreExact) {
  const std::vector<double> ms{0.3}, vs{1.7};
  const auto t = scalar_stats(-1.2, 0.4);
  const std::vector<double> zero{0.0}, one{1.0};
  const auto a0 = mixed_stats<double>(ms, vs, t, zero);
  EXPECT_EQ(a0.mean[0], 0.3);
  EXPECT_EQ(a0.var[0], 1.7);
  const auto a1 = mixed_stats<double>(ms, vs, t, one);
  EXPECT_EQ(a1.mean[0], -1.2);
  EXPECT_EQ(a1.var[0], 0.4);
}

TEST(MixedStats, HandEvaluatedMidpoint) {
  const std::vector<double> ms{0.0}, vs{1.0}, a{0.5};
  const auto m = mixed_stats<double>(ms, vs, scalar_stats(2.0, 3.0), a);
  EXPECT_DOUBLE_EQ(m.mean[0], 1.0);
  EXPECT_DOUBLE_EQ(m.var[0], 3.0);
}

TEST(MixedStats, RejectsAlphaOutsideUnitInterval) {
  const std::vector<double> ms{0.0}, vs{1.0};
  const std::vector<double> hi{1.01}, lo{-0.01};
  EXPECT_THROW(mixed_stats<double>(ms, vs, scalar_stats(0, 1), hi), PreconditionError);
  EXPECT_THROW(mixed_stats<double>(ms, vs, scalar_stats(0, 1), lo), PreconditionError);
}

TEST(MixedStats, PoolingPropertyOnRandomSubBatches) {
  Rng rng(5);
  for (int trial = 0; trial < 200; ++trial) {
    const int na = 1 + static_cast<int>(uniform_index(rng, 6));
    const int nb = 1 + static_cast<int>(uniform_index(rng, 6));
    const Tensor<double> a = random_tensor(rng, na, 3, 2, 2, 1.0 + trial % 3, 0.7);
    const Tensor<double> b = random_tensor(rng, nb, 3, 2, 2, 0.5, -0.4);
    Tensor<double> ab(na + nb, 3, 2, 2);
    std::copy(a.data().begin(), a.data().end(), ab.data().begin());
    std::copy(b.data().begin(), b.data().end(), ab.data().begin() + static_cast<std::ptrdiff_t>(a.size()));
    const auto sa = batch_stats(a), sb = batch_stats(b), sab = batch_stats(ab);
    const std::vector<double> alpha(3, static_cast<double>(nb) / (na + nb));
    const auto m = mixed_stats<double>(sa.mean, sa.var, sb, alpha);
    for (int j = 0; j < 3; ++j) {
      EXPECT_NEAR(m.mean[j], sab.mean[j], 1e-6);
      EXPECT_NEAR(m.var[j], sab.var[j], 1e-6);
    }
  }
}

TEST(MixedStats, MeanAffineAndVarianceBoundedBelow) {
  Rng rng(9);
  for (int trial = 0; trial < 100; ++trial) {
    const auto ms = random_vector(rng, 4, -2, 2), vs = random_vector(rng, 4, 0, 3);
    BatchStats<double> t{random_vector(rng, 4, -2, 2), random_vector(rng, 4, 0, 3), 8};
    const auto alpha = random_vector(rng, 4, 0, 1);
    const auto m = mixed_stats<double>(ms, vs, t, alpha);
    for (int j = 0; j < 4; ++j) {
      EXPECT_NEAR(m.mean[j], alpha[j] * t.mean[j] + (1 - alpha[j]) * ms[j], 1e-12);
      EXPECT_GE(m.var[j], std::min(vs[j], t.var[j]) - 1e-12);
    }
  }
}

TEST(Normalize, UnitScaleOfStandardizedInputIsIdentity) {
  Rng rng(3);
  Tensor<double> z = random_tensor(rng, 8, 2, 3, 3);
  const auto s0 = batch_stats(z);
  for (int i = 0; i < z.n(); ++i)
    for (int j = 0; j < z.c(); ++j)
      for (double& v : z.channel(i, j)) v = (v - s0.mean[j]) / std::sqrt(s0.var[j]);
  const auto s = batch_stats(z);
  const std::vector<double> g(2, 1.0), b(2, 0.0);
  const Tensor<double> out = normalize<double>(z, s.mean, s.var, g, b, 1e-12);
  for (std::size_t p = 0; p < z.size(); ++p) EXPECT_NEAR(out.data()[p], z.data()[p], 1e-9);
}

TEST(Normalize, ZeroScaleYieldsShift) {
  Rng rng(4);
  const Tensor<double> z = random_tensor(rng, 3, 2, 2, 2);
  const std::vector<double> mean{0.1, 0.2}, var{1.0, 2.0}, g{0.0, 0.0}, b{0.3, -0.7};
  const Tensor<double> out = normalize<double>(z, mean, var, g, b);
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 2; ++j)
      for (double v : out.channel(i, j)) EXPECT_EQ(v, b[j]);
}

TEST(Normalize, ShapeMismatchIsRejected) {
  const Tensor<double> z(1, 2, 1, 1);
  const std::vector<double> one{1.0}, two{1.0, 1.0};
  EXPECT_THROW(normalize<double>(z, one, two, two, two), PreconditionError);
}

// Plain batch norm written out directly, with no shared code.
Tensor<double> plain_batch_norm(const Tensor<double>& z, const std::vector<double>& g, const std::vector<double>& b) {
  Tensor<double> out(z.n(), z.c(), z.h(), z.w());
  for (int j = 0; j < z.c(); ++j) {
    double sum = 0, sq = 0, n = 0;
    for (int i = 0; i < z.n(); ++i)
      for (double v : z.channel(i, j)) sum += v, sq += v * v, ++n;
    const double mean = sum / n, var = sq / n - mean * mean;
    for (int i = 0; i < z.n(); ++i) {
      auto src = z.channel(i, j);
      auto dst = out.channel(i, j);
      for (std::size_t p = 0; p < src.size(); ++p) dst[p] = g[j] * (src[p] - mean) / std::sqrt(var + 1e-5) + b[j];
    }
  }
  return out;
}

TEST(MixedBn, AlphaOneMatchesPlainBatchNorm) {
  Rng rng(21);
  for (int trial = 0; trial < 10; ++trial) {
    const Tensor<double> z = random_tensor(rng, 6, 3, 4, 4, 1.5, 0.3);
    const auto g = random_vector(rng, 3, 0.5, 1.5), b = random_vector(rng, 3, -1, 1);
    const auto ms = random_vector(rng, 3, -1, 1), vs = random_vector(rng, 3, 0.1, 2);
    const std::vector<double> alpha(3, 1.0);
    const Tensor<double> got = mixed_bn_forward<double>(z, ms, vs, g, b, alpha, kBnEpsilon, nullptr);
    const Tensor<double> want = plain_batch_norm(z, g, b);
    for (std::size_t p = 0; p < z.size(); ++p) EXPECT_NEAR(got.data()[p], want.data()[p], 1e-6);
  }
}

TEST(MixedBn, AlphaZeroIsFrozenStatisticInference) {
  Rng rng(22);
  const Tensor<double> z = random_tensor(rng, 5, 2, 3, 3);
  const auto g = random_vector(rng, 2, 0.5, 1.5), b = random_vector(rng, 2, -1, 1);
  const auto ms = random_vector(rng, 2, -1, 1), vs = random_vector(rng, 2, 0.1, 2);
  const std::vector<double> alpha(2, 0.0);
  const Tensor<double> got = mixed_bn_forward<double>(z, ms, vs, g, b, alpha, kBnEpsilon, nullptr);
  const Tensor<double> want = normalize<double>(z, ms, vs, g, b);
  for (std::size_t p = 0; p < z.size(); ++p) EXPECT_EQ(got.data()[p], want.data()[p]);
}

// Gradient of a random linear functional of the layer output with respect
// to every input, compared against central differences.
TEST(MixedBn, BackwardMatchesFiniteDifferences) {
  Rng rng(31);
  for (int trial = 0; trial < 10; ++trial) {
    const int c = 3;
    Tensor<double> z = random_tensor(rng, 4, c, 2, 3, 1.2, 0.2);
    auto g = random_vector(rng, c, 0.5, 1.5), b = random_vector(rng, c, -1, 1);
    auto alpha = random_vector(rng, c, 0.1, 0.9);
    const auto ms = random_vector(rng, c, -1, 1), vs = random_vector(rng, c, 0.1, 2);
    const Tensor<double> w = random_tensor(rng, 4, c, 2, 3);
    auto objective = [&]() {
      const Tensor<double> y = mixed_bn_forward<double>(z, ms, vs, g, b, alpha, kBnEpsilon, nullptr);
      double s = 0;
      for (std::size_t p = 0; p < y.size(); ++p) s += w.data()[p] * y.data()[p];
      return s;
    };
    MixedBNCache<double> cache;
    mixed_bn_forward<double>(z, ms, vs, g, b, alpha, kBnEpsilon, &cache);
    std::vector<double> dg(c), db(c), da(c);
    const Tensor<double> dz = mixed_bn_backward<double>(w, cache, g, dg, db, da);
    const double h = 1e-6;
    auto fd = [&](double& x) {
      const double keep = x;
      x = keep + h;
      const double up = objective();
      x = keep - h;
      const double down = objective();
      x = keep;
      return (up - down) / (2 * h);
    };
    for (int j = 0; j < c; ++j) {
      EXPECT_LT(testing::relative_error(da[j], fd(alpha[j])), 1e-4);
      EXPECT_LT(testing::relative_error(dg[j], fd(g[j])), 1e-4);
      EXPECT_LT(testing::relative_error(db[j], fd(b[j])), 1e-4);
    }
    for (std::size_t p = 0; p < z.size(); p += 5) EXPECT_LT(testing::relative_error(dz.data()[p], fd(z.data()[p])), 1e-4);
  }
}

TEST(ProjectAlpha, ClampsToUnitInterval) {
  std::vector<double> a{0.75, 1.3, -0.2, 0.0, 1.0};
  project_alpha(a);
  EXPECT_EQ(a, (std::vector<double>{0.75, 1.0, 0.0, 0.0, 1.0}));
  EXPECT_EQ(projected_alpha(std::vector<double>{2.0}), std::vector<double>{1.0});
}

TEST(RunningStats, MomentumRules) {
  MixedBNState s = MixedBNState::identity(1, 0.75);
  s.mu_s = {0.0};
  s.var_s = {1.0};
  const BatchStats<double> batch{{1.0}, {3.0}, 4};
  s.momentum = 0.0;
  update_running_stats(s, batch);
  EXPECT_EQ(s.mu_s[0], 0.0);
  EXPECT_EQ(s.var_s[0], 1.0);
  s.momentum = 0.1;
  update_running_stats(s, batch);
  EXPECT_DOUBLE_EQ(s.mu_s[0], 0.1);
  EXPECT_DOUBLE_EQ(s.var_s[0], 1.2);
  s.momentum = 1.0;
  update_running_stats(s, batch);
  EXPECT_EQ(s.mu_s[0], 1.0);
  EXPECT_EQ(s.var_s[0], 3.0);
}

TEST(RunningStats, FrozenAfterSourceTraining) {
  MixedBNState s = MixedBNState::identity(2, 0.75);
  s.phase = BNPhase::kAdaptation;
  EXPECT_THROW(update_running_stats(s, BatchStats<double>{{0, 0}, {1, 1}, 2}), StatePhaseError);
}

TEST(MixedBnState, ApplyInterpolatesBetweenEndpoints) {
  Rng rng(8);
  const Tensor<double> z = random_tensor(rng, 4, 2, 2, 2);
  MixedBNState s = MixedBNState::identity(2, 0.0);
  s.mu_s = {0.5, -0.5};
  s.var_s = {2.0, 0.5};
  const Tensor<double> at0 = mixed_bn_apply(z, s);
  const Tensor<double> want = normalize<double>(z, s.mu_s, s.var_s, s.gamma, s.beta);
  for (std::size_t p = 0; p < z.size(); ++p) EXPECT_EQ(at0.data()[p], want.data()[p]);
  s.alpha = {1.5, 0.5};
  EXPECT_THROW(s.validate(), PreconditionError);
}

}  // namespace
}  // namespace tttkit
