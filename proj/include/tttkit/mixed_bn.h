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

#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "tttkit/dual.h"
#include "tttkit/errors.h"
#include "tttkit/tensor.h"

namespace tttkit {

inline constexpr double kBnEpsilon = 1e-5;

// Per-channel moments of a live batch. Variance is the biased estimator
// (divide by N*H*W), so a single element per channel has zero variance.
template <typename T>
struct BatchStats {
  std::vector<T> mean;
  std::vector<T> var;
  std::int64_t count = 0;
};

template <typename T>
struct Moments {
  std::vector<T> mean;
  std::vector<T> var;
};

template <typename T>
BatchStats<T> batch_stats(const Tensor<T>& z) {
  if (z.n() == 0 || z.plane() == 0) throw DegenerateBatchError("degenerate batch: no elements per channel");
  const int channels = z.c();
  const std::int64_t count = static_cast<std::int64_t>(z.n()) * static_cast<std::int64_t>(z.plane());
  BatchStats<T> out{std::vector<T>(channels, T{}), std::vector<T>(channels, T{}), count};
  const double inv = 1.0 / static_cast<double>(count);
  for (int j = 0; j < channels; ++j) {
    T sum{};
    for (int i = 0; i < z.n(); ++i)
      for (const T& v : z.channel(i, j)) sum += v;
    const T mean = sum * inv;
    T sq{};
    for (int i = 0; i < z.n(); ++i)
      for (const T& v : z.channel(i, j)) {
        const T d = v - mean;
        sq += d * d;
      }
    out.mean[j] = mean;
    out.var[j] = sq * inv;
  }
  return out;
}

namespace detail {

template <typename T>
void check_alpha(std::span<const T> alpha) {
  for (const T& a : alpha) {
    const double v = value_of(a);
    if (!(v >= 0.0 && v <= 1.0)) throw PreconditionError("interpolation weight outside [0,1]: " + std::to_string(v));
  }
}

}  // namespace detail

// Interpolates frozen source statistics with live batch statistics:
//   mean = a*mu_t + (1-a)*mu_s
//   var  = a*var_t + (1-a)*var_s + a(1-a)(mu_t - mu_s)^2
template <typename T>
Moments<T> mixed_stats(std::span<const double> source_mean, std::span<const double> source_var, const BatchStats<T>& target,
                       std::span<const T> alpha) {
  const std::size_t c = alpha.size();
  if (source_mean.size() != c || source_var.size() != c || target.mean.size() != c || target.var.size() != c)
    throw PreconditionError("mixed_stats: channel count mismatch");
  detail::check_alpha(alpha);
  Moments<T> out{std::vector<T>(c), std::vector<T>(c)};
  for (std::size_t j = 0; j < c; ++j) {
    const T& a = alpha[j];
    const T shift = target.mean[j] - source_mean[j];
    out.mean[j] = a * target.mean[j] + (1.0 - a) * source_mean[j];
    out.var[j] = a * target.var[j] + (1.0 - a) * source_var[j] + a * (1.0 - a) * shift * shift;
  }
  return out;
}

// gamma * (z - mean) / sqrt(var + eps) + beta, broadcast per channel.
template <typename T>
Tensor<T> normalize(const Tensor<T>& z, std::span<const T> mean, std::span<const T> var, std::span<const T> gamma,
                    std::span<const T> beta, double eps = kBnEpsilon) {
  using std::sqrt;
  const std::size_t c = static_cast<std::size_t>(z.c());
  if (mean.size() != c || var.size() != c || gamma.size() != c || beta.size() != c)
    throw PreconditionError("normalize: channel count mismatch for input " + shape_string(z.shape()));
  Tensor<T> out(z.n(), z.c(), z.h(), z.w());
  for (std::size_t j = 0; j < c; ++j) {
    if (value_of(var[j]) < 0.0) throw PreconditionError("normalize: negative variance");
    // Same operation order as mixed_bn_forward, so that alpha = 0 reproduces
    // frozen-statistic inference bit for bit.
    const T inv_std = 1.0 / sqrt(var[j] + eps);
    for (int i = 0; i < z.n(); ++i) {
      auto src = z.channel(i, static_cast<int>(j));
      auto dst = out.channel(i, static_cast<int>(j));
      for (std::size_t k = 0; k < src.size(); ++k) dst[k] = gamma[j] * ((src[k] - mean[j]) * inv_std) + beta[j];
    }
  }
  return out;
}

// Clamp every interpolation weight into [0,1].
void project_alpha(std::span<double> alpha);
std::vector<double> projected_alpha(std::span<const double> alpha_raw);

enum class BNPhase { kSourceTraining, kAdaptation };

// Standalone state of one mixed-BN layer. Inside a Network the affine and
// interpolation parameters live in the flat parameter vector instead.
struct MixedBNState {
  std::vector<double> mu_s;
  std::vector<double> var_s;
  std::vector<double> gamma;
  std::vector<double> beta;
  std::vector<double> alpha;
  double eps = kBnEpsilon;
  double momentum = 0.1;
  BNPhase phase = BNPhase::kSourceTraining;

  static MixedBNState identity(int channels, double alpha_init);
  int channels() const { return static_cast<int>(mu_s.size()); }
  // Throws PreconditionError when the invariants do not hold.
  void validate() const;
};

// EMA update of the source running statistics. Only legal while the layer
// is in its source-training phase.
void update_running_stats(MixedBNState& state, const BatchStats<double>& batch);
void update_running_stats(std::span<double> running_mean, std::span<double> running_var, const BatchStats<double>& batch,
                          double momentum);

// Full forward of a mixed-BN layer for a given state (double precision).
Tensor<double> mixed_bn_apply(const Tensor<double>& z, const MixedBNState& state);

// Values retained by the forward pass for the backward pass.
template <typename T>
struct MixedBNCache {
  std::vector<T> alpha;
  std::vector<T> batch_mean;
  std::vector<T> batch_var;
  std::vector<T> mixed_mean;
  std::vector<T> inv_std;
  std::vector<double> source_mean;
  std::vector<double> source_var;
  Tensor<T> xhat;
  std::int64_t count = 0;
};

template <typename T>
Tensor<T> mixed_bn_forward(const Tensor<T>& z, std::span<const double> source_mean, std::span<const double> source_var,
                           std::span<const T> gamma, std::span<const T> beta, std::span<const T> alpha, double eps,
                           MixedBNCache<T>* cache, BatchStats<T>* stats_out = nullptr) {
  using std::sqrt;
  BatchStats<T> stats = batch_stats(z);
  Moments<T> mixed = mixed_stats(source_mean, source_var, stats, alpha);
  const int c = z.c();
  Tensor<T> out(z.n(), c, z.h(), z.w());
  Tensor<T> xhat;
  if (cache) xhat = Tensor<T>(z.n(), c, z.h(), z.w());
  std::vector<T> inv_std(c);
  for (int j = 0; j < c; ++j) {
    inv_std[j] = 1.0 / sqrt(mixed.var[j] + eps);
    for (int i = 0; i < z.n(); ++i) {
      auto src = z.channel(i, j);
      auto dst = out.channel(i, j);
      for (std::size_t k = 0; k < src.size(); ++k) {
        const T xh = (src[k] - mixed.mean[j]) * inv_std[j];
        dst[k] = gamma[j] * xh + beta[j];
        if (cache) xhat.channel(i, j)[k] = xh;
      }
    }
  }
  if (cache) {
    cache->alpha.assign(alpha.begin(), alpha.end());
    cache->batch_mean = stats.mean;
    cache->batch_var = stats.var;
    cache->mixed_mean = std::move(mixed.mean);
    cache->inv_std = std::move(inv_std);
    cache->source_mean.assign(source_mean.begin(), source_mean.end());
    cache->source_var.assign(source_var.begin(), source_var.end());
    cache->xhat = std::move(xhat);
    cache->count = stats.count;
  }
  if (stats_out) *stats_out = std::move(stats);
  return out;
}

// Backward of mixed_bn_forward. Gradients are accumulated into dgamma,
// dbeta and (when non-empty) dalpha; returns the gradient w.r.t. z.
template <typename T>
Tensor<T> mixed_bn_backward(const Tensor<T>& dy, const MixedBNCache<T>& cache, std::span<const T> gamma, std::span<T> dgamma,
                            std::span<T> dbeta, std::span<T> dalpha) {
  const int c = dy.c();
  const double inv_count = 1.0 / static_cast<double>(cache.count);
  Tensor<T> dz(dy.n(), c, dy.h(), dy.w());
  for (int j = 0; j < c; ++j) {
    // Reductions over the channel.
    T sum_dy{}, sum_dy_xhat{};
    for (int i = 0; i < dy.n(); ++i) {
      auto g = dy.channel(i, j);
      auto xh = cache.xhat.channel(i, j);
      for (std::size_t k = 0; k < g.size(); ++k) {
        sum_dy += g[k];
        sum_dy_xhat += g[k] * xh[k];
      }
    }
    dbeta[j] += sum_dy;
    dgamma[j] += sum_dy_xhat;

    const T& s_inv = cache.inv_std[j];
    const T& a = cache.alpha[j];
    const T shift = cache.batch_mean[j] - cache.source_mean[j];
    // d/dmu and d/dvar of the mixed moments.
    const T d_mean = -gamma[j] * sum_dy * s_inv;
    const T d_var = -0.5 * gamma[j] * sum_dy_xhat * s_inv * s_inv;
    if (!dalpha.empty()) {
      dalpha[j] += d_mean * shift +
                   d_var * (cache.batch_var[j] - cache.source_var[j] + (1.0 - 2.0 * a) * shift * shift);
    }
    const T d_batch_mean = d_mean * a + d_var * (2.0 * a * (1.0 - a)) * shift;
    const T d_batch_var = d_var * a;
    // z - batch_mean = xhat / s_inv + (mixed_mean - batch_mean)
    const T offset = cache.mixed_mean[j] - cache.batch_mean[j];
    const T scale = gamma[j] * s_inv;
    const T c_mean = d_batch_mean * inv_count;
    const T c_var = 2.0 * d_batch_var * inv_count;
    for (int i = 0; i < dy.n(); ++i) {
      auto g = dy.channel(i, j);
      auto xh = cache.xhat.channel(i, j);
      auto out = dz.channel(i, j);
      for (std::size_t k = 0; k < g.size(); ++k) {
        const T centered = xh[k] / s_inv + offset;
        out[k] = scale * g[k] + c_mean + c_var * centered;
      }
    }
  }
  return dz;
}

}  // namespace tttkit
