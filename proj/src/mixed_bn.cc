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

#include <algorithm>

namespace tttkit {

void project_alpha(std::span<double> alpha) {
  for (double& a : alpha) a = std::clamp(a, 0.0, 1.0);
}

std::vector<double> projected_alpha(std::span<const double> alpha_raw) {
  std::vector<double> out(alpha_raw.begin(), alpha_raw.end());
  project_alpha(out);
  return out;
}

MixedBNState MixedBNState::identity(int channels, double alpha_init) {
  MixedBNState s;
  s.mu_s.assign(channels, 0.0);
  s.var_s.assign(channels, 1.0);
  s.gamma.assign(channels, 1.0);
  s.beta.assign(channels, 0.0);
  s.alpha.assign(channels, alpha_init);
  return s;
}

void MixedBNState::validate() const {
  const std::size_t c = mu_s.size();
  if (var_s.size() != c || gamma.size() != c || beta.size() != c || alpha.size() != c)
    throw PreconditionError("MixedBNState: vector lengths differ");
  for (double v : var_s)
    if (v < 0.0) throw PreconditionError("MixedBNState: negative source variance");
  detail::check_alpha<double>(alpha);
  if (!(eps > 0.0)) throw PreconditionError("MixedBNState: eps must be positive");
}

void update_running_stats(std::span<double> running_mean, std::span<double> running_var, const BatchStats<double>& batch,
                          double momentum) {
  if (running_mean.size() != batch.mean.size() || running_var.size() != batch.var.size())
    throw PreconditionError("update_running_stats: channel count mismatch");
  for (std::size_t j = 0; j < running_mean.size(); ++j) {
    running_mean[j] = (1.0 - momentum) * running_mean[j] + momentum * batch.mean[j];
    running_var[j] = (1.0 - momentum) * running_var[j] + momentum * batch.var[j];
  }
}

void update_running_stats(MixedBNState& state, const BatchStats<double>& batch) {
  if (state.phase != BNPhase::kSourceTraining)
    throw StatePhaseError("running statistics are frozen during test-time adaptation");
  update_running_stats(state.mu_s, state.var_s, batch, state.momentum);
}

Tensor<double> mixed_bn_apply(const Tensor<double>& z, const MixedBNState& state) {
  state.validate();
  if (z.c() != state.channels()) throw PreconditionError("mixed_bn_apply: channel count mismatch");
  return mixed_bn_forward<double>(z, state.mu_s, state.var_s, state.gamma, state.beta, state.alpha, state.eps, nullptr);
}

}  // namespace tttkit
