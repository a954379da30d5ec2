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

#include "tttkit/shift_synthesis.h"

#include <numeric>

namespace tttkit {

ShiftDraw ShiftDraw::identity(int channels) {
  ShiftDraw d;
  d.mask.assign(channels, 0);
  d.gamma_shift.assign(channels, 1.0);
  d.lambda_shift.assign(channels, 0.0);
  return d;
}

std::size_t ShiftDraw::shifted_channels() const { return std::accumulate(mask.begin(), mask.end(), std::size_t{0}); }

void ShiftDraw::validate() const {
  const std::size_t c = mask.size();
  if (gamma_shift.size() != c || lambda_shift.size() != c) throw PreconditionError("ShiftDraw: vector lengths differ");
  for (std::size_t j = 0; j < c; ++j) {
    if (mask[j] > 1) throw PreconditionError("ShiftDraw: mask must be binary");
    if (!mask[j] && (gamma_shift[j] != 1.0 || lambda_shift[j] != 0.0))
      throw PreconditionError("ShiftDraw: unmasked channel must be identity");
    if (mask[j] && (gamma_shift[j] < 0.0 || gamma_shift[j] > 1.0 || lambda_shift[j] < 0.0 || lambda_shift[j] > 1.0))
      throw PreconditionError("ShiftDraw: masked draw outside [0,1]");
  }
}

std::vector<std::uint8_t> sample_mask(double p, int channels, Rng& rng) {
  if (!(p >= 0.0 && p <= 1.0)) throw PreconditionError("shift probability must lie in [0,1]");
  if (channels < 1) throw PreconditionError("channel count must be positive");
  std::vector<std::uint8_t> mask(channels);
  for (auto& m : mask) m = bernoulli(rng, p) ? 1 : 0;
  return mask;
}

std::pair<std::vector<double>, std::vector<double>> sample_transform(std::span<const std::uint8_t> mask, Rng& rng) {
  std::vector<double> gamma(mask.size(), 1.0);
  std::vector<double> lambda(mask.size(), 0.0);
  for (std::size_t j = 0; j < mask.size(); ++j) {
    if (mask[j] > 1) throw PreconditionError("mask must be binary");
    if (!mask[j]) continue;
    gamma[j] = uniform01(rng);
    lambda[j] = uniform01(rng);
  }
  return {std::move(gamma), std::move(lambda)};
}

ShiftDraw draw_shift(double p, int channels, Rng& rng) {
  ShiftDraw d;
  d.p = p;
  d.mask = sample_mask(p, channels, rng);
  auto [g, l] = sample_transform(d.mask, rng);
  d.gamma_shift = std::move(g);
  d.lambda_shift = std::move(l);
  return d;
}

}  // namespace tttkit
