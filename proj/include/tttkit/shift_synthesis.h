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

#include <cstdint>
#include <span>
#include <utility>
#include <vector>

#include "tttkit/errors.h"
#include "tttkit/rng.h"
#include "tttkit/tensor.h"

namespace tttkit {

// One per-channel affine domain shift z * gamma_shift + lambda_shift.
// Unmasked channels keep gamma_shift = 1, lambda_shift = 0.
struct ShiftDraw {
  std::vector<std::uint8_t> mask;
  std::vector<double> gamma_shift;
  std::vector<double> lambda_shift;
  double p = 0.0;

  static ShiftDraw identity(int channels);
  int channels() const { return static_cast<int>(mask.size()); }
  std::size_t shifted_channels() const;
  void validate() const;
};

// i.i.d. Bernoulli(p) channel mask.
std::vector<std::uint8_t> sample_mask(double p, int channels, Rng& rng);

// Fresh U[0,1) scale and bias for masked channels; identity elsewhere.
std::pair<std::vector<double>, std::vector<double>> sample_transform(std::span<const std::uint8_t> mask, Rng& rng);

ShiftDraw draw_shift(double p, int channels, Rng& rng);

template <typename T>
Tensor<T> apply_shift(const Tensor<T>& z, const ShiftDraw& draw) {
  if (z.c() != draw.channels()) throw PreconditionError("apply_shift: channel count mismatch");
  Tensor<T> out = z;
  for (int j = 0; j < z.c(); ++j) {
    if (!draw.mask[j]) continue;  // untouched channels stay bit-identical
    const double g = draw.gamma_shift[j];
    const double b = draw.lambda_shift[j];
    for (int i = 0; i < z.n(); ++i)
      for (T& v : out.channel(i, j)) v = v * g + b;
  }
  return out;
}

// In-place backward: dz *= gamma_shift on masked channels.
template <typename T>
void apply_shift_backward(Tensor<T>& grad, const ShiftDraw& draw) {
  for (int j = 0; j < grad.c(); ++j) {
    if (!draw.mask[j]) continue;
    const double g = draw.gamma_shift[j];
    for (int i = 0; i < grad.n(); ++i)
      for (T& v : grad.channel(i, j)) v = v * g;
  }
}

}  // namespace tttkit
