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

#include "tttkit/optimizer.h"

#include <algorithm>

#include "tttkit/errors.h"

namespace tttkit {

void NesterovSgd::step(std::span<double> params, std::span<const double> grad, std::span<const std::size_t> indices,
                       std::span<const double> rates, std::span<const double> decay) {
  if (params.size() != buffer_.size() || grad.size() != params.size() || rates.size() != params.size())
    throw PreconditionError("optimizer: size mismatch");
  for (std::size_t i : indices) {
    double g = grad[i];
    if (!decay.empty()) g += decay[i] * params[i];
    if (started_[i]) {
      buffer_[i] = momentum_ * buffer_[i] + g;
    } else {
      buffer_[i] = g;
      started_[i] = 1;
    }
    params[i] -= rates[i] * (g + momentum_ * buffer_[i]);
  }
}

void NesterovSgd::reset() {
  std::fill(buffer_.begin(), buffer_.end(), 0.0);
  std::fill(started_.begin(), started_.end(), 0);
}

void NesterovSgd::restore(std::vector<double> buffer, std::vector<std::uint8_t> started) {
  if (buffer.size() != buffer_.size() || started.size() != started_.size())
    throw PreconditionError("optimizer: restored state has the wrong size");
  buffer_ = std::move(buffer);
  started_ = std::move(started);
}

}  // namespace tttkit
