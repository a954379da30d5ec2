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
#include <vector>

namespace tttkit {

// SGD with Nesterov momentum (PyTorch convention): the buffer starts at the
// first gradient, and the applied direction is g + momentum * buffer.
class NesterovSgd {
 public:
  NesterovSgd() = default;
  NesterovSgd(std::size_t size, double momentum) : momentum_(momentum), buffer_(size, 0.0), started_(size, 0) {}

  // Updates params[i] for every i in `indices`. `rates` and `decay` are
  // full-length per-parameter vectors; `decay` may be empty.
  void step(std::span<double> params, std::span<const double> grad, std::span<const std::size_t> indices,
            std::span<const double> rates, std::span<const double> decay);
  void reset();

  double momentum() const { return momentum_; }
  const std::vector<double>& buffer() const { return buffer_; }
  const std::vector<std::uint8_t>& started() const { return started_; }
  void restore(std::vector<double> buffer, std::vector<std::uint8_t> started);

 private:
  double momentum_ = 0.9;
  std::vector<double> buffer_;
  std::vector<std::uint8_t> started_;
};

}  // namespace tttkit
