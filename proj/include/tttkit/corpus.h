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
#include <string>
#include <vector>

#include "tttkit/tensor.h"

namespace tttkit {

// Labeled images with pixel values in [0,1], stored as float32 so that the
// on-disk container round-trips bit-exactly.
struct Corpus {
  int count = 0;
  int channels = 1;
  int height = 28;
  int width = 28;
  int classes = 10;
  std::vector<float> images;  // [count, channels, height, width]
  std::vector<std::int32_t> labels;
  std::uint64_t seed = 0;
  std::string provenance;

  std::size_t image_size() const { return static_cast<std::size_t>(channels) * height * width; }
  std::span<float> image(int i) { return {images.data() + image_size() * i, image_size()}; }
  std::span<const float> image(int i) const { return {images.data() + image_size() * i, image_size()}; }

  Tensor<double> batch(std::span<const std::size_t> indices) const;
  std::vector<int> batch_labels(std::span<const std::size_t> indices) const;
  // Keeps the listed samples, in order.
  Corpus subset(std::span<const std::size_t> indices) const;
  // Throws on label or pixel range violations.
  void validate() const;
  std::uint64_t checksum() const;
};

}  // namespace tttkit
