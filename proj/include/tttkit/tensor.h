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

#include <array>
#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "tttkit/errors.h"

namespace tttkit {

// Dense NCHW tensor.
template <typename T>
class Tensor {
 public:
  Tensor() = default;
  Tensor(int n, int c, int h, int w, T fill = T{})
      : shape_{n, c, h, w}, data_(static_cast<std::size_t>(n) * c * h * w, fill) {
    if (n < 0 || c < 0 || h < 0 || w < 0) throw PreconditionError("negative tensor dimension");
  }

  int n() const { return shape_[0]; }
  int c() const { return shape_[1]; }
  int h() const { return shape_[2]; }
  int w() const { return shape_[3]; }
  const std::array<int, 4>& shape() const { return shape_; }
  std::size_t size() const { return data_.size(); }
  std::size_t plane() const { return static_cast<std::size_t>(shape_[2]) * shape_[3]; }

  T& operator()(int i, int j, int y, int x) { return data_[index(i, j, y, x)]; }
  const T& operator()(int i, int j, int y, int x) const { return data_[index(i, j, y, x)]; }

  std::span<T> data() { return data_; }
  std::span<const T> data() const { return data_; }

  // Contiguous h*w plane of sample i, channel j.
  std::span<T> channel(int i, int j) { return {data_.data() + (static_cast<std::size_t>(i) * shape_[1] + j) * plane(), plane()}; }
  std::span<const T> channel(int i, int j) const {
    return {data_.data() + (static_cast<std::size_t>(i) * shape_[1] + j) * plane(), plane()};
  }

  bool same_shape(const Tensor& o) const { return shape_ == o.shape_; }

 private:
  std::size_t index(int i, int j, int y, int x) const {
    return ((static_cast<std::size_t>(i) * shape_[1] + j) * shape_[2] + y) * shape_[3] + x;
  }

  std::array<int, 4> shape_{0, 0, 0, 0};
  std::vector<T> data_;
};

// Row-major matrix, used for logits [samples, classes].
template <typename T>
class Matrix {
 public:
  Matrix() = default;
  Matrix(int rows, int cols, T fill = T{}) : rows_(rows), cols_(cols), data_(static_cast<std::size_t>(rows) * cols, fill) {}

  int rows() const { return rows_; }
  int cols() const { return cols_; }
  T& operator()(int r, int c) { return data_[static_cast<std::size_t>(r) * cols_ + c]; }
  const T& operator()(int r, int c) const { return data_[static_cast<std::size_t>(r) * cols_ + c]; }
  std::span<T> row(int r) { return {data_.data() + static_cast<std::size_t>(r) * cols_, static_cast<std::size_t>(cols_)}; }
  std::span<const T> row(int r) const {
    return {data_.data() + static_cast<std::size_t>(r) * cols_, static_cast<std::size_t>(cols_)};
  }
  std::span<T> data() { return data_; }
  std::span<const T> data() const { return data_; }

 private:
  int rows_ = 0;
  int cols_ = 0;
  std::vector<T> data_;
};

inline std::string shape_string(const std::array<int, 4>& s) {
  return "[" + std::to_string(s[0]) + "," + std::to_string(s[1]) + "," + std::to_string(s[2]) + "," + std::to_string(s[3]) + "]";
}

}  // namespace tttkit
