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

#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "tttkit/dual.h"
#include "tttkit/mixed_bn.h"
#include "tttkit/rng.h"
#include "tttkit/shift_synthesis.h"
#include "tttkit/tensor.h"

namespace tttkit {

struct ConvSpec {
  int in_channels = 1;
  int out_channels = 1;
  int kernel = 3;
  int stride = 1;
  int padding = 1;
};

// A stack of conv -> mixed BN -> ReLU blocks, global average pooling and a
// linear head. The shift-synthesis hook sits after the first `stem_blocks`
// blocks.
struct NetworkSpec {
  int in_channels = 1;
  int height = 28;
  int width = 28;
  int classes = 10;
  std::vector<ConvSpec> blocks;
  int stem_blocks = 1;
  double bn_eps = kBnEpsilon;
  double bn_momentum = 0.1;

  // Desk-scale digits backbone: 1x28x28 -> 8 -> 16 -> 32 channels.
  static NetworkSpec digits();
  // Under 100 parameters; used for derivative checks.
  static NetworkSpec toy();
  static NetworkSpec by_name(std::string_view name);

  void validate() const;
  // Spatial size after block `index`.
  std::pair<int, int> output_hw(int index) const;
  int stem_channels() const { return blocks.at(stem_blocks - 1).out_channels; }
};

enum class ParamKind { kConvWeight, kBnGamma, kBnBeta, kBnAlpha, kHeadWeight, kHeadBias };

struct ParamEntry {
  std::string name;
  ParamKind kind;
  int layer = -1;
  std::size_t offset = 0;
  std::size_t size = 0;
};

// Deterministically ordered named slices of the flat parameter vector.
class ParamLayout {
 public:
  static ParamLayout for_network(const NetworkSpec& spec);

  const std::vector<ParamEntry>& entries() const { return entries_; }
  std::size_t total() const { return total_; }
  const ParamEntry& find(std::string_view name) const;
  const ParamEntry& bn_entry(int layer, ParamKind kind) const;
  int bn_layers() const { return bn_layers_; }

 private:
  std::vector<ParamEntry> entries_;
  std::size_t total_ = 0;
  int bn_layers_ = 0;
};

struct SourceStats {
  std::vector<double> mean;
  std::vector<double> var;
};

struct Model {
  NetworkSpec spec;
  ParamLayout layout;
  std::vector<double> params;
  std::vector<SourceStats> source;  // one per BN layer
  BNPhase phase = BNPhase::kSourceTraining;
  // Adaptable parameters as deployed; reset_adaptation restores them.
  std::optional<std::vector<double>> deployed;

  static Model create(const NetworkSpec& spec, double alpha_init, Rng& rng);

  std::span<double> slice(const ParamEntry& e) { return {params.data() + e.offset, e.size}; }
  std::span<const double> slice(const ParamEntry& e) const { return {params.data() + e.offset, e.size}; }
  std::span<double> bn_param(int layer, ParamKind kind) { return slice(layout.bn_entry(layer, kind)); }
  std::span<const double> bn_param(int layer, ParamKind kind) const { return slice(layout.bn_entry(layer, kind)); }
  int bn_layers() const { return layout.bn_layers(); }

  // Freezes source statistics; afterwards running-stat updates are errors.
  void freeze_source_statistics() { phase = BNPhase::kAdaptation; }
};

enum class StatsMode {
  kMixed,   // interpolate with the learned alpha
  kBatch,   // alpha forced to 1 (plain batch statistics)
  kSource,  // alpha forced to 0 (frozen source statistics)
};

struct ForwardOptions {
  StatsMode mode = StatsMode::kMixed;
  const ShiftDraw* shift = nullptr;
};

// Reverse-mode evaluation of the network for a given parameter vector. With
// T = Dual the gradient carries a directional derivative, which is how
// Hessian-vector products are formed.
template <typename T>
class Evaluator {
 public:
  Evaluator(const Model& model, std::span<const T> params);

  Matrix<T> forward(const Tensor<double>& input, const ForwardOptions& options, bool keep_cache = true);
  // Full-length gradient w.r.t. the parameter vector.
  std::vector<T> backward(const Matrix<T>& dlogits);
  // Batch moments (values only) seen by each BN layer in the last forward.
  const std::vector<BatchStats<double>>& batch_stats() const { return batch_stats_; }

 private:
  struct BlockCache {
    std::vector<T> cols;  // im2col of the block input (blocks >= 1)
    MixedBNCache<T> bn;
    Tensor<T> activation;  // ReLU output, before any shift synthesis
  };

  const Model& model_;
  std::span<const T> params_;
  ForwardOptions options_;
  std::vector<double> cols0_;
  std::vector<BlockCache> blocks_;
  Matrix<T> pooled_;
  std::vector<BatchStats<double>> batch_stats_;
  bool cached_ = false;
};

extern template class Evaluator<double>;
extern template class Evaluator<Dual>;

Matrix<double> predict_logits(const Model& model, const Tensor<double>& input, const ForwardOptions& options = {});

// Runs forward, applies `loss_fn(logits) -> LossGrad<T>`, and backward.
template <typename T, typename LossFn>
T loss_and_gradient(const Model& model, std::span<const T> params, const Tensor<double>& input, const ForwardOptions& options,
                    LossFn&& loss_fn, std::vector<T>& grad) {
  Evaluator<T> eval(model, params);
  const Matrix<T> logits = eval.forward(input, options);
  auto lg = loss_fn(logits);
  grad = eval.backward(lg.dlogits);
  return lg.loss;
}

}  // namespace tttkit
