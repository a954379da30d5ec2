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
#include <functional>
#include <optional>
#include <span>
#include <string_view>
#include <vector>

#include "tttkit/corpus.h"
#include "tttkit/meta_engine.h"
#include "tttkit/metrics.h"
#include "tttkit/network.h"

namespace tttkit {

class HeldOutLabels;

// Pass-key: only metric computation can construct one, so only metric
// computation can read held-out labels.
class MetricsKey {
 private:
  MetricsKey() = default;
  friend MetricsRecord score_batch(const Matrix<double>&, const HeldOutLabels&, std::int64_t, std::vector<int>&);
};

class HeldOutLabels {
 public:
  HeldOutLabels() = default;
  explicit HeldOutLabels(std::vector<int> labels);

  bool present() const { return !labels_.empty(); }
  std::size_t size() const { return labels_.size(); }
  std::span<const int> reveal(const MetricsKey&) const;
  std::size_t reveals() const { return reveals_; }
  std::uint64_t checksum() const;

 private:
  std::vector<int> labels_;
  mutable std::size_t reveals_ = 0;
};

struct StreamBatch {
  Tensor<double> inputs;
  HeldOutLabels labels;
  std::int64_t batch_id = 0;
};

class BatchStream {
 public:
  virtual ~BatchStream() = default;
  virtual std::optional<StreamBatch> next() = 0;
};

// In-order minibatches of a corpus; the last batch may be partial.
class CorpusStream : public BatchStream {
 public:
  CorpusStream(const Corpus& corpus, int batch_size);
  std::optional<StreamBatch> next() override;

 private:
  const Corpus& corpus_;
  int batch_size_;
  int cursor_ = 0;
  std::int64_t next_id_ = 0;
};

// Predictions, per-batch error and entropy, alpha summary. Labels are read
// here and nowhere else.
MetricsRecord score_batch(const Matrix<double>& logits, const HeldOutLabels& labels, std::int64_t batch_id,
                          std::vector<int>& predictions);

struct LabelAudit {
  std::size_t batches = 0;
  std::size_t labeled_batches = 0;
  std::size_t reveals = 0;
  bool labels_intact = true;

  bool passed() const { return labels_intact && reveals == labeled_batches; }
};

struct StreamResult {
  std::vector<int> predictions;
  std::vector<MetricsRecord> records;
  LabelAudit audit;
  std::size_t correct = 0;
  std::size_t labeled = 0;

  // Sample-weighted error over the whole stream.
  double error_rate() const { return labeled ? 1.0 - static_cast<double>(correct) / static_cast<double>(labeled) : 0.0; }
};

struct AdaptOptions {
  StatsMode mode = StatsMode::kMixed;
  bool predict_then_adapt = false;
  // Invoked after each batch with the post-adaptation model.
  std::function<void(const Model&, const MetricsRecord&)> after_batch;
};

// Freezes the source statistics and retains the deployed adaptable
// parameters for reset_adaptation.
void deploy(Model& model);

// Restores the deployed adaptable parameters bit-exactly.
void reset_adaptation(Model& model);

// One-pass test-time adaptation: per batch, optional episodic reset, one
// self-supervised inner update (no labels, no shift synthesis), then
// prediction with the updated model.
StreamResult adapt_stream(Model& model, BatchStream& stream, const AdaptationConfig& cfg, const AdaptOptions& options = {});

// Inference without any parameter update, under the given statistics mode.
StreamResult frozen_predict(const Model& model, BatchStream& stream, StatsMode mode);

enum class Baseline { kSource, kAdaBN, kTent };
Baseline parse_baseline(std::string_view name);

// Works on a private copy of the model, so repeated calls are independent.
StreamResult baseline_predict(const Model& model, BatchStream& stream, Baseline method, const AdaptationConfig& cfg);
StreamResult baseline_predict(const Model& model, BatchStream& stream, std::string_view method, const AdaptationConfig& cfg);

}  // namespace tttkit
