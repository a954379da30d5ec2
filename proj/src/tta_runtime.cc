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

#include "tttkit/tta_runtime.h"

#include <algorithm>

#include "tttkit/objectives.h"

namespace tttkit {

HeldOutLabels::HeldOutLabels(std::vector<int> labels) : labels_(std::move(labels)) {}

std::span<const int> HeldOutLabels::reveal(const MetricsKey&) const {
  ++reveals_;
  return labels_;
}

std::uint64_t HeldOutLabels::checksum() const {
  std::uint64_t h = 1469598103934665603ull;
  for (int v : labels_) {
    h ^= static_cast<std::uint32_t>(v);
    h *= 1099511628211ull;
  }
  return h;
}

CorpusStream::CorpusStream(const Corpus& corpus, int batch_size) : corpus_(corpus), batch_size_(batch_size) {
  if (batch_size < 1) throw ConfigError("batch size must be positive");
}

std::optional<StreamBatch> CorpusStream::next() {
  if (cursor_ >= corpus_.count) return std::nullopt;
  const int end = std::min(corpus_.count, cursor_ + batch_size_);
  std::vector<std::size_t> idx;
  for (int i = cursor_; i < end; ++i) idx.push_back(static_cast<std::size_t>(i));
  cursor_ = end;
  return StreamBatch{corpus_.batch(idx), HeldOutLabels(corpus_.batch_labels(idx)), next_id_++};
}

MetricsRecord score_batch(const Matrix<double>& logits, const HeldOutLabels& labels, std::int64_t batch_id,
                          std::vector<int>& predictions) {
  MetricsRecord rec;
  rec.batch_id = batch_id;
  rec.samples = logits.rows();
  predictions = argmax_rows(logits);
  rec.mean_entropy = mean_entropy(logits);
  if (labels.present()) {
    const auto y = labels.reveal(MetricsKey{});
    if (y.size() != predictions.size()) throw PreconditionError("label count does not match batch");
    std::size_t wrong = 0;
    for (std::size_t i = 0; i < y.size(); ++i) wrong += predictions[i] != y[i] ? 1 : 0;
    rec.error_rate = static_cast<double>(wrong) / static_cast<double>(y.size());
  }
  return rec;
}

namespace {

void fill_alpha(MetricsRecord& rec, const Model& model, StatsMode mode) {
  if (mode == StatsMode::kMixed) {
    const AlphaSummary all = overall_alpha_summary(model);
    rec.alpha_mean = all.mean;
    rec.alpha_min = all.min;
    rec.alpha_max = all.max;
    for (const auto& s : alpha_summary(model)) rec.alpha_layers.push_back({s.mean, s.min, s.max});
  } else {
    const double forced = mode == StatsMode::kBatch ? 1.0 : 0.0;
    rec.alpha_mean = rec.alpha_min = rec.alpha_max = forced;
    for (int l = 0; l < model.bn_layers(); ++l) rec.alpha_layers.push_back({forced, forced, forced});
  }
}

// Bookkeeping shared by the adaptive and baseline loops.
class StreamScorer {
 public:
  explicit StreamScorer(StreamResult& result) : result_(result) {}

  MetricsRecord& score(const Matrix<double>& logits, const StreamBatch& batch) {
    const std::uint64_t before = batch.labels.checksum();
    const std::size_t reveals_before = batch.labels.reveals();
    std::vector<int> preds;
    MetricsRecord rec = score_batch(logits, batch.labels, batch.batch_id, preds);
    ++result_.audit.batches;
    if (batch.labels.present()) {
      ++result_.audit.labeled_batches;
      result_.labeled += preds.size();
      result_.correct += static_cast<std::size_t>(std::lround((1.0 - rec.error_rate) * static_cast<double>(preds.size())));
    }
    result_.audit.reveals += batch.labels.reveals() - reveals_before;
    result_.audit.labels_intact = result_.audit.labels_intact && before == batch.labels.checksum();
    result_.predictions.insert(result_.predictions.end(), preds.begin(), preds.end());
    result_.records.push_back(std::move(rec));
    return result_.records.back();
  }

 private:
  StreamResult& result_;
};

std::vector<std::size_t> affine_indices(const Model& model) {
  std::vector<std::size_t> idx;
  for (const auto& e : model.layout.entries())
    if (e.kind == ParamKind::kBnGamma || e.kind == ParamKind::kBnBeta)
      for (std::size_t i = 0; i < e.size; ++i) idx.push_back(e.offset + i);
  std::sort(idx.begin(), idx.end());
  return idx;
}

}  // namespace

void deploy(Model& model) {
  model.freeze_source_statistics();
  model.deployed = model.params;
}

void reset_adaptation(Model& model) {
  if (!model.deployed) throw StatePhaseError("no deployed snapshot retained; cannot reset adaptation");
  for (const auto& e : model.layout.entries()) {
    if (e.kind != ParamKind::kBnGamma && e.kind != ParamKind::kBnBeta && e.kind != ParamKind::kBnAlpha) continue;
    std::copy_n(model.deployed->begin() + static_cast<std::ptrdiff_t>(e.offset), e.size,
                model.params.begin() + static_cast<std::ptrdiff_t>(e.offset));
  }
}

StreamResult adapt_stream(Model& model, BatchStream& stream, const AdaptationConfig& cfg, const AdaptOptions& options) {
  cfg.validate();
  if (model.phase != BNPhase::kAdaptation)
    throw StatePhaseError("adapt_stream needs a model whose source statistics are frozen");
  if (!model.deployed) deploy(model);
  const ParamPartition partition = partition_for(model, cfg);
  NesterovSgd optimizer(model.params.size(), cfg.momentum);
  StreamResult result;
  StreamScorer scorer(result);
  const ForwardOptions fopts{options.mode, nullptr};

  while (auto batch = stream.next()) {
    if (cfg.reset_policy == ResetPolicy::kEpisodic) {
      reset_adaptation(model);
      optimizer.reset();
    }
    const bool degenerate = batch->inputs.n() < 2;
    std::optional<Matrix<double>> early;
    if (options.predict_then_adapt) early = predict_logits(model, batch->inputs, fopts);
    bool skipped = degenerate;
    if (!degenerate) {
      InnerUpdateOptions inner;
      inner.mode = options.mode;
      inner.optimizer = &optimizer;
      AdaptedState st = meta_train_step(model, batch->inputs, cfg, partition, inner);
      skipped = st.skipped;
      model.params = std::move(st.params);
    }
    const Matrix<double> logits = early ? *early : predict_logits(model, batch->inputs, fopts);
    MetricsRecord& rec = scorer.score(logits, *batch);
    rec.skipped = skipped;
    fill_alpha(rec, model, options.mode);
    if (options.after_batch) options.after_batch(model, rec);
  }
  return result;
}

StreamResult frozen_predict(const Model& model, BatchStream& stream, StatsMode mode) {
  StreamResult result;
  StreamScorer scorer(result);
  while (auto batch = stream.next()) {
    MetricsRecord& rec = scorer.score(predict_logits(model, batch->inputs, {mode, nullptr}), *batch);
    fill_alpha(rec, model, mode);
  }
  return result;
}

Baseline parse_baseline(std::string_view name) {
  if (name == "source") return Baseline::kSource;
  if (name == "adabn") return Baseline::kAdaBN;
  if (name == "tent") return Baseline::kTent;
  throw ConfigError("unknown baseline method: " + std::string(name));
}

StreamResult baseline_predict(const Model& model, BatchStream& stream, std::string_view method, const AdaptationConfig& cfg) {
  return baseline_predict(model, stream, parse_baseline(method), cfg);
}

StreamResult baseline_predict(const Model& source_model, BatchStream& stream, Baseline method, const AdaptationConfig& cfg) {
  cfg.validate();
  Model model = source_model;
  model.freeze_source_statistics();
  const StatsMode mode = method == Baseline::kSource ? StatsMode::kSource : StatsMode::kBatch;
  const ForwardOptions fopts{mode, nullptr};
  const std::vector<std::size_t> affine = affine_indices(model);
  std::vector<double> rates(model.params.size(), 0.0), decay(model.params.size(), 0.0);
  for (std::size_t i : affine) {
    rates[i] = cfg.lr;
    decay[i] = cfg.weight_decay;
  }
  NesterovSgd optimizer(model.params.size(), cfg.momentum);
  StreamResult result;
  StreamScorer scorer(result);

  while (auto batch = stream.next()) {
    bool skipped = false;
    if (method == Baseline::kTent) {
      if (batch->inputs.n() < 2) {
        skipped = true;
      } else {
        std::vector<double> grad;
        const double loss = loss_and_gradient<double>(
            model, model.params, batch->inputs, fopts,
            [](const Matrix<double>& logits) { return entropy_loss_grad<double>(logits); }, grad);
        if (!std::isfinite(loss)) throw NumericalError("tent objective became non-finite");
        optimizer.step(model.params, grad, affine, rates, decay);
      }
    }
    const Matrix<double> logits = predict_logits(model, batch->inputs, fopts);
    MetricsRecord& rec = scorer.score(logits, *batch);
    rec.skipped = skipped;
    fill_alpha(rec, model, mode);
  }
  return result;
}

}  // namespace tttkit
