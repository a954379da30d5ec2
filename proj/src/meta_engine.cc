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

#include "tttkit/meta_engine.h"

#include <algorithm>
#include <cmath>
#include <set>
#include <sstream>

namespace tttkit {

void AdaptationConfig::validate() const {
  auto nonneg = [](double v, const char* name) {
    if (!(v >= 0.0) || !std::isfinite(v)) throw ConfigError(std::string(name) + " must be a non-negative finite number");
  };
  nonneg(lam, "lam");
  nonneg(lr, "lr");
  nonneg(meta_lr, "meta_lr");
  nonneg(alpha_lr, "alpha_lr");
  nonneg(classifier_lr, "classifier_lr");
  nonneg(weight_decay, "weight_decay");
  if (!(kappa > 0.0 && kappa < 1.0)) throw ConfigError("kappa must lie in (0,1)");
  if (!(momentum >= 0.0 && momentum < 1.0)) throw ConfigError("momentum must lie in [0,1)");
  if (!(alpha_init >= 0.0 && alpha_init <= 1.0)) throw ConfigError("alpha_init must lie in [0,1]");
  if (!(shift_p >= 0.0 && shift_p <= 1.0)) throw ConfigError("shift_p must lie in [0,1]");
  if (k < 1) throw ConfigError("k must be at least 1");
  if (batch_size < 1) throw ConfigError("batch_size must be at least 1");
}

std::vector<std::size_t> ParamPartition::adaptable() const {
  std::vector<std::size_t> out;
  out.reserve(theta_beta.size() + theta_gamma.size());
  std::merge(theta_beta.begin(), theta_beta.end(), theta_gamma.begin(), theta_gamma.end(), std::back_inserter(out));
  return out;
}

std::vector<int> select_layers(std::string_view selector, int bn_layers) {
  if (bn_layers < 1) throw ConfigError("model has no BN layers");
  if (selector == "none") return {};
  if (selector == "last") return {bn_layers - 1};
  if (selector == "first") return {0};
  if (selector == "all") {
    std::vector<int> all(bn_layers);
    for (int i = 0; i < bn_layers; ++i) all[i] = i;
    return all;
  }
  std::set<int> picked;
  std::stringstream ss{std::string(selector)};
  std::string item;
  while (std::getline(ss, item, ',')) {
    try {
      std::size_t used = 0;
      const int idx = std::stoi(item, &used);
      if (used != item.size()) throw std::invalid_argument(item);
      if (idx < 0 || idx >= bn_layers) throw ConfigError("layer selector '" + std::string(selector) + "' matches no layer");
      picked.insert(idx);
    } catch (const std::logic_error&) {
      throw ConfigError("layer selector '" + std::string(selector) + "' matches no layer");
    }
  }
  if (picked.empty()) throw ConfigError("layer selector '" + std::string(selector) + "' matches no layer");
  return {picked.begin(), picked.end()};
}

ParamPartition partition_parameters(const Model& model, std::string_view layer_selector) {
  const std::vector<int> layers = select_layers(layer_selector, model.bn_layers());
  ParamPartition part;
  for (const auto& e : model.layout.entries()) {
    const bool bn = e.kind == ParamKind::kBnGamma || e.kind == ParamKind::kBnBeta || e.kind == ParamKind::kBnAlpha;
    const bool selected =
        e.kind == ParamKind::kBnBeta && std::find(layers.begin(), layers.end(), e.layer) != layers.end();
    std::vector<std::size_t>* dst = selected ? &part.theta_beta : (bn ? &part.theta_gamma : &part.theta_frozen);
    (selected ? part.beta_names : (bn ? part.gamma_names : part.frozen_names)).push_back(e.name);
    for (std::size_t i = 0; i < e.size; ++i) dst->push_back(e.offset + i);
  }
  return part;
}

ParamPartition partition_for(const Model& model, const AdaptationConfig& cfg) {
  return partition_parameters(model, cfg.minimax ? std::string_view(cfg.layer_selector) : std::string_view("none"));
}

std::vector<double> inner_rates(const Model& model, const AdaptationConfig& cfg) {
  std::vector<double> rates(model.params.size(), 0.0);
  for (const auto& e : model.layout.entries()) {
    double r = 0.0;
    if (e.kind == ParamKind::kBnAlpha) r = cfg.adapt_alpha ? cfg.lr : 0.0;
    if (e.kind == ParamKind::kBnGamma || e.kind == ParamKind::kBnBeta) r = cfg.lr;
    std::fill_n(rates.begin() + static_cast<std::ptrdiff_t>(e.offset), e.size, r);
  }
  return rates;
}

namespace {

std::vector<double> affine_decay(const Model& model, double weight_decay) {
  std::vector<double> decay(model.params.size(), 0.0);
  for (const auto& e : model.layout.entries())
    if (e.kind == ParamKind::kBnGamma || e.kind == ParamKind::kBnBeta)
      std::fill_n(decay.begin() + static_cast<std::ptrdiff_t>(e.offset), e.size, weight_decay);
  return decay;
}

std::vector<std::uint8_t> alpha_flags(const Model& model) {
  std::vector<std::uint8_t> flags(model.params.size(), 0);
  for (const auto& e : model.layout.entries())
    if (e.kind == ParamKind::kBnAlpha) std::fill_n(flags.begin() + static_cast<std::ptrdiff_t>(e.offset), e.size, 1);
  return flags;
}

double inner_gradient(const Model& model, std::span<const double> params, const Tensor<double>& inputs,
                      const ForwardOptions& fopts, const ConfidenceSplit& split, double lam, ObjectiveRole role,
                      std::vector<double>& grad) {
  return loss_and_gradient<double>(
      model, params, inputs, fopts,
      [&](const Matrix<double>& logits) { return minimax_loss_grad<double>(logits, split, lam, role); }, grad);
}

void require_finite(double v, const std::string& what) {
  if (!std::isfinite(v)) throw NumericalError("non-finite " + what);
}

}  // namespace

AdaptedState meta_train_step(const Model& model, const Tensor<double>& inputs, const AdaptationConfig& cfg,
                             const ParamPartition& partition, const InnerUpdateOptions& options) {
  if (options.record && options.optimizer)
    throw EngineError("stateful optimizer steps cannot be recorded for second-order differentiation");
  AdaptedState st;
  st.params_before = model.params;
  st.params = model.params;
  st.mode = options.mode;
  st.recorded = options.record;
  if (options.record) {
    st.inputs = inputs;
    if (options.shift) st.shift = *options.shift;
  }
  const ForwardOptions fopts{options.mode, options.shift};

  const Matrix<double> logits0 = Evaluator<double>(model, st.params).forward(inputs, fopts, false);
  st.split = confidence_split(logits0, cfg.kappa);
  st.losses = minimax_objectives(logits0, st.split, cfg.lam);
  if (st.split.empty() || (partition.theta_beta.empty() && partition.theta_gamma.empty())) {
    st.skipped = true;
    return st;
  }

  const std::vector<double> rates = inner_rates(model, cfg);
  const std::vector<double> decay = affine_decay(model, cfg.weight_decay);
  const std::vector<std::uint8_t> is_alpha = alpha_flags(model);
  std::vector<double> grad;

  auto sub_step = [&](const std::vector<std::size_t>& subset, ObjectiveRole role) {
    if (subset.empty()) return;
    const double loss = inner_gradient(model, st.params, inputs, fopts, st.split, cfg.lam, role, grad);
    require_finite(loss, "inner objective");
    InnerStep rec;
    if (options.record) {
      rec.role = role;
      rec.params_before = st.params;
      rec.step_sizes.assign(st.params.size(), 0.0);
      rec.interior.assign(st.params.size(), 1);
    }
    if (options.optimizer) {
      options.optimizer->step(st.params, grad, subset, rates, decay);
    } else {
      for (std::size_t i : subset) {
        st.params[i] -= rates[i] * grad[i];
        if (options.record) rec.step_sizes[i] = rates[i];
      }
    }
    for (std::size_t i : subset) {
      if (!is_alpha[i]) continue;
      const double raw = st.params[i];
      if (raw < 0.0 || raw > 1.0) {
        st.params[i] = std::clamp(raw, 0.0, 1.0);
        if (options.record) rec.interior[i] = 0;
      }
    }
    if (options.record) st.trace.push_back(std::move(rec));
  };

  for (int round = 0; round < cfg.k; ++round) {
    sub_step(partition.theta_beta, ObjectiveRole::kBeta);
    sub_step(partition.theta_gamma, ObjectiveRole::kGamma);
  }
  return st;
}

std::vector<double> inner_hessian_vector_product(const Model& model, std::span<const double> at, const AdaptedState& state,
                                                 ObjectiveRole role, double lam, std::span<const double> direction) {
  if (at.size() != direction.size()) throw PreconditionError("hvp: direction length mismatch");
  std::vector<Dual> p(at.size());
  for (std::size_t i = 0; i < at.size(); ++i) p[i] = Dual(at[i], direction[i]);
  const ForwardOptions fopts{state.mode, state.shift ? &*state.shift : nullptr};
  std::vector<Dual> grad;
  loss_and_gradient<Dual>(
      model, p, state.inputs, fopts,
      [&](const Matrix<Dual>& logits) { return minimax_loss_grad<Dual>(logits, state.split, lam, role); }, grad);
  std::vector<double> out(grad.size());
  for (std::size_t i = 0; i < grad.size(); ++i) out[i] = grad[i].d;
  return out;
}

std::vector<double> meta_gradient(const Model& model, const AdaptedState& state, const Tensor<double>& inputs,
                                  std::span<const int> labels, const AdaptationConfig& cfg, const ParamPartition& partition,
                                  double* outer_loss) {
  if (cfg.second_order && !state.recorded)
    throw EngineError("adapted state carries no recorded inner update; second-order meta-gradient unavailable");
  const ForwardOptions fopts{state.mode, state.shift ? &*state.shift : nullptr};
  std::vector<double> grad;
  const double g = loss_and_gradient<double>(
      model, state.params, inputs, fopts,
      [&](const Matrix<double>& logits) { return cross_entropy_grad<double>(logits, labels); }, grad);
  require_finite(g, "meta-test loss");
  if (outer_loss) *outer_loss = g;

  const std::vector<std::size_t> adaptable = partition.adaptable();
  std::vector<double> v(grad.size(), 0.0);
  for (std::size_t i : adaptable) v[i] = grad[i];
  if (!cfg.second_order) return v;

  // Reverse through each recorded step x' = clamp(x - S g(x)):
  //   J^T v = u - H(x) S u,  u = C v.
  std::vector<double> w(v.size());
  for (auto it = state.trace.rbegin(); it != state.trace.rend(); ++it) {
    bool any = false;
    for (std::size_t i = 0; i < v.size(); ++i) {
      v[i] *= it->interior[i];
      w[i] = it->step_sizes[i] * v[i];
      any = any || w[i] != 0.0;
    }
    if (!any) continue;
    const std::vector<double> hw = inner_hessian_vector_product(model, it->params_before, state, it->role, cfg.lam, w);
    for (std::size_t i : adaptable) v[i] -= hw[i];
  }
  return v;
}

MetaTestResult meta_test_step(Model& model, const AdaptedState& state, const Tensor<double>& inputs,
                              std::span<const int> labels, const AdaptationConfig& cfg, const ParamPartition& partition,
                              NesterovSgd& outer) {
  MetaTestResult res;
  res.meta_grad = meta_gradient(model, state, inputs, labels, cfg, partition, &res.outer_loss);
  std::vector<double> rates(model.params.size(), 0.0);
  for (const auto& e : model.layout.entries()) {
    double r = 0.0;
    if (e.kind == ParamKind::kBnAlpha) r = cfg.alpha_lr;
    if (e.kind == ParamKind::kBnGamma || e.kind == ParamKind::kBnBeta) r = cfg.meta_lr;
    std::fill_n(rates.begin() + static_cast<std::ptrdiff_t>(e.offset), e.size, r);
  }
  const std::vector<std::size_t> adaptable = partition.adaptable();
  outer.step(model.params, res.meta_grad, adaptable, rates, affine_decay(model, cfg.weight_decay));
  for (int l = 0; l < model.bn_layers(); ++l) project_alpha(model.bn_param(l, ParamKind::kBnAlpha));
  return res;
}

std::vector<AlphaSummary> alpha_summary(const Model& model) {
  std::vector<AlphaSummary> out;
  for (int l = 0; l < model.bn_layers(); ++l) {
    auto a = model.bn_param(l, ParamKind::kBnAlpha);
    AlphaSummary s{0.0, a[0], a[0]};
    for (double v : a) {
      s.mean += v;
      s.min = std::min(s.min, v);
      s.max = std::max(s.max, v);
    }
    s.mean /= static_cast<double>(a.size());
    out.push_back(s);
  }
  return out;
}

AlphaSummary overall_alpha_summary(const Model& model) {
  AlphaSummary s{0.0, 1.0, 0.0};
  std::size_t n = 0;
  for (int l = 0; l < model.bn_layers(); ++l)
    for (double v : model.bn_param(l, ParamKind::kBnAlpha)) {
      s.mean += v;
      s.min = std::min(s.min, v);
      s.max = std::max(s.max, v);
      ++n;
    }
  if (n) s.mean /= static_cast<double>(n);
  return s;
}

TrainerState TrainerState::fresh(const Model& model, const AdaptationConfig& cfg) {
  return {NesterovSgd(model.params.size(), cfg.momentum), NesterovSgd(model.params.size(), cfg.momentum), 0, 0};
}

SourceTrainer::SourceTrainer(Model& model, const AdaptationConfig& cfg, const FitOptions& options, TrainerState& state,
                             Rng& rng)
    : model_(model), cfg_(cfg), options_(options), state_(state), rng_(rng) {
  cfg_.validate();
}

void SourceTrainer::emit(StepLog entry) {
  if (options_.on_step) options_.on_step(entry);
  log_.push_back(std::move(entry));
}

void SourceTrainer::warmup_epoch(const std::vector<Corpus>& domains) {
  if (model_.phase != BNPhase::kSourceTraining)
    throw StatePhaseError("supervised warm-up after the source statistics were frozen");
  std::vector<std::pair<std::size_t, std::size_t>> order;
  for (std::size_t d = 0; d < domains.size(); ++d)
    for (int i = 0; i < domains[d].count; ++i) order.emplace_back(d, static_cast<std::size_t>(i));
  shuffle(order, rng_);

  std::vector<double> rates(model_.params.size(), 0.0);
  std::vector<double> decay(model_.params.size(), 0.0);
  std::vector<std::size_t> trainable;
  for (const auto& e : model_.layout.entries()) {
    if (e.kind == ParamKind::kBnAlpha) continue;
    const bool head = e.kind == ParamKind::kHeadWeight || e.kind == ParamKind::kHeadBias;
    const bool weights = e.kind == ParamKind::kConvWeight || e.kind == ParamKind::kHeadWeight;
    for (std::size_t i = e.offset; i < e.offset + e.size; ++i) {
      rates[i] = options_.pretrain_lr * (head ? kHeadRateMultiplier : 1.0);
      decay[i] = weights ? cfg_.weight_decay : 0.0;
      trainable.push_back(i);
    }
  }

  const int epoch = state_.warmup_epochs_done + 1;
  const std::size_t bs = static_cast<std::size_t>(cfg_.batch_size);
  int step = 0;
  for (std::size_t start = 0; start < order.size(); start += bs) {
    const std::size_t end = std::min(order.size(), start + bs);
    if (end - start < 2) break;
    Tensor<double> inputs(static_cast<int>(end - start), model_.spec.in_channels, model_.spec.height, model_.spec.width);
    std::vector<int> labels;
    for (std::size_t k = start; k < end; ++k) {
      const auto [d, i] = order[k];
      auto src = domains[d].image(static_cast<int>(i));
      auto dst = inputs.data().subspan((k - start) * src.size(), src.size());
      std::copy(src.begin(), src.end(), dst.begin());
      labels.push_back(domains[d].labels[i]);
    }
    Evaluator<double> eval(model_, model_.params);
    const Matrix<double> logits = eval.forward(inputs, {StatsMode::kBatch, nullptr});
    const auto lg = cross_entropy_grad<double>(logits, labels);
    if (!std::isfinite(lg.loss))
      throw NumericalError("warm-up diverged at epoch " + std::to_string(epoch) + " step " + std::to_string(step));
    const std::vector<double> grad = eval.backward(lg.dlogits);
    for (int l = 0; l < model_.bn_layers(); ++l)
      update_running_stats(model_.source[l].mean, model_.source[l].var, eval.batch_stats()[l], model_.spec.bn_momentum);
    state_.warmup_opt.step(model_.params, grad, trainable, rates, decay);
    StepLog entry;
    entry.epoch = epoch;
    entry.step = step++;
    entry.phase = "warmup";
    entry.outer_loss = lg.loss;
    entry.alpha = alpha_summary(model_);
    emit(std::move(entry));
  }
  ++state_.warmup_epochs_done;
  if (options_.on_epoch_end) options_.on_epoch_end(model_, state_);
}

void SourceTrainer::meta_epoch(const std::vector<Corpus>& domains) {
  model_.freeze_source_statistics();
  const ParamPartition partition = partition_for(model_, cfg_);
  const std::size_t bs = static_cast<std::size_t>(cfg_.batch_size);

  // Per-domain shuffled batches; each episode takes a meta-train batch and,
  // when one is left, a fresh meta-test batch from the same domain.
  std::vector<std::vector<std::vector<std::size_t>>> batches(domains.size());
  for (std::size_t d = 0; d < domains.size(); ++d) {
    std::vector<std::size_t> idx(static_cast<std::size_t>(domains[d].count));
    for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
    shuffle(idx, rng_);
    for (std::size_t start = 0; start + 2 <= idx.size(); start += bs)
      batches[d].emplace_back(idx.begin() + static_cast<std::ptrdiff_t>(start),
                              idx.begin() + static_cast<std::ptrdiff_t>(std::min(idx.size(), start + bs)));
  }

  const int epoch = state_.meta_epochs_done + 1;
  int step = 0;
  std::vector<std::size_t> cursor(domains.size(), 0);
  bool progressed = true;
  while (progressed) {
    progressed = false;
    for (std::size_t d = 0; d < domains.size(); ++d) {
      if (cursor[d] >= batches[d].size()) continue;
      progressed = true;
      const auto& train_idx = batches[d][cursor[d]++];
      const auto& test_idx = cursor[d] < batches[d].size() ? batches[d][cursor[d]++] : train_idx;

      std::optional<ShiftDraw> shift;
      if (options_.shift_aug) shift = draw_shift(cfg_.shift_p, model_.spec.stem_channels(), rng_);
      const Tensor<double> train_x = domains[d].batch(train_idx);
      const Tensor<double> test_x = domains[d].batch(test_idx);
      const std::vector<int> test_y = domains[d].batch_labels(test_idx);

      InnerUpdateOptions inner;
      inner.shift = shift ? &*shift : nullptr;
      inner.mode = options_.mode;
      inner.record = cfg_.second_order;
      const AdaptedState st = meta_train_step(model_, train_x, cfg_, partition, inner);
      const MetaTestResult res = meta_test_step(model_, st, test_x, test_y, cfg_, partition, state_.outer_opt);
      if (!std::isfinite(st.losses.l_pseudo) || !std::isfinite(st.losses.h_mean) || !std::isfinite(res.outer_loss)) {
        std::ostringstream os;
        os << "meta-training diverged at epoch " << epoch << " step " << step << " (l_pseudo=" << st.losses.l_pseudo
           << ", h_mean=" << st.losses.h_mean << ", G=" << res.outer_loss << ")";
        throw NumericalError(os.str());
      }
      StepLog entry;
      entry.epoch = epoch;
      entry.step = step++;
      entry.phase = "meta";
      entry.l_pseudo = st.losses.l_pseudo;
      entry.h_mean = st.losses.h_mean;
      entry.outer_loss = res.outer_loss;
      entry.skipped = st.skipped;
      entry.alpha = alpha_summary(model_);
      emit(std::move(entry));
    }
  }
  ++state_.meta_epochs_done;
  if (options_.on_meta_epoch) options_.on_meta_epoch(epoch, model_);
  if (options_.on_epoch_end) options_.on_epoch_end(model_, state_);
}

FitReport fit_source(Model& model, const std::vector<Corpus>& source_domains, const AdaptationConfig& cfg,
                     const FitOptions& options, Rng& rng, TrainerState* state) {
  if (source_domains.empty()) throw ConfigError("fit_source needs at least one labeled source domain");
  TrainerState local = TrainerState::fresh(model, cfg);
  TrainerState& st = state ? *state : local;
  SourceTrainer trainer(model, cfg, options, st, rng);
  while (st.warmup_epochs_done < options.warmup_epochs) trainer.warmup_epoch(source_domains);
  if (options.meta_learning)
    while (st.meta_epochs_done < options.meta_epochs) trainer.meta_epoch(source_domains);
  model.freeze_source_statistics();
  return {trainer.log()};
}

}  // namespace tttkit
