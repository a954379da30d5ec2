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

#include <functional>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "tttkit/corpus.h"
#include "tttkit/network.h"
#include "tttkit/objectives.h"
#include "tttkit/optimizer.h"
#include "tttkit/rng.h"
#include "tttkit/shift_synthesis.h"

namespace tttkit {

enum class ResetPolicy { kOnline, kEpisodic };

struct AdaptationConfig {
  double lam = 1.0;
  double kappa = 0.9;
  double lr = 0.001;
  double meta_lr = 0.05;
  double alpha_lr = 0.1;
  double classifier_lr = 0.01;
  double momentum = 0.9;
  double weight_decay = 0.0005;
  double alpha_init = 0.75;
  std::string layer_selector = "last";
  int k = 1;
  int batch_size = 64;
  double shift_p = 0.1;
  bool second_order = true;
  bool minimax = true;  // false: every adaptable parameter minimizes entropy
  // Whether the self-supervised step also moves alpha (at rate lr).
  bool adapt_alpha = true;
  ResetPolicy reset_policy = ResetPolicy::kOnline;

  void validate() const;
};

// The three disjoint parameter sets. Index vectors are sorted flat indices
// into Model::params; names are whole ParamLayout entries.
struct ParamPartition {
  std::vector<std::size_t> theta_beta;
  std::vector<std::size_t> theta_gamma;
  std::vector<std::size_t> theta_frozen;
  std::vector<std::string> beta_names;
  std::vector<std::string> gamma_names;
  std::vector<std::string> frozen_names;

  // theta_beta U theta_gamma, sorted.
  std::vector<std::size_t> adaptable() const;
};

// "last", "first", "all", "none" or a comma-separated list of BN layer
// indices. Throws ConfigError when the selector matches nothing.
std::vector<int> select_layers(std::string_view selector, int bn_layers);

ParamPartition partition_parameters(const Model& model, std::string_view layer_selector);
// Uses the selector "none" when the minimax objective is disabled.
ParamPartition partition_for(const Model& model, const AdaptationConfig& cfg);

// Per-parameter inner step sizes: lr for gamma, beta and (when adapt_alpha)
// alpha; zero for everything else. alpha_lr is the supervised outer rate.
std::vector<double> inner_rates(const Model& model, const AdaptationConfig& cfg);

struct InnerStep {
  ObjectiveRole role = ObjectiveRole::kGamma;
  std::vector<double> params_before;
  std::vector<double> step_sizes;       // zero outside the updated set
  std::vector<std::uint8_t> interior;   // 0 where alpha projection clamped
};

// Result of the self-supervised inner update on one batch.
struct AdaptedState {
  std::vector<double> params_before;
  std::vector<double> params;
  ConfidenceSplit split;
  MinimaxLosses losses;  // at params_before
  bool skipped = false;
  bool recorded = false;
  std::vector<InnerStep> trace;
  Tensor<double> inputs;
  std::optional<ShiftDraw> shift;
  StatsMode mode = StatsMode::kMixed;
};

struct InnerUpdateOptions {
  const ShiftDraw* shift = nullptr;
  StatsMode mode = StatsMode::kMixed;
  // Keep what the second-order meta-gradient needs.
  bool record = false;
  // When set, steps go through this stateful optimizer (test time) and
  // cannot be recorded; otherwise plain differentiable SGD steps are used.
  NesterovSgd* optimizer = nullptr;
};

// One confidence split, then k rounds of: theta_beta descends beta_loss,
// logits are recomputed, theta_gamma descends gamma_loss. Alpha is
// projected onto [0,1] after every step.
AdaptedState meta_train_step(const Model& model, const Tensor<double>& inputs, const AdaptationConfig& cfg,
                             const ParamPartition& partition, const InnerUpdateOptions& options = {});

// Gradient of the labeled cross-entropy G of the adapted parameters with
// respect to the pre-update adaptable parameters. Full-length; zero outside
// the adaptable set. With cfg.second_order false this is the first-order
// approximation (gradient at the adapted point).
std::vector<double> meta_gradient(const Model& model, const AdaptedState& state, const Tensor<double>& inputs,
                                  std::span<const int> labels, const AdaptationConfig& cfg, const ParamPartition& partition,
                                  double* outer_loss = nullptr);

// Hessian-vector product of an inner objective at `at` (forward-over-reverse).
std::vector<double> inner_hessian_vector_product(const Model& model, std::span<const double> at, const AdaptedState& state,
                                                 ObjectiveRole role, double lam, std::span<const double> direction);

struct MetaTestResult {
  double outer_loss = 0.0;
  std::vector<double> meta_grad;
};

// Applies the meta-gradient to the adaptable parameters of `model`
// (gamma/beta at meta_lr, alpha at alpha_lr) and re-projects alpha.
MetaTestResult meta_test_step(Model& model, const AdaptedState& state, const Tensor<double>& inputs,
                              std::span<const int> labels, const AdaptationConfig& cfg, const ParamPartition& partition,
                              NesterovSgd& outer);

struct AlphaSummary {
  double mean = 0.0;
  double min = 0.0;
  double max = 0.0;
};
std::vector<AlphaSummary> alpha_summary(const Model& model);
AlphaSummary overall_alpha_summary(const Model& model);

struct StepLog {
  int epoch = 0;
  int step = 0;
  std::string phase;  // "warmup" or "meta"
  double l_pseudo = 0.0;
  double h_mean = 0.0;
  double outer_loss = 0.0;
  bool skipped = false;
  std::vector<AlphaSummary> alpha;
};

// The classifier head trains ten times faster than the backbone during the
// supervised warm-up (the same ratio as classifier_lr / lr at defaults).
inline constexpr double kHeadRateMultiplier = 10.0;

struct TrainerState;

struct FitOptions {
  int warmup_epochs = 0;  // supervised ERM of every parameter, batch statistics
  int meta_epochs = 0;    // meta-train / meta-test episodes on the adaptable set
  bool meta_learning = true;
  bool shift_aug = true;
  double pretrain_lr = 0.01;
  // Statistics used by the meta episodes (kBatch when mixing is ablated).
  StatsMode mode = StatsMode::kMixed;
  std::function<void(int epoch, const Model&)> on_meta_epoch;
  std::function<void(const StepLog&)> on_step;
  // After every completed epoch of either phase (checkpoint hook).
  std::function<void(const Model&, const TrainerState&)> on_epoch_end;
};

// Mutable training state; together with the model and the generator it is
// everything a checkpoint needs to resume.
struct TrainerState {
  NesterovSgd warmup_opt;
  NesterovSgd outer_opt;
  int warmup_epochs_done = 0;
  int meta_epochs_done = 0;

  static TrainerState fresh(const Model& model, const AdaptationConfig& cfg);
};

class SourceTrainer {
 public:
  SourceTrainer(Model& model, const AdaptationConfig& cfg, const FitOptions& options, TrainerState& state, Rng& rng);

  void warmup_epoch(const std::vector<Corpus>& domains);
  void meta_epoch(const std::vector<Corpus>& domains);
  const std::vector<StepLog>& log() const { return log_; }

 private:
  void emit(StepLog entry);

  Model& model_;
  AdaptationConfig cfg_;
  FitOptions options_;
  TrainerState& state_;
  Rng& rng_;
  std::vector<StepLog> log_;
};

struct FitReport {
  std::vector<StepLog> steps;
};

// Runs the remaining warm-up epochs, freezes the source statistics, then
// runs the remaining meta epochs (when options.meta_learning). The source
// statistics are frozen on return.
FitReport fit_source(Model& model, const std::vector<Corpus>& source_domains, const AdaptationConfig& cfg,
                     const FitOptions& options, Rng& rng, TrainerState* state = nullptr);

}  // namespace tttkit
