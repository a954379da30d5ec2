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
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "tttkit/bench_harness.h"
#include "tttkit/meta_engine.h"

namespace tttkit {

enum class Method { kMetaTtt, kSource, kAdaBN, kTent };
std::string_view method_name(Method method);
Method parse_method(std::string_view name);

enum class BaselineModel { kErm, kMeta };
std::string_view baseline_model_name(BaselineModel model);
BaselineModel parse_baseline_model(std::string_view name);

// One row of the incremental component grid. Later components require the
// earlier ones: minimax needs mixed_bn, shift_aug needs meta_l.
struct AblationFlags {
  bool mixed_bn = true;
  bool meta_l = true;
  bool shift_aug = true;
  bool minimax = true;

  void validate() const;
  std::string label() const;
  bool operator==(const AblationFlags&) const = default;
};

// The four incremental rows, from mixed-BN alone to the full method.
std::vector<AblationFlags> ablation_grid();

struct ExperimentConfig {
  AdaptationConfig adapt;
  std::string network = "digits";
  CorpusSpec train_corpus = CorpusSpec::parse("digits:n=3000,seed=7");
  CorpusSpec test_corpus = CorpusSpec::parse("digits:n=2048,seed=907");
  std::vector<DomainTransform> source_domains = {DomainTransform::parse("identity"), DomainTransform::parse("contrast@2"),
                                                 DomainTransform::parse("brightness@2")};
  std::vector<DomainTransform> targets = {DomainTransform::parse("gaussian_noise@5")};
  std::vector<std::uint64_t> seeds = {1, 2, 3};
  int warmup_epochs = 15;
  int meta_epochs = 4;
  double pretrain_lr = 0.01;
  std::string output_dir = "runs";
  Method method = Method::kMetaTtt;
  AblationFlags ablation;
  bool predict_then_adapt = false;
  // Model the source/adabn/tent baselines run on: a plain supervised
  // ("erm") reference trained for the same number of epochs, or the
  // meta-trained model itself ("meta").
  BaselineModel baseline_model = BaselineModel::kErm;

  void validate() const;
  // The adaptation settings with the ablation flags folded in.
  AdaptationConfig effective_adapt() const;
  StatsMode stats_mode() const { return ablation.mixed_bn ? StatsMode::kMixed : StatsMode::kBatch; }
};

// Assigns one dotted key. A key without a dot is looked up under "adapt.".
// Throws ConfigError for unknown keys and malformed values.
void set_config_value(ExperimentConfig& cfg, std::string_view key, std::string_view value);

// Parses "key = value" lines ('#' starts a comment) from `path` when given,
// then applies the "key=value" overrides in order, then validates.
ExperimentConfig parse_config(const std::optional<std::filesystem::path>& path, const std::vector<std::string>& overrides = {});
ExperimentConfig parse_config_text(std::string_view text, const std::vector<std::string>& overrides = {});

// Every key with its resolved value, one "key = value" line each, in a
// fixed order. parse_config_text(resolved_config(c)) reproduces c.
std::string resolved_config(const ExperimentConfig& cfg);

// Writes resolved_config.txt into `dir` (created if needed).
void echo_config(const ExperimentConfig& cfg, const std::filesystem::path& dir);

// The output root: $TTTKIT_OUTPUT_ROOT/<output_dir> when the variable is
// set and output_dir is relative, otherwise output_dir.
std::filesystem::path output_root(const ExperimentConfig& cfg);

}  // namespace tttkit
