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
#include <functional>
#include <string>
#include <vector>

#include "tttkit/bench_harness.h"
#include "tttkit/checkpoint.h"
#include "tttkit/config.h"
#include "tttkit/meta_engine.h"
#include "tttkit/metrics.h"
#include "tttkit/tta_runtime.h"

namespace tttkit {

// Corpora for one seed. Generated corpora are re-seeded per run seed so
// that seeds differ in data as well as in initialization.
struct SeedData {
  std::vector<Corpus> source_domains;
  Corpus test;
};
SeedData prepare_data(const ExperimentConfig& cfg, std::uint64_t seed);

// The clean test corpus under a target transform, corruption seeded by the
// run seed.
Corpus target_corpus(const Corpus& test, const DomainTransform& target, std::uint64_t seed);

struct TrainedModel {
  Model model;
  TrainerState trainer;
  Rng rng;
  std::vector<StepLog> log;
};

// A fresh model after the supervised warm-up. Warm-up does not depend on
// the ablation flags, so one warm start can seed every ablation row.
TrainedModel warm_start(const ExperimentConfig& cfg, const SeedData& data, std::uint64_t seed);

// Runs whatever epochs remain under cfg (meta epochs only when meta_l is
// set) and freezes the source statistics.
void finish_training(TrainedModel& tm, const ExperimentConfig& cfg, const SeedData& data,
                     const std::function<void(int, const Model&)>& on_meta_epoch = {});

TrainedModel train_model(const ExperimentConfig& cfg, const SeedData& data, std::uint64_t seed);

// Plain supervised reference for the baselines: warm-up only, for as many
// epochs as warm-up and meta phase together.
TrainedModel train_reference(const ExperimentConfig& cfg, const SeedData& data, std::uint64_t seed);

// File name of the reference checkpoint written next to model.ckpt.
inline constexpr const char* kReferenceCheckpoint = "reference.ckpt";

// Runs `method` on the target stream from a private copy of `trained`.
StreamResult run_method(const ExperimentConfig& cfg, const Model& trained, Method method, const Corpus& target,
                        int batch_size, const std::function<void(const Model&, const MetricsRecord&)>& after_batch = {});

// Unadapted accuracy of the deployed model under its own statistics mode.
StreamResult run_unadapted(const ExperimentConfig& cfg, const Model& trained, const Corpus& target, int batch_size);

RunTags make_tags(Method method, const DomainTransform& target, int batch_size, std::uint64_t seed);
std::string run_file_name(const RunTags& tags);

Checkpoint to_checkpoint(const TrainedModel& tm, const ExperimentConfig& cfg);
TrainedModel from_checkpoint(const Checkpoint& ckpt);

void write_training_log(const std::vector<StepLog>& log, const std::filesystem::path& path);

// Subcommands. Each writes under `out`; failures are reported by exception.
struct CommandContext {
  ExperimentConfig cfg;
  std::filesystem::path out;
  std::function<void(const std::string&)> log = [](const std::string&) {};
};

void command_train(const CommandContext& ctx);
void command_adapt(const CommandContext& ctx, const std::vector<std::filesystem::path>& checkpoints);
void command_compare(const CommandContext& ctx, const std::vector<std::filesystem::path>& checkpoints);
// Called once per (seed, row) after the row's training, with the row
// index into ablation_grid(); lets callers evaluate the trained rows
// without retraining them.
using AblationRowHook = std::function<void(std::uint64_t seed, std::size_t row, const TrainedModel&, const SeedData&)>;
void command_ablate(const CommandContext& ctx, const AblationRowHook& on_row = {});
void command_sweep(const CommandContext& ctx, const std::vector<std::string>& axes);
void command_report(const CommandContext& ctx, const std::filesystem::path& input);

}  // namespace tttkit
