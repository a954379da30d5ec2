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

// Command-line front end: train, adapt, compare, ablate, sweep, report.
//
// Exit codes: 0 success, 2 configuration error, 3 runtime or numerical
// error.

#include <cstdio>
#include <exception>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "tttkit/config.h"
#include "tttkit/errors.h"
#include "tttkit/experiments.h"

namespace {

constexpr int kExitConfig = 2;
constexpr int kExitRuntime = 3;

struct CommonOptions {
  std::string config_path;
  std::vector<std::string> overrides;
  std::string out;
  bool quiet = false;
};

void add_common(CLI::App* cmd, CommonOptions& opts) {
  cmd->add_option("-c,--config", opts.config_path, "key = value configuration file");
  cmd->add_option("-s,--set", opts.overrides, "override a configuration key (key=value); repeatable")
      ->allow_extra_args(false);
  cmd->add_option("-o,--out", opts.out, "output directory (default: <output root>/<command>)");
  cmd->add_flag("-q,--quiet", opts.quiet, "suppress progress lines");
}

tttkit::CommandContext make_context(const CommonOptions& opts, const std::string& command) {
  tttkit::CommandContext ctx;
  std::optional<std::filesystem::path> path;
  if (!opts.config_path.empty()) path = opts.config_path;
  ctx.cfg = tttkit::parse_config(path, opts.overrides);
  ctx.out = opts.out.empty() ? tttkit::output_root(ctx.cfg) / command : std::filesystem::path(opts.out);
  if (!opts.quiet) ctx.log = [](const std::string& line) { std::fprintf(stderr, "%s\n", line.c_str()); };
  return ctx;
}

// Explicit checkpoints, or the ones `train` writes under the output root.
std::vector<std::filesystem::path> checkpoint_paths(const tttkit::CommandContext& ctx, const std::vector<std::string>& given) {
  std::vector<std::filesystem::path> paths(given.begin(), given.end());
  if (paths.empty())
    for (auto seed : ctx.cfg.seeds)
      paths.push_back(tttkit::output_root(ctx.cfg) / "train" / ("seed" + std::to_string(seed)) / "model.ckpt");
  return paths;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"tttkit: test-time adaptation with mixed batch-norm statistics"};
  app.require_subcommand(1);

  CommonOptions train_opts, adapt_opts, compare_opts, ablate_opts, sweep_opts, report_opts;
  std::vector<std::string> adapt_ckpts, compare_ckpts, axes;
  std::string report_input;

  auto* train = app.add_subcommand("train", "meta-train a model per seed and write checkpoints");
  add_common(train, train_opts);

  auto* adapt = app.add_subcommand("adapt", "adapt checkpoints online over the target streams");
  add_common(adapt, adapt_opts);
  adapt->add_option("checkpoints", adapt_ckpts, "checkpoint files (default: <output root>/train/seed<k>/model.ckpt)");

  auto* compare = app.add_subcommand("compare", "run source, adabn, tent and meta_ttt on the same streams");
  add_common(compare, compare_opts);
  compare->add_option("checkpoints", compare_ckpts, "checkpoint files (default: <output root>/train/seed<k>/model.ckpt)");

  auto* ablate = app.add_subcommand("ablate", "train and evaluate the four incremental ablation rows");
  add_common(ablate, ablate_opts);

  auto* sweep = app.add_subcommand("sweep", "grid over adaptation hyperparameters");
  add_common(sweep, sweep_opts);
  sweep->add_option("-a,--axis", axes, "axis as name=v1,v2 (batch_size, kappa, lam, shift_p, alpha_init, lr)")
      ->allow_extra_args(false)
      ->required();

  auto* report = app.add_subcommand("report", "aggregate metrics and curves found under a directory");
  add_common(report, report_opts);
  report->add_option("input", report_input, "directory produced by another command")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kExitConfig;
  }

  try {
    std::vector<std::filesystem::path> paths;
    if (*train) {
      tttkit::command_train(make_context(train_opts, "train"));
    } else if (*adapt) {
      auto ctx = make_context(adapt_opts, "adapt");
      paths = checkpoint_paths(ctx, adapt_ckpts);
      tttkit::command_adapt(ctx, paths);
    } else if (*compare) {
      auto ctx = make_context(compare_opts, "compare");
      paths = checkpoint_paths(ctx, compare_ckpts);
      tttkit::command_compare(ctx, paths);
    } else if (*ablate) {
      tttkit::command_ablate(make_context(ablate_opts, "ablate"));
    } else if (*sweep) {
      tttkit::command_sweep(make_context(sweep_opts, "sweep"), axes);
    } else if (*report) {
      tttkit::command_report(make_context(report_opts, "report"), report_input);
    }
  } catch (const tttkit::ConfigError& e) {
    std::fprintf(stderr, "configuration error: %s\n", e.what());
    return kExitConfig;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kExitRuntime;
  }
  return 0;
}
