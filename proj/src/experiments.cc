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

#include "tttkit/experiments.h"

#include <algorithm>
#include <array>
#include <cstdio>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

#include "json.hpp"
#include "tttkit/errors.h"

namespace tttkit {
namespace fs = std::filesystem;

namespace {

CorpusSpec reseeded(CorpusSpec spec, std::uint64_t seed) {
  if (spec.path.empty()) spec.seed += 1000003ull * seed;
  return spec;
}

std::string percent(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.2f", 100.0 * v);
  return buf;
}

std::string fixed(double v, int digits) {
  char buf[48];
  std::snprintf(buf, sizeof buf, "%.*f", digits, v);
  return buf;
}

void check_audit(const StreamResult& r, const std::string& what) {
  if (!r.audit.passed()) throw EngineError("label-hygiene audit failed for " + what);
}

nlohmann::json tags_json(const RunTags& t) {
  return {{"method", t.method}, {"corruption", t.corruption}, {"severity", t.severity}, {"batch_size", t.batch_size}, {"seed", t.seed}};
}

RunTags tags_from_json(const nlohmann::json& j) {
  RunTags t;
  t.method = j.at("method").get<std::string>();
  t.corruption = j.at("corruption").get<std::string>();
  t.severity = j.at("severity").get<int>();
  t.batch_size = j.at("batch_size").get<int>();
  t.seed = j.at("seed").get<std::uint64_t>();
  return t;
}

// Writes <dir>/<name>.csv and a sidecar <dir>/<name>.json with the run tags
// and headline numbers; the report command rebuilds summaries from these.
RunMetrics persist_run(const fs::path& dir, const RunTags& tags, const StreamResult& result) {
  fs::create_directories(dir);
  const std::string name = run_file_name(tags);
  write_metrics(result.records, dir / (name + ".csv"));
  nlohmann::json side = tags_json(tags);
  side["metrics_file"] = name + ".csv";
  side["error_rate"] = result.error_rate();
  side["batches"] = result.records.size();
  side["label_audit_passed"] = result.audit.passed();
  write_json(side, dir / (name + ".json"));
  return RunMetrics{tags, result.records};
}

std::vector<fs::path> checkpoints_or_default(const CommandContext& ctx, const std::vector<fs::path>& given) {
  if (!given.empty()) return given;
  std::vector<fs::path> out;
  for (auto seed : ctx.cfg.seeds) out.push_back(ctx.out / ("seed" + std::to_string(seed)) / "model.ckpt");
  return out;
}

}  // namespace

SeedData prepare_data(const ExperimentConfig& cfg, std::uint64_t seed) {
  SeedData d;
  const Corpus train = load_corpus(reseeded(cfg.train_corpus, seed));
  d.source_domains = make_domains(train, cfg.source_domains, seed);
  d.test = load_corpus(reseeded(cfg.test_corpus, seed));
  const NetworkSpec spec = NetworkSpec::by_name(cfg.network);
  for (const Corpus* c : std::array<const Corpus*, 2>{&train, &d.test})
    if (c->channels != spec.in_channels || c->height != spec.height || c->width != spec.width || c->classes != spec.classes)
      throw ConfigError("corpus " + c->provenance + " does not match the " + cfg.network + " network input");
  return d;
}

Corpus target_corpus(const Corpus& test, const DomainTransform& target, std::uint64_t seed) {
  if (!target.corruption) return test;
  CorruptionSpec cs = *target.corruption;
  cs.seed ^= 0x9e3779b97f4a7c15ull * (seed + 1);
  return corrupt(test, cs);
}

TrainedModel warm_start(const ExperimentConfig& cfg, const SeedData& data, std::uint64_t seed) {
  TrainedModel tm{Model{}, TrainerState{}, Rng(seed), {}};
  tm.model = Model::create(NetworkSpec::by_name(cfg.network), cfg.adapt.alpha_init, tm.rng);
  tm.trainer = TrainerState::fresh(tm.model, cfg.adapt);
  FitOptions fo;
  fo.warmup_epochs = cfg.warmup_epochs;
  fo.meta_learning = false;
  fo.pretrain_lr = cfg.pretrain_lr;
  fo.on_step = [&](const StepLog& s) { tm.log.push_back(s); };
  fit_source(tm.model, data.source_domains, cfg.adapt, fo, tm.rng, &tm.trainer);
  return tm;
}

void finish_training(TrainedModel& tm, const ExperimentConfig& cfg, const SeedData& data,
                     const std::function<void(int, const Model&)>& on_meta_epoch) {
  FitOptions fo;
  fo.warmup_epochs = cfg.warmup_epochs;
  fo.meta_epochs = cfg.meta_epochs;
  fo.meta_learning = cfg.ablation.meta_l;
  fo.shift_aug = cfg.ablation.shift_aug;
  fo.pretrain_lr = cfg.pretrain_lr;
  fo.mode = cfg.stats_mode();
  fo.on_meta_epoch = on_meta_epoch;
  fo.on_step = [&](const StepLog& s) { tm.log.push_back(s); };
  fit_source(tm.model, data.source_domains, cfg.effective_adapt(), fo, tm.rng, &tm.trainer);
}

TrainedModel train_model(const ExperimentConfig& cfg, const SeedData& data, std::uint64_t seed) {
  TrainedModel tm = warm_start(cfg, data, seed);
  finish_training(tm, cfg, data);
  return tm;
}

TrainedModel train_reference(const ExperimentConfig& cfg, const SeedData& data, std::uint64_t seed) {
  ExperimentConfig ref = cfg;
  ref.warmup_epochs = cfg.warmup_epochs + cfg.meta_epochs;
  ref.meta_epochs = 0;
  return warm_start(ref, data, seed);
}

StreamResult run_method(const ExperimentConfig& cfg, const Model& trained, Method method, const Corpus& target,
                        int batch_size, const std::function<void(const Model&, const MetricsRecord&)>& after_batch) {
  AdaptationConfig a = cfg.effective_adapt();
  a.batch_size = batch_size;
  CorpusStream stream(target, batch_size);
  switch (method) {
    case Method::kSource:
      return baseline_predict(trained, stream, Baseline::kSource, a);
    case Method::kAdaBN:
      return baseline_predict(trained, stream, Baseline::kAdaBN, a);
    case Method::kTent:
      return baseline_predict(trained, stream, Baseline::kTent, a);
    case Method::kMetaTtt:
      break;
  }
  Model model = trained;
  deploy(model);
  AdaptOptions options;
  options.mode = cfg.stats_mode();
  options.predict_then_adapt = cfg.predict_then_adapt;
  options.after_batch = after_batch;
  return adapt_stream(model, stream, a, options);
}

StreamResult run_unadapted(const ExperimentConfig& cfg, const Model& trained, const Corpus& target, int batch_size) {
  CorpusStream stream(target, batch_size);
  return frozen_predict(trained, stream, cfg.stats_mode());
}

RunTags make_tags(Method method, const DomainTransform& target, int batch_size, std::uint64_t seed) {
  RunTags t;
  t.method = std::string(method_name(method));
  t.corruption = target.corruption ? std::string(corruption_name(target.corruption->kind)) : "identity";
  t.severity = target.corruption ? target.corruption->severity : 0;
  t.batch_size = batch_size;
  t.seed = seed;
  return t;
}

std::string run_file_name(const RunTags& t) {
  return t.method + "_" + t.corruption + (t.severity ? "@" + std::to_string(t.severity) : "") + "_bs" +
         std::to_string(t.batch_size) + "_seed" + std::to_string(t.seed);
}

Checkpoint to_checkpoint(const TrainedModel& tm, const ExperimentConfig& cfg) {
  return Checkpoint{tm.model, tm.trainer, rng_state(tm.rng), resolved_config(cfg), 0};
}

TrainedModel from_checkpoint(const Checkpoint& ckpt) {
  TrainedModel tm{ckpt.model, ckpt.trainer, Rng(0), {}};
  restore_rng(tm.rng, ckpt.rng_state);
  return tm;
}

void write_training_log(const std::vector<StepLog>& log, const fs::path& path) {
  std::ostringstream os;
  os << "epoch,step,phase,l_pseudo,h_mean,outer_loss,skipped,alpha_mean,alpha_min,alpha_max\n";
  char buf[256];
  for (const StepLog& s : log) {
    double mean = 0, lo = 1, hi = 0, n = 0;
    for (const auto& a : s.alpha) {
      mean += a.mean;
      lo = std::min(lo, a.min);
      hi = std::max(hi, a.max);
      ++n;
    }
    std::snprintf(buf, sizeof buf, "%d,%d,%s,%.10g,%.10g,%.10g,%d,%.10g,%.10g,%.10g\n", s.epoch, s.step, s.phase.c_str(),
                  s.l_pseudo, s.h_mean, s.outer_loss, s.skipped ? 1 : 0, n ? mean / n : 0.0, lo, hi);
    os << buf;
  }
  write_text(os.str(), path);
}

void command_train(const CommandContext& ctx) {
  const ExperimentConfig& cfg = ctx.cfg;
  echo_config(cfg, ctx.out);
  for (auto seed : cfg.seeds) {
    const fs::path dir = ctx.out / ("seed" + std::to_string(seed));
    const fs::path ckpt_path = dir / "model.ckpt";
    fs::create_directories(dir);
    const SeedData data = prepare_data(cfg, seed);
    TrainedModel tm{Model{}, TrainerState{}, Rng(seed), {}};
    tm.model = Model::create(NetworkSpec::by_name(cfg.network), cfg.adapt.alpha_init, tm.rng);
    tm.trainer = TrainerState::fresh(tm.model, cfg.adapt);
    FitOptions fo;
    fo.warmup_epochs = cfg.warmup_epochs;
    fo.meta_epochs = cfg.meta_epochs;
    fo.meta_learning = cfg.ablation.meta_l;
    fo.shift_aug = cfg.ablation.shift_aug;
    fo.pretrain_lr = cfg.pretrain_lr;
    fo.mode = cfg.stats_mode();
    fo.on_step = [&](const StepLog& s) { tm.log.push_back(s); };
    fo.on_epoch_end = [&](const Model&, const TrainerState&) {
      Checkpoint ck = to_checkpoint(tm, cfg);
      ck.seed = seed;
      save_checkpoint(ck, ckpt_path);
      const StepLog& last = tm.log.back();
      ctx.log("seed " + std::to_string(seed) + " " + last.phase + " epoch " + std::to_string(last.epoch) +
              " loss " + fixed(last.outer_loss, 4));
    };
    fit_source(tm.model, data.source_domains, cfg.effective_adapt(), fo, tm.rng, &tm.trainer);
    Checkpoint ck = to_checkpoint(tm, cfg);
    ck.seed = seed;
    save_checkpoint(ck, ckpt_path);
    write_training_log(tm.log, dir / "train_log.csv");
    TrainedModel ref = train_reference(cfg, data, seed);
    Checkpoint ref_ck = to_checkpoint(ref, cfg);
    ref_ck.seed = seed;
    save_checkpoint(ref_ck, dir / kReferenceCheckpoint);
    ctx.log("seed " + std::to_string(seed) + " reference model written");
  }
}

namespace {

std::vector<RunMetrics> adapt_checkpoints(const CommandContext& ctx, const std::vector<fs::path>& checkpoints,
                                          const std::vector<Method>& methods, const fs::path& metrics_dir) {
  const ExperimentConfig& cfg = ctx.cfg;
  std::vector<RunMetrics> runs;
  for (const fs::path& path : checkpoints) {
    const Checkpoint ck = load_checkpoint(path);
    const bool needs_reference =
        cfg.baseline_model == BaselineModel::kErm &&
        std::any_of(methods.begin(), methods.end(), [](Method m) { return m != Method::kMetaTtt; });
    const Checkpoint ref = needs_reference ? load_checkpoint(path.parent_path() / kReferenceCheckpoint) : ck;
    const SeedData data = prepare_data(cfg, ck.seed);
    for (const auto& target : cfg.targets) {
      const Corpus stream = target_corpus(data.test, target, ck.seed);
      for (Method m : methods) {
        const RunTags tags = make_tags(m, target, cfg.adapt.batch_size, ck.seed);
        const Model& model = m == Method::kMetaTtt ? ck.model : ref.model;
        const StreamResult r = run_method(cfg, model, m, stream, cfg.adapt.batch_size);
        check_audit(r, run_file_name(tags));
        runs.push_back(persist_run(metrics_dir, tags, r));
        ctx.log(run_file_name(tags) + " error " + percent(r.error_rate()) + "%");
      }
    }
  }
  return runs;
}

}  // namespace

void command_adapt(const CommandContext& ctx, const std::vector<fs::path>& checkpoints) {
  echo_config(ctx.cfg, ctx.out);
  const auto runs = adapt_checkpoints(ctx, checkpoints_or_default(ctx, checkpoints), {ctx.cfg.method}, ctx.out / "metrics");
  write_json(summarize(runs), ctx.out / "summary.json");
}

void command_compare(const CommandContext& ctx, const std::vector<fs::path>& checkpoints) {
  echo_config(ctx.cfg, ctx.out);
  const std::vector<Method> methods = {Method::kSource, Method::kAdaBN, Method::kTent, Method::kMetaTtt};
  const auto runs = adapt_checkpoints(ctx, checkpoints_or_default(ctx, checkpoints), methods, ctx.out / "metrics");
  write_json(summarize(runs), ctx.out / "summary.json");

  // Method x target table of seed-averaged, sample-weighted error.
  std::map<std::string, std::map<std::string, std::vector<double>>> table;
  std::vector<std::string> columns;
  for (const auto& r : runs) {
    const std::string col = r.tags.corruption + (r.tags.severity ? "@" + std::to_string(r.tags.severity) : "");
    if (std::find(columns.begin(), columns.end(), col) == columns.end()) columns.push_back(col);
    table[r.tags.method][col].push_back(r.mean_error());
  }
  nlohmann::json doc = nlohmann::json::object();
  std::ostringstream txt;
  txt << "method";
  for (const auto& c : columns) txt << "\t" << c;
  txt << "\n";
  for (Method m : methods) {
    const std::string name(method_name(m));
    txt << name;
    for (const auto& c : columns) {
      const auto& v = table[name][c];
      double mean = 0;
      for (double e : v) mean += e;
      mean /= static_cast<double>(v.size());
      doc[name][c] = mean;
      txt << "\t" << percent(mean);
    }
    txt << "\n";
  }
  write_json(doc, ctx.out / "compare.json");
  write_text(txt.str(), ctx.out / "compare.txt");
}

void command_ablate(const CommandContext& ctx, const AblationRowHook& on_row) {
  const ExperimentConfig& base = ctx.cfg;
  echo_config(base, ctx.out);
  const auto grid = ablation_grid();
  const DomainTransform& curve_target = base.targets.front();
  struct Cell {
    double source_acc = 0, ttt_acc = 0;
  };
  std::vector<std::vector<std::pair<std::uint64_t, Cell>>> cells(grid.size());
  std::vector<RunMetrics> runs;
  for (auto seed : base.seeds) {
    const SeedData data = prepare_data(base, seed);
    ExperimentConfig warm_cfg = base;
    warm_cfg.ablation = grid.front();
    const TrainedModel warm = warm_start(warm_cfg, data, seed);
    const Corpus curve_stream = target_corpus(data.test, curve_target, seed);
    for (std::size_t row = 0; row < grid.size(); ++row) {
      ExperimentConfig cfg = base;
      cfg.ablation = grid[row];
      TrainedModel tm = warm;
      std::ostringstream curve;
      curve << "epoch,adapted_accuracy\n";
      finish_training(tm, cfg, data, [&](int epoch, const Model& m) {
        Model snapshot = m;
        const StreamResult r = run_method(cfg, snapshot, Method::kMetaTtt, curve_stream, cfg.adapt.batch_size);
        curve << epoch << "," << fixed(1.0 - r.error_rate(), 6) << "\n";
      });
      if (on_row) on_row(seed, row, tm, data);
      const fs::path row_dir = ctx.out / ("row" + std::to_string(row + 1));
      if (grid[row].meta_l) {
        fs::create_directories(row_dir / "curves");
        write_text(curve.str(), row_dir / "curves" / ("seed" + std::to_string(seed) + ".csv"));
      }
      Cell cell;
      double src = 0, ttt = 0;
      for (const auto& target : cfg.targets) {
        const Corpus stream = target_corpus(data.test, target, seed);
        const StreamResult unadapted = run_unadapted(cfg, tm.model, stream, cfg.adapt.batch_size);
        const StreamResult adapted = run_method(cfg, tm.model, Method::kMetaTtt, stream, cfg.adapt.batch_size);
        check_audit(adapted, "ablation row " + std::to_string(row + 1));
        RunTags tags = make_tags(Method::kMetaTtt, target, cfg.adapt.batch_size, seed);
        runs.push_back(persist_run(row_dir / "metrics", tags, adapted));
        src += 1.0 - unadapted.error_rate();
        ttt += 1.0 - adapted.error_rate();
      }
      cell.source_acc = src / static_cast<double>(cfg.targets.size());
      cell.ttt_acc = ttt / static_cast<double>(cfg.targets.size());
      cells[row].emplace_back(seed, cell);
      ctx.log("seed " + std::to_string(seed) + " row " + std::to_string(row + 1) + " (" + grid[row].label() +
              ") source " + percent(cell.source_acc) + "% ttt " + percent(cell.ttt_acc) + "%");
    }
  }
  nlohmann::json doc;
  doc["rows"] = nlohmann::json::array();
  std::ostringstream txt;
  txt << "row\tmixed_bn\tmeta_l\tshift_aug\tminimax\tsource_acc\tttt_acc\n";
  for (std::size_t row = 0; row < grid.size(); ++row) {
    const AblationFlags& f = grid[row];
    nlohmann::json r;
    r["row"] = row + 1;
    r["label"] = f.label();
    r["flags"] = {{"mixed_bn", f.mixed_bn}, {"meta_l", f.meta_l}, {"shift_aug", f.shift_aug}, {"minimax", f.minimax}};
    r["per_seed"] = nlohmann::json::array();
    double src = 0, ttt = 0;
    for (const auto& [seed, c] : cells[row]) {
      r["per_seed"].push_back({{"seed", seed}, {"source_acc", c.source_acc}, {"ttt_acc", c.ttt_acc}});
      src += c.source_acc;
      ttt += c.ttt_acc;
    }
    const double n = static_cast<double>(cells[row].size());
    r["source_acc"] = src / n;
    r["ttt_acc"] = ttt / n;
    doc["rows"].push_back(r);
    auto b = [](bool v) { return v ? "yes" : "no"; };
    txt << row + 1 << "\t" << b(f.mixed_bn) << "\t" << b(f.meta_l) << "\t" << b(f.shift_aug) << "\t" << b(f.minimax) << "\t"
        << percent(src / n) << "\t" << percent(ttt / n) << "\n";
  }
  write_json(doc, ctx.out / "ablation.json");
  write_text(txt.str(), ctx.out / "ablation.txt");
  write_json(summarize(runs), ctx.out / "summary.json");
}

namespace {

struct Axis {
  std::string key;
  std::vector<std::string> values;
};

Axis parse_axis(const std::string& text) {
  static const std::set<std::string> allowed = {"batch_size", "kappa", "lam", "shift_p", "alpha_init", "lr"};
  const auto eq = text.find('=');
  if (eq == std::string::npos) throw ConfigError("sweep axis must look like name=v1,v2: '" + text + "'");
  Axis a{text.substr(0, eq), {}};
  if (!allowed.count(a.key)) throw ConfigError("unsupported sweep axis '" + a.key + "'");
  std::stringstream ss(text.substr(eq + 1));
  for (std::string v; std::getline(ss, v, ',');)
    if (!v.empty()) a.values.push_back(v);
  if (a.values.empty()) throw ConfigError("sweep axis '" + a.key + "' lists no values");
  return a;
}

}  // namespace

void command_sweep(const CommandContext& ctx, const std::vector<std::string>& axis_texts) {
  if (axis_texts.empty()) throw ConfigError("sweep needs at least one --axis");
  std::vector<Axis> axes;
  for (const auto& t : axis_texts) axes.push_back(parse_axis(t));
  echo_config(ctx.cfg, ctx.out);

  // Cartesian product, first axis varying slowest.
  std::vector<std::vector<std::pair<std::string, std::string>>> cells{{}};
  for (const Axis& a : axes) {
    std::vector<std::vector<std::pair<std::string, std::string>>> next;
    for (const auto& cell : cells)
      for (const auto& v : a.values) {
        auto c = cell;
        c.emplace_back(a.key, v);
        next.push_back(std::move(c));
      }
    cells = std::move(next);
  }

  std::vector<RunMetrics> all_runs;
  nlohmann::json doc;
  doc["cells"] = nlohmann::json::array();
  std::map<std::string, TrainedModel> trained;  // keyed by training-relevant settings and seed
  std::map<std::uint64_t, SeedData> data;
  for (const auto& cell : cells) {
    ExperimentConfig cfg = ctx.cfg;
    std::string name, train_key;
    for (const auto& [k, v] : cell) {
      set_config_value(cfg, "adapt." + k, v);
      name += (name.empty() ? "" : "_") + k + "=" + v;
      if (k != "batch_size") train_key += k + "=" + v + ";";
    }
    cfg.validate();
    std::vector<RunMetrics> cell_runs;
    for (auto seed : cfg.seeds) {
      if (!data.count(seed)) data.emplace(seed, prepare_data(cfg, seed));
      const std::string key = train_key + "seed=" + std::to_string(seed);
      if (!trained.count(key)) {
        ExperimentConfig train_cfg = cfg;
        train_cfg.adapt.batch_size = ctx.cfg.adapt.batch_size;
        const bool reference = cfg.method != Method::kMetaTtt && cfg.baseline_model == BaselineModel::kErm;
        trained.emplace(key, reference ? train_reference(train_cfg, data.at(seed), seed)
                                       : train_model(train_cfg, data.at(seed), seed));
      }
      for (const auto& target : cfg.targets) {
        const Corpus stream = target_corpus(data.at(seed).test, target, seed);
        const RunTags tags = make_tags(cfg.method, target, cfg.adapt.batch_size, seed);
        const StreamResult r = run_method(cfg, trained.at(key).model, cfg.method, stream, cfg.adapt.batch_size);
        check_audit(r, name);
        cell_runs.push_back(persist_run(ctx.out / "cells" / name, tags, r));
        ctx.log(name + " seed " + std::to_string(seed) + " error " + percent(r.error_rate()) + "%");
      }
    }
    nlohmann::json c;
    c["cell"] = nlohmann::json::object();
    for (const auto& [k, v] : cell) c["cell"][k] = v;
    c["summary"] = summarize(cell_runs);
    doc["cells"].push_back(c);
    all_runs.insert(all_runs.end(), cell_runs.begin(), cell_runs.end());
  }
  doc["combined"] = summarize(all_runs);
  write_json(doc, ctx.out / "sweep_summary.json");
}

void command_report(const CommandContext& ctx, const fs::path& input) {
  if (!fs::is_directory(input)) throw IoError("report input " + input.string() + " is not a directory");
  std::vector<fs::path> sidecars, curves;
  for (const auto& entry : fs::recursive_directory_iterator(input)) {
    if (!entry.is_regular_file()) continue;
    const fs::path& p = entry.path();
    if (p.extension() == ".json" && fs::exists(fs::path(p).replace_extension(".csv"))) sidecars.push_back(p);
    if (p.extension() == ".csv" && p.parent_path().filename() == "curves") curves.push_back(p);
  }
  std::sort(sidecars.begin(), sidecars.end());
  std::sort(curves.begin(), curves.end());

  std::vector<RunMetrics> runs;
  for (const fs::path& p : sidecars) {
    std::ifstream in(p);
    nlohmann::json side;
    try {
      side = nlohmann::json::parse(in);
    } catch (const nlohmann::json::exception& e) {
      throw IoError("malformed run sidecar " + p.string() + ": " + e.what());
    }
    if (!side.contains("metrics_file")) continue;
    runs.push_back(RunMetrics{tags_from_json(side), read_metrics(fs::path(p).replace_extension(".csv"))});
  }
  if (runs.empty()) throw IoError("no metrics files found under " + input.string());
  fs::create_directories(ctx.out);
  const nlohmann::json summary = summarize(runs);
  write_json(summary, ctx.out / "summary.json");

  std::ostringstream txt;
  txt << "runs\t" << summary["runs"].get<std::size_t>() << "\n";
  txt << "mean_error\t" << percent(summary["mean_error"].get<double>()) << "\n";
  for (const auto& [k, v] : summary["per_method"].items()) txt << "method:" << k << "\t" << percent(v.get<double>()) << "\n";
  for (const auto& [k, v] : summary["per_corruption"].items())
    txt << "corruption:" << k << "\t" << percent(v.get<double>()) << "\n";
  for (const auto& e : summary["per_batch_size"])
    txt << "batch_size:" << e["batch_size"].get<int>() << "\t" << percent(e["error"].get<double>()) << "\n";
  write_text(txt.str(), ctx.out / "summary.txt");

  // Seed-averaged adapted accuracy per epoch, one column per curve family
  // (the directory holding the curves, e.g. row3 = plain entropy, row4 =
  // minimax).
  if (!curves.empty()) {
    std::map<std::string, std::map<int, std::vector<double>>> families;
    for (const fs::path& p : curves) {
      const std::string family = p.parent_path().parent_path().filename().string();
      std::ifstream in(p);
      std::string line;
      std::getline(in, line);
      while (std::getline(in, line)) {
        const auto comma = line.find(',');
        if (comma == std::string::npos) continue;
        families[family][std::stoi(line.substr(0, comma))].push_back(std::stod(line.substr(comma + 1)));
      }
    }
    std::set<int> epochs;
    for (const auto& [f, byepoch] : families)
      for (const auto& [e, v] : byepoch) epochs.insert(e);
    std::ostringstream csv;
    csv << "epoch";
    for (const auto& [f, _] : families) csv << "," << f;
    csv << "\n";
    for (int e : epochs) {
      csv << e;
      for (const auto& [f, byepoch] : families) {
        csv << ",";
        const auto it = byepoch.find(e);
        if (it == byepoch.end()) continue;
        double s = 0;
        for (double v : it->second) s += v;
        csv << fixed(s / static_cast<double>(it->second.size()), 6);
      }
      csv << "\n";
    }
    write_text(csv.str(), ctx.out / "curves.csv");
  }
}

}  // namespace tttkit
