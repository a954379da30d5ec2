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

#include "tttkit/config.h"

#include <charconv>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <sstream>

#include "tttkit/errors.h"
#include "tttkit/metrics.h"

namespace tttkit {
namespace {

std::string_view trim(std::string_view s) {
  const auto first = s.find_first_not_of(" \t\r");
  if (first == std::string_view::npos) return {};
  const auto last = s.find_last_not_of(" \t\r");
  return s.substr(first, last - first + 1);
}

std::vector<std::string> split_list(std::string_view text) {
  std::vector<std::string> out;
  std::size_t pos = 0;
  while (pos <= text.size()) {
    const auto comma = text.find(',', pos);
    const auto item = trim(text.substr(pos, comma == std::string_view::npos ? std::string_view::npos : comma - pos));
    if (!item.empty()) out.emplace_back(item);
    if (comma == std::string_view::npos) break;
    pos = comma + 1;
  }
  return out;
}

[[noreturn]] void type_error(std::string_view key, std::string_view value, std::string_view expected) {
  throw ConfigError("config key '" + std::string(key) + "': expected " + std::string(expected) + ", got '" +
                    std::string(value) + "'");
}

double to_double(std::string_view key, std::string_view value) {
  const std::string s(value);
  char* end = nullptr;
  const double v = std::strtod(s.c_str(), &end);
  if (s.empty() || end != s.c_str() + s.size() || !std::isfinite(v)) type_error(key, value, "a real number");
  return v;
}

long long to_integer(std::string_view key, std::string_view value) {
  long long v = 0;
  const auto res = std::from_chars(value.data(), value.data() + value.size(), v);
  if (res.ec != std::errc{} || res.ptr != value.data() + value.size()) type_error(key, value, "an integer");
  return v;
}

int to_int(std::string_view key, std::string_view value) {
  const long long v = to_integer(key, value);
  if (v < INT32_MIN || v > INT32_MAX) type_error(key, value, "a 32-bit integer");
  return static_cast<int>(v);
}

bool to_bool(std::string_view key, std::string_view value) {
  if (value == "true" || value == "1" || value == "yes" || value == "on") return true;
  if (value == "false" || value == "0" || value == "no" || value == "off") return false;
  type_error(key, value, "a boolean");
}

std::string format_double(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  // Prefer the shortest representation that round-trips.
  for (int prec = 1; prec <= 17; ++prec) {
    char s[64];
    std::snprintf(s, sizeof s, "%.*g", prec, v);
    if (std::strtod(s, nullptr) == v) return s;
  }
  return buf;
}

std::string join(const std::vector<std::string>& items) {
  std::string out;
  for (std::size_t i = 0; i < items.size(); ++i) out += (i ? "," : "") + items[i];
  return out;
}

}  // namespace

std::string_view method_name(Method method) {
  switch (method) {
    case Method::kMetaTtt:
      return "meta_ttt";
    case Method::kSource:
      return "source";
    case Method::kAdaBN:
      return "adabn";
    case Method::kTent:
      return "tent";
  }
  return "meta_ttt";
}

Method parse_method(std::string_view name) {
  for (Method m : {Method::kMetaTtt, Method::kSource, Method::kAdaBN, Method::kTent})
    if (method_name(m) == name) return m;
  throw ConfigError("unknown method '" + std::string(name) + "' (expected meta_ttt, source, adabn or tent)");
}

std::string_view baseline_model_name(BaselineModel model) { return model == BaselineModel::kErm ? "erm" : "meta"; }

BaselineModel parse_baseline_model(std::string_view name) {
  if (name == "erm") return BaselineModel::kErm;
  if (name == "meta") return BaselineModel::kMeta;
  throw ConfigError("unknown baseline model '" + std::string(name) + "' (expected erm or meta)");
}

void AblationFlags::validate() const {
  if (minimax && !mixed_bn) throw ConfigError("invalid ablation flags: minimax requires mixed_bn");
  if (shift_aug && !meta_l) throw ConfigError("invalid ablation flags: shift_aug requires meta_l");
}

std::string AblationFlags::label() const {
  std::string out = mixed_bn ? "mixed_bn" : "batch_bn";
  if (meta_l) out += "+meta_l";
  if (shift_aug) out += "+shift_aug";
  if (minimax) out += "+minimax";
  return out;
}

std::vector<AblationFlags> ablation_grid() {
  return {{true, false, false, false}, {true, true, false, false}, {true, true, true, false}, {true, true, true, true}};
}

void ExperimentConfig::validate() const {
  adapt.validate();
  ablation.validate();
  NetworkSpec::by_name(network);
  if (seeds.empty()) throw ConfigError("run.seeds must list at least one seed");
  for (auto s : seeds)
    if (s >= (1ull << 53)) throw ConfigError("run.seeds entries must be below 2^53");
  if (warmup_epochs < 0 || meta_epochs < 0) throw ConfigError("epoch counts must be non-negative");
  if (!(pretrain_lr >= 0.0)) throw ConfigError("train.pretrain_lr must be non-negative");
  if (source_domains.empty()) throw ConfigError("data.source_domains must list at least one domain");
  if (targets.empty()) throw ConfigError("data.targets must list at least one target");
  if (output_dir.empty()) throw ConfigError("run.output_dir must not be empty");
}

AdaptationConfig ExperimentConfig::effective_adapt() const {
  AdaptationConfig a = adapt;
  a.minimax = ablation.minimax;
  // Without meta-learning alpha is never trained; it stays at its initial
  // value and only the affine parameters adapt.
  if (!ablation.meta_l) a.adapt_alpha = false;
  return a;
}

void set_config_value(ExperimentConfig& cfg, std::string_view raw_key, std::string_view raw_value) {
  const std::string key = raw_key.find('.') == std::string_view::npos ? "adapt." + std::string(raw_key) : std::string(raw_key);
  const std::string_view value = trim(raw_value);
  AdaptationConfig& a = cfg.adapt;
  if (key == "adapt.lam") a.lam = to_double(key, value);
  else if (key == "adapt.kappa") a.kappa = to_double(key, value);
  else if (key == "adapt.lr") a.lr = to_double(key, value);
  else if (key == "adapt.meta_lr") a.meta_lr = to_double(key, value);
  else if (key == "adapt.alpha_lr") a.alpha_lr = to_double(key, value);
  else if (key == "adapt.classifier_lr") a.classifier_lr = to_double(key, value);
  else if (key == "adapt.momentum") a.momentum = to_double(key, value);
  else if (key == "adapt.weight_decay") a.weight_decay = to_double(key, value);
  else if (key == "adapt.alpha_init") a.alpha_init = to_double(key, value);
  else if (key == "adapt.layer_selector") a.layer_selector = std::string(value);
  else if (key == "adapt.k") a.k = to_int(key, value);
  else if (key == "adapt.batch_size") a.batch_size = to_int(key, value);
  else if (key == "adapt.shift_p") a.shift_p = to_double(key, value);
  else if (key == "adapt.second_order") a.second_order = to_bool(key, value);
  else if (key == "adapt.adapt_alpha") a.adapt_alpha = to_bool(key, value);
  else if (key == "adapt.reset_policy") {
    if (value == "online") a.reset_policy = ResetPolicy::kOnline;
    else if (value == "episodic") a.reset_policy = ResetPolicy::kEpisodic;
    else type_error(key, value, "online or episodic");
  } else if (key == "data.train") cfg.train_corpus = CorpusSpec::parse(value);
  else if (key == "data.test") cfg.test_corpus = CorpusSpec::parse(value);
  else if (key == "data.source_domains") {
    cfg.source_domains.clear();
    for (const auto& item : split_list(value)) cfg.source_domains.push_back(DomainTransform::parse(item));
  } else if (key == "data.targets") {
    cfg.targets.clear();
    for (const auto& item : split_list(value)) cfg.targets.push_back(DomainTransform::parse(item));
  } else if (key == "train.network") cfg.network = std::string(value);
  else if (key == "train.warmup_epochs") cfg.warmup_epochs = to_int(key, value);
  else if (key == "train.meta_epochs") cfg.meta_epochs = to_int(key, value);
  else if (key == "train.pretrain_lr") cfg.pretrain_lr = to_double(key, value);
  else if (key == "run.seeds") {
    cfg.seeds.clear();
    for (const auto& item : split_list(value)) {
      const long long s = to_integer(key, item);
      if (s < 0) type_error(key, item, "a non-negative seed");
      cfg.seeds.push_back(static_cast<std::uint64_t>(s));
    }
  } else if (key == "run.method") cfg.method = parse_method(value);
  else if (key == "run.output_dir") cfg.output_dir = std::string(value);
  else if (key == "run.predict_then_adapt") cfg.predict_then_adapt = to_bool(key, value);
  else if (key == "run.baseline_model") cfg.baseline_model = parse_baseline_model(value);
  else if (key == "ablation.mixed_bn") cfg.ablation.mixed_bn = to_bool(key, value);
  else if (key == "ablation.meta_l") cfg.ablation.meta_l = to_bool(key, value);
  else if (key == "ablation.shift_aug") cfg.ablation.shift_aug = to_bool(key, value);
  else if (key == "ablation.minimax") cfg.ablation.minimax = to_bool(key, value);
  else throw ConfigError("unknown config key '" + std::string(raw_key) + "'");
}

namespace {

void apply_line(ExperimentConfig& cfg, std::string_view line, std::string_view where) {
  const auto eq = line.find('=');
  if (eq == std::string_view::npos) throw ConfigError(std::string(where) + ": expected key = value, got '" + std::string(line) + "'");
  const auto key = trim(line.substr(0, eq));
  if (key.empty()) throw ConfigError(std::string(where) + ": missing key");
  set_config_value(cfg, key, line.substr(eq + 1));
}

}  // namespace

ExperimentConfig parse_config_text(std::string_view text, const std::vector<std::string>& overrides) {
  ExperimentConfig cfg;
  std::size_t pos = 0;
  int lineno = 0;
  while (pos < text.size()) {
    auto nl = text.find('\n', pos);
    if (nl == std::string_view::npos) nl = text.size();
    std::string_view line = text.substr(pos, nl - pos);
    pos = nl + 1;
    ++lineno;
    if (const auto hash = line.find('#'); hash != std::string_view::npos) line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) continue;
    apply_line(cfg, line, "line " + std::to_string(lineno));
  }
  for (const auto& o : overrides) apply_line(cfg, o, "override");
  cfg.validate();
  return cfg;
}

ExperimentConfig parse_config(const std::optional<std::filesystem::path>& path, const std::vector<std::string>& overrides) {
  std::string text;
  if (path) {
    std::ifstream in(*path);
    if (!in) throw ConfigError("cannot read config file " + path->string());
    std::ostringstream ss;
    ss << in.rdbuf();
    text = ss.str();
  }
  return parse_config_text(text, overrides);
}

std::string resolved_config(const ExperimentConfig& cfg) {
  const AdaptationConfig& a = cfg.adapt;
  std::vector<std::string> sources, targets, seeds;
  for (const auto& d : cfg.source_domains) sources.push_back(d.to_string());
  for (const auto& d : cfg.targets) targets.push_back(d.to_string());
  for (auto s : cfg.seeds) seeds.push_back(std::to_string(s));
  auto b = [](bool v) { return std::string(v ? "true" : "false"); };
  std::ostringstream os;
  os << "adapt.lam = " << format_double(a.lam) << "\n"
     << "adapt.kappa = " << format_double(a.kappa) << "\n"
     << "adapt.lr = " << format_double(a.lr) << "\n"
     << "adapt.meta_lr = " << format_double(a.meta_lr) << "\n"
     << "adapt.alpha_lr = " << format_double(a.alpha_lr) << "\n"
     << "adapt.classifier_lr = " << format_double(a.classifier_lr) << "\n"
     << "adapt.momentum = " << format_double(a.momentum) << "\n"
     << "adapt.weight_decay = " << format_double(a.weight_decay) << "\n"
     << "adapt.alpha_init = " << format_double(a.alpha_init) << "\n"
     << "adapt.layer_selector = " << a.layer_selector << "\n"
     << "adapt.k = " << a.k << "\n"
     << "adapt.batch_size = " << a.batch_size << "\n"
     << "adapt.shift_p = " << format_double(a.shift_p) << "\n"
     << "adapt.second_order = " << b(a.second_order) << "\n"
     << "adapt.adapt_alpha = " << b(a.adapt_alpha) << "\n"
     << "adapt.reset_policy = " << (a.reset_policy == ResetPolicy::kOnline ? "online" : "episodic") << "\n"
     << "data.train = " << cfg.train_corpus.to_string() << "\n"
     << "data.test = " << cfg.test_corpus.to_string() << "\n"
     << "data.source_domains = " << join(sources) << "\n"
     << "data.targets = " << join(targets) << "\n"
     << "train.network = " << cfg.network << "\n"
     << "train.warmup_epochs = " << cfg.warmup_epochs << "\n"
     << "train.meta_epochs = " << cfg.meta_epochs << "\n"
     << "train.pretrain_lr = " << format_double(cfg.pretrain_lr) << "\n"
     << "run.seeds = " << join(seeds) << "\n"
     << "run.method = " << method_name(cfg.method) << "\n"
     << "run.output_dir = " << cfg.output_dir << "\n"
     << "run.predict_then_adapt = " << b(cfg.predict_then_adapt) << "\n"
     << "run.baseline_model = " << baseline_model_name(cfg.baseline_model) << "\n"
     << "ablation.mixed_bn = " << b(cfg.ablation.mixed_bn) << "\n"
     << "ablation.meta_l = " << b(cfg.ablation.meta_l) << "\n"
     << "ablation.shift_aug = " << b(cfg.ablation.shift_aug) << "\n"
     << "ablation.minimax = " << b(cfg.ablation.minimax) << "\n";
  return os.str();
}

void echo_config(const ExperimentConfig& cfg, const std::filesystem::path& dir) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  write_text(resolved_config(cfg), dir / "resolved_config.txt");
}

std::filesystem::path output_root(const ExperimentConfig& cfg) {
  const std::filesystem::path out(cfg.output_dir);
  const char* root = std::getenv("TTTKIT_OUTPUT_ROOT");
  if (root && *root && out.is_relative()) return std::filesystem::path(root) / out;
  return out;
}

}  // namespace tttkit
