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

#include <array>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"

namespace tttkit {

// One row per adapted test batch.
struct MetricsRecord {
  std::int64_t batch_id = 0;
  int samples = 0;
  double error_rate = 0.0;
  double mean_entropy = 0.0;
  double alpha_mean = 0.0;
  double alpha_min = 0.0;
  double alpha_max = 0.0;
  bool skipped = false;
  std::vector<std::array<double, 3>> alpha_layers;  // per layer (mean, min, max); JSON only
};

struct RunTags {
  std::string method;
  std::string corruption;
  int severity = 0;
  int batch_size = 0;
  std::uint64_t seed = 0;
};

struct RunMetrics {
  RunTags tags;
  std::vector<MetricsRecord> records;

  double mean_error() const;
};

inline constexpr const char* kMetricsCsvHeader = "batch_id,error_rate,mean_entropy,alpha_mean,alpha_min,alpha_max,skipped";

void write_metrics(std::span<const MetricsRecord> records, const std::filesystem::path& path);
std::vector<MetricsRecord> read_metrics(const std::filesystem::path& path);

// JSON summary: overall mean error, per-method, per-corruption and
// per-batch-size (ascending) breakdowns. Throws on empty input.
nlohmann::json summarize(std::span<const RunMetrics> runs);
void write_json(const nlohmann::json& doc, const std::filesystem::path& path);
void write_text(const std::string& text, const std::filesystem::path& path);

}  // namespace tttkit
