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

#include "tttkit/metrics.h"

#include <charconv>
#include <cstdio>
#include <fstream>
#include <map>
#include <sstream>

#include "tttkit/errors.h"

namespace tttkit {

namespace fs = std::filesystem;

double RunMetrics::mean_error() const {
  if (records.empty()) return 0.0;
  double s = 0.0;
  for (const auto& r : records) s += r.error_rate;
  return s / static_cast<double>(records.size());
}

namespace {

// Shortest text that parses back to the same double.
std::string fmt_double(double v) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

std::ofstream open_for_write(const fs::path& path) {
  if (path.has_parent_path()) {
    std::error_code ec;
    fs::create_directories(path.parent_path(), ec);
  }
  std::ofstream os(path, std::ios::binary);
  if (!os) throw IoError("cannot write " + path.string());
  return os;
}

}  // namespace

void write_metrics(std::span<const MetricsRecord> records, const fs::path& path) {
  std::ofstream os = open_for_write(path);
  os << kMetricsCsvHeader << "\n";
  for (const auto& r : records) {
    os << r.batch_id << ',' << fmt_double(r.error_rate) << ',' << fmt_double(r.mean_entropy) << ','
       << fmt_double(r.alpha_mean) << ',' << fmt_double(r.alpha_min) << ',' << fmt_double(r.alpha_max) << ','
       << (r.skipped ? 1 : 0) << "\n";
  }
  if (!os) throw IoError("write failed: " + path.string());
}

std::vector<MetricsRecord> read_metrics(const fs::path& path) {
  std::ifstream is(path);
  if (!is) throw IoError("cannot open metrics file " + path.string());
  std::string line;
  if (!std::getline(is, line) || line != kMetricsCsvHeader) throw IoError("unexpected metrics header in " + path.string());
  std::vector<MetricsRecord> out;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    std::stringstream ss(line);
    std::string cell;
    std::vector<std::string> cells;
    while (std::getline(ss, cell, ',')) cells.push_back(cell);
    if (cells.size() != 7) throw IoError("malformed metrics row in " + path.string());
    MetricsRecord r;
    try {
      r.batch_id = std::stoll(cells[0]);
      r.error_rate = std::stod(cells[1]);
      r.mean_entropy = std::stod(cells[2]);
      r.alpha_mean = std::stod(cells[3]);
      r.alpha_min = std::stod(cells[4]);
      r.alpha_max = std::stod(cells[5]);
      r.skipped = cells[6] == "1";
    } catch (const std::logic_error&) {
      throw IoError("malformed metrics row in " + path.string());
    }
    out.push_back(r);
  }
  return out;
}

nlohmann::json summarize(std::span<const RunMetrics> runs) {
  std::size_t records = 0;
  for (const auto& r : runs) records += r.records.size();
  if (records == 0) throw PreconditionError("summarize needs at least one record");

  double total = 0.0;
  std::size_t skipped = 0;
  std::map<std::string, std::vector<double>> by_method, by_corruption;
  std::map<int, std::vector<double>> by_batch;
  for (const auto& run : runs) {
    if (run.records.empty()) continue;
    for (const auto& rec : run.records) {
      total += rec.error_rate;
      skipped += rec.skipped ? 1 : 0;
    }
    const double m = run.mean_error();
    if (!run.tags.method.empty()) by_method[run.tags.method].push_back(m);
    if (!run.tags.corruption.empty()) by_corruption[run.tags.corruption].push_back(m);
    if (run.tags.batch_size > 0) by_batch[run.tags.batch_size].push_back(m);
  }
  auto mean = [](const std::vector<double>& v) {
    double s = 0.0;
    for (double x : v) s += x;
    return s / static_cast<double>(v.size());
  };
  nlohmann::json doc;
  doc["runs"] = runs.size();
  doc["batches"] = records;
  doc["skipped_batches"] = skipped;
  doc["mean_error"] = total / static_cast<double>(records);
  doc["per_method"] = nlohmann::json::object();
  for (const auto& [k, v] : by_method) doc["per_method"][k] = mean(v);
  doc["per_corruption"] = nlohmann::json::object();
  for (const auto& [k, v] : by_corruption) doc["per_corruption"][k] = mean(v);
  doc["per_batch_size"] = nlohmann::json::array();
  for (const auto& [k, v] : by_batch) doc["per_batch_size"].push_back({{"batch_size", k}, {"error", mean(v)}});
  return doc;
}

void write_json(const nlohmann::json& doc, const fs::path& path) {
  std::ofstream os = open_for_write(path);
  os << doc.dump(2) << "\n";
  if (!os) throw IoError("write failed: " + path.string());
}

void write_text(const std::string& text, const fs::path& path) {
  std::ofstream os = open_for_write(path);
  os << text;
  if (!os) throw IoError("write failed: " + path.string());
}

}  // namespace tttkit
