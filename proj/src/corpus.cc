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

#include "tttkit/bench_harness.h"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>

#include "json.hpp"
#include "tttkit/errors.h"
#include "tttkit/rng.h"

namespace tttkit {

namespace fs = std::filesystem;

Tensor<double> Corpus::batch(std::span<const std::size_t> indices) const {
  Tensor<double> out(static_cast<int>(indices.size()), channels, height, width);
  const std::size_t sz = image_size();
  auto dst = out.data();
  for (std::size_t k = 0; k < indices.size(); ++k) {
    if (indices[k] >= static_cast<std::size_t>(count)) throw PreconditionError("corpus index out of range");
    auto src = image(static_cast<int>(indices[k]));
    std::copy(src.begin(), src.end(), dst.begin() + static_cast<std::ptrdiff_t>(k * sz));
  }
  return out;
}

std::vector<int> Corpus::batch_labels(std::span<const std::size_t> indices) const {
  std::vector<int> out;
  out.reserve(indices.size());
  for (std::size_t i : indices) out.push_back(labels.at(i));
  return out;
}

Corpus Corpus::subset(std::span<const std::size_t> indices) const {
  Corpus out = *this;
  out.count = static_cast<int>(indices.size());
  out.images.clear();
  out.labels.clear();
  out.images.reserve(indices.size() * image_size());
  for (std::size_t i : indices) {
    auto src = image(static_cast<int>(i));
    out.images.insert(out.images.end(), src.begin(), src.end());
    out.labels.push_back(labels.at(i));
  }
  return out;
}

void Corpus::validate() const {
  if (count < 0 || images.size() != static_cast<std::size_t>(count) * image_size() ||
      labels.size() != static_cast<std::size_t>(count))
    throw IoError("corpus: tensor sizes disagree with the declared shape");
  for (std::int32_t y : labels)
    if (y < 0 || y >= classes) throw IoError("corpus: label " + std::to_string(y) + " out of range [0," + std::to_string(classes) + ")");
  for (float v : images)
    if (!std::isfinite(v) || v < 0.0f || v > 1.0f) throw IoError("corpus: pixel outside [0,1]");
}

std::uint64_t Corpus::checksum() const {
  // FNV-1a over the raw image and label bytes.
  std::uint64_t h = 1469598103934665603ull;
  auto mix = [&h](const void* data, std::size_t n) {
    const auto* p = static_cast<const unsigned char*>(data);
    for (std::size_t i = 0; i < n; ++i) {
      h ^= p[i];
      h *= 1099511628211ull;
    }
  };
  mix(images.data(), images.size() * sizeof(float));
  mix(labels.data(), labels.size() * sizeof(std::int32_t));
  return h;
}

CorpusSpec CorpusSpec::parse(std::string_view text) {
  CorpusSpec spec;
  if (text.rfind("path:", 0) == 0) {
    spec.source = "path";
    spec.path = std::string(text.substr(5));
    return spec;
  }
  if (text.find('/') != std::string_view::npos) {
    spec.source = "path";
    spec.path = std::string(text);
    return spec;
  }
  const auto colon = text.find(':');
  spec.source = std::string(text.substr(0, colon));
  if (spec.source != "digits") throw ConfigError("unknown corpus generator: " + spec.source);
  if (colon == std::string_view::npos) return spec;
  std::string_view rest = text.substr(colon + 1);
  while (!rest.empty()) {
    const auto comma = rest.find(',');
    const std::string_view item = rest.substr(0, comma);
    const auto eq = item.find('=');
    if (eq == std::string_view::npos) throw ConfigError("malformed corpus option: " + std::string(item));
    const std::string key(item.substr(0, eq));
    const std::string val(item.substr(eq + 1));
    try {
      if (key == "n") spec.size = std::stoi(val);
      else if (key == "seed") spec.seed = std::stoull(val);
      else throw ConfigError("unknown corpus option: " + key);
    } catch (const std::logic_error&) {
      throw ConfigError("bad value for corpus option " + key + ": " + val);
    }
    if (comma == std::string_view::npos) break;
    rest = rest.substr(comma + 1);
  }
  if (spec.size < 1) throw ConfigError("corpus size must be positive");
  return spec;
}

std::string CorpusSpec::to_string() const {
  if (source == "path") return "path:" + path;
  return source + ":n=" + std::to_string(size) + ",seed=" + std::to_string(seed);
}

namespace {

struct Point {
  double x, y;
};
using Stroke = std::vector<Point>;

Stroke ellipse(double cx, double cy, double rx, double ry, double from = 0.0, double to = 2.0 * M_PI, int steps = 16) {
  Stroke s;
  for (int i = 0; i <= steps; ++i) {
    const double t = from + (to - from) * i / steps;
    s.push_back({cx + rx * std::cos(t), cy + ry * std::sin(t)});
  }
  return s;
}

// Glyph skeletons in a unit box, y pointing down.
std::vector<Stroke> glyph(int digit) {
  switch (digit) {
    case 0: return {ellipse(0.5, 0.5, 0.26, 0.4)};
    case 1: return {{{0.35, 0.25}, {0.52, 0.1}, {0.52, 0.9}}};
    case 2: return {{{0.25, 0.3}, {0.35, 0.12}, {0.6, 0.1}, {0.75, 0.25}, {0.7, 0.45}, {0.25, 0.9}, {0.78, 0.9}}};
    case 3: return {{{0.25, 0.15}, {0.7, 0.15}, {0.45, 0.45}, {0.72, 0.6}, {0.7, 0.82}, {0.5, 0.92}, {0.25, 0.85}}};
    case 4: return {{{0.65, 0.9}, {0.65, 0.1}, {0.2, 0.65}, {0.8, 0.65}}};
    case 5: return {{{0.75, 0.1}, {0.3, 0.1}, {0.27, 0.45}, {0.6, 0.42}, {0.75, 0.6}, {0.7, 0.85}, {0.45, 0.92}, {0.25, 0.85}}};
    case 6: return {{{0.7, 0.12}, {0.4, 0.3}, {0.27, 0.6}, {0.35, 0.88}, {0.6, 0.9}, {0.72, 0.7}, {0.6, 0.52}, {0.3, 0.6}}};
    case 7: return {{{0.22, 0.1}, {0.78, 0.1}, {0.45, 0.9}}};
    case 8: return {ellipse(0.5, 0.29, 0.2, 0.19), ellipse(0.5, 0.7, 0.24, 0.21)};
    case 9: return {ellipse(0.5, 0.33, 0.21, 0.21), {{0.71, 0.35}, {0.65, 0.9}}};
    default: throw PreconditionError("digit out of range");
  }
}

double segment_distance(Point p, Point a, Point b) {
  const double dx = b.x - a.x, dy = b.y - a.y;
  const double len2 = dx * dx + dy * dy;
  double t = len2 > 0.0 ? ((p.x - a.x) * dx + (p.y - a.y) * dy) / len2 : 0.0;
  t = std::clamp(t, 0.0, 1.0);
  const double ex = a.x + t * dx - p.x, ey = a.y + t * dy - p.y;
  return std::sqrt(ex * ex + ey * ey);
}

void render_digit(int digit, Rng& rng, std::span<float> out, int h, int w) {
  const double angle = uniform(rng, -0.22, 0.22);
  const double shear = uniform(rng, -0.25, 0.25);
  const double sx = uniform(rng, 0.75, 1.05) * 19.0;
  const double sy = uniform(rng, 0.85, 1.1) * 19.0;
  const double tx = w / 2.0 + uniform(rng, -2.0, 2.0);
  const double ty = h / 2.0 + uniform(rng, -2.0, 2.0);
  const double radius = uniform(rng, 0.8, 1.6);
  const double ink = uniform(rng, 0.75, 1.0);
  const double ca = std::cos(angle), sa = std::sin(angle);

  std::vector<std::vector<Point>> strokes;
  for (const Stroke& s : glyph(digit)) {
    std::vector<Point> px;
    for (const Point& p : s) {
      const double ux = (p.x - 0.5 + uniform(rng, -0.03, 0.03)) * sx;
      const double uy = (p.y - 0.5 + uniform(rng, -0.03, 0.03)) * sy;
      const double shx = ux + shear * uy;
      px.push_back({tx + ca * shx - sa * uy, ty + sa * shx + ca * uy});
    }
    strokes.push_back(std::move(px));
  }
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      const Point c{x + 0.5, y + 0.5};
      double d = 1e9;
      for (const auto& s : strokes)
        for (std::size_t i = 0; i + 1 < s.size(); ++i) d = std::min(d, segment_distance(c, s[i], s[i + 1]));
      const double v = std::clamp(radius + 0.5 - d, 0.0, 1.0) * ink;
      out[static_cast<std::size_t>(y) * w + x] = static_cast<float>(v);
    }
}

void write_le(std::ofstream& os, const void* data, std::size_t bytes, std::size_t elem) {
  if constexpr (std::endian::native == std::endian::little) {
    os.write(static_cast<const char*>(data), static_cast<std::streamsize>(bytes));
  } else {
    const auto* p = static_cast<const char*>(data);
    std::vector<char> buf(p, p + bytes);
    for (std::size_t i = 0; i < bytes; i += elem) std::reverse(buf.begin() + i, buf.begin() + i + elem);
    os.write(buf.data(), static_cast<std::streamsize>(bytes));
  }
}

void read_le(const fs::path& path, void* data, std::size_t bytes, std::size_t elem) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError("cannot open " + path.string());
  is.seekg(0, std::ios::end);
  const auto size = static_cast<std::size_t>(is.tellg());
  if (size != bytes)
    throw IoError(path.string() + ": expected " + std::to_string(bytes) + " bytes, found " + std::to_string(size));
  is.seekg(0);
  is.read(static_cast<char*>(data), static_cast<std::streamsize>(bytes));
  if (!is) throw IoError("short read from " + path.string());
  if constexpr (std::endian::native != std::endian::little) {
    auto* p = static_cast<char*>(data);
    for (std::size_t i = 0; i < bytes; i += elem) std::reverse(p + i, p + i + elem);
  }
}

}  // namespace

Corpus generate_digits(int count, std::uint64_t seed) {
  if (count < 1) throw ConfigError("corpus size must be positive");
  Corpus c;
  c.count = count;
  c.seed = seed;
  c.provenance = "digits:n=" + std::to_string(count) + ",seed=" + std::to_string(seed);
  c.images.assign(static_cast<std::size_t>(count) * c.image_size(), 0.0f);
  c.labels.resize(count);
  Rng rng(seed);
  for (int i = 0; i < count; ++i) {
    const int digit = i % 10;
    c.labels[i] = digit;
    render_digit(digit, rng, c.image(i), c.height, c.width);
  }
  // Interleave classes randomly so any prefix is class-balanced on average.
  std::vector<std::size_t> order(count);
  for (int i = 0; i < count; ++i) order[i] = i;
  shuffle(order, rng);
  Corpus out = c.subset(order);
  out.provenance = c.provenance;
  return out;
}

Corpus load_corpus(const CorpusSpec& spec) {
  if (spec.source == "digits") return generate_digits(spec.size, spec.seed);
  if (spec.source == "path") return read_corpus(spec.path);
  throw ConfigError("unknown corpus source: " + spec.source);
}

void save_corpus(const Corpus& corpus, const fs::path& dir) {
  corpus.validate();
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw IoError("cannot create " + dir.string() + ": " + ec.message());
  nlohmann::json manifest = {
      {"format_version", kCorpusFormatVersion},
      {"shape", {corpus.count, corpus.channels, corpus.height, corpus.width}},
      {"classes", corpus.classes},
      {"seed", corpus.seed},
      {"provenance", corpus.provenance},
      {"images", "images.f32"},
      {"labels", "labels.i32"},
  };
  {
    std::ofstream os(dir / "manifest.json");
    if (!os) throw IoError("cannot write " + (dir / "manifest.json").string());
    os << manifest.dump(2) << "\n";
  }
  std::ofstream img(dir / "images.f32", std::ios::binary);
  std::ofstream lab(dir / "labels.i32", std::ios::binary);
  if (!img || !lab) throw IoError("cannot write corpus payload in " + dir.string());
  write_le(img, corpus.images.data(), corpus.images.size() * sizeof(float), sizeof(float));
  write_le(lab, corpus.labels.data(), corpus.labels.size() * sizeof(std::int32_t), sizeof(std::int32_t));
  if (!img || !lab) throw IoError("write failed in " + dir.string());
}

Corpus read_corpus(const fs::path& dir) {
  const fs::path manifest_path = dir / "manifest.json";
  if (!fs::exists(manifest_path)) throw IoError("no corpus manifest at " + manifest_path.string());
  nlohmann::json m;
  try {
    std::ifstream is(manifest_path);
    m = nlohmann::json::parse(is);
  } catch (const nlohmann::json::exception& e) {
    throw IoError("corrupt manifest " + manifest_path.string() + ": " + e.what());
  }
  Corpus c;
  try {
    if (m.at("format_version").get<int>() != kCorpusFormatVersion)
      throw VersionError("unsupported corpus format version in " + manifest_path.string());
    const auto shape = m.at("shape").get<std::vector<int>>();
    if (shape.size() != 4) throw IoError("manifest shape must have 4 entries");
    c.count = shape[0];
    c.channels = shape[1];
    c.height = shape[2];
    c.width = shape[3];
    c.classes = m.at("classes").get<int>();
    c.seed = m.at("seed").get<std::uint64_t>();
    c.provenance = m.at("provenance").get<std::string>();
    c.images.resize(static_cast<std::size_t>(c.count) * c.image_size());
    c.labels.resize(c.count);
    read_le(dir / m.at("images").get<std::string>(), c.images.data(), c.images.size() * sizeof(float), sizeof(float));
    read_le(dir / m.at("labels").get<std::string>(), c.labels.data(), c.labels.size() * sizeof(std::int32_t),
            sizeof(std::int32_t));
  } catch (const nlohmann::json::exception& e) {
    throw IoError("corrupt manifest " + manifest_path.string() + ": " + e.what());
  }
  c.validate();
  return c;
}

}  // namespace tttkit
