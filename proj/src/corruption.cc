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

#include <algorithm>
#include <array>
#include <cmath>

#include "tttkit/bench_harness.h"
#include "tttkit/errors.h"
#include "tttkit/rng.h"

namespace tttkit {

namespace {

struct KindInfo {
  CorruptionKind kind;
  std::string_view name;
  std::array<double, 5> table;
};

// Severity tables. Noise-type entries grow with severity; contrast and
// pixelate entries shrink (less contrast, coarser grid).
constexpr std::array<KindInfo, 6> kKinds{{
    {CorruptionKind::kGaussianNoise, "gaussian_noise", {0.04, 0.08, 0.12, 0.18, 0.26}},
    {CorruptionKind::kShotNoise, "shot_noise", {60.0, 25.0, 12.0, 5.0, 3.0}},
    {CorruptionKind::kImpulseNoise, "impulse_noise", {0.03, 0.06, 0.09, 0.17, 0.27}},
    {CorruptionKind::kContrast, "contrast", {0.4, 0.3, 0.2, 0.1, 0.05}},
    {CorruptionKind::kBrightness, "brightness", {0.1, 0.2, 0.3, 0.4, 0.5}},
    {CorruptionKind::kPixelate, "pixelate", {0.85, 0.7, 0.55, 0.45, 0.35}},
}};

const KindInfo& info(CorruptionKind kind) {
  for (const auto& k : kKinds)
    if (k.kind == kind) return k;
  throw ConfigError("unknown corruption kind");
}

void pixelate(std::span<float> img, int channels, int h, int w, double scale) {
  const int sh = std::max(2, static_cast<int>(std::lround(h * scale)));
  const int sw = std::max(2, static_cast<int>(std::lround(w * scale)));
  std::vector<double> sum(static_cast<std::size_t>(sh) * sw);
  std::vector<int> cnt(sum.size());
  for (int c = 0; c < channels; ++c) {
    auto plane = img.subspan(static_cast<std::size_t>(c) * h * w, static_cast<std::size_t>(h) * w);
    std::fill(sum.begin(), sum.end(), 0.0);
    std::fill(cnt.begin(), cnt.end(), 0);
    for (int y = 0; y < h; ++y)
      for (int x = 0; x < w; ++x) {
        const std::size_t cell = static_cast<std::size_t>(y * sh / h) * sw + x * sw / w;
        sum[cell] += plane[static_cast<std::size_t>(y) * w + x];
        ++cnt[cell];
      }
    for (int y = 0; y < h; ++y)
      for (int x = 0; x < w; ++x) {
        const std::size_t cell = static_cast<std::size_t>(y * sh / h) * sw + x * sw / w;
        plane[static_cast<std::size_t>(y) * w + x] = static_cast<float>(sum[cell] / cnt[cell]);
      }
  }
}

}  // namespace

std::string_view corruption_name(CorruptionKind kind) { return info(kind).name; }

CorruptionKind parse_corruption_kind(std::string_view name) {
  for (const auto& k : kKinds)
    if (k.name == name) return k.kind;
  throw ConfigError("unknown corruption kind: " + std::string(name));
}

const std::vector<CorruptionKind>& all_corruption_kinds() {
  static const std::vector<CorruptionKind> kinds = [] {
    std::vector<CorruptionKind> v;
    for (const auto& k : kKinds) v.push_back(k.kind);
    return v;
  }();
  return kinds;
}

CorruptionSpec CorruptionSpec::parse(std::string_view text, std::uint64_t seed) {
  CorruptionSpec spec;
  spec.seed = seed;
  const auto at = text.find('@');
  spec.kind = parse_corruption_kind(text.substr(0, at));
  if (at != std::string_view::npos) {
    const std::string sev(text.substr(at + 1));
    try {
      std::size_t used = 0;
      spec.severity = std::stoi(sev, &used);
      if (used != sev.size()) throw std::invalid_argument(sev);
    } catch (const std::logic_error&) {
      throw ConfigError("bad severity: " + sev);
    }
  }
  if (spec.severity < 1 || spec.severity > 5) throw ConfigError("severity must be in 1..5");
  return spec;
}

std::string CorruptionSpec::to_string() const {
  return std::string(corruption_name(kind)) + "@" + std::to_string(severity);
}

double severity_parameter(CorruptionKind kind, int severity) {
  if (severity < 1 || severity > 5) throw ConfigError("severity must be in 1..5");
  return info(kind).table[severity - 1];
}

Corpus corrupt(const Corpus& corpus, const CorruptionSpec& spec) {
  const double param = severity_parameter(spec.kind, spec.severity);
  Corpus out = corpus;
  out.provenance = corpus.provenance + "|" + spec.to_string() + ",seed=" + std::to_string(spec.seed);
  Rng rng(spec.seed);
  for (int i = 0; i < out.count; ++i) {
    auto img = out.image(i);
    switch (spec.kind) {
      case CorruptionKind::kGaussianNoise:
        for (float& v : img) v = static_cast<float>(v + param * standard_normal(rng));
        break;
      case CorruptionKind::kShotNoise:
        for (float& v : img) v = static_cast<float>(poisson(rng, v * param) / param);
        break;
      case CorruptionKind::kImpulseNoise:
        for (float& v : img)
          if (bernoulli(rng, param)) v = bernoulli(rng, 0.5) ? 1.0f : 0.0f;
        break;
      case CorruptionKind::kContrast: {
        double mean = 0.0;
        for (float v : img) mean += v;
        mean /= static_cast<double>(img.size());
        for (float& v : img) v = static_cast<float>(mean + param * (v - mean));
        break;
      }
      case CorruptionKind::kBrightness:
        for (float& v : img) v = static_cast<float>(v + param);
        break;
      case CorruptionKind::kPixelate:
        pixelate(img, out.channels, out.height, out.width, param);
        break;
    }
    for (float& v : img) v = std::clamp(v, 0.0f, 1.0f);
  }
  return out;
}

DomainTransform DomainTransform::parse(std::string_view text, std::uint64_t seed) {
  DomainTransform t;
  if (text == "identity") return t;
  t.corruption = CorruptionSpec::parse(text, seed);
  return t;
}

std::string DomainTransform::to_string() const { return corruption ? corruption->to_string() : "identity"; }

std::vector<Corpus> make_domains(const Corpus& corpus, std::span<const DomainTransform> transforms, std::uint64_t seed) {
  if (transforms.empty()) throw ConfigError("make_domains needs at least one transform");
  if (static_cast<std::size_t>(corpus.count) < transforms.size()) throw ConfigError("more domains than samples");
  std::vector<std::size_t> order(static_cast<std::size_t>(corpus.count));
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  Rng rng(seed);
  shuffle(order, rng);
  const std::size_t d = transforms.size();
  std::vector<Corpus> out;
  std::size_t start = 0;
  for (std::size_t k = 0; k < d; ++k) {
    const std::size_t len = order.size() / d + (k < order.size() % d ? 1 : 0);
    std::vector<std::size_t> part(order.begin() + static_cast<std::ptrdiff_t>(start),
                                  order.begin() + static_cast<std::ptrdiff_t>(start + len));
    std::sort(part.begin(), part.end());
    start += len;
    Corpus dom = corpus.subset(part);
    if (transforms[k].corruption) {
      CorruptionSpec cs = *transforms[k].corruption;
      cs.seed ^= seed + k;
      dom = corrupt(dom, cs);
    }
    dom.provenance = corpus.provenance + "|domain" + std::to_string(k) + ":" + transforms[k].to_string();
    out.push_back(std::move(dom));
  }
  return out;
}

std::vector<LeaveOneOutSplit> leave_one_out(const std::vector<Corpus>& domains) {
  if (domains.size() < 2) throw ConfigError("leave-one-domain-out needs at least two domains");
  std::vector<LeaveOneOutSplit> out;
  for (std::size_t k = 0; k < domains.size(); ++k) {
    LeaveOneOutSplit split;
    split.held_out = k;
    split.target = domains[k];
    for (std::size_t j = 0; j < domains.size(); ++j)
      if (j != k) split.sources.push_back(domains[j]);
    out.push_back(std::move(split));
  }
  return out;
}

}  // namespace tttkit
