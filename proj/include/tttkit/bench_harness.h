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
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "tttkit/corpus.h"

namespace tttkit {

// Where a corpus comes from: the built-in digit generator or a container
// directory on disk.
//   "digits:n=1000,seed=7"   generated
//   "path:/data/run1" or any string containing '/'   loaded
struct CorpusSpec {
  std::string source = "digits";
  int size = 1000;
  std::uint64_t seed = 0;
  std::string path;

  static CorpusSpec parse(std::string_view text);
  std::string to_string() const;
};

inline constexpr int kCorpusFormatVersion = 1;

// Renders jittered stroke glyphs of the ten digits on a 28x28 canvas.
Corpus generate_digits(int count, std::uint64_t seed);

Corpus load_corpus(const CorpusSpec& spec);
// Directory container: manifest.json + images.f32 (little-endian float32,
// NCHW) + labels.i32 (little-endian int32).
void save_corpus(const Corpus& corpus, const std::filesystem::path& dir);
Corpus read_corpus(const std::filesystem::path& dir);

enum class CorruptionKind { kGaussianNoise, kShotNoise, kImpulseNoise, kContrast, kBrightness, kPixelate };

std::string_view corruption_name(CorruptionKind kind);
CorruptionKind parse_corruption_kind(std::string_view name);
const std::vector<CorruptionKind>& all_corruption_kinds();

struct CorruptionSpec {
  CorruptionKind kind = CorruptionKind::kGaussianNoise;
  int severity = 5;
  std::uint64_t seed = 0;

  // "gaussian_noise" or "gaussian_noise@3".
  static CorruptionSpec parse(std::string_view text, std::uint64_t seed = 0);
  std::string to_string() const;
};

// The per-kind severity table entry (noise sigma, photon count, impulse
// fraction, contrast factor, brightness offset or pixelate scale).
double severity_parameter(CorruptionKind kind, int severity);

// Applies the corruption image by image and clips to [0,1]. Labels and
// corpus size are untouched.
Corpus corrupt(const Corpus& corpus, const CorruptionSpec& spec);

// A per-domain transform: identity or a corruption.
struct DomainTransform {
  std::optional<CorruptionSpec> corruption;

  static DomainTransform parse(std::string_view text, std::uint64_t seed = 0);
  std::string to_string() const;
};

// Splits the corpus into disjoint, near-equal, label-preserving domains,
// applying transform i to part i.
std::vector<Corpus> make_domains(const Corpus& corpus, std::span<const DomainTransform> transforms, std::uint64_t seed);

struct LeaveOneOutSplit {
  std::vector<Corpus> sources;
  Corpus target;
  std::size_t held_out = 0;
};

std::vector<LeaveOneOutSplit> leave_one_out(const std::vector<Corpus>& domains);

}  // namespace tttkit
