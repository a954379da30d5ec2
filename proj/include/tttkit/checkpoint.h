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
#include <string>

#include "tttkit/meta_engine.h"
#include "tttkit/network.h"

namespace tttkit {

inline constexpr char kCheckpointMagic[8] = {'T', 'T', 'T', 'K', 'C', 'K', 'P', 'T'};
inline constexpr char kCheckpointEnd[8] = {'T', 'T', 'T', 'K', 'E', 'N', 'D', '\0'};
inline constexpr std::uint32_t kCheckpointVersion = 1;

// Everything needed to resume training or run adaptation: the model, the
// trainer's optimizer state and epoch counters, the generator state and the
// resolved configuration text it was produced with.
struct Checkpoint {
  Model model;
  TrainerState trainer;
  std::string rng_state;
  std::string config_echo;
  std::uint64_t seed = 0;  // the run seed the model was trained with
};

// Layout (all integers little-endian):
//   magic "TTTKCKPT" | u32 version | network spec | u8 phase
//   | str config_echo | str rng_state | u32 tensor count
//   | tensors: str name, u64 length, f64[length]
//   | end marker "TTTKEND\0"
// where str is u32 byte length followed by the bytes.
void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path);

// Throws VersionError on a version mismatch and IoError on anything
// malformed, including truncation.
Checkpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace tttkit
