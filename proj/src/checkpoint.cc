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

#include "tttkit/checkpoint.h"

#include <bit>
#include <cstring>
#include <fstream>
#include <map>
#include <sstream>

#include "tttkit/errors.h"

namespace tttkit {
namespace {

static_assert(std::endian::native == std::endian::little, "checkpoint IO assumes a little-endian host");

class Writer {
 public:
  void bytes(const void* p, std::size_t n) { out_.append(static_cast<const char*>(p), n); }
  template <typename T>
  void pod(T v) {
    bytes(&v, sizeof v);
  }
  void str(const std::string& s) {
    pod<std::uint32_t>(static_cast<std::uint32_t>(s.size()));
    bytes(s.data(), s.size());
  }
  void tensor(const std::string& name, std::span<const double> values) {
    str(name);
    pod<std::uint64_t>(values.size());
    bytes(values.data(), values.size() * sizeof(double));
  }
  const std::string& data() const { return out_; }

 private:
  std::string out_;
};

class Reader {
 public:
  Reader(std::string data, std::string path) : data_(std::move(data)), path_(std::move(path)) {}

  void bytes(void* p, std::size_t n) {
    if (n > data_.size() - pos_) throw IoError("checkpoint " + path_ + " is truncated");
    std::memcpy(p, data_.data() + pos_, n);
    pos_ += n;
  }
  template <typename T>
  T pod() {
    T v{};
    bytes(&v, sizeof v);
    return v;
  }
  std::string str() {
    const auto n = pod<std::uint32_t>();
    if (n > data_.size() - pos_) throw IoError("checkpoint " + path_ + " is truncated");
    std::string s(data_.data() + pos_, n);
    pos_ += n;
    return s;
  }
  bool at_end() const { return pos_ == data_.size(); }

 private:
  std::string data_;
  std::string path_;
  std::size_t pos_ = 0;
};

std::vector<double> as_doubles(const std::vector<std::uint8_t>& v) { return {v.begin(), v.end()}; }

void write_spec(Writer& w, const NetworkSpec& s) {
  w.pod<std::int32_t>(s.in_channels);
  w.pod<std::int32_t>(s.height);
  w.pod<std::int32_t>(s.width);
  w.pod<std::int32_t>(s.classes);
  w.pod<std::int32_t>(s.stem_blocks);
  w.pod<double>(s.bn_eps);
  w.pod<double>(s.bn_momentum);
  w.pod<std::uint32_t>(static_cast<std::uint32_t>(s.blocks.size()));
  for (const ConvSpec& b : s.blocks) {
    w.pod<std::int32_t>(b.in_channels);
    w.pod<std::int32_t>(b.out_channels);
    w.pod<std::int32_t>(b.kernel);
    w.pod<std::int32_t>(b.stride);
    w.pod<std::int32_t>(b.padding);
  }
}

NetworkSpec read_spec(Reader& r) {
  NetworkSpec s;
  s.in_channels = r.pod<std::int32_t>();
  s.height = r.pod<std::int32_t>();
  s.width = r.pod<std::int32_t>();
  s.classes = r.pod<std::int32_t>();
  s.stem_blocks = r.pod<std::int32_t>();
  s.bn_eps = r.pod<double>();
  s.bn_momentum = r.pod<double>();
  const auto n = r.pod<std::uint32_t>();
  if (n > 1024) throw IoError("checkpoint network has an implausible block count");
  for (std::uint32_t i = 0; i < n; ++i) {
    ConvSpec b;
    b.in_channels = r.pod<std::int32_t>();
    b.out_channels = r.pod<std::int32_t>();
    b.kernel = r.pod<std::int32_t>();
    b.stride = r.pod<std::int32_t>();
    b.padding = r.pod<std::int32_t>();
    s.blocks.push_back(b);
  }
  try {
    s.validate();
  } catch (const Error& e) {
    throw IoError(std::string("checkpoint network spec is invalid: ") + e.what());
  }
  return s;
}

}  // namespace

void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path) {
  const Model& m = ckpt.model;
  Writer w;
  w.bytes(kCheckpointMagic, sizeof kCheckpointMagic);
  w.pod<std::uint32_t>(kCheckpointVersion);
  write_spec(w, m.spec);
  w.pod<std::uint8_t>(m.phase == BNPhase::kSourceTraining ? 0 : 1);
  w.str(ckpt.config_echo);
  w.str(ckpt.rng_state);

  std::vector<std::pair<std::string, std::vector<double>>> tensors;
  for (const auto& e : m.layout.entries()) {
    const auto s = m.slice(e);
    tensors.emplace_back("param/" + e.name, std::vector<double>(s.begin(), s.end()));
  }
  for (int l = 0; l < m.bn_layers(); ++l) {
    tensors.emplace_back("source/block" + std::to_string(l) + ".mean", m.source[l].mean);
    tensors.emplace_back("source/block" + std::to_string(l) + ".var", m.source[l].var);
  }
  if (m.deployed) tensors.emplace_back("deployed/params", *m.deployed);
  const TrainerState& t = ckpt.trainer;
  tensors.emplace_back("run/seed", std::vector<double>{static_cast<double>(ckpt.seed)});
  tensors.emplace_back("trainer/epochs", std::vector<double>{static_cast<double>(t.warmup_epochs_done),
                                                             static_cast<double>(t.meta_epochs_done)});
  tensors.emplace_back("trainer/momentum", std::vector<double>{t.warmup_opt.momentum(), t.outer_opt.momentum()});
  tensors.emplace_back("trainer/warmup.buffer", t.warmup_opt.buffer());
  tensors.emplace_back("trainer/warmup.started", as_doubles(t.warmup_opt.started()));
  tensors.emplace_back("trainer/outer.buffer", t.outer_opt.buffer());
  tensors.emplace_back("trainer/outer.started", as_doubles(t.outer_opt.started()));

  w.pod<std::uint32_t>(static_cast<std::uint32_t>(tensors.size()));
  for (const auto& [name, values] : tensors) w.tensor(name, values);
  w.bytes(kCheckpointEnd, sizeof kCheckpointEnd);

  std::error_code ec;
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path(), ec);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write checkpoint " + path.string());
  out.write(w.data().data(), static_cast<std::streamsize>(w.data().size()));
  if (!out) throw IoError("failed writing checkpoint " + path.string());
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot read checkpoint " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  Reader r(ss.str(), path.string());

  char magic[8];
  r.bytes(magic, sizeof magic);
  if (std::memcmp(magic, kCheckpointMagic, sizeof magic) != 0) throw IoError(path.string() + " is not a checkpoint");
  const auto version = r.pod<std::uint32_t>();
  if (version != kCheckpointVersion)
    throw VersionError("checkpoint " + path.string() + " has format version " + std::to_string(version) + ", expected " +
                       std::to_string(kCheckpointVersion));

  Checkpoint ck;
  Model& m = ck.model;
  m.spec = read_spec(r);
  m.layout = ParamLayout::for_network(m.spec);
  const auto phase = r.pod<std::uint8_t>();
  if (phase > 1) throw IoError("checkpoint has an invalid phase tag");
  m.phase = phase == 0 ? BNPhase::kSourceTraining : BNPhase::kAdaptation;
  ck.config_echo = r.str();
  ck.rng_state = r.str();

  std::map<std::string, std::vector<double>> tensors;
  const auto count = r.pod<std::uint32_t>();
  for (std::uint32_t i = 0; i < count; ++i) {
    std::string name = r.str();
    const auto n = r.pod<std::uint64_t>();
    if (n > (1ull << 32)) throw IoError("checkpoint tensor " + name + " has an implausible length");
    std::vector<double> values(n);
    r.bytes(values.data(), n * sizeof(double));
    if (!tensors.emplace(std::move(name), std::move(values)).second) throw IoError("checkpoint repeats a tensor name");
  }
  char end[8];
  r.bytes(end, sizeof end);
  if (std::memcmp(end, kCheckpointEnd, sizeof end) != 0 || !r.at_end())
    throw IoError("checkpoint " + path.string() + " has a corrupt trailer");

  auto take = [&](const std::string& name, std::size_t expected) {
    const auto it = tensors.find(name);
    if (it == tensors.end()) throw IoError("checkpoint lacks tensor " + name);
    if (it->second.size() != expected)
      throw IoError("checkpoint tensor " + name + " has length " + std::to_string(it->second.size()) + ", expected " +
                    std::to_string(expected));
    return it->second;
  };
  m.params.assign(m.layout.total(), 0.0);
  for (const auto& e : m.layout.entries()) {
    const auto v = take("param/" + e.name, e.size);
    std::copy(v.begin(), v.end(), m.params.begin() + static_cast<std::ptrdiff_t>(e.offset));
  }
  for (int l = 0; l < m.bn_layers(); ++l) {
    const std::size_t c = static_cast<std::size_t>(m.spec.blocks[l].out_channels);
    m.source.push_back({take("source/block" + std::to_string(l) + ".mean", c), take("source/block" + std::to_string(l) + ".var", c)});
  }
  if (tensors.count("deployed/params")) m.deployed = take("deployed/params", m.params.size());

  ck.seed = static_cast<std::uint64_t>(take("run/seed", 1)[0]);
  const auto epochs = take("trainer/epochs", 2);
  const auto momentum = take("trainer/momentum", 2);
  auto flags = [](const std::vector<double>& v) { return std::vector<std::uint8_t>(v.begin(), v.end()); };
  ck.trainer.warmup_opt = NesterovSgd(m.params.size(), momentum[0]);
  ck.trainer.warmup_opt.restore(take("trainer/warmup.buffer", m.params.size()),
                                flags(take("trainer/warmup.started", m.params.size())));
  ck.trainer.outer_opt = NesterovSgd(m.params.size(), momentum[1]);
  ck.trainer.outer_opt.restore(take("trainer/outer.buffer", m.params.size()),
                               flags(take("trainer/outer.started", m.params.size())));
  ck.trainer.warmup_epochs_done = static_cast<int>(epochs[0]);
  ck.trainer.meta_epochs_done = static_cast<int>(epochs[1]);
  return ck;
}

}  // namespace tttkit
