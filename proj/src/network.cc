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

#include "tttkit/network.h"

#include <cmath>

namespace tttkit {

NetworkSpec NetworkSpec::digits() {
  NetworkSpec s;
  s.in_channels = 1;
  s.height = 28;
  s.width = 28;
  s.classes = 10;
  s.blocks = {{1, 8, 3, 2, 1}, {8, 16, 3, 2, 1}, {16, 32, 3, 2, 1}};
  s.stem_blocks = 1;
  return s;
}

NetworkSpec NetworkSpec::toy() {
  NetworkSpec s;
  s.in_channels = 2;
  s.height = 3;
  s.width = 3;
  s.classes = 3;
  s.blocks = {{2, 3, 3, 1, 1}, {3, 3, 1, 1, 0}};
  s.stem_blocks = 1;
  return s;
}

NetworkSpec NetworkSpec::by_name(std::string_view name) {
  if (name == "digits") return digits();
  if (name == "toy") return toy();
  throw ConfigError("unknown architecture: " + std::string(name));
}

void NetworkSpec::validate() const {
  if (blocks.empty()) throw ConfigError("network needs at least one block");
  if (stem_blocks < 1 || stem_blocks > static_cast<int>(blocks.size())) throw ConfigError("stem_blocks out of range");
  if (classes < 2) throw ConfigError("need at least two classes");
  int channels = in_channels;
  for (const auto& b : blocks) {
    if (b.in_channels != channels) throw ConfigError("block channel chain is inconsistent");
    if (b.kernel < 1 || b.stride < 1 || b.padding < 0 || b.out_channels < 1) throw ConfigError("invalid conv block");
    channels = b.out_channels;
  }
  auto [h, w] = output_hw(static_cast<int>(blocks.size()) - 1);
  if (h < 1 || w < 1) throw ConfigError("network reduces the input to nothing");
}

std::pair<int, int> NetworkSpec::output_hw(int index) const {
  int h = height, w = width;
  for (int i = 0; i <= index; ++i) {
    const auto& b = blocks[i];
    h = (h + 2 * b.padding - b.kernel) / b.stride + 1;
    w = (w + 2 * b.padding - b.kernel) / b.stride + 1;
  }
  return {h, w};
}

ParamLayout ParamLayout::for_network(const NetworkSpec& spec) {
  ParamLayout layout;
  auto add = [&](std::string name, ParamKind kind, int layer, std::size_t size) {
    layout.entries_.push_back({std::move(name), kind, layer, layout.total_, size});
    layout.total_ += size;
  };
  for (int l = 0; l < static_cast<int>(spec.blocks.size()); ++l) {
    const auto& b = spec.blocks[l];
    const std::string prefix = "block" + std::to_string(l);
    add(prefix + ".conv.weight", ParamKind::kConvWeight, l,
        static_cast<std::size_t>(b.out_channels) * b.in_channels * b.kernel * b.kernel);
    add(prefix + ".bn.gamma", ParamKind::kBnGamma, l, b.out_channels);
    add(prefix + ".bn.beta", ParamKind::kBnBeta, l, b.out_channels);
    add(prefix + ".bn.alpha", ParamKind::kBnAlpha, l, b.out_channels);
  }
  const int features = spec.blocks.back().out_channels;
  add("head.weight", ParamKind::kHeadWeight, -1, static_cast<std::size_t>(spec.classes) * features);
  add("head.bias", ParamKind::kHeadBias, -1, spec.classes);
  layout.bn_layers_ = static_cast<int>(spec.blocks.size());
  return layout;
}

const ParamEntry& ParamLayout::find(std::string_view name) const {
  for (const auto& e : entries_)
    if (e.name == name) return e;
  throw ConfigError("unknown parameter: " + std::string(name));
}

const ParamEntry& ParamLayout::bn_entry(int layer, ParamKind kind) const {
  for (const auto& e : entries_)
    if (e.layer == layer && e.kind == kind) return e;
  throw PreconditionError("no BN parameter for layer " + std::to_string(layer));
}

Model Model::create(const NetworkSpec& spec, double alpha_init, Rng& rng) {
  spec.validate();
  if (!(alpha_init >= 0.0 && alpha_init <= 1.0)) throw ConfigError("alpha_init must lie in [0,1]");
  Model m;
  m.spec = spec;
  m.layout = ParamLayout::for_network(spec);
  m.params.assign(m.layout.total(), 0.0);
  for (const auto& e : m.layout.entries()) {
    auto p = m.slice(e);
    switch (e.kind) {
      case ParamKind::kConvWeight: {
        const auto& b = spec.blocks[e.layer];
        const double std = std::sqrt(2.0 / (b.in_channels * b.kernel * b.kernel));
        for (double& v : p) v = std * standard_normal(rng);
        break;
      }
      case ParamKind::kBnGamma:
        std::fill(p.begin(), p.end(), 1.0);
        break;
      case ParamKind::kBnAlpha:
        std::fill(p.begin(), p.end(), alpha_init);
        break;
      case ParamKind::kHeadWeight: {
        const double std = std::sqrt(1.0 / spec.blocks.back().out_channels);
        for (double& v : p) v = std * standard_normal(rng);
        break;
      }
      case ParamKind::kBnBeta:
      case ParamKind::kHeadBias:
        break;
    }
  }
  for (const auto& b : spec.blocks)
    m.source.push_back({std::vector<double>(b.out_channels, 0.0), std::vector<double>(b.out_channels, 1.0)});
  return m;
}

namespace {

// col[(c*K + ky)*K + kx][oy*OW + ox] for one sample.
template <typename In>
void im2col(const Tensor<In>& in, int sample, const ConvSpec& cs, int oh, int ow, In* col) {
  const int h = in.h(), w = in.w(), k = cs.kernel;
  const std::size_t opl = static_cast<std::size_t>(oh) * ow;
  for (int c = 0; c < cs.in_channels; ++c) {
    auto plane = in.channel(sample, c);
    for (int ky = 0; ky < k; ++ky)
      for (int kx = 0; kx < k; ++kx) {
        In* row = col + (static_cast<std::size_t>(c * k + ky) * k + kx) * opl;
        for (int oy = 0; oy < oh; ++oy) {
          const int y = oy * cs.stride + ky - cs.padding;
          for (int ox = 0; ox < ow; ++ox) {
            const int x = ox * cs.stride + kx - cs.padding;
            row[oy * ow + ox] = (y >= 0 && y < h && x >= 0 && x < w) ? plane[static_cast<std::size_t>(y) * w + x] : In{};
          }
        }
      }
  }
}

template <typename T>
void col2im_add(const T* col, const ConvSpec& cs, int oh, int ow, Tensor<T>& out, int sample) {
  const int h = out.h(), w = out.w(), k = cs.kernel;
  const std::size_t opl = static_cast<std::size_t>(oh) * ow;
  for (int c = 0; c < cs.in_channels; ++c) {
    auto plane = out.channel(sample, c);
    for (int ky = 0; ky < k; ++ky)
      for (int kx = 0; kx < k; ++kx) {
        const T* row = col + (static_cast<std::size_t>(c * k + ky) * k + kx) * opl;
        for (int oy = 0; oy < oh; ++oy) {
          const int y = oy * cs.stride + ky - cs.padding;
          if (y < 0 || y >= h) continue;
          for (int ox = 0; ox < ow; ++ox) {
            const int x = ox * cs.stride + kx - cs.padding;
            if (x >= 0 && x < w) plane[static_cast<std::size_t>(y) * w + x] += row[oy * ow + ox];
          }
        }
      }
  }
}

template <typename T, typename In>
Tensor<T> conv_forward(const Tensor<In>& in, std::span<const T> weight, const ConvSpec& cs, int oh, int ow,
                       std::vector<In>* cols_out) {
  const int n = in.n();
  const std::size_t q = static_cast<std::size_t>(cs.in_channels) * cs.kernel * cs.kernel;
  const std::size_t opl = static_cast<std::size_t>(oh) * ow;
  std::vector<In> local;
  std::vector<In>& cols = cols_out ? *cols_out : local;
  cols.assign(cols_out ? q * opl * n : q * opl, In{});
  Tensor<T> out(n, cs.out_channels, oh, ow);
  for (int i = 0; i < n; ++i) {
    In* col = cols.data() + (cols_out ? static_cast<std::size_t>(i) * q * opl : 0);
    im2col(in, i, cs, oh, ow, col);
    for (int o = 0; o < cs.out_channels; ++o) {
      T* dst = out.channel(i, o).data();
      const T* wrow = weight.data() + static_cast<std::size_t>(o) * q;
      for (std::size_t r = 0; r < q; ++r) {
        const T wv = wrow[r];
        const In* src = col + r * opl;
        for (std::size_t p = 0; p < opl; ++p) dst[p] += wv * src[p];
      }
    }
  }
  return out;
}

template <typename T, typename In>
void conv_backward_weight(const Tensor<T>& dout, const std::vector<In>& cols, const ConvSpec& cs, std::span<T> dweight) {
  const std::size_t q = static_cast<std::size_t>(cs.in_channels) * cs.kernel * cs.kernel;
  const std::size_t opl = dout.plane();
  for (int i = 0; i < dout.n(); ++i) {
    const In* col = cols.data() + static_cast<std::size_t>(i) * q * opl;
    for (int o = 0; o < cs.out_channels; ++o) {
      const T* g = dout.channel(i, o).data();
      T* dw = dweight.data() + static_cast<std::size_t>(o) * q;
      for (std::size_t r = 0; r < q; ++r) {
        const In* src = col + r * opl;
        T acc{};
        for (std::size_t p = 0; p < opl; ++p) acc += g[p] * src[p];
        dw[r] += acc;
      }
    }
  }
}

template <typename T>
Tensor<T> conv_backward_input(const Tensor<T>& dout, std::span<const T> weight, const ConvSpec& cs, int in_h, int in_w) {
  const std::size_t q = static_cast<std::size_t>(cs.in_channels) * cs.kernel * cs.kernel;
  const std::size_t opl = dout.plane();
  Tensor<T> din(dout.n(), cs.in_channels, in_h, in_w);
  std::vector<T> dcol(q * opl);
  for (int i = 0; i < dout.n(); ++i) {
    std::fill(dcol.begin(), dcol.end(), T{});
    for (int o = 0; o < cs.out_channels; ++o) {
      const T* g = dout.channel(i, o).data();
      const T* wrow = weight.data() + static_cast<std::size_t>(o) * q;
      for (std::size_t r = 0; r < q; ++r) {
        const T wv = wrow[r];
        T* dst = dcol.data() + r * opl;
        for (std::size_t p = 0; p < opl; ++p) dst[p] += wv * g[p];
      }
    }
    col2im_add(dcol.data(), cs, dout.h(), dout.w(), din, i);
  }
  return din;
}

template <typename T>
std::vector<T> constant_vector(std::size_t n, double v) {
  return std::vector<T>(n, T(v));
}

}  // namespace

template <typename T>
Evaluator<T>::Evaluator(const Model& model, std::span<const T> params) : model_(model), params_(params) {
  if (params.size() != model.layout.total()) throw PreconditionError("parameter vector length mismatch");
}

template <typename T>
Matrix<T> Evaluator<T>::forward(const Tensor<double>& input, const ForwardOptions& options, bool keep_cache) {
  const NetworkSpec& spec = model_.spec;
  if (input.c() != spec.in_channels || input.h() != spec.height || input.w() != spec.width)
    throw PreconditionError("input shape " + shape_string(input.shape()) + " does not match the network");
  if (input.n() == 0) throw DegenerateBatchError("degenerate batch: empty input");
  options_ = options;
  const int nblocks = static_cast<int>(spec.blocks.size());
  blocks_.assign(keep_cache ? nblocks : 0, BlockCache{});
  batch_stats_.assign(nblocks, BatchStats<double>{});
  const ParamLayout& layout = model_.layout;

  Tensor<T> act;
  for (int l = 0; l < nblocks; ++l) {
    const ConvSpec& cs = spec.blocks[l];
    auto [oh, ow] = spec.output_hw(l);
    auto weight = params_.subspan(layout.bn_entry(l, ParamKind::kConvWeight).offset, layout.bn_entry(l, ParamKind::kConvWeight).size);
    Tensor<T> z;
    if (l == 0)
      z = conv_forward<T, double>(input, weight, cs, oh, ow, keep_cache ? &cols0_ : nullptr);
    else
      z = conv_forward<T, T>(act, weight, cs, oh, ow, keep_cache ? &blocks_[l].cols : nullptr);

    const auto& ge = layout.bn_entry(l, ParamKind::kBnGamma);
    const auto& be = layout.bn_entry(l, ParamKind::kBnBeta);
    const auto& ae = layout.bn_entry(l, ParamKind::kBnAlpha);
    std::vector<T> forced;
    std::span<const T> alpha;
    switch (options.mode) {
      case StatsMode::kMixed:
        alpha = params_.subspan(ae.offset, ae.size);
        break;
      case StatsMode::kBatch:
        forced = constant_vector<T>(ae.size, 1.0);
        alpha = forced;
        break;
      case StatsMode::kSource:
        forced = constant_vector<T>(ae.size, 0.0);
        alpha = forced;
        break;
    }
    BatchStats<T> stats;
    Tensor<T> y = mixed_bn_forward<T>(z, model_.source[l].mean, model_.source[l].var, params_.subspan(ge.offset, ge.size),
                                      params_.subspan(be.offset, be.size), alpha, spec.bn_eps,
                                      keep_cache ? &blocks_[l].bn : nullptr, &stats);
    batch_stats_[l].count = stats.count;
    for (std::size_t j = 0; j < stats.mean.size(); ++j) {
      batch_stats_[l].mean.push_back(value_of(stats.mean[j]));
      batch_stats_[l].var.push_back(value_of(stats.var[j]));
    }
    for (T& v : y.data())
      if (!(v > T(0.0))) v = T(0.0);
    if (keep_cache) blocks_[l].activation = y;
    if (options.shift && l == spec.stem_blocks - 1) y = apply_shift(y, *options.shift);
    act = std::move(y);
  }

  // Global average pooling + linear head.
  const int n = act.n(), c = act.c(), k = spec.classes;
  const double inv_plane = 1.0 / static_cast<double>(act.plane());
  Matrix<T> pooled(n, c);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < c; ++j) {
      T s{};
      for (const T& v : act.channel(i, j)) s += v;
      pooled(i, j) = s * inv_plane;
    }
  const auto& we = layout.find("head.weight");
  const auto& bias = layout.find("head.bias");
  Matrix<T> logits(n, k);
  for (int i = 0; i < n; ++i)
    for (int o = 0; o < k; ++o) {
      T s = params_[bias.offset + o];
      const T* wrow = params_.data() + we.offset + static_cast<std::size_t>(o) * c;
      for (int j = 0; j < c; ++j) s += wrow[j] * pooled(i, j);
      logits(i, o) = s;
    }
  if (keep_cache) pooled_ = std::move(pooled);
  cached_ = keep_cache;
  return logits;
}

template <typename T>
std::vector<T> Evaluator<T>::backward(const Matrix<T>& dlogits) {
  if (!cached_) throw EngineError("backward requires a cached forward pass");
  const NetworkSpec& spec = model_.spec;
  const ParamLayout& layout = model_.layout;
  std::vector<T> grad(layout.total(), T{});
  const int n = dlogits.rows(), k = spec.classes, c = pooled_.cols();

  const auto& we = layout.find("head.weight");
  const auto& bias = layout.find("head.bias");
  Matrix<T> dpooled(n, c);
  for (int i = 0; i < n; ++i)
    for (int o = 0; o < k; ++o) {
      const T g = dlogits(i, o);
      grad[bias.offset + o] += g;
      T* dw = grad.data() + we.offset + static_cast<std::size_t>(o) * c;
      const T* wrow = params_.data() + we.offset + static_cast<std::size_t>(o) * c;
      for (int j = 0; j < c; ++j) {
        dw[j] += g * pooled_(i, j);
        dpooled(i, j) += g * wrow[j];
      }
    }

  const int nblocks = static_cast<int>(spec.blocks.size());
  const Tensor<T>& last = blocks_.back().activation;
  Tensor<T> dact(last.n(), last.c(), last.h(), last.w());
  const double inv_plane = 1.0 / static_cast<double>(last.plane());
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < c; ++j) {
      const T g = dpooled(i, j) * inv_plane;
      for (T& v : dact.channel(i, j)) v = g;
    }

  for (int l = nblocks - 1; l >= 0; --l) {
    BlockCache& cache = blocks_[l];
    const ConvSpec& cs = spec.blocks[l];
    if (options_.shift && l == spec.stem_blocks - 1) apply_shift_backward(dact, *options_.shift);
    // ReLU: shift output is only used when the shift precedes caching, so
    // test the pre-shift sign via the mask reconstructed from the input.
    const auto act_data = cache.activation.data();
    auto dd = dact.data();
    if (options_.shift && l == spec.stem_blocks - 1) {
      // activation = relu * g + b; relu > 0 exactly where (activation - b)/g > 0 on masked
      // channels. Recompute the mask from the BN cache instead.
      const auto& bn = cache.bn;
      const auto& ge = layout.bn_entry(l, ParamKind::kBnGamma);
      const auto& be = layout.bn_entry(l, ParamKind::kBnBeta);
      for (int i = 0; i < dact.n(); ++i)
        for (int j = 0; j < dact.c(); ++j) {
          auto xh = bn.xhat.channel(i, j);
          auto g = dact.channel(i, j);
          const T gamma = params_[ge.offset + j];
          const T beta = params_[be.offset + j];
          for (std::size_t p = 0; p < g.size(); ++p)
            if (!(gamma * xh[p] + beta > T(0.0))) g[p] = T(0.0);
        }
    } else {
      for (std::size_t p = 0; p < dd.size(); ++p)
        if (!(act_data[p] > T(0.0))) dd[p] = T(0.0);
    }

    const auto& ge = layout.bn_entry(l, ParamKind::kBnGamma);
    const auto& be = layout.bn_entry(l, ParamKind::kBnBeta);
    const auto& ae = layout.bn_entry(l, ParamKind::kBnAlpha);
    std::span<T> dalpha;
    if (options_.mode == StatsMode::kMixed) dalpha = std::span<T>(grad.data() + ae.offset, ae.size);
    Tensor<T> dz = mixed_bn_backward<T>(dact, cache.bn, params_.subspan(ge.offset, ge.size),
                                        std::span<T>(grad.data() + ge.offset, ge.size),
                                        std::span<T>(grad.data() + be.offset, be.size), dalpha);

    const auto& cw = layout.bn_entry(l, ParamKind::kConvWeight);
    std::span<T> dweight(grad.data() + cw.offset, cw.size);
    if (l == 0) {
      conv_backward_weight<T, double>(dz, cols0_, cs, dweight);
    } else {
      conv_backward_weight<T, T>(dz, cache.cols, cs, dweight);
      const Tensor<T>& prev = blocks_[l - 1].activation;
      dact = conv_backward_input<T>(dz, params_.subspan(cw.offset, cw.size), cs, prev.h(), prev.w());
    }
  }
  return grad;
}

template class Evaluator<double>;
template class Evaluator<Dual>;

Matrix<double> predict_logits(const Model& model, const Tensor<double>& input, const ForwardOptions& options) {
  Evaluator<double> eval(model, model.params);
  return eval.forward(input, options, false);
}

}  // namespace tttkit
