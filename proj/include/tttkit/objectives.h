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

#include <cmath>
#include <span>
#include <vector>

#include "tttkit/dual.h"
#include "tttkit/errors.h"
#include "tttkit/tensor.h"

namespace tttkit {

template <typename T>
struct LossGrad {
  T loss{};
  Matrix<T> dlogits;
};

// Numerically stable log-softmax of one row.
template <typename T>
void log_softmax_row(std::span<const T> logits, std::span<T> out) {
  using std::exp;
  using std::log;
  T max = logits[0];
  for (const T& z : logits)
    if (z > max) max = z;
  T sum{};
  for (const T& z : logits) sum += exp(z - max);
  const T lse = max + log(sum);
  for (std::size_t k = 0; k < logits.size(); ++k) out[k] = logits[k] - lse;
}

// Shannon entropy in nats. Any functional with the same member template can
// be plugged into the objectives below (e.g. a generalized entropy).
struct ShannonEntropy {
  // Returns H(softmax(logits)) and writes dH/dlogits into grad.
  template <typename T>
  T operator()(std::span<const T> logits, std::span<T> grad) const {
    using std::exp;
    const std::size_t k = logits.size();
    std::vector<T> logp(k);
    log_softmax_row<T>(logits, logp);
    T h{};
    std::vector<T> p(k);
    for (std::size_t i = 0; i < k; ++i) {
      p[i] = exp(logp[i]);
      h -= p[i] * logp[i];
    }
    for (std::size_t i = 0; i < k; ++i) grad[i] = -p[i] * (logp[i] + h);
    return h;
  }
};

namespace detail {

template <typename T>
void check_finite(const Matrix<T>& logits) {
  for (const T& z : logits.data())
    if (!std::isfinite(value_of(z))) throw NumericalError("non-finite logits");
}

}  // namespace detail

// Mean entropy over the given rows (all rows when `rows` is empty and
// use_all is set). Accumulates scale * dH/dlogits into grad when non-null.
template <typename T, typename Entropy = ShannonEntropy>
T accumulate_entropy(const Matrix<T>& logits, std::span<const int> rows, double scale, Matrix<T>* grad,
                     const Entropy& entropy = {}) {
  if (rows.empty()) return T{};
  const double inv = 1.0 / static_cast<double>(rows.size());
  std::vector<T> g(static_cast<std::size_t>(logits.cols()));
  T total{};
  for (int r : rows) {
    total += entropy(logits.row(r), std::span<T>(g));
    if (grad) {
      auto dst = grad->row(r);
      for (std::size_t k = 0; k < g.size(); ++k) dst[k] += scale * inv * g[k];
    }
  }
  return total * inv;
}

template <typename T, typename Entropy = ShannonEntropy>
T mean_entropy(const Matrix<T>& logits, const Entropy& entropy = {}) {
  detail::check_finite(logits);
  std::vector<int> rows(static_cast<std::size_t>(logits.rows()));
  for (int i = 0; i < logits.rows(); ++i) rows[i] = i;
  return accumulate_entropy<T, Entropy>(logits, rows, 0.0, nullptr, entropy);
}

// Partition of a batch by prediction confidence.
struct ConfidenceSplit {
  std::vector<int> conf_indices;
  std::vector<int> conf_labels;
  std::vector<int> lowconf_indices;
  double kappa = 0.9;

  bool empty() const { return conf_indices.empty() && lowconf_indices.empty(); }
};

// Sample i is confident iff max softmax probability >= kappa; its
// pseudo-label is the argmax, ties going to the lowest class index.
ConfidenceSplit confidence_split(const Matrix<double>& logits, double kappa);

template <typename T>
ConfidenceSplit confidence_split(const Matrix<T>& logits, double kappa) {
  Matrix<double> v(logits.rows(), logits.cols());
  for (std::size_t i = 0; i < v.data().size(); ++i) v.data()[i] = value_of(logits.data()[i]);
  return confidence_split(v, kappa);
}

// Mean cross-entropy of `rows` against `labels`; accumulates
// scale * dCE/dlogits into grad when non-null.
template <typename T>
T accumulate_cross_entropy(const Matrix<T>& logits, std::span<const int> rows, std::span<const int> labels, double scale,
                           Matrix<T>* grad) {
  using std::exp;
  if (rows.empty()) return T{};
  const double inv = 1.0 / static_cast<double>(rows.size());
  std::vector<T> logp(static_cast<std::size_t>(logits.cols()));
  T total{};
  for (std::size_t n = 0; n < rows.size(); ++n) {
    const int r = rows[n];
    const int y = labels[n];
    if (y < 0 || y >= logits.cols()) throw PreconditionError("label out of range");
    log_softmax_row<T>(logits.row(r), logp);
    total -= logp[y];
    if (grad) {
      auto dst = grad->row(r);
      for (std::size_t k = 0; k < logp.size(); ++k) {
        T d = exp(logp[k]);
        if (static_cast<int>(k) == y) d -= 1.0;
        dst[k] += scale * inv * d;
      }
    }
  }
  return total * inv;
}

// Mean cross-entropy between predictions and the pseudo-labels of the
// confident set. With one-hot targets the soft cross-entropy reduces to the
// usual negative log-likelihood. Zero on an empty confident set.
template <typename T>
T pseudo_label_loss(const Matrix<T>& logits, const ConfidenceSplit& split) {
  return accumulate_cross_entropy<T>(logits, split.conf_indices, split.conf_labels, 0.0, nullptr);
}

struct MinimaxLosses {
  double l_pseudo = 0.0;
  double h_mean = 0.0;
  double lam = 1.0;
  double beta_loss = 0.0;
  double gamma_loss = 0.0;
};

// The shift parameters ascend the low-confidence entropy while the rest
// descend it:
//   beta_loss  = l_pseudo - lam * h_mean
//   gamma_loss = l_pseudo + lam * h_mean
MinimaxLosses minimax_objectives(const Matrix<double>& logits, const ConfidenceSplit& split, double lam);

enum class ObjectiveRole { kBeta, kGamma };

template <typename T, typename Entropy = ShannonEntropy>
LossGrad<T> minimax_loss_grad(const Matrix<T>& logits, const ConfidenceSplit& split, double lam, ObjectiveRole role,
                              const Entropy& entropy = {}) {
  if (lam < 0.0) throw PreconditionError("lambda must be non-negative");
  detail::check_finite(logits);
  LossGrad<T> out{T{}, Matrix<T>(logits.rows(), logits.cols())};
  const T pseudo = accumulate_cross_entropy<T>(logits, split.conf_indices, split.conf_labels, 1.0, &out.dlogits);
  const double sign = role == ObjectiveRole::kBeta ? -1.0 : 1.0;
  const T h = accumulate_entropy<T, Entropy>(logits, split.lowconf_indices, sign * lam, &out.dlogits, entropy);
  out.loss = pseudo + sign * lam * h;
  return out;
}

template <typename T>
LossGrad<T> cross_entropy_grad(const Matrix<T>& logits, std::span<const int> labels) {
  detail::check_finite(logits);
  if (static_cast<int>(labels.size()) != logits.rows()) throw PreconditionError("label count does not match batch");
  std::vector<int> rows(labels.size());
  for (std::size_t i = 0; i < rows.size(); ++i) rows[i] = static_cast<int>(i);
  LossGrad<T> out{T{}, Matrix<T>(logits.rows(), logits.cols())};
  out.loss = accumulate_cross_entropy<T>(logits, rows, labels, 1.0, &out.dlogits);
  return out;
}

// Mean entropy over the whole batch as a loss (entropy minimization).
template <typename T, typename Entropy = ShannonEntropy>
LossGrad<T> entropy_loss_grad(const Matrix<T>& logits, const Entropy& entropy = {}) {
  detail::check_finite(logits);
  std::vector<int> rows(static_cast<std::size_t>(logits.rows()));
  for (int i = 0; i < logits.rows(); ++i) rows[i] = i;
  LossGrad<T> out{T{}, Matrix<T>(logits.rows(), logits.cols())};
  out.loss = accumulate_entropy<T, Entropy>(logits, rows, 1.0, &out.dlogits, entropy);
  return out;
}

std::vector<int> argmax_rows(const Matrix<double>& logits);

}  // namespace tttkit
