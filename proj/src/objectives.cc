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

#include "tttkit/objectives.h"

#include <cmath>

namespace tttkit {

std::vector<int> argmax_rows(const Matrix<double>& logits) {
  std::vector<int> out(static_cast<std::size_t>(logits.rows()));
  for (int r = 0; r < logits.rows(); ++r) {
    auto row = logits.row(r);
    int best = 0;
    for (int k = 1; k < logits.cols(); ++k)
      if (row[k] > row[best]) best = k;
    out[r] = best;
  }
  return out;
}

ConfidenceSplit confidence_split(const Matrix<double>& logits, double kappa) {
  if (!(kappa > 0.0 && kappa < 1.0)) throw PreconditionError("kappa must lie in (0,1)");
  ConfidenceSplit split;
  split.kappa = kappa;
  const std::vector<int> labels = argmax_rows(logits);
  std::vector<double> logp(static_cast<std::size_t>(logits.cols()));
  for (int r = 0; r < logits.rows(); ++r) {
    log_softmax_row<double>(logits.row(r), logp);
    const double confidence = std::exp(logp[labels[r]]);
    if (confidence >= kappa) {
      split.conf_indices.push_back(r);
      split.conf_labels.push_back(labels[r]);
    } else {
      split.lowconf_indices.push_back(r);
    }
  }
  return split;
}

MinimaxLosses minimax_objectives(const Matrix<double>& logits, const ConfidenceSplit& split, double lam) {
  if (lam < 0.0) throw PreconditionError("lambda must be non-negative");
  detail::check_finite(logits);
  MinimaxLosses out;
  out.lam = lam;
  out.l_pseudo = pseudo_label_loss(logits, split);
  out.h_mean = accumulate_entropy<double>(logits, split.lowconf_indices, 0.0, nullptr);
  out.beta_loss = out.l_pseudo - lam * out.h_mean;
  out.gamma_loss = out.l_pseudo + lam * out.h_mean;
  return out;
}

}  // namespace tttkit
