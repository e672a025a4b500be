// Copyright 2026 The extmark Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//      http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.
#pragma once

#include <algorithm>
#include <cmath>
#include <vector>

#include "extmark/model.hpp"
#include "extmark/rng.hpp"
#include "extmark/trainer.hpp"

namespace extmark::testing {

struct GradCheck {
  double relative_error = 0.0;  // ||g - fd|| / max(||g||, ||fd||)
  std::size_t params = 0;
};

// Zero-initialized biases leave ReLU inputs at exactly 0 in dead units, where
// central differences straddle the kink; jitter moves off that set.
inline void jitter(ModelHandle& model, std::uint64_t seed, double scale = 0.05) {
  Rng rng(seed);
  for (double& v : model.mutable_params()) v += scale * rng.normal();
}

// Central differences of the per-sample cross-entropy in every coordinate.
inline GradCheck finite_difference_check(const ModelHandle& model, const LabeledImage& sample, double step = 1e-5) {
  const std::vector<double> g = loss_gradient(model, sample);
  std::vector<double> p(model.params().begin(), model.params().end());
  double num = 0.0, ng = 0.0, nf = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    const double keep = p[i];
    p[i] = keep + step;
    const double up = sample_loss(model, p, sample);
    p[i] = keep - step;
    const double down = sample_loss(model, p, sample);
    p[i] = keep;
    const double fd = (up - down) / (2.0 * step);
    num += (g[i] - fd) * (g[i] - fd);
    ng += g[i] * g[i];
    nf += fd * fd;
  }
  const double denom = std::max({std::sqrt(ng), std::sqrt(nf), 1e-300});
  return {std::sqrt(num) / denom, p.size()};
}

}  // namespace extmark::testing
