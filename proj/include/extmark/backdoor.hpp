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

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "json.hpp"

#include "extmark/image.hpp"
#include "extmark/model.hpp"

namespace extmark {

// G(x; t) = (1 - lambda) * x + lambda * t, elementwise.
struct BackdoorSpec {
  Shape shape;
  std::vector<double> trigger;  // in [0,1]
  std::vector<double> mask;     // entries in {0,1}
  int target_label = 2;
};

// Checks mask/trigger ranges and sizes; throws DomainError.
void validate(const BackdoorSpec& spec);

// White size x size square in the lower-right corner.
BackdoorSpec white_square_trigger(const Shape& shape, int size = 3, int target_label = 2);

std::vector<double> apply_trigger(std::span<const double> x, const BackdoorSpec& spec);

// Selected items (select_poison_indices) are stamped and relabeled to y_t in
// place; every other item is copied unchanged.
ImageDataset badnets_poison(const ImageDataset& dataset, const BackdoorSpec& spec, double gamma_percent,
                            std::uint64_t seed);

// Stamped image keeping the original label.
LabeledImage patch_transform(const LabeledImage& x, const BackdoorSpec& spec);

// Fraction of non-target test images classified as y_t once stamped.
double attack_success_rate(const ModelHandle& model, const BackdoorSpec& spec, const ImageDataset& clean_test);

enum class TriggerInit { zeros, pattern };

struct TriggerRecoveryConfig {
  double epsilon = 32.0;  // l-inf bound on the 0-255 scale
  int iterations = 40;
  double step_size = 4.0;  // 0-255 scale
  TriggerInit init = TriggerInit::pattern;
  std::vector<double> init_pattern;  // required for TriggerInit::pattern
  std::size_t probe_size = 256;
  std::uint64_t probe_seed = 0;
};

struct RecoveredTrigger {
  Shape shape;
  std::vector<double> delta;      // universal perturbation, |delta| <= epsilon / 255
  std::vector<double> objective;  // mean y_t posterior after each accepted iterate (index 0 = init)
};

// Targeted universal PGD on a probe batch drawn from `clean`. Each step moves
// along sgn(grad) and projects onto the eps-ball; a step that lowers the
// objective is halved until it does not (or rejected).
RecoveredTrigger recover_trigger(const ModelHandle& model, int target_label, const TriggerRecoveryConfig& cfg,
                                 const ImageDataset& clean);

// Mean y_t posterior of clip(x + delta) over the items.
double universal_objective(const ModelHandle& model, int target_label, std::span<const double> delta,
                           const ImageDataset& probe);

// PNG (perturbation mapped from [-eps, eps] to [0, 1], or raw [0,1] pattern)
// plus <path>.json with y_t, epsilon and iterations.
void save_pattern(const std::filesystem::path& png, std::span<const double> values, const Shape& shape,
                  const nlohmann::json& sidecar, double epsilon_unit = 0.0);

}  // namespace extmark
