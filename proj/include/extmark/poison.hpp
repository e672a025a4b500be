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

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <vector>

#include "json.hpp"

#include "extmark/image.hpp"
#include "extmark/style.hpp"

namespace extmark {

// The selected subset D_s of a training set, with the rate and seed that
// regenerate it.
struct PoisonPlan {
  std::vector<std::size_t> indices;  // sorted, unique
  double gamma_percent = 0.0;
  std::uint64_t seed = 0;
};

// Number of selected samples for a rate: round(gamma/100 * n).
std::size_t poison_count(std::size_t n, double gamma_percent);

// Uniform sampling without replacement over the whole dataset.
PoisonPlan select_poison_indices(const ImageDataset& dataset, double gamma_percent, std::uint64_t seed);

struct WatermarkedSplit {
  ImageDataset transformed;   // D_t, labels unchanged
  ImageDataset benign_rest;   // D_b = D \ D_s
};

WatermarkedSplit build_watermarked_dataset(const ImageDataset& dataset, const PoisonPlan& plan,
                                           const StyleSpec& style);

nlohmann::json to_json(const PoisonPlan& plan);
PoisonPlan poison_plan_from_json(const nlohmann::json& j);
void save_poison_plan(const PoisonPlan& plan, const std::filesystem::path& path);
PoisonPlan load_poison_plan(const std::filesystem::path& path);

}  // namespace extmark
