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

#include "extmark/poison.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>

#include "extmark/error.hpp"
#include "extmark/rng.hpp"

namespace extmark {

std::size_t poison_count(std::size_t n, double gamma_percent) {
  if (!(gamma_percent >= 0.0 && gamma_percent <= 100.0)) throw DomainError("transformation rate must lie in [0,100]");
  return static_cast<std::size_t>(std::llround(gamma_percent / 100.0 * static_cast<double>(n)));
}

PoisonPlan select_poison_indices(const ImageDataset& dataset, double gamma_percent, std::uint64_t seed) {
  const std::size_t k = poison_count(dataset.size(), gamma_percent);
  Rng rng(seed);
  return PoisonPlan{rng.sample_without_replacement(dataset.size(), k), gamma_percent, seed};
}

WatermarkedSplit build_watermarked_dataset(const ImageDataset& dataset, const PoisonPlan& plan,
                                           const StyleSpec& style) {
  std::vector<char> chosen(dataset.size(), 0);
  for (std::size_t i : plan.indices) {
    if (i >= dataset.size()) throw IndexError("poison index " + std::to_string(i) + " out of range");
    if (chosen[i]) throw IndexError("duplicate poison index " + std::to_string(i));
    chosen[i] = 1;
  }
  std::vector<LabeledImage> transformed, rest;
  transformed.reserve(plan.indices.size());
  rest.reserve(dataset.size() - plan.indices.size());
  for (std::size_t i : plan.indices) transformed.push_back(style_transform(dataset[i], style));
  for (std::size_t i = 0; i < dataset.size(); ++i)
    if (!chosen[i]) rest.push_back(dataset[i]);
  return {ImageDataset(dataset.name() + "-transformed", dataset.split(), dataset.class_count(), std::move(transformed)),
          ImageDataset(dataset.name() + "-benign-rest", dataset.split(), dataset.class_count(), std::move(rest))};
}

nlohmann::json to_json(const PoisonPlan& plan) {
  return {{"gamma_percent", plan.gamma_percent}, {"seed", plan.seed}, {"indices", plan.indices}};
}

PoisonPlan poison_plan_from_json(const nlohmann::json& j) {
  PoisonPlan p;
  try {
    p.gamma_percent = j.at("gamma_percent").get<double>();
    p.seed = j.at("seed").get<std::uint64_t>();
    p.indices = j.at("indices").get<std::vector<std::size_t>>();
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("malformed poison plan: ") + e.what());
  }
  if (!std::is_sorted(p.indices.begin(), p.indices.end()) ||
      std::adjacent_find(p.indices.begin(), p.indices.end()) != p.indices.end())
    throw ConfigError("poison plan indices must be sorted and unique");
  return p;
}

void save_poison_plan(const PoisonPlan& plan, const std::filesystem::path& path) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path.string());
  out << to_json(plan).dump() << "\n";
}

PoisonPlan load_poison_plan(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot read " + path.string());
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("poison plan is not valid JSON: ") + e.what());
  }
  return poison_plan_from_json(j);
}

}  // namespace extmark
