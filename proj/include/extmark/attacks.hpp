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
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"

#include "extmark/image.hpp"
#include "extmark/model.hpp"
#include "extmark/trainer.hpp"

namespace extmark {

enum class AttackId { distillation, zero_shot, fine_tune, label_query, logit_query };

std::string to_string(AttackId id);
AttackId attack_from_string(const std::string& s);

struct ZeroShotOptions {
  int iterations = 400;        // generator/student rounds
  int student_steps = 5;       // student updates per round
  int batch_size = 64;
  int z_dim = 32;
  double generator_lr = 1e-3;  // Adam
};

struct AttackConfig {
  AttackId attack = AttackId::label_query;
  // Adversary data: victim's training set for distillation, substitute data
  // for fine-tuning and the query attacks; must be absent for zero-shot.
  std::shared_ptr<const ImageDataset> surrogate;
  std::string student_arch;  // empty: the victim's architecture
  int student_width = 0;     // 0: the victim's width when the arch matches
  TrainConfig train;         // epochs, optimizer, augmentation, seed
  double temperature = 4.0;  // distillation
  double kl_weight = 1.0;    // distillation
  std::optional<std::uint64_t> query_budget;
  ZeroShotOptions zero_shot;
};

// Throws ConfigError when the configuration breaks its invariants.
void validate(const AttackConfig& cfg);
nlohmann::json to_json(const AttackConfig& cfg);

// Victim access used by the query attacks; counts every queried sample.
class QueryOracle {
 public:
  QueryOracle(const ModelHandle& victim, std::optional<std::uint64_t> budget) : victim_(victim), budget_(budget) {}
  // Posteriors for each item; throws BudgetError if the budget would be exceeded.
  Tensor probabilities(const ImageDataset& inputs);
  std::vector<int> labels(const ImageDataset& inputs);
  std::uint64_t queries() const { return queries_; }

 private:
  void charge(std::size_t n);
  const ModelHandle& victim_;
  std::optional<std::uint64_t> budget_;
  std::uint64_t queries_ = 0;
};

struct AttackOutcome {
  ModelHandle student;
  std::uint64_t queries = 0;
  std::uint64_t steps = 0;
};

AttackOutcome steal_distillation(const ModelHandle& victim, const AttackConfig& cfg);
AttackOutcome steal_zero_shot(const ModelHandle& victim, const AttackConfig& cfg);
AttackOutcome steal_finetune(const ModelHandle& victim, const AttackConfig& cfg);
AttackOutcome steal_label_query(const ModelHandle& victim, const AttackConfig& cfg);
AttackOutcome steal_logit_query(const ModelHandle& victim, const AttackConfig& cfg);

// Dispatches on cfg.attack.
AttackOutcome run_attack(const ModelHandle& victim, const AttackConfig& cfg);

using AttackChain = std::vector<AttackConfig>;

// Stage i+1 attacks stage i's student. Stage failures are rethrown as
// StageError naming the stage index and attack.
std::vector<ModelHandle> run_attack_chain(const ModelHandle& victim, const AttackChain& chain);

// Mean KL(victim || student) over a dataset at temperature 1.
double mean_kl(const ModelHandle& victim, const ModelHandle& student, const ImageDataset& data);

}  // namespace extmark
