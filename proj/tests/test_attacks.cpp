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
#include <memory>
#include <string>

#include "doctest.h"
#include "extmark/attacks.hpp"
#include "extmark/error.hpp"
#include "fixtures.hpp"

using namespace extmark;
using namespace extmark::testing;

namespace {

struct Setup {
  ModelHandle victim;
  std::shared_ptr<const ImageDataset> surrogate;
};

Setup make_setup() {
  ImageDataset train = toy_data(120, 21);
  TrainConfig tc;
  tc.epochs = 3;
  tc.batch_size = 32;
  tc.width = 2;
  tc.seed = 5;
  return {train_model(train, "cnn-small", tc), std::make_shared<const ImageDataset>(toy_data(64, 22))};
}

AttackConfig config(AttackId id, const Setup& s, int epochs = 1) {
  AttackConfig c;
  c.attack = id;
  if (id != AttackId::zero_shot) c.surrogate = s.surrogate;
  c.train.epochs = epochs;
  c.train.batch_size = 16;
  c.train.seed = 3;
  c.zero_shot.iterations = 2;
  c.zero_shot.student_steps = 1;
  c.zero_shot.batch_size = 4;
  return c;
}

}  // namespace

TEST_CASE("attack ids round trip and accept hyphens") {
  for (AttackId id : {AttackId::distillation, AttackId::zero_shot, AttackId::fine_tune, AttackId::label_query,
                      AttackId::logit_query})
    CHECK(attack_from_string(to_string(id)) == id);
  CHECK(attack_from_string("label-query") == AttackId::label_query);
  CHECK_THROWS_AS(attack_from_string("model-inversion"), ConfigError);
}

TEST_CASE("query attacks charge one query per surrogate item and respect the budget") {
  Setup s = make_setup();
  AttackOutcome lq = steal_label_query(s.victim, config(AttackId::label_query, s));
  CHECK(lq.queries == s.surrogate->size());
  CHECK(lq.student.manifest()["queries"] == s.surrogate->size());
  CHECK(lq.student.manifest()["victim_hash"] == s.victim.content_hash());
  AttackOutcome lg = steal_logit_query(s.victim, config(AttackId::logit_query, s));
  CHECK(lg.queries == s.surrogate->size());

  AttackConfig tight = config(AttackId::label_query, s);
  tight.query_budget = s.surrogate->size() - 1;
  CHECK_THROWS_AS(steal_label_query(s.victim, tight), BudgetError);
  tight.attack = AttackId::logit_query;
  CHECK_THROWS_AS(steal_logit_query(s.victim, tight), BudgetError);
  tight.query_budget = s.surrogate->size();
  CHECK_NOTHROW(steal_logit_query(s.victim, tight));

  QueryOracle oracle(s.victim, 10);
  CHECK(oracle.labels(s.surrogate->subset(std::vector<std::size_t>{0, 1, 2}, "three")).size() == 3);
  CHECK(oracle.queries() == 3);
}

TEST_CASE("only zero-shot differentiates through the victim") {
  Setup s = make_setup();
  for (AttackId id : {AttackId::distillation, AttackId::fine_tune, AttackId::label_query, AttackId::logit_query}) {
    CAPTURE(to_string(id));
    ModelHandle victim = s.victim;  // fresh counters
    run_attack(victim, config(id, s));
    CHECK(victim.counters().backward.load() == 0);
  }
  ModelHandle victim = s.victim;
  run_attack(victim, config(AttackId::zero_shot, s));
  CHECK(victim.counters().backward.load() > 0);
}

TEST_CASE("fine-tuning copies the victim") {
  Setup s = make_setup();
  AttackOutcome zero = steal_finetune(s.victim, config(AttackId::fine_tune, s, 0));
  CHECK(zero.student.content_hash() == s.victim.content_hash());
  CHECK(zero.steps == 0);
  CHECK(zero.student.manifest()["objective"] == "stealing");
  AttackOutcome one = steal_finetune(s.victim, config(AttackId::fine_tune, s, 1));
  CHECK(one.steps == 4);
  CHECK(one.student.content_hash() != s.victim.content_hash());

  AttackConfig other = config(AttackId::fine_tune, s);
  other.student_arch = "vgg-like";
  CHECK_THROWS_AS(steal_finetune(s.victim, other), ConfigError);
}

TEST_CASE("zero-shot with no iterations returns the freshly initialized student") {
  Setup s = make_setup();
  AttackConfig c = config(AttackId::zero_shot, s);
  c.zero_shot.iterations = 0;
  AttackOutcome out = steal_zero_shot(s.victim, c);
  ModelHandle init = ModelHandle::create(s.victim.arch_id(), s.victim.options(), effective_init_seed(c.train));
  CHECK(out.student.content_hash() == init.content_hash());
  CHECK(out.queries == 0);

  c.zero_shot.iterations = 2;
  AttackOutcome two = steal_zero_shot(s.victim, c);
  CHECK(two.steps == 2);
  CHECK(two.queries == 2 * (4 + 4));
  CHECK(steal_zero_shot(s.victim, c).student.content_hash() == two.student.content_hash());
}

TEST_CASE("attack preconditions") {
  Setup s = make_setup();
  AttackConfig zs = config(AttackId::zero_shot, s);
  zs.surrogate = s.surrogate;
  CHECK_THROWS_AS(validate(zs), ConfigError);
  AttackConfig lq = config(AttackId::label_query, s);
  lq.surrogate.reset();
  CHECK_THROWS_AS(validate(lq), ConfigError);
  AttackConfig dist = config(AttackId::distillation, s);
  dist.temperature = 0.0;
  CHECK_THROWS_AS(validate(dist), ConfigError);
  AttackConfig wrong_id = config(AttackId::label_query, s);
  CHECK_THROWS_AS(steal_logit_query(s.victim, wrong_id), ConfigError);
  AttackConfig shape = config(AttackId::label_query, s);
  shape.surrogate = std::make_shared<const ImageDataset>(toy_data(8, 1, 12));
  CHECK_THROWS_AS(steal_label_query(s.victim, shape), ShapeError);
}

TEST_CASE("logit-query training moves the student toward the victim") {
  Setup s = make_setup();
  AttackConfig c = config(AttackId::logit_query, s, 6);
  c.train.learning_rate = 0.05;
  ModelHandle init = ModelHandle::create(s.victim.arch_id(), s.victim.options(), effective_init_seed(c.train));
  AttackOutcome out = steal_logit_query(s.victim, c);
  CHECK(mean_kl(s.victim, out.student, *s.surrogate) < mean_kl(s.victim, init, *s.surrogate));
  CHECK(mean_kl(s.victim, s.victim, *s.surrogate) == doctest::Approx(0.0).epsilon(1e-12));
}

TEST_CASE("student architecture may differ for query attacks") {
  Setup s = make_setup();
  AttackConfig c = config(AttackId::label_query, s);
  c.student_arch = "linear";
  AttackOutcome out = steal_label_query(s.victim, c);
  CHECK(out.student.arch_id() == "linear");
}

TEST_CASE("attack chains feed each stage the previous student") {
  Setup s = make_setup();
  AttackChain chain{config(AttackId::label_query, s), config(AttackId::fine_tune, s, 0)};
  auto stages = run_attack_chain(s.victim, chain);
  REQUIRE(stages.size() == 2);
  CHECK(stages[1].content_hash() == stages[0].content_hash());
  CHECK(stages[1].manifest()["victim_hash"] == stages[0].content_hash());

  AttackChain broken{config(AttackId::label_query, s), config(AttackId::zero_shot, s)};
  broken[1].surrogate = s.surrogate;
  try {
    run_attack_chain(s.victim, broken);
    FAIL("expected a stage error");
  } catch (const StageError& e) {
    CHECK(std::string(e.what()).find("stage 1") != std::string::npos);
  }
  CHECK_THROWS_AS(run_attack_chain(s.victim, {}), ConfigError);
}
