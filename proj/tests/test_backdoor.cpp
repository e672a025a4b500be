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
#include <algorithm>
#include <cmath>
#include <fstream>
#include <set>

#include "doctest.h"
#include "extmark/backdoor.hpp"
#include "extmark/error.hpp"
#include "extmark/image_io.hpp"
#include "extmark/poison.hpp"
#include "extmark/trainer.hpp"
#include "fixtures.hpp"

using namespace extmark;
using namespace extmark::testing;

TEST_CASE("white square trigger sits in the lower-right corner") {
  BackdoorSpec spec = white_square_trigger(Shape{3, 8, 8}, 3, 2);
  CHECK(std::count(spec.mask.begin(), spec.mask.end(), 1.0) == 27);
  for (int c = 0; c < 3; ++c)
    for (int y = 0; y < 8; ++y)
      for (int x = 0; x < 8; ++x) {
        const std::size_t k = (static_cast<std::size_t>(c) * 8 + y) * 8 + x;
        const bool inside = y >= 5 && x >= 5;
        CHECK(spec.mask[k] == (inside ? 1.0 : 0.0));
        if (inside) CHECK(spec.trigger[k] == 1.0);
      }
  CHECK(spec.target_label == 2);
  CHECK_THROWS_AS(white_square_trigger(Shape{3, 8, 8}, 9), DomainError);
}

TEST_CASE("trigger application matches the blend formula elementwise") {
  Rng rng(4);
  BackdoorSpec spec;
  spec.shape = Shape{1, 3, 3};
  for (int i = 0; i < 9; ++i) {
    spec.trigger.push_back(rng.uniform());
    spec.mask.push_back(i % 2 ? 1.0 : 0.0);
  }
  std::vector<double> x(9);
  for (auto& v : x) v = rng.uniform();
  auto y = apply_trigger(x, spec);
  for (int i = 0; i < 9; ++i) CHECK(y[i] == (1.0 - spec.mask[i]) * x[i] + spec.mask[i] * spec.trigger[i]);
  // idempotent for a binary mask
  CHECK(apply_trigger(y, spec) == y);

  spec.mask[0] = 0.5;
  CHECK_THROWS_AS(validate(spec), DomainError);
  spec.mask[0] = 0.0;
  spec.trigger[0] = 1.5;
  CHECK_THROWS_AS(validate(spec), DomainError);
}

TEST_CASE("BadNets poisoning stamps and relabels exactly the selected items") {
  ImageDataset d = toy_data(100, 12);
  BackdoorSpec spec = white_square_trigger(d.shape(), 3, 2);
  ImageDataset p = badnets_poison(d, spec, 10.0, 5);
  REQUIRE(p.size() == d.size());
  const auto plan = select_poison_indices(d, 10.0, 5);
  std::set<std::size_t> chosen(plan.indices.begin(), plan.indices.end());
  CHECK(chosen.size() == 10);
  for (std::size_t i = 0; i < d.size(); ++i) {
    if (chosen.count(i)) {
      CHECK(p[i].label == 2);
      CHECK(p[i].pixels == apply_trigger(d[i].pixels, spec));
    } else {
      CHECK(p[i].label == d[i].label);
      CHECK(p[i].pixels == d[i].pixels);
    }
  }
  LabeledImage t = patch_transform(d[0], spec);
  CHECK(t.label == d[0].label);
  BackdoorSpec bad = spec;
  bad.target_label = 10;
  CHECK_THROWS_AS(badnets_poison(d, bad, 10.0, 5), DomainError);
}

TEST_CASE("attack success rate counts stamped non-target predictions") {
  ImageDataset d = toy_data(80, 13);
  BackdoorSpec spec = white_square_trigger(d.shape(), 3, 2);
  ModelHandle m = ModelHandle::create("cnn-small", toy_options(), 7);
  std::size_t total = 0, hits = 0;
  for (const auto& item : d.items()) {
    if (item.label == 2) continue;
    ++total;
    Tensor logits = m.forward(to_batch(patch_transform(item, spec)));
    hits += argmax(logits.sample(0)) == 2 ? 1 : 0;
  }
  CHECK(attack_success_rate(m, spec, d) == doctest::Approx(static_cast<double>(hits) / total));
}

TEST_CASE("trigger recovery stays in the epsilon ball and never lowers the objective") {
  ImageDataset d = toy_data(48, 14);
  ModelHandle m = ModelHandle::create("cnn-small", toy_options(), 8);
  BackdoorSpec spec = white_square_trigger(d.shape(), 3, 2);
  for (TriggerInit init : {TriggerInit::zeros, TriggerInit::pattern}) {
    TriggerRecoveryConfig cfg;
    cfg.iterations = 12;
    cfg.probe_size = 1000;  // whole set
    cfg.init = init;
    if (init == TriggerInit::pattern) cfg.init_pattern = spec.trigger;
    RecoveredTrigger r = recover_trigger(m, 2, cfg, d);
    REQUIRE(r.objective.size() == 13);
    for (double v : r.delta) CHECK(std::abs(v) <= cfg.epsilon / 255.0 + 1e-15);
    for (std::size_t i = 1; i < r.objective.size(); ++i) CHECK(r.objective[i] >= r.objective[i - 1] - 1e-12);
    CHECK(r.objective.back() > r.objective.front());
    CHECK(universal_objective(m, 2, r.delta, d) == doctest::Approx(r.objective.back()).epsilon(1e-12));
  }
  TriggerRecoveryConfig zero;
  zero.iterations = 0;
  zero.init = TriggerInit::zeros;
  RecoveredTrigger r0 = recover_trigger(m, 2, zero, d);
  CHECK(std::all_of(r0.delta.begin(), r0.delta.end(), [](double v) { return v == 0.0; }));
  CHECK_THROWS_AS(recover_trigger(m, 10, zero, d), DomainError);
  TriggerRecoveryConfig missing;
  CHECK_THROWS_AS(recover_trigger(m, 2, missing, d), ShapeError);
}

TEST_CASE("recovered patterns are written with a sidecar") {
  TempDir tmp("pattern");
  Shape s{3, 8, 8};
  std::vector<double> delta(s.size(), 0.0);
  delta[0] = 32.0 / 255.0;
  save_pattern(tmp.path() / "t.png", delta, s, {{"y_t", 2}}, 32.0 / 255.0);
  LabeledImage back = read_image(tmp.path() / "t.png");
  CHECK(back.pixels[0] == doctest::Approx(1.0));
  CHECK(back.pixels[1] == doctest::Approx(128.0 / 255.0));
  std::ifstream side(tmp.path() / "t.png.json");
  CHECK(nlohmann::json::parse(side)["y_t"] == 2);
}
