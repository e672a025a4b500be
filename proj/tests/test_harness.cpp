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
#include <cstdlib>
#include <fstream>
#include <sstream>

#include "doctest.h"
#include "extmark/error.hpp"
#include "extmark/harness.hpp"
#include "fixtures.hpp"

using namespace extmark;
using namespace extmark::testing;

namespace {

ExperimentConfig tiny(const std::filesystem::path& out) {
  ExperimentConfig c = parse_experiment_config(R"(
    # toy scale
    side = 8
    train_size = 120
    test_size = 40
    surrogate_size = 60
    width = 2
    epochs = 1
    query_epochs = 1
    distill_epochs = 1
    finetune_epochs = 1
    attacks = label_query, fine_tune
    meta_epochs = 5
    m = 4
    verify_seeds = 0, 1
  )");
  c.output_dir = out.string();
  return c;
}

std::string slurp(const std::filesystem::path& p) {
  std::ifstream f(p, std::ios::binary);
  std::stringstream ss;
  ss << f.rdbuf();
  return ss.str();
}

}  // namespace

TEST_CASE("config parsing, overrides and text round trip") {
  ExperimentConfig c = parse_experiment_config("gamma = 2.5  # rate\nmodes = sign, raw\nattacks = zero_shot>zero_shot, logit_query:vgg-like\n");
  CHECK(c.gamma == 2.5);
  REQUIRE(c.modes.size() == 2);
  CHECK(c.modes[1] == SignatureMode::raw);
  REQUIRE(c.attacks.size() == 2);
  CHECK(c.attacks[0].label() == "zero_shot>zero_shot");
  CHECK(c.attacks[1].archs[0] == "vgg-like");
  set_config_value(c, "m", "20");
  CHECK(c.m == 20);
  ExperimentConfig back = parse_experiment_config(to_text(c));
  CHECK(to_json(back) == to_json(c));

  CHECK_THROWS_AS(parse_experiment_config("colour = red"), ConfigError);
  CHECK_THROWS_AS(parse_experiment_config("m = lots"), ConfigError);
  CHECK_THROWS_AS(parse_experiment_config("just words"), ConfigError);
  CHECK_THROWS_AS(parse_attack_plan("label_query>teleport"), ConfigError);
  CHECK_THROWS_AS(load_experiment_config("/nonexistent/extmark.cfg"), ConfigError);
}

TEST_CASE("config validation rejects out-of-range values") {
  for (const char* bad : {"gamma = 0", "gamma = 150", "alpha = 1", "m = 1", "blend = 2", "arch = transformer",
                          "transformer = dreams", "epochs = 0", "attacks = fine_tune:vgg-like"}) {
    CAPTURE(bad);
    ExperimentConfig c;
    bool threw = false;
    try {
      c = parse_experiment_config(bad);
      validate(c);
    } catch (const ConfigError&) {
      threw = true;
    }
    CHECK(threw);
  }
  CHECK_NOTHROW(validate(ExperimentConfig{}));
}

TEST_CASE("cache keys are content addressed") {
  nlohmann::json a = {{"x", 1}, {"y", "z"}}, b = {{"y", "z"}, {"x", 1}};
  CHECK(ArtifactCache::key_of(a) == ArtifactCache::key_of(b));
  CHECK(ArtifactCache::key_of(a) != ArtifactCache::key_of({{"x", 2}, {"y", "z"}}));
  CHECK(ArtifactCache::key_of(a).size() == 64);
}

TEST_CASE("cache root comes from the environment when set") {
  ::setenv(ArtifactCache::kEnvVar, "/tmp/extmark-env-cache", 1);
  CHECK(ArtifactCache::from_env("/elsewhere").root() == "/tmp/extmark-env-cache");
  ::unsetenv(ArtifactCache::kEnvVar);
  CHECK(ArtifactCache::from_env("/elsewhere").root() == "/elsewhere");
}

TEST_CASE("ledger records replace entries with the same kind and name") {
  RunLedger l;
  l.add({"checkpoint", "victim", "h1", "k1", ""});
  l.add({"checkpoint", "victim", "h2", "k2", ""});
  l.add({"meta", "victim", "h3", "", ""});
  CHECK(l.records().size() == 2);
  CHECK(l.find("victim")->hash == "h2");
  CHECK(l.find("nobody") == nullptr);
}

TEST_CASE("a cached rerun trains nothing and reproduces the reports") {
  TempDir tmp("run");
  ArtifactCache cache(tmp.path() / "cache");
  ExperimentConfig c = tiny(tmp.path() / "a");
  ExperimentResult first = run_experiment(c, cache);
  CHECK(cache.misses() > 0);
  // source, label_query, fine_tune, independent x 2 seeds
  CHECK(first.rows.size() == 8);
  CHECK(first.metrics.contains("victim_accuracy"));
  CHECK(first.ledger.find("victim/cnn-small") != nullptr);

  ArtifactCache again(tmp.path() / "cache");
  c.output_dir = (tmp.path() / "b").string();
  const auto steps = total_sgd_steps();
  ExperimentResult second = run_experiment(c, again);
  CHECK(total_sgd_steps() == steps);
  CHECK(again.misses() == 0);
  CHECK(again.hits() > 0);
  CHECK(slurp(tmp.path() / "a" / "report_sign.csv") == slurp(tmp.path() / "b" / "report_sign.csv"));

  auto records = read_report_csv(tmp.path() / "a" / "report_sign.csv");
  REQUIRE(records.size() == first.rows.size());
  for (std::size_t i = 0; i < records.size(); ++i) {
    CHECK(records[i].attack_id == first.rows[i].attack_id);
    CHECK(records[i].report.p_value == first.rows[i].report.p_value);
    CHECK(records[i].report.delta_mu == first.rows[i].report.delta_mu);
  }
  auto ledger = nlohmann::json::parse(slurp(tmp.path() / "a" / "ledger.json"));
  CHECK(ledger["status"] == "complete");
}

TEST_CASE("stage failures are named and leave a ledger behind") {
  TempDir tmp("fail");
  ExperimentConfig c = tiny(tmp.path() / "out");
  c.data_source = "png";
  c.data_root = (tmp.path() / "missing").string();
  try {
    run_experiment(c, ArtifactCache{});
    FAIL("expected a stage error");
  } catch (const StageError& e) {
    CHECK(e.stage() == "embed");
  }
  CHECK(std::filesystem::exists(tmp.path() / "out" / "ledger.json"));
}

TEST_CASE("report table takes medians per attack and source") {
  auto rec = [](const std::string& id, double dmu, double p, bool stolen) {
    CsvRecord r{"s", "b", id, {}};
    r.report.delta_mu = dmu;
    r.report.p_value = p;
    r.report.stolen = stolen;
    return r;
  };
  ReportGroup sign{"sign", {rec("source", 0.9, 1e-8, true), rec("source", 0.8, 1e-6, true), rec("source", 0.7, 1e-4, true),
                            rec("independent", 0.1, 0.5, false)}};
  ReportGroup raw{"raw", {rec("source", 0.2, 0.3, false)}};
  ReportTable t = report_table({raw, sign});
  CHECK(t.csv.find("attack,raw_delta_mu,raw_p,raw_stolen,sign_delta_mu,sign_p,sign_stolen") == 0);
  CHECK(t.csv.find("source,0.2,0.3,0/1,0.8,1e-06,3/3") != std::string::npos);
  CHECK(t.csv.find("independent,,,,0.1") != std::string::npos);
  CHECK(!t.text.empty());
}
