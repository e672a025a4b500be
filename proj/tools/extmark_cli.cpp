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

// extmark command-line front end.
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include "CLI11.hpp"

#include "extmark/error.hpp"
#include "extmark/harness.hpp"
#include "extmark/image_io.hpp"

namespace fs = std::filesystem;
using namespace extmark;

namespace {

constexpr int kExitConfig = 2;
constexpr int kExitStage = 3;

struct Common {
  std::string config_path;
  std::vector<std::string> overrides;  // key=value
  std::string gamma, style, m, alpha, seed, mode, out;
};

void add_common(CLI::App* app, Common& c) {
  app->add_option("-c,--config", c.config_path, "key = value experiment config file");
  app->add_option("--set", c.overrides, "override any config key (key=value), repeatable");
  app->add_option("--gamma", c.gamma, "transformation rate in percent");
  app->add_option("--style", c.style, "built-in style (oil, sketch, mosaic, waves) or image path");
  app->add_option("--m", c.m, "number of verification samples");
  app->add_option("--alpha", c.alpha, "significance level");
  app->add_option("--seed", c.seed, "experiment seed");
  app->add_option("--mode", c.mode, "signature mode")->check(CLI::IsMember({"sign", "raw"}));
  app->add_option("-o,--out", c.out, "output directory");
}

ExperimentConfig resolve(const Common& c) {
  ExperimentConfig cfg = c.config_path.empty() ? ExperimentConfig{} : load_experiment_config(c.config_path);
  for (const auto& kv : c.overrides) {
    const auto eq = kv.find('=');
    if (eq == std::string::npos) throw ConfigError("--set expects key=value, got '" + kv + "'");
    set_config_value(cfg, kv.substr(0, eq), kv.substr(eq + 1));
  }
  auto set = [&](const char* key, const std::string& v) {
    if (!v.empty()) set_config_value(cfg, key, v);
  };
  set("gamma", c.gamma);
  set("style", c.style);
  set("m", c.m);
  set("alpha", c.alpha);
  set("seed", c.seed);
  set("mode", c.mode);
  set("output_dir", c.out);
  validate(cfg);
  return cfg;
}

ArtifactCache cache_for(const ExperimentConfig& cfg) { return ArtifactCache::from_env(fs::path(cfg.output_dir) / "cache"); }

fs::path out_dir(const ExperimentConfig& cfg) {
  fs::create_directories(cfg.output_dir);
  return cfg.output_dir;
}

SignatureMode main_mode(const ExperimentConfig& cfg) { return cfg.modes.front(); }

const ModelHandle& role_model(Experiment& ex, const std::string& role) {
  if (role == "victim") return ex.victim();
  if (role == "benign") return ex.benign();
  if (role == "independent") return ex.independent();
  if (role == "badnets") return ex.badnets();
  throw ConfigError("unknown role '" + role + "' (victim, benign, independent, badnets)");
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"extmark: external-feature watermarking, model stealing simulation and ownership verification"};
  app.require_subcommand(1);

  Common c;
  auto* embed = app.add_subcommand("embed", "select D_s and build the style-transformed training set");
  add_common(embed, c);
  std::string export_png;
  embed->add_option("--export-png", export_png, "also write D_t and D_b as PNG directories under this root");

  auto* train = app.add_subcommand("train", "train a victim, benign, independent or BadNets model");
  add_common(train, c);
  std::string role = "victim";
  train->add_option("--role", role, "victim | benign | independent | badnets");

  auto* steal = app.add_subcommand("steal", "run a stealing attack or chain against a model");
  add_common(steal, c);
  std::string attack = "label_query", victim_stem;
  steal->add_option("--attack", attack, "attack id or chain, e.g. zero_shot>zero_shot or logit_query:vgg-like");
  steal->add_option("--victim", victim_stem, "checkpoint stem to attack (default: the experiment victim)");

  auto* fit = app.add_subcommand("fit-meta", "train the gradient-signature meta-classifier");
  add_common(fit, c);

  auto* verify = app.add_subcommand("verify", "hypothesis-test ownership of a suspect model");
  add_common(verify, c);
  std::string suspect_stem, benign_stem, meta_stem, report_path, csv_path, attack_label = "suspect";
  verify->add_option("--suspect", suspect_stem, "suspect checkpoint stem (default: the experiment victim)");
  verify->add_option("--benign", benign_stem, "benign checkpoint stem (default: the experiment benign model)");
  verify->add_option("--meta", meta_stem, "meta-classifier stem (default: fitted from the experiment)");
  verify->add_option("--report", report_path, "write the VerificationReport JSON here");
  verify->add_option("--csv", csv_path, "append a row to this batch CSV");
  verify->add_option("--attack", attack_label, "attack_id column for --csv");

  auto* run = app.add_subcommand("run", "full pipeline: embed, train, steal, fit-meta, verify, report");
  add_common(run, c);

  auto* report = app.add_subcommand("report", "summarize report CSVs as a table");
  std::vector<std::string> csvs;
  std::string table_csv;
  report->add_option("csv", csvs, "report CSVs; label:path names a column group")->required();
  report->add_option("--table-csv", table_csv, "write the summary table as CSV");

  auto* recover = app.add_subcommand("recover-trigger", "targeted universal PGD trigger recovery");
  add_common(recover, c);
  std::string model_stem, model_role = "badnets", init = "pattern";
  double epsilon = 32.0, step = 4.0;
  int iterations = 40, target = -1;
  std::size_t probe = 256;
  recover->add_option("--model", model_stem, "checkpoint stem (default: the experiment model for --role)");
  recover->add_option("--role", model_role, "victim | benign | independent | badnets");
  recover->add_option("--target", target, "target label y_t (default: config target_label)");
  recover->add_option("--epsilon", epsilon, "l-inf bound on the 0-255 scale");
  recover->add_option("--iterations", iterations, "PGD iterations");
  recover->add_option("--step", step, "step size on the 0-255 scale");
  recover->add_option("--probe", probe, "probe batch size");
  recover->add_option("--init", init, "zeros | pattern")->check(CLI::IsMember({"zeros", "pattern"}));

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : kExitConfig;
  }

  try {
    if (*report) {
      std::vector<ReportGroup> groups;
      for (const auto& spec : csvs) {
        const auto colon = spec.find(':');
        ReportGroup g;
        fs::path p = colon == std::string::npos ? fs::path(spec) : fs::path(spec.substr(colon + 1));
        g.label = colon == std::string::npos ? p.stem().string() : spec.substr(0, colon);
        g.records = read_report_csv(p);
        groups.push_back(std::move(g));
      }
      auto t = report_table(groups);
      std::cout << t.text;
      if (!table_csv.empty()) std::ofstream(table_csv) << t.csv;
      return 0;
    }

    const ExperimentConfig cfg = resolve(c);
    const fs::path out = out_dir(cfg);

    if (*run) {
      auto result = run_experiment(cfg, cache_for(cfg));
      std::vector<ReportGroup> groups;
      for (SignatureMode mode : cfg.modes) {
        ReportGroup g{to_string(mode), {}};
        for (const auto& r : result.rows)
          if (r.mode == mode) g.records.push_back({r.suspect_hash, r.benign_hash, r.attack_id, r.report});
        groups.push_back(std::move(g));
      }
      auto t = report_table(groups);
      std::ofstream(out / "table.csv") << t.csv;
      std::ofstream(out / "table.txt") << t.text;
      std::cout << t.text << result.metrics.dump(2) << "\n";
      return 0;
    }

    Experiment ex(cfg, cache_for(cfg));
    if (*embed) {
      const auto& wm = ex.watermarked();
      save_poison_plan(ex.plan(), out / "poison_plan.json");
      if (!export_png.empty()) {
        save_png_directory(wm.transformed, fs::path(export_png) / "transformed");
        save_png_directory(wm.benign_rest, fs::path(export_png) / "benign_rest");
      }
      std::cout << "transformed " << wm.transformed.size() << " benign_rest " << wm.benign_rest.size() << " plan "
                << (out / "poison_plan.json").string() << "\n";
    } else if (*train) {
      const ModelHandle& model = role_model(ex, role);
      save_checkpoint(model, out / role);
      std::cout << role << " " << model.content_hash() << " test_accuracy "
                << evaluate_accuracy(model, ex.data().test) << "\n";
    } else if (*steal) {
      const AttackPlan plan = parse_attack_plan(attack);
      std::optional<ModelHandle> root;
      if (!victim_stem.empty()) root = load_checkpoint(victim_stem);
      const auto& stages = ex.stolen(plan, root ? &*root : nullptr);
      for (std::size_t i = 0; i < stages.size(); ++i) {
        const std::string name = "student_" + std::to_string(i) + "_" + to_string(plan.stages[i]);
        save_checkpoint(stages[i], out / name);
        std::cout << name << " " << stages[i].content_hash() << " test_accuracy "
                  << evaluate_accuracy(stages[i], ex.data().test) << "\n";
      }
    } else if (*fit) {
      for (SignatureMode mode : cfg.modes) {
        const MetaClassifier& meta = ex.meta(mode);
        save_meta_classifier(meta, out / ("meta_" + to_string(mode)));
        std::cout << "meta_" << to_string(mode) << " train_accuracy " << meta.record().value("train_accuracy", 0.0)
                  << "\n";
      }
    } else if (*verify) {
      const SignatureMode mode = main_mode(cfg);
      std::optional<ModelHandle> suspect_own, benign_own;
      if (!suspect_stem.empty()) suspect_own = load_checkpoint(suspect_stem);
      if (!benign_stem.empty()) benign_own = load_checkpoint(benign_stem);
      const ModelHandle& suspect = suspect_own ? *suspect_own : ex.victim();
      const ModelHandle& benign = benign_own ? *benign_own : ex.benign(suspect.arch_id());
      VerificationReport r;
      try {
        std::optional<MetaClassifier> meta_own;
        if (!meta_stem.empty()) meta_own = load_meta_classifier(meta_stem);
        const MetaClassifier& meta = meta_own ? *meta_own : ex.meta(mode, suspect.arch_id());
        r = verify_ownership(meta, suspect, benign, ex.verification_pool(), cfg.m, cfg.alpha,
                             cfg.verify_seeds.front(), mode, ex.mask_for(suspect), cfg.score);
      } catch (const StageError&) {
        throw;
      } catch (const ConfigError&) {
        throw;
      } catch (const Error& e) {
        throw StageError("verify", e.what());
      }
      const auto j = to_json(r);
      std::cout << j.dump(2) << "\n";
      if (!report_path.empty()) std::ofstream(report_path) << j.dump(2) << "\n";
      if (!csv_path.empty()) append_csv(csv_path, suspect.content_hash(), benign.content_hash(), attack_label, r);
    } else if (*recover) {
      std::optional<ModelHandle> own;
      if (!model_stem.empty()) own = load_checkpoint(model_stem);
      const ModelHandle& model = own ? *own : role_model(ex, model_role);
      TriggerRecoveryConfig rc;
      rc.epsilon = epsilon;
      rc.iterations = iterations;
      rc.step_size = step;
      rc.probe_size = probe;
      rc.probe_seed = derive_seed(cfg.seed, 18);
      const BackdoorSpec spec = ex.backdoor_spec();
      rc.init = init == "zeros" ? TriggerInit::zeros : TriggerInit::pattern;
      if (rc.init == TriggerInit::pattern) {
        rc.init_pattern.resize(spec.trigger.size());
        for (std::size_t i = 0; i < spec.trigger.size(); ++i) rc.init_pattern[i] = spec.mask[i] * spec.trigger[i];
      }
      const int yt = target >= 0 ? target : cfg.target_label;
      RecoveredTrigger t;
      try {
        t = recover_trigger(model, yt, rc, ex.data().test);
      } catch (const Error& e) {
        throw StageError("recover-trigger", e.what());
      }
      nlohmann::json side = {{"y_t", yt},          {"epsilon", epsilon}, {"iterations", iterations},
                             {"step_size", step},  {"init", init},       {"probe_size", probe},
                             {"model_hash", model.content_hash()}, {"objective", t.objective},
                             {"encoding", "pixel = 0.5 + 0.5 * delta / (epsilon / 255)"}};
      save_pattern(out / "recovered_trigger.png", t.delta, t.shape, side, epsilon / 255.0);
      save_pattern(out / "trigger.png", spec.trigger, spec.shape, {{"y_t", yt}, {"kind", "trigger"}});
      save_pattern(out / "trigger_mask.png", spec.mask, spec.shape, {{"y_t", yt}, {"kind", "mask"}});
      std::cout << "objective " << t.objective.front() << " -> " << t.objective.back() << " saved "
                << (out / "recovered_trigger.png").string() << "\n";
    }
    return 0;
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const StageError& e) {
    std::cerr << "stage failure: " << e.what() << "\n";
    return kExitStage;
  } catch (const std::exception& e) {
    std::cerr << "failure: " << e.what() << "\n";
    return kExitStage;
  }
}
