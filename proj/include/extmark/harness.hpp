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
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"

#include "extmark/attacks.hpp"
#include "extmark/backdoor.hpp"
#include "extmark/image.hpp"
#include "extmark/model.hpp"
#include "extmark/poison.hpp"
#include "extmark/signatures.hpp"
#include "extmark/style.hpp"
#include "extmark/trainer.hpp"
#include "extmark/verification.hpp"

namespace extmark {

// One stealing pipeline: a single attack or a chain ("a>b>c"), each stage
// optionally with a student architecture ("logit_query:vgg-like").
struct AttackPlan {
  std::vector<AttackId> stages;
  std::vector<std::string> archs;  // empty entry: the stage victim's arch
  std::string label() const;       // e.g. "label_query" or "zero_shot>zero_shot"
};
AttackPlan parse_attack_plan(const std::string& text);

struct ExperimentConfig {
  // data
  std::string data_source = "synthetic";  // synthetic | cifar10 | png
  std::string data_root;
  int side = 16;  // synthetic only
  std::size_t train_size = 4000;
  std::size_t test_size = 1000;
  std::size_t surrogate_size = 4000;
  std::uint64_t data_seed = 1;
  // watermark
  double gamma = 10.0;
  std::string style = "oil";  // built-in style kind or an image path
  std::string transformer = "texture-blend";
  double blend = 1.0;
  // models
  std::string arch = "cnn-small";
  int width = 0;
  int epochs = 30;
  int batch_size = 64;
  double learning_rate = 0.05;
  double momentum = 0.9;
  double weight_decay = 5e-4;
  int crop_pad = 2;
  bool hflip = true;
  // attacks
  std::vector<AttackPlan> attacks;
  int query_epochs = 20;
  int distill_epochs = 15;
  int finetune_epochs = 5;
  double finetune_lr = 0.01;
  double temperature = 4.0;
  std::optional<std::uint64_t> query_budget;
  int zs_iterations = 300;
  int zs_student_steps = 5;
  int zs_batch = 64;
  // BadNets baseline
  int trigger_size = 3;
  int target_label = 2;
  // signatures / meta-classifier
  std::vector<SignatureMode> modes{SignatureMode::sign};
  std::string mask = "default";  // default | all | last_layers:N | random:K
  std::size_t mask_cap = 65536;
  MetaHyper meta;
  // verification
  int m = 10;
  double alpha = 0.01;
  std::vector<std::uint64_t> verify_seeds{0, 1, 2};
  std::string pool = "train";  // train | test
  ScoreKind score = ScoreKind::posterior;
  // run
  std::uint64_t seed = 1;
  std::string output_dir = "extmark-out";

  ExperimentConfig();
};

// key = value lines; '#' starts a comment; lists are comma separated.
ExperimentConfig parse_experiment_config(const std::string& text, ExperimentConfig base = {});
ExperimentConfig load_experiment_config(const std::filesystem::path& path);
// Applies one key = value assignment (used for CLI overrides).
void set_config_value(ExperimentConfig& cfg, const std::string& key, const std::string& value);
// Every key with its effective value, in a fixed order.
std::string to_text(const ExperimentConfig& cfg);
nlohmann::json to_json(const ExperimentConfig& cfg);
// Throws ConfigError for values outside module preconditions.
void validate(const ExperimentConfig& cfg);

// Content-addressed artifact store rooted at a directory. An empty root
// disables persistence (everything is recomputed).
class ArtifactCache {
 public:
  ArtifactCache() = default;
  explicit ArtifactCache(std::filesystem::path root);
  // EXTMARK_CACHE_DIR if set, otherwise `fallback`.
  static ArtifactCache from_env(const std::filesystem::path& fallback);
  static constexpr const char* kEnvVar = "EXTMARK_CACHE_DIR";

  bool enabled() const { return !root_.empty(); }
  const std::filesystem::path& root() const { return root_; }

  static std::string key_of(const nlohmann::json& key);

  std::optional<ModelHandle> find_model(const std::string& key) const;
  void store_model(const std::string& key, const ModelHandle& model) const;
  std::optional<MetaClassifier> find_meta(const std::string& key) const;
  void store_meta(const std::string& key, const MetaClassifier& meta) const;

  // Copies share one pair of counters.
  std::uint64_t hits() const { return counts_->hits; }
  std::uint64_t misses() const { return counts_->misses; }

 private:
  std::filesystem::path root_;
  struct Counts {
    std::uint64_t hits = 0, misses = 0;
  };
  std::shared_ptr<Counts> counts_ = std::make_shared<Counts>();
};

struct LedgerRecord {
  std::string kind;   // dataset | plan | checkpoint | meta | report
  std::string name;   // stage name, e.g. "victim" or "student/label_query"
  std::string hash;   // content hash
  std::string key;    // cache key (empty for uncached artifacts)
  std::string path;   // stored location, if any
};

// Ordered record of every artifact a run produced.
class RunLedger {
 public:
  void add(LedgerRecord r);
  const std::vector<LedgerRecord>& records() const { return records_; }
  const LedgerRecord* find(const std::string& name) const;
  nlohmann::json to_json() const;
  void save(const std::filesystem::path& path, const ExperimentConfig& cfg, const std::string& status) const;

 private:
  std::vector<LedgerRecord> records_;
};

struct ExperimentData {
  ImageDataset train, test;
  std::shared_ptr<const ImageDataset> surrogate;
};
ExperimentData load_experiment_data(const ExperimentConfig& cfg);
LabeledImage load_style_image(const ExperimentConfig& cfg, int channels, int side);

// Lazily builds and caches every artifact of one experiment.
class Experiment {
 public:
  Experiment(ExperimentConfig cfg, ArtifactCache cache);

  const ExperimentConfig& config() const { return cfg_; }
  const ArtifactCache& cache() const { return cache_; }
  RunLedger& ledger() { return ledger_; }

  const ExperimentData& data();
  const StyleSpec& style();
  const PoisonPlan& plan();
  const WatermarkedSplit& watermarked();
  const ImageDataset& watermarked_train();  // D_b followed by D_t
  const ImageDataset& verification_pool();

  TrainConfig train_config(std::uint64_t seed) const;
  AttackConfig attack_config(AttackId id, const std::string& student_arch, std::uint64_t seed);

  // arch "" = cfg.arch. Victims/benign models of other architectures serve
  // suspects whose architecture differs from the main victim.
  const ModelHandle& victim(const std::string& arch = "");
  const ModelHandle& benign(const std::string& arch = "");
  const ModelHandle& independent();
  // BadNets-watermarked model (white square trigger, gamma, target_label).
  BackdoorSpec backdoor_spec();
  const ModelHandle& badnets();
  // All stages of a stealing plan, in order; `root` defaults to victim().
  const std::vector<ModelHandle>& stolen(const AttackPlan& plan, const ModelHandle* root = nullptr);

  ParameterMask mask_for(const ModelHandle& model) const;
  const MetaClassifier& meta(SignatureMode mode, const std::string& arch = "");

  // Scores of the whole pool for a model (cached per model hash and mode).
  const std::vector<double>& pool_scores(const ModelHandle& model, SignatureMode mode);
  VerificationReport verify(const ModelHandle& suspect, SignatureMode mode, std::uint64_t seed,
                            std::optional<int> m = std::nullopt);

 private:
  ModelHandle cached_model(const std::string& name, const nlohmann::json& key, const std::function<ModelHandle()>& make);
  nlohmann::json data_key() const;
  nlohmann::json victim_key(const std::string& arch);
  std::string resolve_arch(const std::string& arch) const { return arch.empty() ? cfg_.arch : arch; }

  ExperimentConfig cfg_;
  ArtifactCache cache_;
  RunLedger ledger_;
  std::optional<ExperimentData> data_;
  std::optional<StyleSpec> style_;
  std::optional<PoisonPlan> plan_;
  std::optional<WatermarkedSplit> wm_;
  std::optional<ImageDataset> wm_train_, pool_;
  std::map<std::string, ModelHandle> victims_, benigns_;
  std::optional<ModelHandle> independent_, badnets_;
  std::map<std::string, std::vector<ModelHandle>> stolen_;
  std::map<std::string, MetaClassifier> metas_;
  std::map<std::string, std::vector<double>> scores_;
};

struct ResultRow {
  std::string attack_id;
  std::string suspect_hash;
  std::string benign_hash;
  SignatureMode mode = SignatureMode::sign;
  VerificationReport report;
};

struct ExperimentResult {
  std::vector<ResultRow> rows;
  nlohmann::json metrics;  // accuracies etc.
  RunLedger ledger;
};

// embed -> train(V, B) -> attacks -> meta-classifier -> verify for Source,
// every configured attack and the Independent control. Failures surface as
// StageError naming the stage; the partial ledger is saved first.
ExperimentResult run_experiment(const ExperimentConfig& cfg, const ArtifactCache& cache);

// Writes report_<mode>.csv files (fresh, header + rows) under dir; returns paths.
std::vector<std::filesystem::path> write_report_csvs(const ExperimentResult& result, const std::filesystem::path& dir);

struct CsvRecord {
  std::string suspect_hash, benign_hash, attack_id;
  VerificationReport report;
};
std::vector<CsvRecord> read_report_csv(const std::filesystem::path& path);

// Grouped summary (median delta-mu and p per attack, first-appearance order)
// with one column pair per labelled source, e.g. {"raw", ...}, {"sign", ...}.
struct ReportGroup {
  std::string label;
  std::vector<CsvRecord> records;
};
struct ReportTable {
  std::string csv;
  std::string text;
};
ReportTable report_table(const std::vector<ReportGroup>& groups);

}  // namespace extmark
