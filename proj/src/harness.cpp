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

#include "extmark/harness.hpp"

#include <algorithm>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <functional>
#include <sstream>

#include "extmark/error.hpp"
#include "extmark/image_io.hpp"
#include "extmark/stats.hpp"
#include "extmark/synthetic.hpp"

namespace extmark {

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

std::vector<std::string> split(const std::string& s, char sep) {
  std::vector<std::string> out;
  std::string cur;
  std::istringstream in(s);
  while (std::getline(in, cur, sep)) {
    cur = trim(cur);
    if (!cur.empty()) out.push_back(cur);
  }
  return out;
}

template <class T>
T parse_number(const std::string& key, const std::string& v) {
  try {
    std::size_t pos = 0;
    T out{};
    if constexpr (std::is_same_v<T, double>) out = std::stod(v, &pos);
    else if constexpr (std::is_same_v<T, int>) out = std::stoi(v, &pos);
    else {
      if (!v.empty() && v[0] == '-') throw std::invalid_argument("negative");
      out = static_cast<T>(std::stoull(v, &pos));
    }
    if (pos != v.size()) throw std::invalid_argument("trailing characters");
    return out;
  } catch (const std::exception&) {
    throw ConfigError("invalid value '" + v + "' for " + key);
  }
}

bool parse_bool(const std::string& key, const std::string& v) {
  if (v == "true" || v == "1" || v == "yes" || v == "on") return true;
  if (v == "false" || v == "0" || v == "no" || v == "off") return false;
  throw ConfigError("invalid boolean '" + v + "' for " + key);
}

std::string bool_text(bool b) { return b ? "true" : "false"; }

std::string num_text(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.10g", v);
  return buf;
}

template <class T>
std::string join(const std::vector<T>& v, const std::function<std::string(const T&)>& f) {
  std::string out;
  for (std::size_t i = 0; i < v.size(); ++i) out += (i ? "," : "") + f(v[i]);
  return out;
}

}  // namespace

std::string AttackPlan::label() const {
  std::string out;
  for (std::size_t i = 0; i < stages.size(); ++i) {
    if (i) out += ">";
    out += to_string(stages[i]);
    if (!archs[i].empty()) out += ":" + archs[i];
  }
  return out;
}

AttackPlan parse_attack_plan(const std::string& text) {
  AttackPlan p;
  std::string rest = text;
  std::size_t pos = 0;
  while (true) {
    const auto next = rest.find('>', pos);
    std::string part = trim(rest.substr(pos, next == std::string::npos ? std::string::npos : next - pos));
    if (part.empty()) throw ConfigError("empty stage in attack plan '" + text + "'");
    const auto colon = part.find(':');
    p.stages.push_back(attack_from_string(trim(part.substr(0, colon))));
    p.archs.push_back(colon == std::string::npos ? std::string() : trim(part.substr(colon + 1)));
    if (next == std::string::npos) break;
    pos = next + 1;
  }
  return p;
}

ExperimentConfig::ExperimentConfig() {
  for (const char* a : {"distillation", "fine_tune", "label_query", "logit_query"}) attacks.push_back(parse_attack_plan(a));
}

void set_config_value(ExperimentConfig& c, const std::string& key, const std::string& raw) {
  const std::string v = trim(raw);
  using Setter = std::function<void()>;
  const std::map<std::string, Setter> setters = {
      {"data_source", [&] { c.data_source = v; }},
      {"data_root", [&] { c.data_root = v; }},
      {"side", [&] { c.side = parse_number<int>(key, v); }},
      {"train_size", [&] { c.train_size = parse_number<std::size_t>(key, v); }},
      {"test_size", [&] { c.test_size = parse_number<std::size_t>(key, v); }},
      {"surrogate_size", [&] { c.surrogate_size = parse_number<std::size_t>(key, v); }},
      {"data_seed", [&] { c.data_seed = parse_number<std::uint64_t>(key, v); }},
      {"gamma", [&] { c.gamma = parse_number<double>(key, v); }},
      {"style", [&] { c.style = v; }},
      {"transformer", [&] { c.transformer = v; }},
      {"blend", [&] { c.blend = parse_number<double>(key, v); }},
      {"arch", [&] { c.arch = v; }},
      {"width", [&] { c.width = parse_number<int>(key, v); }},
      {"epochs", [&] { c.epochs = parse_number<int>(key, v); }},
      {"batch_size", [&] { c.batch_size = parse_number<int>(key, v); }},
      {"learning_rate", [&] { c.learning_rate = parse_number<double>(key, v); }},
      {"momentum", [&] { c.momentum = parse_number<double>(key, v); }},
      {"weight_decay", [&] { c.weight_decay = parse_number<double>(key, v); }},
      {"crop_pad", [&] { c.crop_pad = parse_number<int>(key, v); }},
      {"hflip", [&] { c.hflip = parse_bool(key, v); }},
      {"attacks",
       [&] {
         c.attacks.clear();
         for (const auto& a : split(v, ',')) c.attacks.push_back(parse_attack_plan(a));
       }},
      {"query_epochs", [&] { c.query_epochs = parse_number<int>(key, v); }},
      {"distill_epochs", [&] { c.distill_epochs = parse_number<int>(key, v); }},
      {"finetune_epochs", [&] { c.finetune_epochs = parse_number<int>(key, v); }},
      {"finetune_lr", [&] { c.finetune_lr = parse_number<double>(key, v); }},
      {"temperature", [&] { c.temperature = parse_number<double>(key, v); }},
      {"query_budget",
       [&] {
         if (v == "none" || v.empty()) c.query_budget.reset();
         else c.query_budget = parse_number<std::uint64_t>(key, v);
       }},
      {"zs_iterations", [&] { c.zs_iterations = parse_number<int>(key, v); }},
      {"zs_student_steps", [&] { c.zs_student_steps = parse_number<int>(key, v); }},
      {"zs_batch", [&] { c.zs_batch = parse_number<int>(key, v); }},
      {"trigger_size", [&] { c.trigger_size = parse_number<int>(key, v); }},
      {"target_label", [&] { c.target_label = parse_number<int>(key, v); }},
      {"modes",
       [&] {
         c.modes.clear();
         for (const auto& m : split(v, ',')) c.modes.push_back(signature_mode_from_string(m));
       }},
      {"mode", [&] { c.modes = {signature_mode_from_string(v)}; }},
      {"mask", [&] { c.mask = v; }},
      {"mask_cap", [&] { c.mask_cap = parse_number<std::size_t>(key, v); }},
      {"meta_kind",
       [&] {
         if (v == "logistic") c.meta.kind = MetaKind::logistic;
         else if (v == "mlp") c.meta.kind = MetaKind::mlp;
         else throw ConfigError("unknown meta_kind '" + v + "'");
       }},
      {"meta_hidden", [&] { c.meta.hidden = parse_number<int>(key, v); }},
      {"meta_epochs", [&] { c.meta.epochs = parse_number<int>(key, v); }},
      {"meta_batch_size", [&] { c.meta.batch_size = parse_number<int>(key, v); }},
      {"meta_learning_rate", [&] { c.meta.learning_rate = parse_number<double>(key, v); }},
      {"meta_l2", [&] { c.meta.l2 = parse_number<double>(key, v); }},
      {"m", [&] { c.m = parse_number<int>(key, v); }},
      {"alpha", [&] { c.alpha = parse_number<double>(key, v); }},
      {"verify_seeds",
       [&] {
         c.verify_seeds.clear();
         for (const auto& s : split(v, ',')) c.verify_seeds.push_back(parse_number<std::uint64_t>(key, s));
       }},
      {"pool", [&] { c.pool = v; }},
      {"score",
       [&] {
         if (v == "posterior") c.score = ScoreKind::posterior;
         else if (v == "hard") c.score = ScoreKind::hard;
         else throw ConfigError("unknown score '" + v + "'");
       }},
      {"seed", [&] { c.seed = parse_number<std::uint64_t>(key, v); }},
      {"output_dir", [&] { c.output_dir = v; }},
  };
  auto it = setters.find(key);
  if (it == setters.end()) throw ConfigError("unknown config key '" + key + "'");
  it->second();
}

ExperimentConfig parse_experiment_config(const std::string& text, ExperimentConfig base) {
  std::istringstream in(text);
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (auto hash = line.find('#'); hash != std::string::npos) line.resize(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw ConfigError("line " + std::to_string(lineno) + ": expected key = value");
    set_config_value(base, trim(line.substr(0, eq)), line.substr(eq + 1));
  }
  return base;
}

ExperimentConfig load_experiment_config(const std::filesystem::path& path) {
  std::ifstream f(path);
  if (!f) throw ConfigError("cannot read config file " + path.string());
  std::stringstream ss;
  ss << f.rdbuf();
  return parse_experiment_config(ss.str());
}

std::string to_text(const ExperimentConfig& c) {
  std::ostringstream o;
  auto kv = [&](const std::string& k, const std::string& v) { o << k << " = " << v << "\n"; };
  kv("data_source", c.data_source);
  kv("data_root", c.data_root);
  kv("side", std::to_string(c.side));
  kv("train_size", std::to_string(c.train_size));
  kv("test_size", std::to_string(c.test_size));
  kv("surrogate_size", std::to_string(c.surrogate_size));
  kv("data_seed", std::to_string(c.data_seed));
  kv("gamma", num_text(c.gamma));
  kv("style", c.style);
  kv("transformer", c.transformer);
  kv("blend", num_text(c.blend));
  kv("arch", c.arch);
  kv("width", std::to_string(c.width));
  kv("epochs", std::to_string(c.epochs));
  kv("batch_size", std::to_string(c.batch_size));
  kv("learning_rate", num_text(c.learning_rate));
  kv("momentum", num_text(c.momentum));
  kv("weight_decay", num_text(c.weight_decay));
  kv("crop_pad", std::to_string(c.crop_pad));
  kv("hflip", bool_text(c.hflip));
  kv("attacks", join<AttackPlan>(c.attacks, [](const AttackPlan& p) { return p.label(); }));
  kv("query_epochs", std::to_string(c.query_epochs));
  kv("distill_epochs", std::to_string(c.distill_epochs));
  kv("finetune_epochs", std::to_string(c.finetune_epochs));
  kv("finetune_lr", num_text(c.finetune_lr));
  kv("temperature", num_text(c.temperature));
  kv("query_budget", c.query_budget ? std::to_string(*c.query_budget) : "none");
  kv("zs_iterations", std::to_string(c.zs_iterations));
  kv("zs_student_steps", std::to_string(c.zs_student_steps));
  kv("zs_batch", std::to_string(c.zs_batch));
  kv("trigger_size", std::to_string(c.trigger_size));
  kv("target_label", std::to_string(c.target_label));
  kv("modes", join<SignatureMode>(c.modes, [](const SignatureMode& m) { return to_string(m); }));
  kv("mask", c.mask);
  kv("mask_cap", std::to_string(c.mask_cap));
  kv("meta_kind", c.meta.kind == MetaKind::logistic ? "logistic" : "mlp");
  kv("meta_hidden", std::to_string(c.meta.hidden));
  kv("meta_epochs", std::to_string(c.meta.epochs));
  kv("meta_batch_size", std::to_string(c.meta.batch_size));
  kv("meta_learning_rate", num_text(c.meta.learning_rate));
  kv("meta_l2", num_text(c.meta.l2));
  kv("m", std::to_string(c.m));
  kv("alpha", num_text(c.alpha));
  kv("verify_seeds", join<std::uint64_t>(c.verify_seeds, [](const std::uint64_t& s) { return std::to_string(s); }));
  kv("pool", c.pool);
  kv("score", c.score == ScoreKind::posterior ? "posterior" : "hard");
  kv("seed", std::to_string(c.seed));
  kv("output_dir", c.output_dir);
  return o.str();
}

nlohmann::json to_json(const ExperimentConfig& c) {
  nlohmann::json j = nlohmann::json::object();
  std::istringstream in(to_text(c));
  std::string line;
  while (std::getline(in, line)) {
    const auto eq = line.find(" = ");
    j[line.substr(0, eq)] = line.substr(eq + 3);
  }
  return j;
}

void validate(const ExperimentConfig& c) {
  if (c.data_source != "synthetic" && c.data_source != "cifar10" && c.data_source != "png")
    throw ConfigError("data_source must be synthetic, cifar10 or png");
  if (c.data_source != "synthetic" && c.data_root.empty()) throw ConfigError("data_root is required for " + c.data_source);
  if (c.data_source == "synthetic" && c.side < 4) throw ConfigError("side must be >= 4");
  if (c.train_size < 2 || c.test_size < 1 || c.surrogate_size < 1) throw ConfigError("dataset sizes are too small");
  if (!(c.gamma > 0 && c.gamma <= 100)) throw ConfigError("gamma must lie in (0, 100]");
  if (!(c.blend >= 0 && c.blend <= 1)) throw ConfigError("blend must lie in [0, 1]");
  const auto ts = registered_style_transformers();
  if (std::find(ts.begin(), ts.end(), c.transformer) == ts.end())
    throw ConfigError("unknown style transformer '" + c.transformer + "'");
  const auto archs = registered_architectures();
  auto known_arch = [&](const std::string& a) { return std::find(archs.begin(), archs.end(), a) != archs.end(); };
  if (!known_arch(c.arch)) throw ConfigError("unknown architecture '" + c.arch + "'");
  for (const auto& p : c.attacks)
    for (std::size_t i = 0; i < p.stages.size(); ++i) {
      if (!p.archs[i].empty() && !known_arch(p.archs[i]))
        throw ConfigError("unknown architecture '" + p.archs[i] + "' in attack plan " + p.label());
      if (p.stages[i] == AttackId::fine_tune && !p.archs[i].empty())
        throw ConfigError("fine_tune stages keep the victim architecture");
    }
  if (c.epochs < 1 || c.batch_size < 1 || !(c.learning_rate > 0)) throw ConfigError("invalid training settings");
  if (c.query_epochs < 0 || c.distill_epochs < 0 || c.finetune_epochs < 0 || !(c.finetune_lr > 0))
    throw ConfigError("invalid attack settings");
  if (!(c.temperature > 0)) throw ConfigError("temperature must be positive");
  if (c.zs_iterations < 0 || c.zs_student_steps < 1 || c.zs_batch < 1) throw ConfigError("invalid zero-shot settings");
  if (c.trigger_size < 1 || c.target_label < 0) throw ConfigError("invalid BadNets trigger settings");
  if (c.modes.empty()) throw ConfigError("at least one signature mode is required");
  if (c.m < 2) throw ConfigError("m must be >= 2");
  if (!(c.alpha > 0 && c.alpha < 1)) throw ConfigError("alpha must lie in (0, 1)");
  if (c.verify_seeds.empty()) throw ConfigError("verify_seeds is empty");
  if (c.pool != "train" && c.pool != "test") throw ConfigError("pool must be train or test");
  if (c.mask != "default" && c.mask != "all" && c.mask.rfind("last_layers:", 0) != 0 && c.mask.rfind("random:", 0) != 0)
    throw ConfigError("mask must be default, all, last_layers:N or random:K");
  if (c.meta.epochs < 1 || c.meta.batch_size < 1 || !(c.meta.learning_rate > 0) || c.meta.l2 < 0 ||
      (c.meta.kind == MetaKind::mlp && c.meta.hidden < 1))
    throw ConfigError("invalid meta-classifier settings");
  const std::size_t dt = poison_count(c.train_size, c.gamma);
  const std::size_t pool = c.pool == "train" ? dt : std::min(dt, c.test_size);
  if (pool < static_cast<std::size_t>(c.m))
    throw ConfigError("verification pool of " + std::to_string(pool) + " transformed images is smaller than m = " +
                      std::to_string(c.m));
  if (dt < 1) throw ConfigError("gamma selects no training samples");
}

// ---- cache -----------------------------------------------------------------

ArtifactCache::ArtifactCache(std::filesystem::path root) : root_(std::move(root)) {
  if (!root_.empty()) {
    std::filesystem::create_directories(root_ / "models");
    std::filesystem::create_directories(root_ / "meta");
  }
}

ArtifactCache ArtifactCache::from_env(const std::filesystem::path& fallback) {
  const char* env = std::getenv(kEnvVar);
  return ArtifactCache(env && *env ? std::filesystem::path(env) : fallback);
}

std::string ArtifactCache::key_of(const nlohmann::json& key) { return sha256_hex(key.dump()); }

std::optional<ModelHandle> ArtifactCache::find_model(const std::string& key) const {
  if (!enabled()) return std::nullopt;
  const auto stem = root_ / "models" / key;
  if (!std::filesystem::exists(stem.string() + ".json")) {
    ++counts_->misses;
    return std::nullopt;
  }
  ++counts_->hits;
  return load_checkpoint(stem);
}

void ArtifactCache::store_model(const std::string& key, const ModelHandle& model) const {
  if (enabled()) save_checkpoint(model, root_ / "models" / key);
}

std::optional<MetaClassifier> ArtifactCache::find_meta(const std::string& key) const {
  if (!enabled()) return std::nullopt;
  const auto stem = root_ / "meta" / key;
  if (!std::filesystem::exists(stem.string() + ".json")) {
    ++counts_->misses;
    return std::nullopt;
  }
  ++counts_->hits;
  return load_meta_classifier(stem);
}

void ArtifactCache::store_meta(const std::string& key, const MetaClassifier& meta) const {
  if (enabled()) save_meta_classifier(meta, root_ / "meta" / key);
}

// ---- ledger ----------------------------------------------------------------

void RunLedger::add(LedgerRecord r) {
  for (auto& existing : records_)
    if (existing.name == r.name && existing.kind == r.kind) {
      existing = std::move(r);
      return;
    }
  records_.push_back(std::move(r));
}

const LedgerRecord* RunLedger::find(const std::string& name) const {
  for (const auto& r : records_)
    if (r.name == name) return &r;
  return nullptr;
}

nlohmann::json RunLedger::to_json() const {
  nlohmann::json arr = nlohmann::json::array();
  for (const auto& r : records_)
    arr.push_back({{"kind", r.kind}, {"name", r.name}, {"hash", r.hash}, {"key", r.key}, {"path", r.path}});
  return arr;
}

void RunLedger::save(const std::filesystem::path& path, const ExperimentConfig& cfg, const std::string& status) const {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  nlohmann::json j;
  j["status"] = status;
  j["config"] = extmark::to_json(cfg);
  j["artifacts"] = to_json();
  std::ofstream f(path);
  if (!f) throw IoError("cannot write " + path.string());
  f << j.dump(2) << "\n";
}

// ---- data ------------------------------------------------------------------

ExperimentData load_experiment_data(const ExperimentConfig& c) {
  ExperimentData d;
  if (c.data_source == "synthetic") {
    d.train = make_shapes_dataset(c.train_size, c.side, c.data_seed, Split::train, "shapes-train");
    d.test = make_shapes_dataset(c.test_size, c.side, derive_seed(c.data_seed, 1), Split::test, "shapes-test");
    d.surrogate = std::make_shared<const ImageDataset>(
        make_shapes_dataset(c.surrogate_size, c.side, derive_seed(c.data_seed, 2), Split::train, "shapes-surrogate"));
    return d;
  }
  ImageDataset full_train, full_test;
  if (c.data_source == "cifar10") {
    full_train = load_cifar10(c.data_root, Split::train, c.train_size + c.surrogate_size);
    full_test = load_cifar10(c.data_root, Split::test, c.test_size);
  } else {
    full_train = load_png_directory(c.data_root, Split::train);
    full_test = load_png_directory(c.data_root, Split::test);
  }
  if (full_train.size() < c.train_size + c.surrogate_size)
    throw ConfigError("training split has " + std::to_string(full_train.size()) + " images, need " +
                      std::to_string(c.train_size + c.surrogate_size));
  // Fixed shuffle so both halves cover all classes.
  Rng rng(c.data_seed);
  std::vector<std::size_t> order(full_train.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  rng.shuffle(order.begin(), order.end());
  std::vector<std::size_t> a(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(c.train_size));
  std::vector<std::size_t> b(order.begin() + static_cast<std::ptrdiff_t>(c.train_size),
                             order.begin() + static_cast<std::ptrdiff_t>(c.train_size + c.surrogate_size));
  d.train = full_train.subset(a, c.data_source + "-train");
  d.surrogate = std::make_shared<const ImageDataset>(full_train.subset(b, c.data_source + "-surrogate"));
  std::vector<std::size_t> t(std::min(c.test_size, full_test.size()));
  std::iota(t.begin(), t.end(), std::size_t{0});
  d.test = full_test.subset(t, c.data_source + "-test");
  return d;
}

LabeledImage load_style_image(const ExperimentConfig& c, int channels, int side) {
  const auto kinds = style_image_kinds();
  if (std::find(kinds.begin(), kinds.end(), c.style) != kinds.end()) {
    LabeledImage img = make_style_image(c.style, std::max(side, 32), 3);
    if (channels == 3) return img;
    std::vector<double> gray(img.pixels.size() / 3);
    for (std::size_t i = 0; i < gray.size(); ++i)
      gray[i] = 0.299 * img.pixels[i] + 0.587 * img.pixels[gray.size() + i] + 0.114 * img.pixels[2 * gray.size() + i];
    return LabeledImage(Shape{1, img.shape.h, img.shape.w}, std::move(gray), 0);
  }
  if (!std::filesystem::exists(c.style))
    throw ConfigError("style '" + c.style + "' is neither a built-in kind nor an image file");
  return read_image(c.style, channels);
}

// ---- experiment --------------------------------------------------------------

Experiment::Experiment(ExperimentConfig cfg, ArtifactCache cache) : cfg_(std::move(cfg)), cache_(std::move(cache)) {
  validate(cfg_);
}

const ExperimentData& Experiment::data() {
  if (!data_) data_ = load_experiment_data(cfg_);
  return *data_;
}

const StyleSpec& Experiment::style() {
  if (!style_) style_ = StyleSpec{load_style_image(cfg_, data().train.shape().c, data().train.shape().h), cfg_.transformer, cfg_.blend};
  return *style_;
}

const PoisonPlan& Experiment::plan() {
  if (!plan_) {
    plan_ = select_poison_indices(data().train, cfg_.gamma, derive_seed(cfg_.seed, 10));
    ledger_.add({"plan", "poison_plan", sha256_hex(to_json(*plan_).dump()), "", ""});
  }
  return *plan_;
}

const WatermarkedSplit& Experiment::watermarked() {
  if (!wm_) wm_ = build_watermarked_dataset(data().train, plan(), style());
  return *wm_;
}

const ImageDataset& Experiment::watermarked_train() {
  if (!wm_train_) wm_train_ = concat(watermarked().benign_rest, watermarked().transformed, data().train.name() + "+wm");
  return *wm_train_;
}

const ImageDataset& Experiment::verification_pool() {
  if (!pool_) {
    if (cfg_.pool == "train") {
      pool_ = watermarked().transformed;
    } else {
      const std::size_t n = std::min(watermarked().transformed.size(), data().test.size());
      std::vector<LabeledImage> items;
      for (std::size_t i = 0; i < n; ++i) items.push_back(style_transform(data().test[i], style()));
      pool_ = ImageDataset(data().test.name() + "+styled", Split::test, data().test.class_count(), std::move(items));
    }
  }
  return *pool_;
}

TrainConfig Experiment::train_config(std::uint64_t seed) const {
  TrainConfig t;
  t.epochs = cfg_.epochs;
  t.batch_size = cfg_.batch_size;
  t.learning_rate = cfg_.learning_rate;
  t.momentum = cfg_.momentum;
  t.weight_decay = cfg_.weight_decay;
  t.crop_pad = cfg_.crop_pad;
  t.hflip = cfg_.hflip;
  t.width = cfg_.width;
  t.seed = seed;
  return t;
}

AttackConfig Experiment::attack_config(AttackId id, const std::string& student_arch, std::uint64_t seed) {
  AttackConfig a;
  a.attack = id;
  a.student_arch = student_arch;
  a.train = train_config(seed);
  a.temperature = cfg_.temperature;
  a.query_budget = cfg_.query_budget;
  switch (id) {
    case AttackId::distillation:
      a.surrogate = std::make_shared<const ImageDataset>(watermarked_train());
      a.train.epochs = cfg_.distill_epochs;
      break;
    case AttackId::fine_tune:
      a.surrogate = data().surrogate;
      a.train.epochs = cfg_.finetune_epochs;
      a.train.learning_rate = cfg_.finetune_lr;
      break;
    case AttackId::label_query:
    case AttackId::logit_query:
      a.surrogate = data().surrogate;
      a.train.epochs = cfg_.query_epochs;
      break;
    case AttackId::zero_shot:
      a.zero_shot.iterations = cfg_.zs_iterations;
      a.zero_shot.student_steps = cfg_.zs_student_steps;
      a.zero_shot.batch_size = cfg_.zs_batch;
      break;
  }
  return a;
}

nlohmann::json Experiment::data_key() const {
  return {{"source", cfg_.data_source}, {"root", cfg_.data_root},           {"side", cfg_.side},
          {"train_size", cfg_.train_size}, {"test_size", cfg_.test_size}, {"surrogate_size", cfg_.surrogate_size},
          {"data_seed", cfg_.data_seed}};
}

nlohmann::json Experiment::victim_key(const std::string& arch) {
  return {{"stage", "victim"},          {"data", data_key()},       {"plan", to_json(plan())},
          {"style", cfg_.style},        {"transformer", cfg_.transformer}, {"blend", cfg_.blend},
          {"arch", arch},               {"train", to_json(train_config(derive_seed(cfg_.seed, 11)))}};
}

ModelHandle Experiment::cached_model(const std::string& name, const nlohmann::json& key,
                                     const std::function<ModelHandle()>& make) {
  const std::string k = ArtifactCache::key_of(key);
  std::optional<ModelHandle> found;
  try {
    found = cache_.find_model(k);
  } catch (const IoError&) {
    found.reset();  // corrupt entry: rebuild
  }
  ModelHandle model;
  if (found) {
    model = std::move(*found);
  } else {
    try {
      model = make();
    } catch (const StageError&) {
      throw;
    } catch (const Error& e) {
      throw StageError(name, e.what());
    }
    cache_.store_model(k, model);
  }
  ledger_.add({"checkpoint", name, model.content_hash(), k,
               cache_.enabled() ? (cache_.root() / "models" / k).string() : std::string()});
  return model;
}

const ModelHandle& Experiment::victim(const std::string& arch_in) {
  const std::string arch = resolve_arch(arch_in);
  if (auto it = victims_.find(arch); it != victims_.end()) return it->second;
  nlohmann::json extra = {{"role", "victim"}, {"gamma_percent", cfg_.gamma}, {"style", cfg_.style},
                          {"transformer", cfg_.transformer}};
  auto model = cached_model("victim/" + arch, victim_key(arch), [&] {
    return train_model(watermarked_train(), arch, train_config(derive_seed(cfg_.seed, 11)), extra);
  });
  return victims_.emplace(arch, std::move(model)).first->second;
}

const ModelHandle& Experiment::benign(const std::string& arch_in) {
  const std::string arch = resolve_arch(arch_in);
  if (auto it = benigns_.find(arch); it != benigns_.end()) return it->second;
  const TrainConfig tc = train_config(derive_seed(cfg_.seed, 12));
  nlohmann::json key = {{"stage", "benign"}, {"data", data_key()}, {"arch", arch}, {"train", to_json(tc)}};
  auto model = cached_model("benign/" + arch, key, [&] { return train_model(data().train, arch, tc, {{"role", "benign"}}); });
  return benigns_.emplace(arch, std::move(model)).first->second;
}

const ModelHandle& Experiment::independent() {
  if (!independent_) {
    const TrainConfig tc = train_config(derive_seed(cfg_.seed, 13));
    nlohmann::json key = {{"stage", "independent"}, {"data", data_key()}, {"arch", cfg_.arch}, {"train", to_json(tc)}};
    independent_ = cached_model("independent", key,
                                [&] { return train_model(data().train, cfg_.arch, tc, {{"role", "independent"}}); });
  }
  return *independent_;
}

BackdoorSpec Experiment::backdoor_spec() {
  BackdoorSpec spec = white_square_trigger(data().train.shape(), cfg_.trigger_size, cfg_.target_label);
  if (cfg_.target_label >= data().train.class_count()) throw ConfigError("target_label outside the dataset classes");
  return spec;
}

const ModelHandle& Experiment::badnets() {
  if (!badnets_) {
    const TrainConfig tc = train_config(derive_seed(cfg_.seed, 16));
    const BackdoorSpec spec = backdoor_spec();
    const std::uint64_t pseed = derive_seed(cfg_.seed, 17);
    nlohmann::json key = {{"stage", "badnets"},          {"data", data_key()},   {"arch", cfg_.arch},
                          {"train", to_json(tc)},         {"gamma", cfg_.gamma},  {"trigger_size", cfg_.trigger_size},
                          {"target_label", cfg_.target_label}, {"poison_seed", pseed}};
    badnets_ = cached_model("badnets", key, [&] {
      ImageDataset poisoned = badnets_poison(data().train, spec, cfg_.gamma, pseed);
      return train_model(poisoned, cfg_.arch, tc,
                         {{"role", "badnets"}, {"gamma_percent", cfg_.gamma}, {"target_label", cfg_.target_label}});
    });
  }
  return *badnets_;
}

const std::vector<ModelHandle>& Experiment::stolen(const AttackPlan& plan, const ModelHandle* root) {
  if (!root) root = &victim();
  const std::string root_name = root == &victim() ? std::string() : root->content_hash().substr(0, 12) + ":";
  const std::string label = root_name + plan.label();
  if (auto it = stolen_.find(label); it != stolen_.end()) return it->second;
  std::vector<ModelHandle> stages;
  stages.reserve(plan.stages.size());  // stage_victim points into it
  const ModelHandle* stage_victim = root;
  std::string prefix = root_name;
  for (std::size_t i = 0; i < plan.stages.size(); ++i) {
    prefix += (i ? ">" : "") + to_string(plan.stages[i]) + (plan.archs[i].empty() ? "" : ":" + plan.archs[i]);
    const std::uint64_t seed = derive_seed(cfg_.seed, 100 + i * 16 + static_cast<std::uint64_t>(plan.stages[i]));
    AttackConfig ac = attack_config(plan.stages[i], plan.archs[i], seed);
    nlohmann::json key = {{"stage", "attack"}, {"victim", stage_victim->content_hash()}, {"attack", to_json(ac)},
                          {"surrogate_data", data_key()}};
    const ModelHandle& v = *stage_victim;
    const std::string name = "student/" + prefix;
    ModelHandle s;
    try {
      s = cached_model(name, key, [&] { return run_attack(v, ac).student; });
    } catch (const StageError& e) {
      throw StageError(e.stage() + " (stage " + std::to_string(i) + ")", e.what());
    }
    stages.push_back(std::move(s));
    stage_victim = &stages.back();
  }
  return stolen_.emplace(label, std::move(stages)).first->second;
}

ParameterMask Experiment::mask_for(const ModelHandle& model) const {
  const std::string& m = cfg_.mask;
  if (m == "default") return default_mask(model, cfg_.mask_cap);
  if (m == "all") return mask_all(model);
  if (m.rfind("last_layers:", 0) == 0) return mask_last_layers(model, parse_number<int>("mask", m.substr(12)));
  if (m.rfind("random:", 0) == 0)
    return mask_random(model, parse_number<std::size_t>("mask", m.substr(7)), derive_seed(cfg_.seed, 15));
  throw ConfigError("bad mask '" + m + "'");
}

const MetaClassifier& Experiment::meta(SignatureMode mode, const std::string& arch_in) {
  const std::string arch = resolve_arch(arch_in);
  const std::string slot = arch + "/" + to_string(mode);
  if (auto it = metas_.find(slot); it != metas_.end()) return it->second;
  const ModelHandle& v = victim(arch);
  const ModelHandle& b = benign(arch);
  const ParameterMask mask = mask_for(v);
  const std::uint64_t seed = derive_seed(cfg_.seed, 14);
  nlohmann::json key = {{"stage", "meta"},      {"victim", v.content_hash()}, {"benign", b.content_hash()},
                        {"mode", to_string(mode)}, {"mask", mask.hash()},      {"hyper", to_json(cfg_.meta)},
                        {"seed", seed}};
  const std::string k = ArtifactCache::key_of(key);
  std::optional<MetaClassifier> found;
  try {
    found = cache_.find_meta(k);
  } catch (const IoError&) {
    found.reset();
  }
  if (!found) {
    try {
      auto set = build_meta_training_set(v, b, watermarked().transformed, mode, mask);
      found = train_meta_classifier(set, cfg_.meta, seed);
      found->record()["victim_hash"] = v.content_hash();
      found->record()["benign_hash"] = b.content_hash();
      found->record()["mask"] = mask.derivation;
      found->record()["train_accuracy"] = meta_accuracy(*found, set);
    } catch (const Error& e) {
      throw StageError("meta/" + slot, e.what());
    }
    cache_.store_meta(k, *found);
  }
  const auto w = found->weights();
  ledger_.add({"meta", "meta/" + slot,
               sha256_hex(std::span<const std::uint8_t>(reinterpret_cast<const std::uint8_t*>(w.data()), w.size() * sizeof(double))),
               k, cache_.enabled() ? (cache_.root() / "meta" / k).string() : std::string()});
  return metas_.emplace(slot, std::move(*found)).first->second;
}

const std::vector<double>& Experiment::pool_scores(const ModelHandle& model, SignatureMode mode) {
  const std::string slot = model.content_hash() + "/" + to_string(mode);
  if (auto it = scores_.find(slot); it != scores_.end()) return it->second;
  const MetaClassifier& c = meta(mode, model.arch_id());
  auto s = score_pool(c, model, verification_pool(), mode, mask_for(model), cfg_.score);
  return scores_.emplace(slot, std::move(s)).first->second;
}

VerificationReport Experiment::verify(const ModelHandle& suspect, SignatureMode mode, std::uint64_t seed,
                                      std::optional<int> m) {
  const auto& ss = pool_scores(suspect, mode);
  const auto& sb = pool_scores(benign(suspect.arch_id()), mode);
  return verify_from_scores(ss, sb, m.value_or(cfg_.m), cfg_.alpha, seed);
}

// ---- run -----------------------------------------------------------------------

ExperimentResult run_experiment(const ExperimentConfig& cfg, const ArtifactCache& cache) {
  Experiment ex(cfg, cache);
  ExperimentResult result;
  const std::filesystem::path out = cfg.output_dir;
  std::filesystem::create_directories(out);
  auto stage = [&](const std::string& name, const std::function<void()>& fn) {
    try {
      fn();
    } catch (const StageError& e) {
      ex.ledger().save(out / "ledger.json", cfg, "failed: " + std::string(e.what()));
      throw;
    } catch (const Error& e) {
      ex.ledger().save(out / "ledger.json", cfg, "failed: " + name);
      throw StageError(name, e.what());
    }
  };

  stage("embed", [&] {
    ex.watermarked();
    ex.verification_pool();
  });
  stage("train", [&] {
    ex.victim();
    ex.benign();
    ex.independent();
  });
  std::vector<std::pair<std::string, const ModelHandle*>> suspects{{"source", &ex.victim()}};
  for (const auto& plan : cfg.attacks) {
    stage("attack/" + plan.label(), [&] {
      const auto& stages = ex.stolen(plan);
      if (plan.stages.size() == 1) {
        suspects.emplace_back(plan.label(), &stages.back());
      } else {
        std::string prefix;
        for (std::size_t i = 0; i < stages.size(); ++i) {
          prefix += (i ? ">" : "") + to_string(plan.stages[i]) + (plan.archs[i].empty() ? "" : ":" + plan.archs[i]);
          suspects.emplace_back(prefix, &stages[i]);
        }
      }
    });
  }
  suspects.emplace_back("independent", &ex.independent());

  for (SignatureMode mode : cfg.modes) {
    stage("meta/" + to_string(mode), [&] {
      for (const auto& [id, model] : suspects) ex.meta(mode, model->arch_id());
    });
    stage("verify/" + to_string(mode), [&] {
      for (const auto& [id, model] : suspects)
        for (std::uint64_t seed : cfg.verify_seeds) {
          ResultRow row{id, model->content_hash(), ex.benign(model->arch_id()).content_hash(), mode,
                        ex.verify(*model, mode, seed)};
          result.rows.push_back(std::move(row));
        }
    });
  }

  stage("evaluate", [&] {
    auto& mtr = result.metrics;
    const auto& test = ex.data().test;
    mtr["victim_accuracy"] = evaluate_accuracy(ex.victim(), test);
    mtr["benign_accuracy"] = evaluate_accuracy(ex.benign(), test);
    mtr["independent_accuracy"] = evaluate_accuracy(ex.independent(), test);
    for (const auto& [id, model] : suspects)
      if (id != "source" && id != "independent") mtr["student_accuracy"][id] = evaluate_accuracy(*model, test);
  });

  result.ledger = ex.ledger();
  for (const auto& p : write_report_csvs(result, out)) {
    std::ifstream f(p, std::ios::binary);
    std::stringstream ss;
    ss << f.rdbuf();
    result.ledger.add({"report", p.filename().string(), sha256_hex(ss.str()), "", p.string()});
  }
  {
    std::ofstream f(out / "metrics.json");
    f << result.metrics.dump(2) << "\n";
  }
  result.ledger.save(out / "ledger.json", cfg, "complete");
  return result;
}

std::vector<std::filesystem::path> write_report_csvs(const ExperimentResult& result, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  std::vector<std::filesystem::path> paths;
  for (SignatureMode mode : {SignatureMode::sign, SignatureMode::raw}) {
    std::string body;
    for (const auto& r : result.rows)
      if (r.mode == mode) body += csv_row(r.suspect_hash, r.benign_hash, r.attack_id, r.report) + "\n";
    if (body.empty()) continue;
    const auto p = dir / ("report_" + to_string(mode) + ".csv");
    std::ofstream f(p, std::ios::binary | std::ios::trunc);
    if (!f) throw IoError("cannot write " + p.string());
    f << csv_header() << "\n" << body;
    paths.push_back(p);
  }
  return paths;
}

std::vector<CsvRecord> read_report_csv(const std::filesystem::path& path) {
  std::ifstream f(path);
  if (!f) throw IoError("cannot read " + path.string());
  std::string line;
  if (!std::getline(f, line) || trim(line) != csv_header()) throw IoError(path.string() + " lacks the report header");
  std::vector<CsvRecord> out;
  auto num = [&](const std::string& s) -> double {
    if (s == "inf") return INFINITY;
    if (s == "-inf") return -INFINITY;
    try {
      return std::stod(s);
    } catch (const std::exception&) {
      throw IoError("bad number '" + s + "' in " + path.string());
    }
  };
  while (std::getline(f, line)) {
    if (trim(line).empty()) continue;
    std::vector<std::string> cols;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) cols.push_back(cell);
    if (cols.size() != 12) throw IoError("report row with " + std::to_string(cols.size()) + " columns");
    CsvRecord r;
    r.suspect_hash = cols[0];
    r.benign_hash = cols[1];
    r.attack_id = cols[2];
    r.report.m = static_cast<int>(num(cols[3]));
    r.report.alpha = num(cols[4]);
    r.report.mu_s = num(cols[5]);
    r.report.mu_b = num(cols[6]);
    r.report.delta_mu = num(cols[7]);
    r.report.t_stat = num(cols[8]);
    r.report.p_value = num(cols[9]);
    if (cols[10] != "stolen" && cols[10] != "not_stolen") throw IoError("bad decision '" + cols[10] + "'");
    r.report.stolen = cols[10] == "stolen";
    r.report.seed = static_cast<std::uint64_t>(std::stoull(cols[11]));
    out.push_back(std::move(r));
  }
  return out;
}

ReportTable report_table(const std::vector<ReportGroup>& groups) {
  std::vector<std::string> attacks;
  std::size_t total = 0;
  for (const auto& g : groups)
    for (const auto& r : g.records) {
      ++total;
      if (std::find(attacks.begin(), attacks.end(), r.attack_id) == attacks.end()) attacks.push_back(r.attack_id);
    }
  if (total == 0) throw DomainError("report has no rows");

  struct Cell {
    bool present = false;
    double dmu = 0, p = 1;
    std::size_t n = 0, stolen = 0;
  };
  auto cell = [&](const ReportGroup& g, const std::string& a) {
    std::vector<double> dmu, p;
    Cell c;
    for (const auto& r : g.records)
      if (r.attack_id == a) {
        dmu.push_back(r.report.delta_mu);
        p.push_back(r.report.p_value);
        c.stolen += r.report.stolen;
      }
    if (dmu.empty()) return c;
    c.present = true;
    c.n = dmu.size();
    c.dmu = stats::median(dmu);
    c.p = stats::median(p);
    return c;
  };

  ReportTable t;
  std::string header = "attack";
  for (const auto& g : groups) header += "," + g.label + "_delta_mu," + g.label + "_p," + g.label + "_stolen";
  t.csv = header + "\n";
  std::ostringstream txt;
  char buf[128];
  std::snprintf(buf, sizeof buf, "%-28s", "attack");
  txt << buf;
  for (const auto& g : groups) {
    std::snprintf(buf, sizeof buf, " | %-28s", g.label.c_str());
    txt << buf;
  }
  txt << "\n";
  std::snprintf(buf, sizeof buf, "%-28s", "");
  txt << buf;
  for (std::size_t i = 0; i < groups.size(); ++i) {
    std::snprintf(buf, sizeof buf, " | %8s %10s %7s", "dmu", "p", "stolen");
    txt << buf;
  }
  txt << "\n";
  for (const auto& a : attacks) {
    std::string row = a;
    std::snprintf(buf, sizeof buf, "%-28s", a.c_str());
    txt << buf;
    for (const auto& g : groups) {
      const Cell c = cell(g, a);
      if (!c.present) {
        row += ",,,";
        std::snprintf(buf, sizeof buf, " | %8s %10s %7s", "-", "-", "-");
      } else {
        row += "," + format_number(c.dmu) + "," + format_number(c.p) + "," + std::to_string(c.stolen) + "/" +
               std::to_string(c.n);
        const std::string frac = std::to_string(c.stolen) + "/" + std::to_string(c.n);
        std::snprintf(buf, sizeof buf, " | %8.3f %10.2e %7s", c.dmu, c.p, frac.c_str());
      }
      txt << buf;
    }
    txt << "\n";
    t.csv += row + "\n";
  }
  t.text = txt.str();
  return t;
}

}  // namespace extmark
