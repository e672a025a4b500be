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

#include "extmark/attacks.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>

#include "extmark/error.hpp"
#include "extmark/rng.hpp"

namespace extmark {

std::string to_string(AttackId id) {
  switch (id) {
    case AttackId::distillation: return "distillation";
    case AttackId::zero_shot: return "zero_shot";
    case AttackId::fine_tune: return "fine_tune";
    case AttackId::label_query: return "label_query";
    case AttackId::logit_query: return "logit_query";
  }
  return "unknown";
}

AttackId attack_from_string(const std::string& s) {
  for (AttackId id : {AttackId::distillation, AttackId::zero_shot, AttackId::fine_tune, AttackId::label_query,
                      AttackId::logit_query})
    if (to_string(id) == s) return id;
  if (s == "finetune" || s == "fine-tune") return AttackId::fine_tune;
  if (s == "zero-shot") return AttackId::zero_shot;
  if (s == "label-query") return AttackId::label_query;
  if (s == "logit-query") return AttackId::logit_query;
  throw ConfigError("unknown attack '" + s + "'");
}

void validate(const AttackConfig& cfg) {
  const bool has_data = cfg.surrogate != nullptr;
  switch (cfg.attack) {
    case AttackId::zero_shot:
      if (has_data) throw ConfigError("zero_shot is data-free and must not receive a surrogate dataset");
      if (cfg.zero_shot.iterations < 0 || cfg.zero_shot.student_steps < 1 || cfg.zero_shot.batch_size < 1 ||
          cfg.zero_shot.z_dim < 1 || !(cfg.zero_shot.generator_lr > 0))
        throw ConfigError("invalid zero_shot options");
      break;
    case AttackId::distillation:
      if (!has_data) throw ConfigError("distillation needs the victim's training dataset");
      if (!(cfg.temperature > 0)) throw ConfigError("distillation temperature must be positive");
      break;
    case AttackId::fine_tune:
    case AttackId::label_query:
    case AttackId::logit_query:
      if (!has_data) throw ConfigError(to_string(cfg.attack) + " needs a surrogate dataset");
      break;
  }
  if (has_data && cfg.surrogate->empty()) throw ConfigError("surrogate dataset is empty");
  if (cfg.train.epochs < 0 || cfg.train.batch_size < 1 || !(cfg.train.learning_rate > 0))
    throw ConfigError("invalid attack training configuration");
}

nlohmann::json to_json(const AttackConfig& cfg) {
  nlohmann::json j;
  j["attack_id"] = to_string(cfg.attack);
  j["surrogate_dataset"] = cfg.surrogate ? nlohmann::json(cfg.surrogate->name()) : nlohmann::json(nullptr);
  j["surrogate_size"] = cfg.surrogate ? cfg.surrogate->size() : 0;
  j["student_arch_id"] = cfg.student_arch;
  j["student_width"] = cfg.student_width;
  j["epochs"] = cfg.train.epochs;
  j["train_config"] = to_json(cfg.train);
  j["temperature"] = cfg.temperature;
  j["kl_weight"] = cfg.kl_weight;
  j["query_budget"] = cfg.query_budget ? nlohmann::json(*cfg.query_budget) : nlohmann::json(nullptr);
  j["seed"] = cfg.train.seed;
  if (cfg.attack == AttackId::zero_shot) {
    j["zero_shot"] = {{"iterations", cfg.zero_shot.iterations},
                      {"student_steps", cfg.zero_shot.student_steps},
                      {"batch_size", cfg.zero_shot.batch_size},
                      {"z_dim", cfg.zero_shot.z_dim},
                      {"generator_lr", cfg.zero_shot.generator_lr}};
  }
  return j;
}

void QueryOracle::charge(std::size_t n) {
  if (budget_ && queries_ + n > *budget_)
    throw BudgetError("query budget exhausted: " + std::to_string(queries_ + n) + " > " + std::to_string(*budget_));
  queries_ += n;
}

Tensor QueryOracle::probabilities(const ImageDataset& inputs) {
  charge(inputs.size());
  Tensor logits = predict_logits(victim_, inputs);
  for (int i = 0; i < logits.n; ++i) {
    auto row = logits.sample(i);
    auto p = softmax(row);
    std::copy(p.begin(), p.end(), row.begin());
  }
  return logits;
}

std::vector<int> QueryOracle::labels(const ImageDataset& inputs) {
  charge(inputs.size());
  return predict_labels(victim_, inputs);
}

namespace {

ModelHandle fresh_student(const ModelHandle& victim, const AttackConfig& cfg) {
  const std::string arch = cfg.student_arch.empty() ? victim.arch_id() : cfg.student_arch;
  int width = cfg.student_width;
  if (width == 0 && arch == victim.arch_id()) width = victim.options().width;
  ArchOptions opts{victim.options().input, victim.class_count(), width};
  return ModelHandle::create(arch, opts, effective_init_seed(cfg.train));
}

void check_data(const ModelHandle& victim, const ImageDataset& data) {
  if (!(data.shape() == victim.options().input)) throw ShapeError("surrogate images do not match the victim input");
  if (data.class_count() != victim.class_count()) throw DomainError("surrogate class count differs from the victim");
}

void stamp(ModelHandle& student, const ModelHandle& victim, const AttackConfig& cfg, std::uint64_t queries) {
  auto& m = student.manifest();
  m["objective"] = "stealing";
  m["attack"] = to_json(cfg);
  m["victim_hash"] = victim.content_hash();
  m["queries"] = queries;
}

Tensor gather_rows(const Tensor& src, std::span<const std::size_t> idx) {
  Tensor out(static_cast<int>(idx.size()), src.shape);
  const std::size_t k = src.sample_size();
  for (std::size_t i = 0; i < idx.size(); ++i)
    std::copy_n(src.data.begin() + static_cast<std::ptrdiff_t>(idx[i] * k), k,
                out.data.begin() + static_cast<std::ptrdiff_t>(i * k));
  return out;
}

}  // namespace

AttackOutcome steal_distillation(const ModelHandle& victim, const AttackConfig& cfg) {
  if (cfg.attack != AttackId::distillation) throw ConfigError("steal_distillation called with another attack id");
  validate(cfg);
  const ImageDataset& data = *cfg.surrogate;
  check_data(victim, data);
  AttackOutcome out{fresh_student(victim, cfg)};
  BatchLoss loss = [&](const Tensor& inputs, const Tensor& logits, std::span<const std::size_t> idx, Tensor& d) {
    // Teacher answers on the same augmented batch the student sees.
    Tensor teacher = victim.forward(inputs);
    out.queries += idx.size();
    for (int i = 0; i < teacher.n; ++i) {
      auto row = teacher.sample(i);
      auto p = softmax(row, cfg.temperature);
      std::copy(p.begin(), p.end(), row.begin());
    }
    std::vector<int> y(idx.size());
    for (std::size_t i = 0; i < idx.size(); ++i) y[i] = data[idx[i]].label;
    double l = softmax_cross_entropy(logits, y, &d);
    l += soft_kl(logits, teacher, cfg.temperature, &d, cfg.kl_weight);
    return l;
  };
  out.steps = sgd_train(out.student, data, cfg.train, loss).steps;
  stamp(out.student, victim, cfg, out.queries);
  return out;
}

AttackOutcome steal_finetune(const ModelHandle& victim, const AttackConfig& cfg) {
  if (cfg.attack != AttackId::fine_tune) throw ConfigError("steal_finetune called with another attack id");
  validate(cfg);
  if (!cfg.student_arch.empty() && cfg.student_arch != victim.arch_id())
    throw ConfigError("fine_tune requires the victim's architecture, got '" + cfg.student_arch + "'");
  if (cfg.student_width != 0 && cfg.student_width != victim.options().width)
    throw ConfigError("fine_tune requires the victim's width");
  const ImageDataset& data = *cfg.surrogate;
  check_data(victim, data);
  AttackOutcome out{victim};
  out.student.manifest() = nlohmann::json::object();
  if (cfg.train.epochs > 0) {
    BatchLoss ce = [&](const Tensor&, const Tensor& logits, std::span<const std::size_t> idx, Tensor& d) {
      std::vector<int> y(idx.size());
      for (std::size_t i = 0; i < idx.size(); ++i) y[i] = data[idx[i]].label;
      return softmax_cross_entropy(logits, y, &d);
    };
    out.steps = sgd_train(out.student, data, cfg.train, ce).steps;
  }
  stamp(out.student, victim, cfg, 0);
  return out;
}

AttackOutcome steal_label_query(const ModelHandle& victim, const AttackConfig& cfg) {
  if (cfg.attack != AttackId::label_query) throw ConfigError("steal_label_query called with another attack id");
  validate(cfg);
  check_data(victim, *cfg.surrogate);
  QueryOracle oracle(victim, cfg.query_budget);
  const std::vector<int> labels = oracle.labels(*cfg.surrogate);
  ImageDataset relabeled = relabel(*cfg.surrogate, labels, cfg.surrogate->name() + "+victim-labels");
  AttackOutcome out{fresh_student(victim, cfg)};
  out.queries = oracle.queries();
  if (cfg.train.epochs > 0) {
    BatchLoss ce = [&](const Tensor&, const Tensor& logits, std::span<const std::size_t> idx, Tensor& d) {
      std::vector<int> y(idx.size());
      for (std::size_t i = 0; i < idx.size(); ++i) y[i] = labels[idx[i]];
      return softmax_cross_entropy(logits, y, &d);
    };
    out.steps = sgd_train(out.student, relabeled, cfg.train, ce).steps;
  }
  stamp(out.student, victim, cfg, out.queries);
  return out;
}

AttackOutcome steal_logit_query(const ModelHandle& victim, const AttackConfig& cfg) {
  if (cfg.attack != AttackId::logit_query) throw ConfigError("steal_logit_query called with another attack id");
  validate(cfg);
  const ImageDataset& data = *cfg.surrogate;
  check_data(victim, data);
  QueryOracle oracle(victim, cfg.query_budget);
  const Tensor probs = oracle.probabilities(data);
  AttackOutcome out{fresh_student(victim, cfg)};
  out.queries = oracle.queries();
  if (cfg.train.epochs > 0) {
    BatchLoss kl = [&](const Tensor&, const Tensor& logits, std::span<const std::size_t> idx, Tensor& d) {
      return soft_kl(logits, gather_rows(probs, idx), 1.0, &d);
    };
    out.steps = sgd_train(out.student, data, cfg.train, kl).steps;
  }
  stamp(out.student, victim, cfg, out.queries);
  return out;
}

namespace {

std::unique_ptr<Network> make_generator(const Shape& image, int z_dim) {
  if (image.h % 4 != 0 || image.w % 4 != 0) throw ConfigError("zero_shot generator needs image sides divisible by 4");
  constexpr int c0 = 64, c1 = 32;
  auto s = std::make_unique<Sequential>();
  s->add("fc", std::make_unique<Linear>(c0 * (image.h / 4) * (image.w / 4)));
  s->add("unflatten", std::make_unique<Reshape>(Shape{c0, image.h / 4, image.w / 4}));
  s->add("relu0", std::make_unique<ReLU>());
  s->add("up1", std::make_unique<ConvTranspose2d>(c1, 2, 2, 0)).add("relu1", std::make_unique<ReLU>());
  s->add("up2", std::make_unique<ConvTranspose2d>(image.c, 2, 2, 0)).add("out", std::make_unique<Sigmoid>());
  return std::make_unique<Network>(Shape{z_dim, 1, 1}, std::move(s));
}

Tensor sample_noise(int n, int z_dim, Rng& rng) {
  Tensor z(n, Shape{z_dim, 1, 1});
  for (double& v : z.data) v = rng.normal();
  return z;
}

}  // namespace

AttackOutcome steal_zero_shot(const ModelHandle& victim, const AttackConfig& cfg) {
  if (cfg.attack != AttackId::zero_shot) throw ConfigError("steal_zero_shot called with another attack id");
  validate(cfg);
  const ZeroShotOptions& zo = cfg.zero_shot;
  auto gen = make_generator(victim.options().input, zo.z_dim);
  std::vector<double> gparams(gen->param_count());
  {
    Rng init_rng(derive_seed(cfg.train.seed, 3));
    gen->init(gparams, init_rng);
  }
  Rng rng(derive_seed(cfg.train.seed, 4));
  AttackOutcome out{fresh_student(victim, cfg)};
  ModelHandle& student = out.student;

  SgdState sstate;
  AdamState gstate;
  std::vector<double> sgrad(student.param_count()), ggrad(gparams.size()), vscratch(victim.param_count());
  const double total = static_cast<double>(zo.iterations) * zo.student_steps;
  std::uint64_t sstep = 0;
  for (int it = 0; it < zo.iterations; ++it) {
    // Generator: maximize teacher/student disagreement.
    {
      Tensor z = sample_noise(zo.batch_size, zo.z_dim, rng);
      Tape tg, tt, ts;
      Tensor x = gen->forward(gparams, z, &tg);
      Tensor t = victim.forward(x, &tt);
      Tensor s = student.forward(x, &ts);
      Tensor ds(s.n, s.shape);
      l1_logits(s, t, &ds, -1.0);
      Tensor dt(t.n, t.shape);
      for (std::size_t i = 0; i < dt.data.size(); ++i) dt.data[i] = -ds.data[i];
      std::fill(sgrad.begin(), sgrad.end(), 0.0);
      Tensor dx = student.backward(ts, ds, sgrad, true);
      std::fill(vscratch.begin(), vscratch.end(), 0.0);
      Tensor dxt = victim.backward(tt, dt, vscratch, true);
      for (std::size_t i = 0; i < dx.data.size(); ++i) dx.data[i] += dxt.data[i];
      std::fill(ggrad.begin(), ggrad.end(), 0.0);
      gen->backward(gparams, tg, dx, ggrad, false);
      adam_step(gparams, ggrad, gstate, zo.generator_lr);
      out.queries += static_cast<std::uint64_t>(zo.batch_size);
    }
    // Student: minimize it on fresh generator samples.
    for (int k = 0; k < zo.student_steps; ++k, ++sstep) {
      Tensor z = sample_noise(zo.batch_size, zo.z_dim, rng);
      Tensor x = gen->forward(gparams, z, nullptr);
      Tensor t = victim.forward(x);
      Tape ts;
      Tensor s = student.forward(x, &ts);
      Tensor ds(s.n, s.shape);
      l1_logits(s, t, &ds);
      std::fill(sgrad.begin(), sgrad.end(), 0.0);
      student.backward(ts, ds, sgrad, false);
      double lr = cfg.train.learning_rate;
      if (cfg.train.schedule == LrSchedule::cosine)
        lr *= 0.5 * (1.0 + std::cos(std::numbers::pi * static_cast<double>(sstep) / total));
      sgd_step(student.mutable_params(), sgrad, sstate, lr, cfg.train.momentum, cfg.train.weight_decay,
               cfg.train.grad_clip);
      ++out.steps;
      out.queries += static_cast<std::uint64_t>(zo.batch_size);
    }
  }
  stamp(student, victim, cfg, out.queries);
  return out;
}

AttackOutcome run_attack(const ModelHandle& victim, const AttackConfig& cfg) {
  switch (cfg.attack) {
    case AttackId::distillation: return steal_distillation(victim, cfg);
    case AttackId::zero_shot: return steal_zero_shot(victim, cfg);
    case AttackId::fine_tune: return steal_finetune(victim, cfg);
    case AttackId::label_query: return steal_label_query(victim, cfg);
    case AttackId::logit_query: return steal_logit_query(victim, cfg);
  }
  throw ConfigError("unknown attack");
}

std::vector<ModelHandle> run_attack_chain(const ModelHandle& victim, const AttackChain& chain) {
  if (chain.empty()) throw ConfigError("attack chain is empty");
  std::vector<ModelHandle> out;
  out.reserve(chain.size());
  nlohmann::json history = nlohmann::json::array();
  for (std::size_t i = 0; i < chain.size(); ++i) {
    const ModelHandle& stage_victim = i == 0 ? victim : out.back();
    try {
      out.push_back(run_attack(stage_victim, chain[i]).student);
    } catch (const Error& e) {
      throw StageError("attack stage " + std::to_string(i) + " (" + to_string(chain[i].attack) + ")", e.what());
    }
    history.push_back(to_json(chain[i]));
    out.back().manifest()["chain"] = history;
    out.back().manifest()["chain_stage"] = i;
  }
  return out;
}

double mean_kl(const ModelHandle& victim, const ModelHandle& student, const ImageDataset& data) {
  Tensor vl = predict_logits(victim, data);
  Tensor sl = predict_logits(student, data);
  double total = 0.0;
  for (int i = 0; i < vl.n; ++i) {
    auto p = softmax(vl.sample(i));
    auto q = softmax(sl.sample(i));
    for (std::size_t k = 0; k < p.size(); ++k)
      if (p[k] > 0) total += p[k] * (std::log(p[k]) - std::log(std::max(q[k], 1e-300)));
  }
  return total / static_cast<double>(vl.n);
}

}  // namespace extmark
