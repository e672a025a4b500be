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

#include "extmark/trainer.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <numbers>
#include <numeric>

#include "extmark/error.hpp"

namespace extmark {
namespace {

std::atomic<std::uint64_t> g_steps{0};

std::string schedule_name(LrSchedule s) { return s == LrSchedule::cosine ? "cosine" : "constant"; }

}  // namespace

void validate(const TrainConfig& cfg, int min_epochs) {
  if (cfg.epochs < min_epochs) throw DomainError("epochs must be >= " + std::to_string(min_epochs));
  if (cfg.batch_size < 1) throw DomainError("batch_size must be >= 1");
  if (!(cfg.learning_rate > 0.0)) throw DomainError("learning_rate must be > 0");
}

nlohmann::json to_json(const TrainConfig& c) {
  return {{"epochs", c.epochs},       {"batch_size", c.batch_size},     {"learning_rate", c.learning_rate},
          {"schedule", schedule_name(c.schedule)}, {"momentum", c.momentum}, {"weight_decay", c.weight_decay},
          {"seed", c.seed},           {"crop_pad", c.crop_pad},         {"hflip", c.hflip},
          {"grad_clip", c.grad_clip}, {"width", c.width},
          {"init_seed", c.init_seed ? nlohmann::json(*c.init_seed) : nlohmann::json(nullptr)}};
}

std::uint64_t effective_init_seed(const TrainConfig& cfg) { return cfg.init_seed ? *cfg.init_seed : derive_seed(cfg.seed, 1); }

TrainConfig train_config_from_json(const nlohmann::json& j) {
  TrainConfig c;
  c.epochs = j.value("epochs", c.epochs);
  c.batch_size = j.value("batch_size", c.batch_size);
  c.learning_rate = j.value("learning_rate", c.learning_rate);
  std::string s = j.value("schedule", std::string("cosine"));
  if (s == "cosine") c.schedule = LrSchedule::cosine;
  else if (s == "constant") c.schedule = LrSchedule::constant;
  else throw ConfigError("unknown learning-rate schedule '" + s + "'");
  c.momentum = j.value("momentum", c.momentum);
  c.weight_decay = j.value("weight_decay", c.weight_decay);
  c.seed = j.value("seed", c.seed);
  c.crop_pad = j.value("crop_pad", c.crop_pad);
  c.hflip = j.value("hflip", c.hflip);
  c.grad_clip = j.value("grad_clip", c.grad_clip);
  c.width = j.value("width", c.width);
  if (j.contains("init_seed") && !j["init_seed"].is_null()) c.init_seed = j["init_seed"].get<std::uint64_t>();
  return c;
}

std::vector<double> softmax(std::span<const double> z, double temperature) {
  std::vector<double> p(z.size());
  double mx = *std::max_element(z.begin(), z.end()) / temperature;
  double sum = 0.0;
  for (std::size_t k = 0; k < z.size(); ++k) {
    p[k] = std::exp(z[k] / temperature - mx);
    sum += p[k];
  }
  for (double& v : p) v /= sum;
  return p;
}

double softmax_cross_entropy(const Tensor& logits, std::span<const int> labels, Tensor* dlogits, double scale) {
  const int n = logits.n;
  const int k = static_cast<int>(logits.sample_size());
  if (static_cast<int>(labels.size()) != n) throw ShapeError("label count does not match batch");
  if (dlogits) *dlogits = Tensor(n, logits.shape);
  double total = 0.0;
  for (int b = 0; b < n; ++b) {
    auto z = logits.sample(b);
    if (labels[b] < 0 || labels[b] >= k) throw DomainError("label outside logit range");
    double mx = *std::max_element(z.begin(), z.end());
    double sum = 0.0;
    for (double v : z) sum += std::exp(v - mx);
    double lse = mx + std::log(sum);
    total += lse - z[labels[b]];
    if (dlogits) {
      auto d = dlogits->sample(b);
      for (int c = 0; c < k; ++c) d[c] = std::exp(z[c] - lse) * scale / n;
      d[labels[b]] -= scale / n;
    }
  }
  return scale * total / n;
}

double soft_kl(const Tensor& student, const Tensor& teacher_probs, double temperature, Tensor* dlogits, double weight) {
  if (!(temperature > 0.0)) throw DomainError("temperature must be > 0");
  const int n = student.n;
  const int k = static_cast<int>(student.sample_size());
  double total = 0.0;
  for (int b = 0; b < n; ++b) {
    auto q = softmax(student.sample(b), temperature);
    auto p = teacher_probs.sample(b);
    for (int c = 0; c < k; ++c)
      if (p[c] > 0.0) total += p[c] * (std::log(p[c]) - std::log(std::max(q[c], 1e-300)));
    if (dlogits) {
      auto d = dlogits->sample(b);
      for (int c = 0; c < k; ++c) d[c] += weight * (q[c] - p[c]) / (temperature * n);
    }
  }
  return weight * total / n;
}

double l1_logits(const Tensor& a, const Tensor& b, Tensor* da, double weight) {
  const double inv = 1.0 / static_cast<double>(a.data.size());
  double total = 0.0;
  for (std::size_t i = 0; i < a.data.size(); ++i) {
    const double diff = a.data[i] - b.data[i];
    total += std::abs(diff);
    if (da) da->data[i] += weight * inv * (diff > 0 ? 1.0 : (diff < 0 ? -1.0 : 0.0));
  }
  return weight * total * inv;
}

void sgd_step(std::vector<double>& params, std::span<const double> grad, SgdState& state, double lr, double momentum,
              double weight_decay, double grad_clip) {
  if (state.velocity.size() != params.size()) state.velocity.assign(params.size(), 0.0);
  double clip = 1.0;
  if (grad_clip > 0.0) {
    double ss = 0.0;
    for (double g : grad) ss += g * g;
    const double norm = std::sqrt(ss);
    if (norm > grad_clip) clip = grad_clip / norm;
  }
  for (std::size_t i = 0; i < params.size(); ++i) {
    const double g = clip * grad[i] + weight_decay * params[i];
    state.velocity[i] = momentum * state.velocity[i] + g;
    params[i] -= lr * state.velocity[i];
  }
  count_sgd_steps(1);
}

void adam_step(std::vector<double>& params, std::span<const double> grad, AdamState& state, double lr, double beta1,
               double beta2, double eps) {
  if (state.m.size() != params.size()) {
    state.m.assign(params.size(), 0.0);
    state.v.assign(params.size(), 0.0);
  }
  ++state.t;
  const double c1 = 1.0 - std::pow(beta1, static_cast<double>(state.t));
  const double c2 = 1.0 - std::pow(beta2, static_cast<double>(state.t));
  for (std::size_t i = 0; i < params.size(); ++i) {
    state.m[i] = beta1 * state.m[i] + (1.0 - beta1) * grad[i];
    state.v[i] = beta2 * state.v[i] + (1.0 - beta2) * grad[i] * grad[i];
    params[i] -= lr * (state.m[i] / c1) / (std::sqrt(state.v[i] / c2) + eps);
  }
  count_sgd_steps(1);
}

std::uint64_t total_sgd_steps() { return g_steps.load(); }
void count_sgd_steps(std::uint64_t n) { g_steps.fetch_add(n); }

void augment_batch(Tensor& batch, int crop_pad, bool hflip, Rng& rng) {
  const Shape s = batch.shape;
  std::vector<double> tmp(s.size());
  for (int b = 0; b < batch.n; ++b) {
    const int dy = crop_pad > 0 ? rng.uniform_int(-crop_pad, crop_pad) : 0;
    const int dx = crop_pad > 0 ? rng.uniform_int(-crop_pad, crop_pad) : 0;
    const bool flip = hflip && rng.bernoulli(0.5);
    if (dy == 0 && dx == 0 && !flip) continue;
    auto px = batch.sample(b);
    for (int c = 0; c < s.c; ++c)
      for (int y = 0; y < s.h; ++y)
        for (int x = 0; x < s.w; ++x) {
          const int sy = y + dy;
          int sx = x + dx;
          if (flip) sx = s.w - 1 - sx;
          double v = 0.0;
          if (sy >= 0 && sy < s.h && sx >= 0 && sx < s.w) v = px[(static_cast<std::size_t>(c) * s.h + sy) * s.w + sx];
          tmp[(static_cast<std::size_t>(c) * s.h + y) * s.w + x] = v;
        }
    std::copy(tmp.begin(), tmp.end(), px.begin());
  }
}

TrainStats sgd_train(ModelHandle& model, const ImageDataset& data, const TrainConfig& cfg, const BatchLoss& loss) {
  validate(cfg, 0);
  if (data.empty()) throw DomainError("cannot train on an empty dataset");
  if (!(data.shape() == model.options().input)) throw ShapeError("dataset images do not match the model input shape");
  TrainStats stats;
  Rng rng(derive_seed(cfg.seed, 2));
  std::vector<std::size_t> order(data.size());
  std::iota(order.begin(), order.end(), 0);
  const std::size_t bs = static_cast<std::size_t>(cfg.batch_size);
  const std::size_t steps_per_epoch = (data.size() + bs - 1) / bs;
  const std::size_t total_steps = steps_per_epoch * static_cast<std::size_t>(cfg.epochs);
  SgdState state;
  std::vector<double> grad(model.param_count());
  std::size_t step = 0;
  Tensor batch, dlogits;
  std::vector<int> labels;
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    rng.shuffle(order.begin(), order.end());
    double epoch_loss = 0.0;
    for (std::size_t start = 0; start < data.size(); start += bs, ++step) {
      const std::size_t end = std::min(start + bs, data.size());
      std::span<const std::size_t> idx(order.data() + start, end - start);
      data.gather(idx, batch, labels);
      augment_batch(batch, cfg.crop_pad, cfg.hflip, rng);
      Tape tape;
      Tensor logits = model.forward(batch, &tape);
      dlogits = Tensor(logits.n, logits.shape);
      epoch_loss += loss(batch, logits, idx, dlogits) * static_cast<double>(idx.size());
      std::fill(grad.begin(), grad.end(), 0.0);
      model.backward(tape, dlogits, grad, false);
      double lr = cfg.learning_rate;
      if (cfg.schedule == LrSchedule::cosine)
        lr *= 0.5 * (1.0 + std::cos(std::numbers::pi * static_cast<double>(step) / static_cast<double>(total_steps)));
      sgd_step(model.mutable_params(), grad, state, lr, cfg.momentum, cfg.weight_decay, cfg.grad_clip);
      ++stats.steps;
    }
    stats.epoch_loss.push_back(epoch_loss / static_cast<double>(data.size()));
  }
  return stats;
}

ModelHandle train_model(const ImageDataset& dataset, const std::string& arch_id, const TrainConfig& cfg,
                        const nlohmann::json& extra_manifest) {
  validate(cfg);
  if (dataset.empty()) throw DomainError("cannot train on an empty dataset");
  ArchOptions opts{dataset.shape(), dataset.class_count(), cfg.width};
  ModelHandle model = ModelHandle::create(arch_id, opts, effective_init_seed(cfg));
  BatchLoss ce = [&](const Tensor&, const Tensor& logits, std::span<const std::size_t> idx, Tensor& d) {
    std::vector<int> y(idx.size());
    for (std::size_t i = 0; i < idx.size(); ++i) y[i] = dataset[idx[i]].label;
    return softmax_cross_entropy(logits, y, &d);
  };
  TrainStats stats = sgd_train(model, dataset, cfg, ce);
  auto& m = model.manifest();
  m["dataset"] = dataset.name();
  m["dataset_size"] = dataset.size();
  m["train_config"] = to_json(cfg);
  m["objective"] = "cross_entropy";
  m["final_loss"] = stats.epoch_loss.empty() ? 0.0 : stats.epoch_loss.back();
  for (auto it = extra_manifest.begin(); it != extra_manifest.end(); ++it) m[it.key()] = it.value();
  return model;
}

Tensor predict_logits(const ModelHandle& model, const ImageDataset& dataset) {
  Tensor out(static_cast<int>(dataset.size()), model.network().output_shape());
  constexpr std::size_t kChunk = 256;
  Tensor batch;
  std::vector<int> labels;
  std::vector<std::size_t> idx;
  for (std::size_t start = 0; start < dataset.size(); start += kChunk) {
    const std::size_t end = std::min(start + kChunk, dataset.size());
    idx.resize(end - start);
    std::iota(idx.begin(), idx.end(), start);
    dataset.gather(idx, batch, labels);
    Tensor logits = model.forward(batch);
    std::copy(logits.data.begin(), logits.data.end(), out.data.begin() + static_cast<std::ptrdiff_t>(start * out.sample_size()));
  }
  return out;
}

int argmax(std::span<const double> v) {
  return static_cast<int>(std::max_element(v.begin(), v.end()) - v.begin());
}

std::vector<int> predict_labels(const ModelHandle& model, const ImageDataset& dataset) {
  Tensor logits = predict_logits(model, dataset);
  std::vector<int> out(dataset.size());
  for (std::size_t i = 0; i < dataset.size(); ++i) out[i] = argmax(logits.sample(static_cast<int>(i)));
  return out;
}

double evaluate_accuracy(const ModelHandle& model, const ImageDataset& dataset) {
  if (model.class_count() != dataset.class_count()) throw DomainError("model and dataset class counts differ");
  if (dataset.empty()) throw DomainError("cannot evaluate on an empty dataset");
  auto pred = predict_labels(model, dataset);
  std::size_t correct = 0;
  for (std::size_t i = 0; i < dataset.size(); ++i) correct += pred[i] == dataset[i].label;
  return static_cast<double>(correct) / static_cast<double>(dataset.size());
}

Tensor to_batch(const LabeledImage& img) {
  Tensor t(1, img.shape);
  std::copy(img.pixels.begin(), img.pixels.end(), t.data.begin());
  return t;
}

std::vector<double> loss_gradient(const ModelHandle& model, const LabeledImage& sample, double loss_scale) {
  if (!(sample.shape == model.options().input)) throw ShapeError("sample shape does not match model input");
  if (sample.label >= model.class_count()) throw DomainError("sample label outside model classes");
  Tape tape;
  Tensor logits = model.forward(to_batch(sample), &tape);
  Tensor d;
  const int y = sample.label;
  softmax_cross_entropy(logits, std::span<const int>(&y, 1), &d, loss_scale);
  std::vector<double> grad(model.param_count(), 0.0);
  model.backward(tape, d, grad, false);
  return grad;
}

double sample_loss(const ModelHandle& model, std::span<const double> params, const LabeledImage& sample) {
  Tensor logits = model.network().forward(params, to_batch(sample), nullptr);
  const int y = sample.label;
  return softmax_cross_entropy(logits, std::span<const int>(&y, 1), nullptr);
}

}  // namespace extmark
