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
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"

#include "extmark/image.hpp"
#include "extmark/model.hpp"

namespace extmark {

enum class LrSchedule { cosine, constant };

struct TrainConfig {
  int epochs = 30;
  int batch_size = 64;
  double learning_rate = 0.05;
  LrSchedule schedule = LrSchedule::cosine;
  double momentum = 0.9;
  double weight_decay = 5e-4;
  std::uint64_t seed = 0;
  int crop_pad = 2;        // random-crop padding in pixels, 0 disables
  bool hflip = true;
  double grad_clip = 5.0;  // global L2 clip on the mini-batch gradient, 0 disables
  int width = 0;           // architecture width override
  // Weight-initialization seed; unset derives it from `seed`.
  std::optional<std::uint64_t> init_seed;
};

std::uint64_t effective_init_seed(const TrainConfig& cfg);

// Throws DomainError unless epochs >= min_epochs, batch_size >= 1, lr > 0.
void validate(const TrainConfig& cfg, int min_epochs = 1);
nlohmann::json to_json(const TrainConfig& cfg);
TrainConfig train_config_from_json(const nlohmann::json& j);

// ---- losses (all averaged over the batch) ---------------------------------

std::vector<double> softmax(std::span<const double> logits, double temperature = 1.0);

// Cross-entropy; writes (p - onehot) * scale / n into dlogits when given.
double softmax_cross_entropy(const Tensor& logits, std::span<const int> labels, Tensor* dlogits, double scale = 1.0);

// KL(teacher_probs || softmax(student/T)); adds weight * d/dlogits into dlogits.
double soft_kl(const Tensor& student_logits, const Tensor& teacher_probs, double temperature, Tensor* dlogits,
               double weight = 1.0);

// mean |a - b| over all logit entries; adds the subgradient w.r.t. `a`.
double l1_logits(const Tensor& a, const Tensor& b, Tensor* da, double weight = 1.0);

// ---- optimization ----------------------------------------------------------

// Computes the mini-batch loss from the (augmented) inputs and the student's
// logits and writes d(loss)/d(logits).
using BatchLoss = std::function<double(const Tensor& inputs, const Tensor& logits,
                                       std::span<const std::size_t> indices, Tensor& dlogits)>;

struct TrainStats {
  std::uint64_t steps = 0;
  std::vector<double> epoch_loss;
};

// SGD with momentum and L2 weight decay added to the gradient; the learning
// rate follows a per-step cosine decay. Inputs get random crop / flip.
TrainStats sgd_train(ModelHandle& model, const ImageDataset& data, const TrainConfig& cfg, const BatchLoss& loss);

// Single SGD step on an explicit gradient (used by generator training).
struct SgdState {
  std::vector<double> velocity;
};
void sgd_step(std::vector<double>& params, std::span<const double> grad, SgdState& state, double lr, double momentum,
              double weight_decay, double grad_clip);

struct AdamState {
  std::vector<double> m, v;
  std::uint64_t t = 0;
};
void adam_step(std::vector<double>& params, std::span<const double> grad, AdamState& state, double lr,
               double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8);

// Total SGD steps performed in this process (instrumentation for caching).
std::uint64_t total_sgd_steps();
void count_sgd_steps(std::uint64_t n);

// Random crop (zero padding) and horizontal flip, in place.
void augment_batch(Tensor& batch, int crop_pad, bool hflip, Rng& rng);

// ---- training / evaluation -------------------------------------------------

// Cross-entropy training of a fresh model; `extra_manifest` entries (dataset
// provenance, rate, ...) are merged into the model's train manifest.
ModelHandle train_model(const ImageDataset& dataset, const std::string& arch_id, const TrainConfig& cfg,
                        const nlohmann::json& extra_manifest = nlohmann::json::object());

Tensor predict_logits(const ModelHandle& model, const ImageDataset& dataset);
std::vector<int> predict_labels(const ModelHandle& model, const ImageDataset& dataset);
int argmax(std::span<const double> v);

double evaluate_accuracy(const ModelHandle& model, const ImageDataset& dataset);

// d(scale * CE(model(x), y)) / d(theta), flattened in layout order.
std::vector<double> loss_gradient(const ModelHandle& model, const LabeledImage& sample, double loss_scale = 1.0);

// Cross-entropy loss value at one sample.
double sample_loss(const ModelHandle& model, std::span<const double> params, const LabeledImage& sample);

Tensor to_batch(const LabeledImage& img);

}  // namespace extmark
