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

#include "extmark/backdoor.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>

#include "extmark/error.hpp"
#include "extmark/image_io.hpp"
#include "extmark/poison.hpp"
#include "extmark/rng.hpp"
#include "extmark/trainer.hpp"

namespace extmark {

void validate(const BackdoorSpec& spec) {
  if (spec.trigger.size() != spec.shape.size() || spec.mask.size() != spec.shape.size())
    throw DomainError("trigger and mask must match the image shape");
  for (double v : spec.trigger)
    if (!(v >= 0.0 && v <= 1.0)) throw DomainError("trigger values must lie in [0,1]");
  for (double v : spec.mask)
    if (v != 0.0 && v != 1.0) throw DomainError("mask entries must be 0 or 1");
  if (spec.target_label < 0) throw DomainError("target label must be non-negative");
}

BackdoorSpec white_square_trigger(const Shape& shape, int size, int target_label) {
  if (size < 1 || size > shape.h || size > shape.w) throw DomainError("trigger square does not fit the image");
  BackdoorSpec s{shape, std::vector<double>(shape.size(), 0.0), std::vector<double>(shape.size(), 0.0), target_label};
  for (int c = 0; c < shape.c; ++c)
    for (int y = shape.h - size; y < shape.h; ++y)
      for (int x = shape.w - size; x < shape.w; ++x) {
        const std::size_t i = (static_cast<std::size_t>(c) * shape.h + y) * shape.w + x;
        s.trigger[i] = 1.0;
        s.mask[i] = 1.0;
      }
  return s;
}

std::vector<double> apply_trigger(std::span<const double> x, const BackdoorSpec& spec) {
  if (x.size() != spec.mask.size()) throw DomainError("image does not match the trigger shape");
  std::vector<double> out(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) out[i] = spec.mask[i] != 0.0 ? spec.trigger[i] : x[i];
  return out;
}

ImageDataset badnets_poison(const ImageDataset& dataset, const BackdoorSpec& spec, double gamma_percent,
                            std::uint64_t seed) {
  validate(spec);
  if (!(dataset.shape() == spec.shape)) throw DomainError("trigger shape does not match the dataset");
  if (spec.target_label >= dataset.class_count()) throw DomainError("target label outside the dataset classes");
  const PoisonPlan plan = select_poison_indices(dataset, gamma_percent, seed);
  std::vector<LabeledImage> items = dataset.items();
  for (std::size_t i : plan.indices)
    items[i] = LabeledImage(spec.shape, apply_trigger(items[i].pixels, spec), spec.target_label);
  return ImageDataset(dataset.name() + "+badnets", dataset.split(), dataset.class_count(), std::move(items));
}

LabeledImage patch_transform(const LabeledImage& x, const BackdoorSpec& spec) {
  validate(spec);
  if (!(x.shape == spec.shape)) throw DomainError("image does not match the trigger shape");
  return LabeledImage(x.shape, apply_trigger(x.pixels, spec), x.label);
}

double attack_success_rate(const ModelHandle& model, const BackdoorSpec& spec, const ImageDataset& clean_test) {
  validate(spec);
  if (!(clean_test.shape() == spec.shape) || !(model.options().input == spec.shape))
    throw DomainError("trigger shape does not match the model or test set");
  std::vector<LabeledImage> stamped;
  for (const auto& item : clean_test.items())
    if (item.label != spec.target_label) stamped.push_back(patch_transform(item, spec));
  if (stamped.empty()) throw DomainError("test set has no non-target images");
  ImageDataset ds("stamped", clean_test.split(), clean_test.class_count(), std::move(stamped));
  auto pred = predict_labels(model, ds);
  const auto hits = std::count(pred.begin(), pred.end(), spec.target_label);
  return static_cast<double>(hits) / static_cast<double>(pred.size());
}

namespace {

Tensor perturbed_batch(const ImageDataset& probe, std::span<const double> delta) {
  Tensor x(static_cast<int>(probe.size()), probe.shape());
  const std::size_t d = probe.shape().size();
  for (std::size_t i = 0; i < probe.size(); ++i)
    for (std::size_t k = 0; k < d; ++k) x.data[i * d + k] = std::clamp(probe[i].pixels[k] + delta[k], 0.0, 1.0);
  return x;
}

// Objective and, when grad is non-null, d(objective)/d(delta).
double objective_and_grad(const ModelHandle& model, int target, std::span<const double> delta,
                          const ImageDataset& probe, std::vector<double>* grad) {
  Tensor x = perturbed_batch(probe, delta);
  Tape tape;
  Tensor logits = model.forward(x, grad ? &tape : nullptr);
  const int n = logits.n;
  Tensor dlogits(n, logits.shape);
  double total = 0.0;
  for (int b = 0; b < n; ++b) {
    auto p = softmax(logits.sample(b));
    const double pt = p[static_cast<std::size_t>(target)];
    total += pt;
    auto d = dlogits.sample(b);
    for (std::size_t k = 0; k < p.size(); ++k)
      d[k] = pt * ((static_cast<int>(k) == target ? 1.0 : 0.0) - p[k]) / n;
  }
  if (grad) {
    std::vector<double> scratch(model.param_count(), 0.0);
    Tensor dx = model.backward(tape, dlogits, scratch, true);
    const std::size_t dim = probe.shape().size();
    grad->assign(dim, 0.0);
    for (std::size_t i = 0; i < probe.size(); ++i)
      for (std::size_t k = 0; k < dim; ++k) {
        const double v = probe[i].pixels[k] + delta[k];
        if (v > 0.0 && v < 1.0) (*grad)[k] += dx.data[i * dim + k];  // clip passes gradient inside
      }
  }
  return total / n;
}

ImageDataset draw_probe(const ImageDataset& clean, std::size_t size, std::uint64_t seed) {
  const std::size_t k = std::min(size, clean.size());
  Rng rng(seed);
  auto idx = rng.sample_without_replacement(clean.size(), k);
  return clean.subset(idx, clean.name() + "+probe");
}

}  // namespace

double universal_objective(const ModelHandle& model, int target_label, std::span<const double> delta,
                           const ImageDataset& probe) {
  if (delta.size() != probe.shape().size()) throw ShapeError("perturbation does not match the image shape");
  return objective_and_grad(model, target_label, delta, probe, nullptr);
}

RecoveredTrigger recover_trigger(const ModelHandle& model, int target_label, const TriggerRecoveryConfig& cfg,
                                 const ImageDataset& clean) {
  if (!(cfg.epsilon > 0)) throw DomainError("epsilon must be positive");
  if (cfg.iterations < 0) throw DomainError("iterations must be >= 0");
  if (!(cfg.step_size > 0)) throw DomainError("step size must be positive");
  if (target_label < 0 || target_label >= model.class_count()) throw DomainError("target label outside the model classes");
  if (clean.empty()) throw DomainError("trigger recovery needs probe images");
  if (!(clean.shape() == model.options().input)) throw ShapeError("probe images do not match the model input");
  const Shape shape = clean.shape();
  const double eps = cfg.epsilon / 255.0;
  RecoveredTrigger out{shape, std::vector<double>(shape.size(), 0.0), {}};
  if (cfg.init == TriggerInit::pattern) {
    if (cfg.init_pattern.size() != shape.size()) throw ShapeError("initial pattern does not match the image shape");
    for (std::size_t k = 0; k < shape.size(); ++k) out.delta[k] = std::clamp(cfg.init_pattern[k], -eps, eps);
  }
  const ImageDataset probe = draw_probe(clean, cfg.probe_size, cfg.probe_seed);
  std::vector<double> grad, trial(shape.size());
  double current = objective_and_grad(model, target_label, out.delta, probe, &grad);
  out.objective.push_back(current);
  for (int it = 0; it < cfg.iterations; ++it) {
    double step = cfg.step_size / 255.0;
    bool accepted = false;
    for (int halving = 0; halving < 8 && !accepted; ++halving, step *= 0.5) {
      for (std::size_t k = 0; k < trial.size(); ++k) {
        const double s = (grad[k] > 0) - (grad[k] < 0);
        trial[k] = std::clamp(out.delta[k] + step * s, -eps, eps);
      }
      const double value = objective_and_grad(model, target_label, trial, probe, nullptr);
      if (value >= current - 1e-12) {
        out.delta = trial;
        accepted = true;
      }
    }
    if (accepted) current = objective_and_grad(model, target_label, out.delta, probe, &grad);
    out.objective.push_back(current);
  }
  return out;
}

void save_pattern(const std::filesystem::path& png, std::span<const double> values, const Shape& shape,
                  const nlohmann::json& sidecar, double epsilon_unit) {
  if (values.size() != shape.size()) throw ShapeError("pattern does not match its shape");
  std::vector<double> px(values.begin(), values.end());
  if (epsilon_unit > 0)
    for (double& v : px) v = std::clamp(0.5 + 0.5 * v / epsilon_unit, 0.0, 1.0);
  else
    for (double& v : px) v = std::clamp(v, 0.0, 1.0);
  write_png(png, LabeledImage(shape, std::move(px), 0));
  auto side = png;
  side += ".json";
  std::ofstream f(side);
  if (!f) throw IoError("cannot write " + side.string());
  f << sidecar.dump(2) << "\n";
}

}  // namespace extmark
