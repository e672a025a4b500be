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
#include <string>
#include <vector>

#include "json.hpp"

#include "extmark/image.hpp"
#include "extmark/model.hpp"

namespace extmark {

enum class SignatureMode { sign, raw };
std::string to_string(SignatureMode m);
SignatureMode signature_mode_from_string(const std::string& s);

// Sorted, unique subset of flat parameter indices.
struct ParameterMask {
  std::vector<std::size_t> selection;
  std::size_t param_count = 0;  // |theta| of the architecture the mask was built for
  nlohmann::json derivation;    // {"kind": "all" | "last_layers" | "random" | ..., ...}

  std::size_t size() const { return selection.size(); }
  std::string hash() const;  // SHA-256 over param_count and the selection
};

ParameterMask mask_all(const ModelHandle& model);
// Every parameter of the last n parameterized layers.
ParameterMask mask_last_layers(const ModelHandle& model, int n);
// k indices drawn uniformly without replacement.
ParameterMask mask_random(const ModelHandle& model, std::size_t k, std::uint64_t seed);
// last_layers(2), subsampled to `cap` entries with a fixed seed if larger.
ParameterMask default_mask(const ModelHandle& model, std::size_t cap = 65536);
// Rebuilds a mask from its recorded derivation.
ParameterMask mask_from_derivation(const ModelHandle& model, const nlohmann::json& derivation);

struct GradientSignature {
  std::vector<float> values;
  SignatureMode mode = SignatureMode::sign;
  std::string mask_hash;
  std::int64_t source_sample_id = -1;
};

// Loss gradient restricted to the mask, with sgn (sgn(0) = 0) in sign mode.
// `loss_scale` multiplies the loss before differentiation.
GradientSignature extract_signature(const ModelHandle& model, const LabeledImage& sample, SignatureMode mode,
                                    const ParameterMask& mask, double loss_scale = 1.0);
// One signature per item (parallel over items); ids are item indices.
std::vector<GradientSignature> extract_signatures(const ModelHandle& model, const ImageDataset& data,
                                                  SignatureMode mode, const ParameterMask& mask);

struct MetaExample {
  GradientSignature signature;
  int label = 0;  // +1 victim, -1 benign
};
using MetaSet = std::vector<MetaExample>;

// Pairs (g_V(x), +1), (g_B(x), -1) for every x, interleaved in dataset order.
MetaSet build_meta_training_set(const ModelHandle& victim, const ModelHandle& benign, const ImageDataset& transformed,
                                SignatureMode mode, const ParameterMask& mask);

enum class MetaKind { logistic, mlp };

struct MetaHyper {
  MetaKind kind = MetaKind::logistic;
  int hidden = 32;     // mlp only
  int epochs = 60;
  int batch_size = 32;
  double learning_rate = 1e-3;  // Adam
  double l2 = 1e-4;
};
nlohmann::json to_json(const MetaHyper& h);
MetaHyper meta_hyper_from_json(const nlohmann::json& j);

class MetaClassifier {
 public:
  MetaClassifier() = default;
  MetaClassifier(MetaKind kind, std::size_t input_dim, int hidden, SignatureMode mode, std::string mask_hash,
                 std::vector<double> weights);

  MetaKind kind() const { return kind_; }
  std::size_t input_dim() const { return input_dim_; }
  int hidden() const { return hidden_; }
  SignatureMode mode() const { return mode_; }
  const std::string& mask_hash() const { return mask_hash_; }
  std::span<const double> weights() const { return weights_; }
  std::vector<double>& mutable_weights() { return weights_; }
  nlohmann::json& record() { return record_; }
  const nlohmann::json& record() const { return record_; }

  static std::size_t weight_count(MetaKind kind, std::size_t input_dim, int hidden);

  // Posterior of label +1; checks dimension, mode and mask.
  double posterior(const GradientSignature& sig) const;
  // Logit and, when grad is given, accumulates d(logit)/d(weights) * scale.
  double logit(std::span<const float> x, std::span<double> grad = {}, double scale = 0.0) const;

 private:
  MetaKind kind_ = MetaKind::logistic;
  std::size_t input_dim_ = 0;
  int hidden_ = 0;
  SignatureMode mode_ = SignatureMode::sign;
  std::string mask_hash_;
  std::vector<double> weights_;
  nlohmann::json record_ = nlohmann::json::object();
};

// Binary cross-entropy training with Adam and L2; throws DomainError unless
// both labels occur.
MetaClassifier train_meta_classifier(const MetaSet& set, const MetaHyper& hyper, std::uint64_t seed);

double classify(const MetaClassifier& meta, const GradientSignature& sig);
double meta_accuracy(const MetaClassifier& meta, const MetaSet& set);

// Binary container: "EXSG", u32 version, u8 mode, 64-byte mask hash, u64 dim,
// u64 count, count*dim float32 values (row-major), count int64 sample ids.
void save_signatures(const std::vector<GradientSignature>& sigs, const std::filesystem::path& path);
std::vector<GradientSignature> load_signatures(const std::filesystem::path& path);

// <stem>.weights (float64) + <stem>.json.
void save_meta_classifier(const MetaClassifier& meta, const std::filesystem::path& stem);
MetaClassifier load_meta_classifier(const std::filesystem::path& stem);

}  // namespace extmark
