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

#include <atomic>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"

#include "extmark/network.hpp"

namespace extmark {

struct ArchOptions {
  Shape input{3, 32, 32};
  int classes = 10;
  int width = 0;  // base channel count; 0 selects the architecture default

  friend bool operator==(const ArchOptions&, const ArchOptions&) = default;
};

// Registered ids: "linear", "cnn-small", "vgg-like", "wrn-16-1-like",
// "resnet-18-like".
std::vector<std::string> registered_architectures();
std::shared_ptr<const Network> build_architecture(const std::string& arch_id, const ArchOptions& opts);
std::size_t registered_param_count(const std::string& arch_id, const ArchOptions& opts);

// Counts forward/backward passes through a handle. Copies start from zero so a
// student cloned from a victim does not inherit the victim's history.
struct CallCounters {
  std::atomic<std::uint64_t> forward{0};
  std::atomic<std::uint64_t> backward{0};
  CallCounters() = default;
  CallCounters(const CallCounters&) {}
  CallCounters& operator=(const CallCounters&) { return *this; }
};

// Architecture id plus parameter vector; plays the victim, benign, suspect and
// student roles.
class ModelHandle {
 public:
  ModelHandle() = default;
  ModelHandle(std::string arch_id, ArchOptions opts, std::vector<double> params);

  // Freshly initialized model (He-normal weights, zero biases).
  static ModelHandle create(const std::string& arch_id, const ArchOptions& opts, std::uint64_t seed);

  const std::string& arch_id() const { return arch_id_; }
  const ArchOptions& options() const { return opts_; }
  int class_count() const { return opts_.classes; }
  const Network& network() const { return *net_; }
  std::span<const double> params() const { return params_; }
  std::vector<double>& mutable_params() { return params_; }
  std::size_t param_count() const { return params_.size(); }

  nlohmann::json& manifest() { return manifest_; }
  const nlohmann::json& manifest() const { return manifest_; }

  Tensor forward(const Tensor& x, Tape* tape = nullptr) const;
  Tensor backward(const Tape& tape, const Tensor& dlogits, std::span<double> grad, bool need_din) const;

  const CallCounters& counters() const { return counters_; }

  // Hex SHA-256 over the architecture descriptor and the raw parameters.
  std::string content_hash() const;

 private:
  std::string arch_id_;
  ArchOptions opts_;
  std::shared_ptr<const Network> net_;
  std::vector<double> params_;
  nlohmann::json manifest_ = nlohmann::json::object();
  mutable CallCounters counters_;
};

// Checkpoint = <stem>.params (little-endian float64 vector) + <stem>.json
// (arch_id, options, layout, train_manifest, content_hash).
void save_checkpoint(const ModelHandle& model, const std::filesystem::path& stem);
ModelHandle load_checkpoint(const std::filesystem::path& stem);

std::string sha256_hex(std::span<const std::uint8_t> bytes);
std::string sha256_hex(const std::string& text);

nlohmann::json to_json(const ArchOptions& o);
ArchOptions arch_options_from_json(const nlohmann::json& j);

}  // namespace extmark
