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

#include "extmark/model.hpp"

#include <openssl/evp.h>

#include <cstring>
#include <fstream>
#include <functional>
#include <map>

#include "extmark/error.hpp"

namespace fs = std::filesystem;

namespace extmark {
namespace {

using Builder = std::function<std::unique_ptr<Sequential>(const ArchOptions&)>;

std::unique_ptr<Sequential> seq() { return std::make_unique<Sequential>(); }

int width_or(const ArchOptions& o, int dflt) { return o.width > 0 ? o.width : dflt; }

std::unique_ptr<Sequential> build_linear(const ArchOptions& o) {
  auto s = seq();
  s->add("flatten", std::make_unique<Reshape>());
  s->add("fc", std::make_unique<Linear>(o.classes, false));
  return s;
}

std::unique_ptr<Sequential> build_cnn_small(const ArchOptions& o) {
  const int w = width_or(o, 16);
  auto s = seq();
  s->add("conv1", std::make_unique<Conv2d>(w)).add("relu1", std::make_unique<ReLU>()).add("pool1", std::make_unique<MaxPool2>());
  s->add("conv2", std::make_unique<Conv2d>(2 * w)).add("relu2", std::make_unique<ReLU>()).add("pool2", std::make_unique<MaxPool2>());
  s->add("flatten", std::make_unique<Reshape>());
  s->add("fc1", std::make_unique<Linear>(4 * w)).add("relu3", std::make_unique<ReLU>());
  s->add("fc2", std::make_unique<Linear>(o.classes));
  return s;
}

std::unique_ptr<Sequential> build_vgg_like(const ArchOptions& o) {
  const int w = width_or(o, 16);
  auto s = seq();
  s->add("conv1", std::make_unique<Conv2d>(w)).add("relu1", std::make_unique<ReLU>());
  s->add("conv2", std::make_unique<Conv2d>(w)).add("relu2", std::make_unique<ReLU>()).add("pool1", std::make_unique<MaxPool2>());
  s->add("conv3", std::make_unique<Conv2d>(2 * w)).add("relu3", std::make_unique<ReLU>());
  s->add("conv4", std::make_unique<Conv2d>(2 * w)).add("relu4", std::make_unique<ReLU>()).add("pool2", std::make_unique<MaxPool2>());
  s->add("gap", std::make_unique<GlobalAvgPool>());
  s->add("fc", std::make_unique<Linear>(o.classes));
  return s;
}

// Basic residual block without normalization; the second conv starts small so
// deep stacks begin close to the identity.
LayerPtr basic_block(int in_c, int out_c, int stride) {
  auto body = seq();
  body->add("conv_a", std::make_unique<Conv2d>(out_c, 3, stride, 1));
  body->add("relu", std::make_unique<ReLU>());
  body->add("conv_b", std::make_unique<Conv2d>(out_c, 3, 1, 1, true, 0.2));
  std::unique_ptr<Sequential> shortcut;
  if (stride != 1 || in_c != out_c) {
    shortcut = seq();
    shortcut->add("proj", std::make_unique<Conv2d>(out_c, 1, stride, 0, false));
  }
  return std::make_unique<Residual>(std::move(body), std::move(shortcut));
}

std::unique_ptr<Sequential> build_resnet(const ArchOptions& o, int base, std::vector<int> mults, int blocks) {
  auto s = seq();
  s->add("stem", std::make_unique<Conv2d>(base)).add("stem_relu", std::make_unique<ReLU>());
  int in_c = base;
  for (std::size_t g = 0; g < mults.size(); ++g) {
    const int out_c = base * mults[g];
    for (int b = 0; b < blocks; ++b) {
      const int stride = (g > 0 && b == 0) ? 2 : 1;
      const std::string name = "group" + std::to_string(g + 1) + ".block" + std::to_string(b + 1);
      s->add(name, basic_block(in_c, out_c, stride));
      s->add(name + "_relu", std::make_unique<ReLU>());
      in_c = out_c;
    }
  }
  s->add("gap", std::make_unique<GlobalAvgPool>());
  s->add("fc", std::make_unique<Linear>(o.classes));
  return s;
}

const std::map<std::string, Builder>& builders() {
  static const std::map<std::string, Builder> b{
      {"linear", build_linear},
      {"cnn-small", build_cnn_small},
      {"vgg-like", build_vgg_like},
      {"wrn-16-1-like", [](const ArchOptions& o) { return build_resnet(o, width_or(o, 16), {1, 2, 4}, 2); }},
      {"resnet-18-like", [](const ArchOptions& o) { return build_resnet(o, width_or(o, 64), {1, 2, 4, 8}, 2); }},
  };
  return b;
}

void hash_update_options(EVP_MD_CTX* ctx, const std::string& arch, const ArchOptions& o) {
  std::string desc = arch + "|" + std::to_string(o.input.c) + "x" + std::to_string(o.input.h) + "x" +
                     std::to_string(o.input.w) + "|" + std::to_string(o.classes) + "|" + std::to_string(o.width) + "|";
  EVP_DigestUpdate(ctx, desc.data(), desc.size());
}

std::string to_hex(const unsigned char* d, unsigned n) {
  static const char* hex = "0123456789abcdef";
  std::string s;
  for (unsigned i = 0; i < n; ++i) {
    s.push_back(hex[d[i] >> 4]);
    s.push_back(hex[d[i] & 15]);
  }
  return s;
}

}  // namespace

std::vector<std::string> registered_architectures() {
  std::vector<std::string> ids;
  for (const auto& [k, v] : builders()) ids.push_back(k);
  return ids;
}

std::shared_ptr<const Network> build_architecture(const std::string& arch_id, const ArchOptions& opts) {
  auto it = builders().find(arch_id);
  if (it == builders().end()) throw ConfigError("unknown architecture '" + arch_id + "'");
  if (opts.classes < 1) throw DomainError("class count must be positive");
  return std::make_shared<const Network>(opts.input, it->second(opts));
}

std::size_t registered_param_count(const std::string& arch_id, const ArchOptions& opts) {
  return build_architecture(arch_id, opts)->param_count();
}

ModelHandle::ModelHandle(std::string arch_id, ArchOptions opts, std::vector<double> params)
    : arch_id_(std::move(arch_id)), opts_(opts), net_(build_architecture(arch_id_, opts_)), params_(std::move(params)) {
  if (params_.size() != net_->param_count())
    throw ShapeError("parameter count " + std::to_string(params_.size()) + " does not match " + arch_id_ + " (" +
                     std::to_string(net_->param_count()) + ")");
}

ModelHandle ModelHandle::create(const std::string& arch_id, const ArchOptions& opts, std::uint64_t seed) {
  auto net = build_architecture(arch_id, opts);
  std::vector<double> params(net->param_count());
  Rng rng(seed);
  net->init(params, rng);
  ModelHandle m(arch_id, opts, std::move(params));
  m.manifest_["init_seed"] = seed;
  return m;
}

Tensor ModelHandle::forward(const Tensor& x, Tape* tape) const {
  counters_.forward.fetch_add(1, std::memory_order_relaxed);
  return net_->forward(params_, x, tape);
}

Tensor ModelHandle::backward(const Tape& tape, const Tensor& dlogits, std::span<double> grad, bool need_din) const {
  counters_.backward.fetch_add(1, std::memory_order_relaxed);
  return net_->backward(params_, tape, dlogits, grad, need_din);
}

std::string ModelHandle::content_hash() const {
  EVP_MD_CTX* ctx = EVP_MD_CTX_new();
  EVP_DigestInit_ex(ctx, EVP_sha256(), nullptr);
  hash_update_options(ctx, arch_id_, opts_);
  EVP_DigestUpdate(ctx, params_.data(), params_.size() * sizeof(double));
  unsigned char d[EVP_MAX_MD_SIZE];
  unsigned n = 0;
  EVP_DigestFinal_ex(ctx, d, &n);
  EVP_MD_CTX_free(ctx);
  return to_hex(d, n);
}

std::string sha256_hex(std::span<const std::uint8_t> bytes) {
  unsigned char d[EVP_MAX_MD_SIZE];
  unsigned n = 0;
  EVP_Digest(bytes.data(), bytes.size(), d, &n, EVP_sha256(), nullptr);
  return to_hex(d, n);
}

std::string sha256_hex(const std::string& text) {
  return sha256_hex(std::span<const std::uint8_t>(reinterpret_cast<const std::uint8_t*>(text.data()), text.size()));
}

nlohmann::json to_json(const ArchOptions& o) {
  return {{"input", {o.input.c, o.input.h, o.input.w}}, {"classes", o.classes}, {"width", o.width}};
}

ArchOptions arch_options_from_json(const nlohmann::json& j) {
  ArchOptions o;
  auto in = j.at("input").get<std::vector<int>>();
  if (in.size() != 3) throw ConfigError("input shape must have three entries");
  o.input = {in[0], in[1], in[2]};
  o.classes = j.at("classes").get<int>();
  o.width = j.value("width", 0);
  return o;
}

void save_checkpoint(const ModelHandle& model, const fs::path& stem) {
  if (stem.has_parent_path()) fs::create_directories(stem.parent_path());
  fs::path pfile = stem;
  pfile += ".params";
  fs::path jfile = stem;
  jfile += ".json";
  {
    std::ofstream out(pfile, std::ios::binary);
    if (!out) throw IoError("cannot write " + pfile.string());
    out.write(reinterpret_cast<const char*>(model.params().data()),
              static_cast<std::streamsize>(model.params().size() * sizeof(double)));
  }
  nlohmann::json layout = nlohmann::json::array();
  for (const auto& b : model.network().layout())
    layout.push_back({{"name", b.name}, {"offset", b.offset}, {"size", b.size}, {"layer", b.layer}});
  nlohmann::json j{{"arch_id", model.arch_id()},
                   {"options", to_json(model.options())},
                   {"param_count", model.param_count()},
                   {"layout", layout},
                   {"train_manifest", model.manifest()},
                   {"content_hash", model.content_hash()}};
  std::ofstream out(jfile);
  if (!out) throw IoError("cannot write " + jfile.string());
  out << j.dump(2) << "\n";
}

ModelHandle load_checkpoint(const fs::path& stem) {
  fs::path pfile = stem;
  pfile += ".params";
  fs::path jfile = stem;
  jfile += ".json";
  std::ifstream jin(jfile);
  if (!jin) throw IoError("cannot read " + jfile.string());
  nlohmann::json j;
  try {
    jin >> j;
  } catch (const nlohmann::json::exception& e) {
    throw IoError("corrupt checkpoint manifest " + jfile.string() + ": " + e.what());
  }
  const std::size_t count = j.at("param_count").get<std::size_t>();
  std::vector<double> params(count);
  std::ifstream pin(pfile, std::ios::binary);
  if (!pin) throw IoError("cannot read " + pfile.string());
  pin.read(reinterpret_cast<char*>(params.data()), static_cast<std::streamsize>(count * sizeof(double)));
  if (static_cast<std::size_t>(pin.gcount()) != count * sizeof(double)) throw IoError("truncated checkpoint " + pfile.string());
  ModelHandle m(j.at("arch_id").get<std::string>(), arch_options_from_json(j.at("options")), std::move(params));
  m.manifest() = j.value("train_manifest", nlohmann::json::object());
  if (j.contains("content_hash") && j["content_hash"].get<std::string>() != m.content_hash())
    throw IoError("checkpoint content hash mismatch for " + stem.string());
  return m;
}

}  // namespace extmark
