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

#include "extmark/signatures.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <numeric>

#include "extmark/error.hpp"
#include "extmark/rng.hpp"
#include "extmark/trainer.hpp"

namespace extmark {

std::string to_string(SignatureMode m) { return m == SignatureMode::sign ? "sign" : "raw"; }

SignatureMode signature_mode_from_string(const std::string& s) {
  if (s == "sign") return SignatureMode::sign;
  if (s == "raw") return SignatureMode::raw;
  throw ConfigError("unknown signature mode '" + s + "' (expected sign or raw)");
}

std::string ParameterMask::hash() const {
  std::vector<std::uint8_t> bytes(sizeof(std::uint64_t) * (selection.size() + 1));
  std::uint64_t n = param_count;
  std::memcpy(bytes.data(), &n, sizeof n);
  for (std::size_t i = 0; i < selection.size(); ++i) {
    std::uint64_t v = selection[i];
    std::memcpy(bytes.data() + sizeof n * (i + 1), &v, sizeof v);
  }
  return sha256_hex(bytes);
}

ParameterMask mask_all(const ModelHandle& model) {
  ParameterMask m;
  m.param_count = model.param_count();
  m.selection.resize(m.param_count);
  std::iota(m.selection.begin(), m.selection.end(), std::size_t{0});
  m.derivation = {{"kind", "all"}};
  return m;
}

ParameterMask mask_last_layers(const ModelHandle& model, int n) {
  const int layers = model.network().parameterized_layers();
  if (n < 1 || n > layers)
    throw DomainError("last_layers(" + std::to_string(n) + ") outside [1, " + std::to_string(layers) + "]");
  ParameterMask m;
  m.param_count = model.param_count();
  for (const ParamBlock& b : model.network().layout())
    if (b.layer >= layers - n)
      for (std::size_t i = 0; i < b.size; ++i) m.selection.push_back(b.offset + i);
  std::sort(m.selection.begin(), m.selection.end());
  m.derivation = {{"kind", "last_layers"}, {"n", n}};
  return m;
}

ParameterMask mask_random(const ModelHandle& model, std::size_t k, std::uint64_t seed) {
  if (k < 1 || k > model.param_count()) throw DomainError("random mask size outside [1, |theta|]");
  ParameterMask m;
  m.param_count = model.param_count();
  Rng rng(seed);
  m.selection = rng.sample_without_replacement(m.param_count, k);
  m.derivation = {{"kind", "random"}, {"k", k}, {"seed", seed}};
  return m;
}

ParameterMask default_mask(const ModelHandle& model, std::size_t cap) {
  const int n = std::min(2, model.network().parameterized_layers());
  ParameterMask m = mask_last_layers(model, n);
  if (m.size() > cap) {
    constexpr std::uint64_t kCapSeed = 0x5eed;
    Rng rng(kCapSeed);
    auto pick = rng.sample_without_replacement(m.size(), cap);
    std::vector<std::size_t> sel(cap);
    for (std::size_t i = 0; i < cap; ++i) sel[i] = m.selection[pick[i]];
    m.selection = std::move(sel);
  }
  m.derivation = {{"kind", "default"}, {"n", n}, {"cap", cap}};
  return m;
}

ParameterMask mask_from_derivation(const ModelHandle& model, const nlohmann::json& d) {
  const std::string kind = d.at("kind").get<std::string>();
  if (kind == "all") return mask_all(model);
  if (kind == "last_layers") return mask_last_layers(model, d.at("n").get<int>());
  if (kind == "random") return mask_random(model, d.at("k").get<std::size_t>(), d.at("seed").get<std::uint64_t>());
  if (kind == "default") return default_mask(model, d.at("cap").get<std::size_t>());
  throw ConfigError("unknown mask kind '" + kind + "'");
}

namespace {

void check_mask(const ModelHandle& model, const ParameterMask& mask) {
  if (mask.param_count != model.param_count())
    throw DomainError("mask built for " + std::to_string(mask.param_count) + " parameters, model has " +
                      std::to_string(model.param_count()));
  if (!mask.selection.empty() && mask.selection.back() >= model.param_count())
    throw DomainError("mask index outside the parameter vector");
}

GradientSignature project(const std::vector<double>& grad, SignatureMode mode, const ParameterMask& mask,
                          const std::string& mask_hash) {
  GradientSignature s;
  s.mode = mode;
  s.mask_hash = mask_hash;
  s.values.resize(mask.size());
  for (std::size_t i = 0; i < mask.size(); ++i) {
    const double g = grad[mask.selection[i]];
    s.values[i] = mode == SignatureMode::sign ? static_cast<float>((g > 0) - (g < 0)) : static_cast<float>(g);
  }
  return s;
}

}  // namespace

GradientSignature extract_signature(const ModelHandle& model, const LabeledImage& sample, SignatureMode mode,
                                    const ParameterMask& mask, double loss_scale) {
  check_mask(model, mask);
  return project(loss_gradient(model, sample, loss_scale), mode, mask, mask.hash());
}

std::vector<GradientSignature> extract_signatures(const ModelHandle& model, const ImageDataset& data,
                                                  SignatureMode mode, const ParameterMask& mask) {
  check_mask(model, mask);
  const std::string h = mask.hash();
  std::vector<GradientSignature> out(data.size());
  const auto n = static_cast<std::ptrdiff_t>(data.size());
  std::string error;
#pragma omp parallel for schedule(dynamic)
  for (std::ptrdiff_t i = 0; i < n; ++i) {
    try {
      out[i] = project(loss_gradient(model, data[static_cast<std::size_t>(i)]), mode, mask, h);
      out[i].source_sample_id = i;
    } catch (const std::exception& e) {
#pragma omp critical
      error = e.what();
    }
  }
  if (!error.empty()) throw DomainError(error);
  return out;
}

MetaSet build_meta_training_set(const ModelHandle& victim, const ModelHandle& benign, const ImageDataset& transformed,
                                SignatureMode mode, const ParameterMask& mask) {
  if (victim.arch_id() != benign.arch_id() || victim.param_count() != benign.param_count())
    throw DomainError("victim and benign models must share an architecture");
  if (transformed.empty()) throw DomainError("transformed dataset is empty");
  auto sv = extract_signatures(victim, transformed, mode, mask);
  auto sb = extract_signatures(benign, transformed, mode, mask);
  MetaSet set;
  set.reserve(2 * transformed.size());
  for (std::size_t i = 0; i < transformed.size(); ++i) {
    set.push_back({std::move(sv[i]), +1});
    set.push_back({std::move(sb[i]), -1});
  }
  return set;
}

nlohmann::json to_json(const MetaHyper& h) {
  return {{"kind", h.kind == MetaKind::logistic ? "logistic" : "mlp"},
          {"hidden", h.hidden},
          {"epochs", h.epochs},
          {"batch_size", h.batch_size},
          {"learning_rate", h.learning_rate},
          {"l2", h.l2}};
}

MetaHyper meta_hyper_from_json(const nlohmann::json& j) {
  MetaHyper h;
  const std::string kind = j.value("kind", "logistic");
  if (kind == "logistic") h.kind = MetaKind::logistic;
  else if (kind == "mlp") h.kind = MetaKind::mlp;
  else throw ConfigError("unknown meta-classifier kind '" + kind + "'");
  h.hidden = j.value("hidden", h.hidden);
  h.epochs = j.value("epochs", h.epochs);
  h.batch_size = j.value("batch_size", h.batch_size);
  h.learning_rate = j.value("learning_rate", h.learning_rate);
  h.l2 = j.value("l2", h.l2);
  return h;
}

MetaClassifier::MetaClassifier(MetaKind kind, std::size_t input_dim, int hidden, SignatureMode mode,
                               std::string mask_hash, std::vector<double> weights)
    : kind_(kind), input_dim_(input_dim), hidden_(kind == MetaKind::mlp ? hidden : 0), mode_(mode),
      mask_hash_(std::move(mask_hash)), weights_(std::move(weights)) {
  if (kind == MetaKind::mlp && hidden < 1) throw DomainError("mlp meta-classifier needs hidden >= 1");
  if (weights_.size() != weight_count(kind, input_dim, hidden_))
    throw ShapeError("meta-classifier weight count does not match its shape");
}

std::size_t MetaClassifier::weight_count(MetaKind kind, std::size_t d, int hidden) {
  if (kind == MetaKind::logistic) return d + 1;
  const auto h = static_cast<std::size_t>(hidden);
  return h * d + h + h + 1;
}

double MetaClassifier::logit(std::span<const float> x, std::span<double> grad, double scale) const {
  const std::size_t d = input_dim_;
  const double* w = weights_.data();
  if (kind_ == MetaKind::logistic) {
    double z = w[d];
    for (std::size_t i = 0; i < d; ++i) z += w[i] * x[i];
    if (!grad.empty()) {
      for (std::size_t i = 0; i < d; ++i) grad[i] += scale * x[i];
      grad[d] += scale;
    }
    return z;
  }
  const auto h = static_cast<std::size_t>(hidden_);
  const double* b1 = w + h * d;
  const double* w2 = b1 + h;
  const double b2 = w2[h];
  std::vector<double> a(h);
  double z = b2;
  for (std::size_t j = 0; j < h; ++j) {
    double s = b1[j];
    const double* row = w + j * d;
    for (std::size_t i = 0; i < d; ++i) s += row[i] * x[i];
    a[j] = s > 0 ? s : 0.0;
    z += w2[j] * a[j];
  }
  if (!grad.empty()) {
    double* g = grad.data();
    for (std::size_t j = 0; j < h; ++j) {
      g[h * d + h + j] += scale * a[j];
      if (a[j] > 0) {
        const double dj = scale * w2[j];
        double* grow = g + j * d;
        for (std::size_t i = 0; i < d; ++i) grow[i] += dj * x[i];
        g[h * d + j] += dj;
      }
    }
    g[h * d + 2 * h] += scale;
  }
  return z;
}

namespace {

double sigmoid(double z) {
  return z >= 0 ? 1.0 / (1.0 + std::exp(-z)) : std::exp(z) / (1.0 + std::exp(z));
}

}  // namespace

double MetaClassifier::posterior(const GradientSignature& sig) const {
  if (sig.values.size() != input_dim_)
    throw DomainError("signature length " + std::to_string(sig.values.size()) + " != meta input dim " +
                      std::to_string(input_dim_));
  if (sig.mode != mode_) throw DomainError("signature mode differs from the meta-classifier's");
  if (!mask_hash_.empty() && !sig.mask_hash.empty() && sig.mask_hash != mask_hash_)
    throw DomainError("signature mask differs from the meta-classifier's");
  return sigmoid(logit(sig.values));
}

double classify(const MetaClassifier& meta, const GradientSignature& sig) { return meta.posterior(sig); }

MetaClassifier train_meta_classifier(const MetaSet& set, const MetaHyper& hyper, std::uint64_t seed) {
  if (set.empty()) throw DomainError("meta training set is empty");
  bool pos = false, neg = false;
  for (const auto& e : set) {
    if (e.label == 1) pos = true;
    else if (e.label == -1) neg = true;
    else throw DomainError("meta labels must be +1 or -1");
  }
  if (!pos || !neg) throw DomainError("meta training set needs both labels");
  if (hyper.epochs < 0 || hyper.batch_size < 1 || !(hyper.learning_rate > 0) || hyper.l2 < 0)
    throw ConfigError("invalid meta-classifier hyperparameters");
  const std::size_t d = set.front().signature.values.size();
  const SignatureMode mode = set.front().signature.mode;
  const std::string mask_hash = set.front().signature.mask_hash;
  for (const auto& e : set)
    if (e.signature.values.size() != d || e.signature.mode != mode)
      throw DomainError("meta training signatures disagree in length or mode");

  Rng rng(seed);
  const int hidden = hyper.kind == MetaKind::mlp ? hyper.hidden : 0;
  std::vector<double> w(MetaClassifier::weight_count(hyper.kind, d, hidden), 0.0);
  std::vector<bool> decays(w.size(), true);
  if (hyper.kind == MetaKind::logistic) {
    decays[d] = false;
  } else {
    const auto h = static_cast<std::size_t>(hidden);
    const double s1 = std::sqrt(2.0 / static_cast<double>(d));
    for (std::size_t i = 0; i < h * d; ++i) w[i] = rng.normal(0.0, s1);
    const double s2 = std::sqrt(1.0 / static_cast<double>(h));
    for (std::size_t j = 0; j < h; ++j) w[h * d + h + j] = rng.normal(0.0, s2);
    for (std::size_t j = 0; j < h; ++j) decays[h * d + j] = false;
    decays[h * d + 2 * h] = false;
  }
  MetaClassifier meta(hyper.kind, d, hidden, mode, mask_hash, std::move(w));

  std::vector<std::size_t> order(set.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::vector<double> grad(meta.weights().size());
  AdamState adam;
  const auto bs = static_cast<std::size_t>(hyper.batch_size);
  double last_loss = 0.0;
  for (int epoch = 0; epoch < hyper.epochs; ++epoch) {
    rng.shuffle(order.begin(), order.end());
    double total = 0.0;
    for (std::size_t start = 0; start < order.size(); start += bs) {
      const std::size_t end = std::min(start + bs, order.size());
      const double inv = 1.0 / static_cast<double>(end - start);
      std::fill(grad.begin(), grad.end(), 0.0);
      for (std::size_t k = start; k < end; ++k) {
        const MetaExample& e = set[order[k]];
        const double y = e.label > 0 ? 1.0 : 0.0;
        // logit() reads the current weights; the gradient w.r.t. z scales its Jacobian.
        const double z = meta.logit(e.signature.values);
        const double p = sigmoid(z);
        total += -(y * std::log(std::max(p, 1e-300)) + (1 - y) * std::log(std::max(1 - p, 1e-300)));
        meta.logit(e.signature.values, grad, (p - y) * inv);
      }
      auto& wv = meta.mutable_weights();
      for (std::size_t i = 0; i < wv.size(); ++i)
        if (decays[i]) grad[i] += hyper.l2 * wv[i];
      adam_step(wv, grad, adam, hyper.learning_rate);
    }
    last_loss = total / static_cast<double>(order.size());
  }
  meta.record()["hyper"] = to_json(hyper);
  meta.record()["seed"] = seed;
  meta.record()["train_size"] = set.size();
  meta.record()["final_loss"] = last_loss;
  return meta;
}

double meta_accuracy(const MetaClassifier& meta, const MetaSet& set) {
  if (set.empty()) throw DomainError("cannot score an empty meta set");
  std::size_t correct = 0;
  for (const auto& e : set) correct += (meta.posterior(e.signature) > 0.5) == (e.label > 0);
  return static_cast<double>(correct) / static_cast<double>(set.size());
}

namespace {

constexpr char kSigMagic[4] = {'E', 'X', 'S', 'G'};
constexpr std::uint32_t kSigVersion = 1;

template <class T>
void put(std::ofstream& f, const T& v) {
  f.write(reinterpret_cast<const char*>(&v), sizeof v);
}
template <class T>
T get(std::ifstream& f) {
  T v{};
  f.read(reinterpret_cast<char*>(&v), sizeof v);
  if (!f) throw IoError("truncated signature container");
  return v;
}

}  // namespace

void save_signatures(const std::vector<GradientSignature>& sigs, const std::filesystem::path& path) {
  const std::uint64_t dim = sigs.empty() ? 0 : sigs.front().values.size();
  const SignatureMode mode = sigs.empty() ? SignatureMode::sign : sigs.front().mode;
  const std::string mh = sigs.empty() ? std::string() : sigs.front().mask_hash;
  for (const auto& s : sigs)
    if (s.values.size() != dim || s.mode != mode || s.mask_hash != mh)
      throw DomainError("signature batch mixes lengths, modes or masks");
  std::ofstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot write " + path.string());
  f.write(kSigMagic, 4);
  put(f, kSigVersion);
  put(f, static_cast<std::uint8_t>(mode == SignatureMode::sign ? 0 : 1));
  char hash[64] = {};
  std::memcpy(hash, mh.data(), std::min<std::size_t>(mh.size(), 64));
  f.write(hash, 64);
  put(f, dim);
  put(f, static_cast<std::uint64_t>(sigs.size()));
  for (const auto& s : sigs) f.write(reinterpret_cast<const char*>(s.values.data()), static_cast<std::streamsize>(dim * sizeof(float)));
  for (const auto& s : sigs) put(f, static_cast<std::int64_t>(s.source_sample_id));
  if (!f) throw IoError("failed writing " + path.string());
}

std::vector<GradientSignature> load_signatures(const std::filesystem::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot read " + path.string());
  char magic[4];
  f.read(magic, 4);
  if (!f || std::memcmp(magic, kSigMagic, 4) != 0) throw IoError(path.string() + " is not a signature container");
  if (get<std::uint32_t>(f) != kSigVersion) throw IoError("unsupported signature container version");
  const auto mode_byte = get<std::uint8_t>(f);
  if (mode_byte > 1) throw IoError("bad signature mode byte");
  char hash[64];
  f.read(hash, 64);
  std::string mh(hash, strnlen(hash, 64));
  const auto dim = get<std::uint64_t>(f);
  const auto count = get<std::uint64_t>(f);
  std::vector<GradientSignature> out(count);
  for (auto& s : out) {
    s.mode = mode_byte == 0 ? SignatureMode::sign : SignatureMode::raw;
    s.mask_hash = mh;
    s.values.resize(dim);
    f.read(reinterpret_cast<char*>(s.values.data()), static_cast<std::streamsize>(dim * sizeof(float)));
    if (!f) throw IoError("truncated signature container");
  }
  for (auto& s : out) s.source_sample_id = get<std::int64_t>(f);
  return out;
}

void save_meta_classifier(const MetaClassifier& meta, const std::filesystem::path& stem) {
  auto wpath = stem;
  wpath += ".weights";
  std::ofstream f(wpath, std::ios::binary);
  if (!f) throw IoError("cannot write " + wpath.string());
  auto w = meta.weights();
  f.write(reinterpret_cast<const char*>(w.data()), static_cast<std::streamsize>(w.size() * sizeof(double)));
  if (!f) throw IoError("failed writing " + wpath.string());
  nlohmann::json j;
  j["kind"] = meta.kind() == MetaKind::logistic ? "logistic" : "mlp";
  j["input_dim"] = meta.input_dim();
  j["hidden"] = meta.hidden();
  j["mode"] = to_string(meta.mode());
  j["mask_hash"] = meta.mask_hash();
  j["weight_count"] = w.size();
  j["weights_sha256"] = sha256_hex(std::span<const std::uint8_t>(reinterpret_cast<const std::uint8_t*>(w.data()),
                                                                  w.size() * sizeof(double)));
  j["record"] = meta.record();
  auto jpath = stem;
  jpath += ".json";
  std::ofstream jf(jpath);
  if (!jf) throw IoError("cannot write " + jpath.string());
  jf << j.dump(2) << "\n";
}

MetaClassifier load_meta_classifier(const std::filesystem::path& stem) {
  auto jpath = stem;
  jpath += ".json";
  std::ifstream jf(jpath);
  if (!jf) throw IoError("cannot read " + jpath.string());
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(jf);
  } catch (const nlohmann::json::exception& e) {
    throw IoError("bad meta-classifier manifest: " + std::string(e.what()));
  }
  const std::size_t n = j.at("weight_count").get<std::size_t>();
  std::vector<double> w(n);
  auto wpath = stem;
  wpath += ".weights";
  std::ifstream f(wpath, std::ios::binary);
  if (!f) throw IoError("cannot read " + wpath.string());
  f.read(reinterpret_cast<char*>(w.data()), static_cast<std::streamsize>(n * sizeof(double)));
  if (!f) throw IoError("truncated meta-classifier weights");
  const std::string digest = sha256_hex(
      std::span<const std::uint8_t>(reinterpret_cast<const std::uint8_t*>(w.data()), n * sizeof(double)));
  if (digest != j.at("weights_sha256").get<std::string>()) throw IoError("meta-classifier weights hash mismatch");
  const std::string kind = j.at("kind").get<std::string>();
  MetaClassifier meta(kind == "mlp" ? MetaKind::mlp : MetaKind::logistic, j.at("input_dim").get<std::size_t>(),
                      j.at("hidden").get<int>(), signature_mode_from_string(j.at("mode").get<std::string>()),
                      j.at("mask_hash").get<std::string>(), std::move(w));
  meta.record() = j.value("record", nlohmann::json::object());
  return meta;
}

}  // namespace extmark
