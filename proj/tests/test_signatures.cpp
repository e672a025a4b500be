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
#include <algorithm>
#include <cmath>
#include <fstream>

#include "doctest.h"
#include "extmark/error.hpp"
#include "extmark/signatures.hpp"
#include "extmark/trainer.hpp"
#include "fixtures.hpp"

using namespace extmark;
using namespace extmark::testing;

namespace {

// logits = (w0 * x, w1 * x): two parameters, no bias.
ModelHandle two_param_model(double w0, double w1) {
  ArchOptions o;
  o.input = Shape{1, 1, 1};
  o.classes = 2;
  return ModelHandle("linear", o, {w0, w1});
}

LabeledImage scalar(double x, int y) { return LabeledImage(Shape{1, 1, 1}, {x}, y); }

ModelHandle trained(const ImageDataset& d, std::uint64_t seed, int epochs = 3) {
  TrainConfig tc;
  tc.epochs = epochs;
  tc.batch_size = 32;
  tc.width = 2;
  tc.seed = seed;
  return train_model(d, "cnn-small", tc);
}

}  // namespace

TEST_CASE("signatures of a two-parameter model match hand-computed gradients") {
  ModelHandle m = two_param_model(1.0, -1.0);
  ParameterMask all = mask_all(m);
  // x = 0.5, y = 0: logits (0.5, -0.5), p0 = 1 / (1 + e^-1), dW = ((p0 - 1) x, (1 - p0) x)
  const double p0 = 1.0 / (1.0 + std::exp(-1.0));
  GradientSignature raw = extract_signature(m, scalar(0.5, 0), SignatureMode::raw, all);
  CHECK(raw.values[0] == doctest::Approx((p0 - 1.0) * 0.5).epsilon(1e-6));
  CHECK(raw.values[1] == doctest::Approx((1.0 - p0) * 0.5).epsilon(1e-6));
  GradientSignature sg = extract_signature(m, scalar(0.5, 0), SignatureMode::sign, all);
  CHECK(sg.values == std::vector<float>{-1.0f, 1.0f});
  CHECK(extract_signature(m, scalar(0.5, 1), SignatureMode::sign, all).values == std::vector<float>{1.0f, -1.0f});
  // zero gradient: sgn(0) = 0
  CHECK(extract_signature(m, scalar(0.0, 0), SignatureMode::sign, all).values == std::vector<float>{0.0f, 0.0f});
  CHECK(sg.mask_hash == all.hash());
}

TEST_CASE("sign signatures are invariant to positive loss scaling, raw ones scale linearly") {
  ImageDataset d = toy_data(6, 3);
  ModelHandle m = ModelHandle::create("cnn-small", toy_options(), 4);
  ParameterMask mask = default_mask(m);
  for (const auto& x : d.items()) {
    auto a = extract_signature(m, x, SignatureMode::sign, mask, 1.0);
    for (double c : {0.5, 3.0, 37.5}) CHECK(extract_signature(m, x, SignatureMode::sign, mask, c).values == a.values);
    auto r1 = extract_signature(m, x, SignatureMode::raw, mask, 1.0);
    auto r2 = extract_signature(m, x, SignatureMode::raw, mask, 4.0);
    for (std::size_t i = 0; i < r1.values.size(); ++i) CHECK(r2.values[i] == doctest::Approx(4.0 * r1.values[i]));
  }
}

TEST_CASE("parameter masks") {
  ModelHandle m = ModelHandle::create("cnn-small", toy_options(), 4);
  CHECK(mask_all(m).size() == m.param_count());
  ParameterMask last = mask_last_layers(m, 1);
  std::size_t fc2 = 0;
  for (const auto& b : m.network().layout())
    if (b.layer == m.network().parameterized_layers() - 1) fc2 += b.size;
  CHECK(last.size() == fc2);
  CHECK(last.selection.back() == m.param_count() - 1);
  CHECK_THROWS_AS(mask_last_layers(m, 0), DomainError);
  ParameterMask r = mask_random(m, 50, 9);
  CHECK(r.size() == 50);
  CHECK(r.hash() == mask_random(m, 50, 9).hash());
  CHECK(r.hash() != mask_random(m, 50, 10).hash());
  CHECK(default_mask(m, 20).size() == 20);
  for (const ParameterMask& mk : {last, r, default_mask(m, 20)})
    CHECK(mask_from_derivation(m, mk.derivation).hash() == mk.hash());
  ModelHandle other = ModelHandle::create("vgg-like", toy_options(), 4);
  CHECK_THROWS_AS(extract_signature(other, toy_data(1, 1)[0], SignatureMode::sign, r), DomainError);
}

TEST_CASE("meta training set is balanced and interleaved") {
  ImageDataset d = toy_data(10, 8);
  ModelHandle v = ModelHandle::create("cnn-small", toy_options(), 1), b = ModelHandle::create("cnn-small", toy_options(), 2);
  MetaSet set = build_meta_training_set(v, b, d, SignatureMode::sign, default_mask(v));
  REQUIRE(set.size() == 20);
  for (std::size_t i = 0; i < set.size(); ++i) {
    CHECK(set[i].label == (i % 2 == 0 ? 1 : -1));
    CHECK(set[i].signature.source_sample_id == static_cast<std::int64_t>(i / 2));
  }
  ModelHandle lin = ModelHandle::create("linear", toy_options(), 2);
  CHECK_THROWS_AS(build_meta_training_set(v, lin, d, SignatureMode::sign, default_mask(v)), DomainError);
}

TEST_CASE("identical victim and benign models leave the meta-classifier at chance") {
  ImageDataset d = toy_data(40, 8);
  ModelHandle v = ModelHandle::create("cnn-small", toy_options(), 1);
  MetaSet set = build_meta_training_set(v, v, d, SignatureMode::sign, default_mask(v));
  MetaClassifier c = train_meta_classifier(set, MetaHyper{}, 3);
  for (std::size_t i = 0; i < set.size(); i += 2) {
    CHECK(c.posterior(set[i].signature) == c.posterior(set[i + 1].signature));
    CHECK(std::abs(c.posterior(set[i].signature) - 0.5) < 0.1);
  }
  CHECK(meta_accuracy(c, set) == doctest::Approx(0.5));
}

TEST_CASE("meta-classifier separates two different models") {
  ImageDataset train = toy_data(200, 31), probe = toy_data(40, 32);
  ModelHandle v = trained(train, 1), b = trained(train, 2);
  ParameterMask mask = default_mask(v);
  MetaSet set = build_meta_training_set(v, b, probe, SignatureMode::sign, mask);
  for (MetaKind kind : {MetaKind::logistic, MetaKind::mlp}) {
    MetaHyper h;
    h.kind = kind;
    MetaClassifier c = train_meta_classifier(set, h, 4);
    CHECK(meta_accuracy(c, set) >= 0.9);
    CHECK(c.record().contains("final_loss"));
    // deterministic in the seed
    CHECK(train_meta_classifier(set, h, 4).weights()[0] == c.weights()[0]);
  }
  MetaSet one_sided(set.begin(), set.begin() + 1);
  CHECK_THROWS_AS(train_meta_classifier(one_sided, MetaHyper{}, 1), DomainError);
}

TEST_CASE("meta-classifier logit gradient matches finite differences") {
  std::vector<float> x{1.0f, -1.0f, 0.0f, 1.0f};
  for (MetaKind kind : {MetaKind::logistic, MetaKind::mlp}) {
    const int hidden = 3;
    std::vector<double> w(MetaClassifier::weight_count(kind, x.size(), hidden));
    Rng rng(5);
    for (auto& v : w) v = rng.normal(0.0, 0.5);
    MetaClassifier c(kind, x.size(), hidden, SignatureMode::sign, "h", w);
    std::vector<double> g(w.size(), 0.0);
    c.logit(x, g, 1.0);
    for (std::size_t i = 0; i < w.size(); ++i) {
      MetaClassifier up = c, down = c;
      up.mutable_weights()[i] += 1e-6;
      down.mutable_weights()[i] -= 1e-6;
      CHECK(g[i] == doctest::Approx((up.logit(x) - down.logit(x)) / 2e-6).epsilon(1e-5));
    }
  }
}

TEST_CASE("logistic posterior: zero weights give one half, negated weights give the complement") {
  GradientSignature sig{{1, 0, -1, 1}, SignatureMode::sign, "h", 0};
  MetaClassifier zero(MetaKind::logistic, 4, 0, SignatureMode::sign, "h", std::vector<double>(5, 0.0));
  CHECK(zero.posterior(sig) == 0.5);
  std::vector<double> w{0.3, -0.7, 1.1, 0.2, -0.4}, neg(w.size());
  std::transform(w.begin(), w.end(), neg.begin(), [](double v) { return -v; });
  MetaClassifier c(MetaKind::logistic, 4, 0, SignatureMode::sign, "h", w);
  MetaClassifier n(MetaKind::logistic, 4, 0, SignatureMode::sign, "h", neg);
  CHECK(n.posterior(sig) == doctest::Approx(1.0 - c.posterior(sig)).epsilon(1e-14));
}

TEST_CASE("posterior rejects mismatched signatures") {
  MetaClassifier c(MetaKind::logistic, 3, 0, SignatureMode::sign, "abc", std::vector<double>(4, 0.1));
  GradientSignature ok{{1, 0, -1}, SignatureMode::sign, "abc", 0};
  CHECK(c.posterior(ok) > 0.5);
  GradientSignature wrong_dim{{1, 0}, SignatureMode::sign, "abc", 0};
  GradientSignature wrong_mode{{1, 0, -1}, SignatureMode::raw, "abc", 0};
  GradientSignature wrong_mask{{1, 0, -1}, SignatureMode::sign, "xyz", 0};
  CHECK_THROWS_AS(c.posterior(wrong_dim), DomainError);
  CHECK_THROWS_AS(c.posterior(wrong_mode), DomainError);
  CHECK_THROWS_AS(c.posterior(wrong_mask), DomainError);
}

TEST_CASE("signature container and meta-classifier persistence round trip") {
  TempDir tmp("sig");
  ImageDataset d = toy_data(5, 2);
  ModelHandle m = ModelHandle::create("cnn-small", toy_options(), 4);
  ParameterMask mask = default_mask(m);
  auto sigs = extract_signatures(m, d, SignatureMode::raw, mask);
  save_signatures(sigs, tmp.path() / "s.bin");
  auto back = load_signatures(tmp.path() / "s.bin");
  REQUIRE(back.size() == sigs.size());
  for (std::size_t i = 0; i < sigs.size(); ++i) {
    CHECK(back[i].values == sigs[i].values);
    CHECK(back[i].mode == SignatureMode::raw);
    CHECK(back[i].mask_hash == mask.hash());
    CHECK(back[i].source_sample_id == static_cast<std::int64_t>(i));
  }
  std::ofstream(tmp.path() / "junk.bin") << "nope";
  CHECK_THROWS_AS(load_signatures(tmp.path() / "junk.bin"), IoError);

  MetaClassifier c(MetaKind::mlp, 3, 2, SignatureMode::sign, "abc",
                   std::vector<double>(MetaClassifier::weight_count(MetaKind::mlp, 3, 2), 0.25));
  save_meta_classifier(c, tmp.path() / "meta");
  MetaClassifier r = load_meta_classifier(tmp.path() / "meta");
  CHECK(r.kind() == MetaKind::mlp);
  CHECK(r.hidden() == 2);
  CHECK(r.mask_hash() == "abc");
  CHECK(std::vector<double>(r.weights().begin(), r.weights().end()) ==
        std::vector<double>(c.weights().begin(), c.weights().end()));
  {
    std::ofstream f(tmp.path() / "meta.weights", std::ios::binary | std::ios::in);
    f.seekp(0);
    f.put('\x7f');
  }
  CHECK_THROWS_AS(load_meta_classifier(tmp.path() / "meta"), IoError);
}
