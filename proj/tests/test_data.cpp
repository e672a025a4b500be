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
#include <set>

#include "doctest.h"
#include "extmark/error.hpp"
#include "extmark/image_io.hpp"
#include "extmark/poison.hpp"
#include "extmark/style.hpp"
#include "fixtures.hpp"

using namespace extmark;
using extmark::testing::TempDir;

namespace {

LabeledImage gray2x2(double a, double b, double c, double d, int label = 0) {
  return LabeledImage(Shape{1, 2, 2}, {a, b, c, d}, label);
}

}  // namespace

TEST_CASE("moment matching on a 2x2 image against hand-computed values") {
  // content: mean 0.4, population sd 0.2; style: mean 0.5, sd 0.1
  LabeledImage x = gray2x2(0.2, 0.6, 0.2, 0.6, 7);
  StyleSpec s{gray2x2(0.4, 0.6, 0.6, 0.4), "moment-match", 1.0};
  LabeledImage y = style_transform(x, s);
  const double want[4] = {0.4, 0.6, 0.4, 0.6};
  for (int i = 0; i < 4; ++i) CHECK(y.pixels[i] == doctest::Approx(want[i]).epsilon(1e-12));
  CHECK(y.label == 7);

  s.blend = 0.5;
  LabeledImage half = style_transform(x, s);
  const double want_half[4] = {0.3, 0.6, 0.3, 0.6};
  for (int i = 0; i < 4; ++i) CHECK(half.pixels[i] == doctest::Approx(want_half[i]).epsilon(1e-12));
}

TEST_CASE("moment matching is the per-channel affine map onto the style moments") {
  // content: mean 0.5, population variance 0.05
  LabeledImage x = gray2x2(0.2, 0.4, 0.6, 0.8);
  StyleSpec s{gray2x2(0.4, 0.6, 0.6, 0.4), "moment-match", 1.0};
  LabeledImage y = style_transform(x, s);
  for (int i = 0; i < 4; ++i)
    CHECK(y.pixels[i] == doctest::Approx((x.pixels[i] - 0.5) / std::sqrt(0.05) * 0.1 + 0.5).epsilon(1e-12));
}

TEST_CASE("texture blend averages the matched image with the style image") {
  LabeledImage x = gray2x2(0.2, 0.6, 0.2, 0.6);
  StyleSpec s{gray2x2(0.4, 0.6, 0.6, 0.4), "texture-blend", 1.0};
  LabeledImage y = style_transform(x, s);
  const double want[4] = {0.4, 0.6, 0.5, 0.5};
  for (int i = 0; i < 4; ++i) CHECK(y.pixels[i] == doctest::Approx(want[i]).epsilon(1e-12));
}

TEST_CASE("style transform edge cases") {
  LabeledImage x = gray2x2(0.2, 0.6, 0.2, 0.6);
  SUBCASE("blend 0 is the identity") {
    StyleSpec s{gray2x2(0.9, 0.1, 0.3, 0.3), "moment-match", 0.0};
    CHECK(style_transform(x, s).pixels == x.pixels);
  }
  SUBCASE("style equal to content is a fixed point") {
    StyleSpec s{x, "moment-match", 1.0};
    CHECK(style_transform(x, s).pixels == x.pixels);
  }
  SUBCASE("constant content maps to the style mean") {
    StyleSpec s{gray2x2(0.4, 0.6, 0.6, 0.4), "moment-match", 1.0};
    for (double v : style_transform(gray2x2(0.3, 0.3, 0.3, 0.3), s).pixels) CHECK(v == doctest::Approx(0.5));
  }
  SUBCASE("outputs stay in [0,1]") {
    StyleSpec s{gray2x2(0.0, 1.0, 0.0, 1.0), "moment-match", 1.0};
    for (double v : style_transform(gray2x2(0.0, 0.0, 0.0, 1.0), s).pixels) {
      CHECK(v >= 0.0);
      CHECK(v <= 1.0);
    }
  }
  SUBCASE("errors") {
    CHECK_THROWS_AS(style_transform(x, StyleSpec{x, "no-such", 1.0}), ConfigError);
    CHECK_THROWS_AS(style_transform(x, StyleSpec{x, "moment-match", 1.5}), DomainError);
    LabeledImage rgb(Shape{3, 2, 2}, std::vector<double>(12, 0.5), 0);
    CHECK_THROWS_AS(style_transform(x, StyleSpec{rgb, "moment-match", 1.0}), ShapeError);
  }
}

TEST_CASE("registered transformers are pluggable") {
  register_style_transformer("invert-test", [](const LabeledImage& c, const LabeledImage&) {
    std::vector<double> out(c.pixels);
    for (auto& v : out) v = 1.0 - v;
    return out;
  });
  auto ids = registered_style_transformers();
  CHECK(std::find(ids.begin(), ids.end(), "invert-test") != ids.end());
  LabeledImage y = style_transform(gray2x2(0.2, 0.6, 0.2, 0.6), StyleSpec{gray2x2(0, 0, 0, 0), "invert-test", 1.0});
  CHECK(y.pixels[0] == doctest::Approx(0.8));
}

TEST_CASE("channel moments use the population standard deviation") {
  auto m = channel_moments(gray2x2(0.0, 1.0, 0.0, 1.0));
  CHECK(m.mean[0] == doctest::Approx(0.5));
  CHECK(m.stddev[0] == doctest::Approx(0.5));
}

TEST_CASE("poison selection") {
  ImageDataset d = testing::toy_data(200, 5);
  CHECK(poison_count(200, 10.0) == 20);
  CHECK(poison_count(200, 0.0) == 0);
  CHECK(poison_count(200, 100.0) == 200);
  CHECK_THROWS_AS(poison_count(10, 101.0), DomainError);
  CHECK_THROWS_AS(poison_count(10, -1.0), DomainError);

  PoisonPlan a = select_poison_indices(d, 10.0, 3), b = select_poison_indices(d, 10.0, 3);
  CHECK(a.indices == b.indices);
  CHECK(a.indices.size() == 20);
  CHECK(std::is_sorted(a.indices.begin(), a.indices.end()));
  CHECK(std::set<std::size_t>(a.indices.begin(), a.indices.end()).size() == 20);
  CHECK(select_poison_indices(d, 10.0, 4).indices != a.indices);

  StyleSpec s{make_style_image("oil", 8, 3), "moment-match", 1.0};
  WatermarkedSplit w = build_watermarked_dataset(d, a, s);
  CHECK(w.transformed.size() == 20);
  CHECK(w.benign_rest.size() == 180);
  for (std::size_t i = 0; i < a.indices.size(); ++i) {
    CHECK(w.transformed[i].label == d[a.indices[i]].label);
    CHECK(w.transformed[i].pixels == style_transform(d[a.indices[i]], s).pixels);
  }
  std::set<std::size_t> chosen(a.indices.begin(), a.indices.end());
  std::size_t r = 0;
  for (std::size_t i = 0; i < d.size(); ++i)
    if (!chosen.count(i)) CHECK(w.benign_rest[r++].pixels == d[i].pixels);

  WatermarkedSplit none = build_watermarked_dataset(d, select_poison_indices(d, 0.0, 1), s);
  CHECK(none.transformed.empty());
  CHECK(none.benign_rest.size() == d.size());
}

TEST_CASE("poison plan json round trip") {
  TempDir tmp("plan");
  PoisonPlan p{{1, 4, 9}, 12.5, 77};
  save_poison_plan(p, tmp.path() / "plan.json");
  PoisonPlan q = load_poison_plan(tmp.path() / "plan.json");
  CHECK(q.indices == p.indices);
  CHECK(q.gamma_percent == p.gamma_percent);
  CHECK(q.seed == p.seed);
}

TEST_CASE("png directory round trip is exact at 8 bits") {
  TempDir tmp("png");
  ImageDataset d = testing::toy_data(12, 2);
  save_png_directory(d, tmp.path());
  ImageDataset e = load_png_directory(tmp.path(), Split::train);
  REQUIRE(e.size() == d.size());
  std::multiset<int> la, lb;
  for (std::size_t i = 0; i < d.size(); ++i) la.insert(d[i].label), lb.insert(e[i].label);
  CHECK(la == lb);
  // pixels quantize to k/255
  for (const auto& img : e.items())
    for (double v : img.pixels) CHECK(std::abs(v * 255.0 - std::round(v * 255.0)) < 1e-9);
  CHECK_THROWS_AS(load_png_directory(tmp.path() / "missing", Split::train), IoError);
}

TEST_CASE("synthetic dataset is deterministic and balanced enough") {
  ImageDataset a = testing::toy_data(100, 9), b = testing::toy_data(100, 9);
  for (std::size_t i = 0; i < a.size(); ++i) {
    CHECK(a[i].label == b[i].label);
    CHECK(a[i].pixels == b[i].pixels);
  }
  std::set<int> labels;
  for (int y : a.labels()) labels.insert(y);
  CHECK(labels.size() == 10);
  for (const auto& img : a.items())
    for (double v : img.pixels) CHECK((v >= 0.0 && v <= 1.0));
}
