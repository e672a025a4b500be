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

#include "extmark/synthetic.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <numbers>

#include "extmark/error.hpp"
#include "extmark/rng.hpp"

namespace extmark {
namespace {

using Color = std::array<double, 3>;

Color random_color(Rng& rng) { return {rng.uniform(), rng.uniform(), rng.uniform()}; }

double luminance(const Color& c) { return 0.299 * c[0] + 0.587 * c[1] + 0.114 * c[2]; }

// Foreground color with enough luminance contrast against the background.
Color contrasting_color(Rng& rng, const Color& bg) {
  Color fg = random_color(rng);
  for (int tries = 0; tries < 32 && std::abs(luminance(fg) - luminance(bg)) < 0.3; ++tries) fg = random_color(rng);
  if (std::abs(luminance(fg) - luminance(bg)) < 0.3) {
    double t = luminance(bg) > 0.5 ? 0.0 : 1.0;
    for (auto& v : fg) v = 0.5 * v + 0.5 * t;
  }
  return fg;
}

// Signed coverage of shape `cls` at normalized coordinates (u, v) in [-1,1].
bool inside(int cls, double u, double v, double phase) {
  double r = std::sqrt(u * u + v * v);
  switch (cls) {
    case 0: return r < 0.8;                                                             // disc
    case 1: return std::abs(u) < 0.7 && std::abs(v) < 0.7;                              // square
    case 2: return std::abs(v) < 0.9 && std::fmod(std::abs(v * 2.5 + phase), 1.0) < 0.5 && std::abs(u) < 0.9;  // horizontal stripes
    case 3: return std::abs(u) < 0.9 && std::fmod(std::abs(u * 2.5 + phase), 1.0) < 0.5 && std::abs(v) < 0.9;  // vertical stripes
    case 4: return (std::abs(u) < 0.25 && std::abs(v) < 0.9) || (std::abs(v) < 0.25 && std::abs(u) < 0.9);    // plus
    case 5: return r < 0.85 && r > 0.5;                                                 // ring
    case 6: return std::abs(u - v) < 0.35 && std::abs(u) < 0.9 && std::abs(v) < 0.9;    // diagonal bar
    case 7: return v < 0.8 && v > -0.8 && std::abs(u) < (v + 0.8) * 0.55;               // triangle
    case 8: return std::abs(u) < 0.9 && std::abs(v) < 0.9 &&
                   ((static_cast<int>(std::floor((u + 1.0) * 2.0)) + static_cast<int>(std::floor((v + 1.0) * 2.0))) % 2 == 0);  // checker
    case 9: {                                                                           // two dots
      double d1 = std::hypot(u + 0.45, v + 0.45), d2 = std::hypot(u - 0.45, v - 0.45);
      return d1 < 0.35 || d2 < 0.35;
    }
    default: return false;
  }
}

LabeledImage make_shape_item(std::uint64_t seed, std::size_t index, int side) {
  Rng rng(derive_seed(seed, index));
  const int cls = static_cast<int>(index % 10);
  Shape s{3, side, side};
  std::vector<double> px(s.size());

  Color bg = random_color(rng);
  Color bg2 = random_color(rng);
  Color fg = contrasting_color(rng, bg);
  double grad_angle = rng.uniform(0.0, 2.0 * std::numbers::pi);
  double cx = rng.uniform(-0.15, 0.15), cy = rng.uniform(-0.15, 0.15);
  double scale = rng.uniform(0.55, 0.85);
  double rot = rng.uniform(-0.25, 0.25);
  double phase = rng.uniform(0.0, 1.0);

  // background: two-color linear gradient
  for (int y = 0; y < side; ++y) {
    for (int x = 0; x < side; ++x) {
      double u = (2.0 * x + 1.0) / side - 1.0, v = (2.0 * y + 1.0) / side - 1.0;
      double t = 0.5 + 0.35 * (std::cos(grad_angle) * u + std::sin(grad_angle) * v);
      for (int c = 0; c < 3; ++c) px[(static_cast<std::size_t>(c) * side + y) * side + x] = (1 - t) * bg[c] + t * bg2[c] * 0.6 + t * bg[c] * 0.4;
    }
  }
  // clutter: a few small blobs in random colors
  int blobs = rng.uniform_int(0, 3);
  for (int b = 0; b < blobs; ++b) {
    Color bc = random_color(rng);
    double bx = rng.uniform(-1, 1), by = rng.uniform(-1, 1), br = rng.uniform(0.08, 0.18);
    for (int y = 0; y < side; ++y)
      for (int x = 0; x < side; ++x) {
        double u = (2.0 * x + 1.0) / side - 1.0, v = (2.0 * y + 1.0) / side - 1.0;
        if (std::hypot(u - bx, v - by) < br)
          for (int c = 0; c < 3; ++c) px[(static_cast<std::size_t>(c) * side + y) * side + x] = bc[c];
      }
  }
  // foreground shape
  double cr = std::cos(rot), sr = std::sin(rot);
  for (int y = 0; y < side; ++y) {
    for (int x = 0; x < side; ++x) {
      double u0 = (2.0 * x + 1.0) / side - 1.0 - cx, v0 = (2.0 * y + 1.0) / side - 1.0 - cy;
      double u = (cr * u0 - sr * v0) / scale, v = (sr * u0 + cr * v0) / scale;
      if (inside(cls, u, v, phase))
        for (int c = 0; c < 3; ++c) px[(static_cast<std::size_t>(c) * side + y) * side + x] = fg[c];
    }
  }
  double noise = rng.uniform(0.02, 0.08);
  for (double& p : px) p = std::clamp(p + rng.normal(0.0, noise), 0.0, 1.0);
  return LabeledImage(s, std::move(px), cls);
}

}  // namespace

ImageDataset make_shapes_dataset(std::size_t count, int side, std::uint64_t seed, Split split,
                                 const std::string& name) {
  if (side < 4) throw DomainError("synthetic images need side >= 4");
  std::vector<LabeledImage> items;
  items.reserve(count);
  for (std::size_t i = 0; i < count; ++i) items.push_back(make_shape_item(seed, i, side));
  return ImageDataset(name, split, 10, std::move(items));
}

std::vector<std::string> style_image_kinds() { return {"oil", "sketch", "mosaic", "waves"}; }

LabeledImage make_style_image(const std::string& kind, int side, std::uint64_t seed) {
  Rng rng(seed);
  Shape s{3, side, side};
  std::vector<double> px(s.size());
  auto put = [&](int x, int y, const Color& col) {
    for (int c = 0; c < 3; ++c) px[(static_cast<std::size_t>(c) * side + y) * side + x] = std::clamp(col[c], 0.0, 1.0);
  };
  if (kind == "oil") {
    // warm swirling brush strokes
    std::array<Color, 4> palette{{{0.85, 0.55, 0.15}, {0.65, 0.30, 0.10}, {0.95, 0.80, 0.35}, {0.30, 0.35, 0.55}}};
    std::array<double, 6> f{};
    for (double& v : f) v = rng.uniform(2.0, 6.0);
    for (int y = 0; y < side; ++y)
      for (int x = 0; x < side; ++x) {
        double u = static_cast<double>(x) / side, v = static_cast<double>(y) / side;
        double swirl = std::sin(f[0] * u + 3.0 * std::sin(f[1] * v)) + std::cos(f[2] * v + 2.0 * std::sin(f[3] * u));
        int k = std::clamp(static_cast<int>((swirl + 2.0) * 1.0), 0, 3);
        Color col = palette[static_cast<std::size_t>(k)];
        double shade = 0.85 + 0.15 * std::sin(f[4] * 20.0 * u + f[5] * 7.0 * v);
        for (double& c : col) c *= shade;
        put(x, y, col);
      }
  } else if (kind == "sketch") {
    // pale paper with dark hatching
    for (int y = 0; y < side; ++y)
      for (int x = 0; x < side; ++x) {
        bool hatch = ((x + y) % 5 == 0) || ((x - y + side) % 7 == 0 && rng.bernoulli(0.6));
        double g = hatch ? rng.uniform(0.1, 0.3) : rng.uniform(0.85, 0.95);
        put(x, y, {g, g, g * 0.95});
      }
  } else if (kind == "mosaic") {
    int tile = std::max(2, side / 8);
    std::vector<Color> tiles(static_cast<std::size_t>((side / tile + 1) * (side / tile + 1)));
    for (auto& t : tiles) t = {rng.uniform(0.0, 0.4), rng.uniform(0.3, 0.9), rng.uniform(0.5, 1.0)};
    for (int y = 0; y < side; ++y)
      for (int x = 0; x < side; ++x) {
        bool grout = (x % tile == 0) || (y % tile == 0);
        const Color& t = tiles[static_cast<std::size_t>((y / tile) * (side / tile + 1) + x / tile)];
        put(x, y, grout ? Color{0.9, 0.9, 0.85} : t);
      }
  } else if (kind == "waves") {
    double fx = rng.uniform(8.0, 14.0), fy = rng.uniform(8.0, 14.0);
    for (int y = 0; y < side; ++y)
      for (int x = 0; x < side; ++x) {
        double u = static_cast<double>(x) / side, v = static_cast<double>(y) / side;
        double w = 0.5 + 0.5 * std::sin(fx * u * std::numbers::pi + 2.0 * std::sin(fy * v));
        put(x, y, {0.1 + 0.3 * w, 0.2 + 0.5 * w, 0.6 + 0.4 * w});
      }
  } else {
    throw ConfigError("unknown style image kind '" + kind + "'");
  }
  return LabeledImage(s, std::move(px), 0);
}

}  // namespace extmark
