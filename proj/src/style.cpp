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

#include "extmark/style.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <mutex>

#include "extmark/error.hpp"

namespace extmark {
namespace {

std::vector<double> moment_match(const LabeledImage& x, const LabeledImage& style) {
  ChannelMoments mx = channel_moments(x), ms = channel_moments(style);
  const std::size_t plane = static_cast<std::size_t>(x.shape.h) * x.shape.w;
  std::vector<double> out(x.pixels.size());
  for (int c = 0; c < x.shape.c; ++c) {
    const double mu_x = mx.mean[c], sd_x = mx.stddev[c], mu_s = ms.mean[c], sd_s = ms.stddev[c];
    const double* src = x.pixels.data() + c * plane;
    double* dst = out.data() + c * plane;
    if (mu_x == mu_s && sd_x == sd_s) {
      std::copy(src, src + plane, dst);
    } else if (sd_x > 0.0) {
      for (std::size_t i = 0; i < plane; ++i) dst[i] = (src[i] - mu_x) / sd_x * sd_s + mu_s;
    } else {
      std::fill(dst, dst + plane, mu_s);
    }
  }
  return out;
}

std::vector<double> texture_blend(const LabeledImage& x, const LabeledImage& style) {
  std::vector<double> out = moment_match(x, style);
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = 0.5 * out[i] + 0.5 * style.pixels[i];
  return out;
}

struct Registry {
  std::mutex mu;
  std::map<std::string, StyleTransformer> fns{{"moment-match", moment_match}, {"texture-blend", texture_blend}};
};

Registry& registry() {
  static Registry r;
  return r;
}

}  // namespace

void register_style_transformer(const std::string& id, StyleTransformer fn) {
  auto& r = registry();
  std::lock_guard lock(r.mu);
  r.fns[id] = std::move(fn);
}

std::vector<std::string> registered_style_transformers() {
  auto& r = registry();
  std::lock_guard lock(r.mu);
  std::vector<std::string> ids;
  for (const auto& [k, v] : r.fns) ids.push_back(k);
  return ids;
}

LabeledImage resize_bilinear(const LabeledImage& img, int height, int width) {
  if (height < 1 || width < 1) throw ShapeError("resize target must be positive");
  if (img.shape.h == height && img.shape.w == width) return img;
  Shape s{img.shape.c, height, width};
  std::vector<double> out(s.size());
  const double sy = static_cast<double>(img.shape.h) / height, sx = static_cast<double>(img.shape.w) / width;
  for (int c = 0; c < s.c; ++c) {
    for (int y = 0; y < height; ++y) {
      double fy = std::clamp((y + 0.5) * sy - 0.5, 0.0, static_cast<double>(img.shape.h - 1));
      int y0 = static_cast<int>(fy), y1 = std::min(y0 + 1, img.shape.h - 1);
      double wy = fy - y0;
      for (int x = 0; x < width; ++x) {
        double fx = std::clamp((x + 0.5) * sx - 0.5, 0.0, static_cast<double>(img.shape.w - 1));
        int x0 = static_cast<int>(fx), x1 = std::min(x0 + 1, img.shape.w - 1);
        double wx = fx - x0;
        double top = (1 - wx) * img.at(c, y0, x0) + wx * img.at(c, y0, x1);
        double bot = (1 - wx) * img.at(c, y1, x0) + wx * img.at(c, y1, x1);
        out[(static_cast<std::size_t>(c) * height + y) * width + x] = std::clamp((1 - wy) * top + wy * bot, 0.0, 1.0);
      }
    }
  }
  return LabeledImage(s, std::move(out), img.label);
}

ChannelMoments channel_moments(const LabeledImage& img) {
  ChannelMoments m;
  const std::size_t plane = static_cast<std::size_t>(img.shape.h) * img.shape.w;
  for (int c = 0; c < img.shape.c; ++c) {
    const double* p = img.pixels.data() + c * plane;
    double sum = 0.0;
    for (std::size_t i = 0; i < plane; ++i) sum += p[i];
    double mean = sum / static_cast<double>(plane);
    double ss = 0.0;
    for (std::size_t i = 0; i < plane; ++i) ss += (p[i] - mean) * (p[i] - mean);
    m.mean.push_back(mean);
    m.stddev.push_back(std::sqrt(ss / static_cast<double>(plane)));
  }
  return m;
}

LabeledImage style_transform(const LabeledImage& x, const StyleSpec& style) {
  if (x.shape.c != style.style_image.shape.c) throw ShapeError("content and style images differ in channel count");
  if (!(style.blend >= 0.0 && style.blend <= 1.0)) throw DomainError("style blend must lie in [0,1]");
  StyleTransformer fn;
  {
    auto& r = registry();
    std::lock_guard lock(r.mu);
    auto it = r.fns.find(style.transformer_id);
    if (it == r.fns.end()) throw ConfigError("unregistered style transformer '" + style.transformer_id + "'");
    fn = it->second;
  }
  if (style.blend == 0.0) return x;
  LabeledImage resized = resize_bilinear(style.style_image, x.shape.h, x.shape.w);
  std::vector<double> mapped = fn(x, resized);
  if (mapped.size() != x.pixels.size()) throw ShapeError("style transformer changed the image size");
  const double b = style.blend;
  for (std::size_t i = 0; i < mapped.size(); ++i) {
    double v = b == 1.0 ? mapped[i] : (1.0 - b) * x.pixels[i] + b * mapped[i];
    mapped[i] = std::clamp(v, 0.0, 1.0);
  }
  return LabeledImage(x.shape, std::move(mapped), x.label);
}

}  // namespace extmark
