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

#include <functional>
#include <span>
#include <string>
#include <vector>

#include "extmark/image.hpp"

namespace extmark {

struct StyleSpec {
  LabeledImage style_image;
  std::string transformer_id = "moment-match";
  double blend = 1.0;
};

// A transformer maps a content image and the style image (already resized to
// the content resolution) to unclipped output pixels; blending and clipping
// are applied by style_transform.
using StyleTransformer =
    std::function<std::vector<double>(const LabeledImage& content, const LabeledImage& style)>;

void register_style_transformer(const std::string& id, StyleTransformer fn);
std::vector<std::string> registered_style_transformers();

// Bilinear resampling with align-corners=false sampling positions.
LabeledImage resize_bilinear(const LabeledImage& img, int height, int width);

struct ChannelMoments {
  std::vector<double> mean;
  std::vector<double> stddev;  // population
};
ChannelMoments channel_moments(const LabeledImage& img);

// x' = T(x, x_s): same shape and label as x, pixels in [0,1].
LabeledImage style_transform(const LabeledImage& x, const StyleSpec& style);

}  // namespace extmark
