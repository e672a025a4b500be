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

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include "extmark/image.hpp"

namespace extmark {

// Procedural 10-class image set used when no CIFAR-10 archive is available.
// Each class is a shape family (disc, square, stripes, cross, ...) drawn with
// random colors, position, scale, clutter and pixel noise, so color carries
// no class information. Item i depends only on (seed, i).
ImageDataset make_shapes_dataset(std::size_t count, int side, std::uint64_t seed, Split split,
                                 const std::string& name);

// Names accepted by make_style_image.
std::vector<std::string> style_image_kinds();

// Procedural style images: "oil", "sketch", "mosaic", "waves".
LabeledImage make_style_image(const std::string& kind, int side, std::uint64_t seed);

}  // namespace extmark
