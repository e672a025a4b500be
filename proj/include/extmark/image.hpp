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
#include <span>
#include <string>
#include <vector>

#include "extmark/tensor.hpp"

namespace extmark {

// An image with values in [0,1], stored channel-major (C x H x W).
struct LabeledImage {
  Shape shape;
  std::vector<double> pixels;
  int label = 0;

  LabeledImage() = default;
  LabeledImage(Shape s, std::vector<double> px, int y);

  double& at(int ch, int y, int x) { return pixels[(static_cast<std::size_t>(ch) * shape.h + y) * shape.w + x]; }
  double at(int ch, int y, int x) const { return pixels[(static_cast<std::size_t>(ch) * shape.h + y) * shape.w + x]; }
};

enum class Split { train, test };

std::string to_string(Split s);
Split split_from_string(const std::string& s);

// Immutable ordered collection of labeled images sharing one shape.
class ImageDataset {
 public:
  ImageDataset() = default;
  ImageDataset(std::string name, Split split, int class_count, std::vector<LabeledImage> items);

  const std::string& name() const { return name_; }
  Split split() const { return split_; }
  int class_count() const { return class_count_; }
  std::size_t size() const { return items_.size(); }
  bool empty() const { return items_.empty(); }
  const Shape& shape() const { return shape_; }

  const LabeledImage& operator[](std::size_t i) const { return items_[i]; }
  const LabeledImage& at(std::size_t i) const;
  const std::vector<LabeledImage>& items() const { return items_; }

  // New dataset with the items at the given positions, in that order.
  ImageDataset subset(std::span<const std::size_t> indices, std::string name) const;

  // Packs the selected items into an NCHW batch and their labels.
  void gather(std::span<const std::size_t> indices, Tensor& batch, std::vector<int>& labels) const;

  std::vector<int> labels() const;

 private:
  std::string name_;
  Split split_ = Split::train;
  int class_count_ = 0;
  Shape shape_;
  std::vector<LabeledImage> items_;
};

// Items of a followed by items of b; class counts and shapes must agree.
ImageDataset concat(const ImageDataset& a, const ImageDataset& b, std::string name);

// Same images with labels replaced.
ImageDataset relabel(const ImageDataset& d, std::span<const int> labels, std::string name);

}  // namespace extmark
