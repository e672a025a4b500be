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

#include "extmark/image.hpp"

#include <cstring>

#include "extmark/error.hpp"

namespace extmark {

LabeledImage::LabeledImage(Shape s, std::vector<double> px, int y) : shape(s), pixels(std::move(px)), label(y) {
  if (pixels.size() != shape.size()) throw ShapeError("pixel buffer does not match image shape");
  for (double v : pixels) {
    if (!(v >= 0.0 && v <= 1.0)) throw DomainError("pixel value outside [0,1]");
  }
  if (label < 0) throw DomainError("negative label");
}

std::string to_string(Split s) { return s == Split::train ? "train" : "test"; }

Split split_from_string(const std::string& s) {
  if (s == "train") return Split::train;
  if (s == "test") return Split::test;
  throw ConfigError("unknown split '" + s + "'");
}

ImageDataset::ImageDataset(std::string name, Split split, int class_count, std::vector<LabeledImage> items)
    : name_(std::move(name)), split_(split), class_count_(class_count), items_(std::move(items)) {
  if (class_count_ < 1) throw DomainError("class_count must be positive");
  if (!items_.empty()) shape_ = items_.front().shape;
  for (const auto& it : items_) {
    if (it.label < 0 || it.label >= class_count_) throw DomainError("label out of range for dataset " + name_);
    if (!(it.shape == shape_)) throw ShapeError("mixed image shapes in dataset " + name_);
  }
}

const LabeledImage& ImageDataset::at(std::size_t i) const {
  if (i >= items_.size()) throw IndexError("dataset index " + std::to_string(i) + " out of range");
  return items_[i];
}

ImageDataset ImageDataset::subset(std::span<const std::size_t> indices, std::string name) const {
  std::vector<LabeledImage> out;
  out.reserve(indices.size());
  for (std::size_t i : indices) out.push_back(at(i));
  return ImageDataset(std::move(name), split_, class_count_, std::move(out));
}

void ImageDataset::gather(std::span<const std::size_t> indices, Tensor& batch, std::vector<int>& labels) const {
  batch = Tensor(static_cast<int>(indices.size()), shape_);
  labels.resize(indices.size());
  for (std::size_t k = 0; k < indices.size(); ++k) {
    const auto& item = at(indices[k]);
    std::memcpy(batch.sample(static_cast<int>(k)).data(), item.pixels.data(), item.pixels.size() * sizeof(double));
    labels[k] = item.label;
  }
}

std::vector<int> ImageDataset::labels() const {
  std::vector<int> out;
  out.reserve(items_.size());
  for (const auto& it : items_) out.push_back(it.label);
  return out;
}

ImageDataset concat(const ImageDataset& a, const ImageDataset& b, std::string name) {
  if (a.class_count() != b.class_count()) throw DomainError("cannot concatenate datasets with different class counts");
  if (!a.empty() && !b.empty() && !(a.shape() == b.shape())) throw ShapeError("cannot concatenate datasets with different shapes");
  std::vector<LabeledImage> items = a.items();
  items.insert(items.end(), b.items().begin(), b.items().end());
  return ImageDataset(std::move(name), a.split(), a.class_count(), std::move(items));
}

ImageDataset relabel(const ImageDataset& d, std::span<const int> labels, std::string name) {
  if (labels.size() != d.size()) throw ShapeError("relabel: label count mismatch");
  std::vector<LabeledImage> items = d.items();
  for (std::size_t i = 0; i < items.size(); ++i) items[i].label = labels[i];
  return ImageDataset(std::move(name), d.split(), d.class_count(), std::move(items));
}

}  // namespace extmark
