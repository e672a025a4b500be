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
#include <vector>

namespace extmark {

// Per-sample shape (channels x height x width).
struct Shape {
  int c = 0;
  int h = 0;
  int w = 0;

  std::size_t size() const { return static_cast<std::size_t>(c) * h * w; }
  friend bool operator==(const Shape&, const Shape&) = default;
};

// Dense NCHW batch of doubles.
struct Tensor {
  int n = 0;
  Shape shape;
  std::vector<double> data;

  Tensor() = default;
  Tensor(int batch, Shape s) : n(batch), shape(s), data(static_cast<std::size_t>(batch) * s.size(), 0.0) {}

  std::size_t sample_size() const { return shape.size(); }
  std::span<double> sample(int i) { return {data.data() + i * sample_size(), sample_size()}; }
  std::span<const double> sample(int i) const { return {data.data() + i * sample_size(), sample_size()}; }

  double& at(int b, int ch, int y, int x) {
    return data[((static_cast<std::size_t>(b) * shape.c + ch) * shape.h + y) * shape.w + x];
  }
  double at(int b, int ch, int y, int x) const {
    return data[((static_cast<std::size_t>(b) * shape.c + ch) * shape.h + y) * shape.w + x];
  }
};

}  // namespace extmark
