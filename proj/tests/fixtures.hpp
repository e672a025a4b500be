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

#include <cstdint>
#include <filesystem>
#include <string>

#include "extmark/image.hpp"
#include "extmark/model.hpp"
#include "extmark/rng.hpp"
#include "extmark/synthetic.hpp"

namespace extmark::testing {

inline ImageDataset toy_data(std::size_t n, std::uint64_t seed, int side = 8) {
  return make_shapes_dataset(n, side, seed, Split::train, "toy");
}

inline ArchOptions toy_options(int side = 8, int width = 2) {
  ArchOptions o;
  o.input = Shape{3, side, side};
  o.classes = 10;
  o.width = width;
  return o;
}

inline LabeledImage random_image(Shape s, int label, std::uint64_t seed) {
  Rng rng(seed);
  std::vector<double> px(s.size());
  for (auto& v : px) v = rng.uniform();
  return LabeledImage(s, std::move(px), label);
}

// Fresh directory under the system temp dir, removed on destruction.
class TempDir {
 public:
  explicit TempDir(const std::string& tag) {
    Rng rng(std::hash<std::string>{}(tag) ^ reinterpret_cast<std::uintptr_t>(this));
    path_ = std::filesystem::temp_directory_path() / ("extmark-" + tag + "-" + std::to_string(rng.next() % 1000000007));
    std::filesystem::remove_all(path_);
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;
  const std::filesystem::path& path() const { return path_; }

 private:
  std::filesystem::path path_;
};

}  // namespace extmark::testing
