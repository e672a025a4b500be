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
#include <filesystem>
#include <optional>
#include <string>

#include "extmark/image.hpp"

namespace extmark {

// Reads a PNG or JPEG (chosen by file signature) into [0,1] values.
// Grayscale inputs expand to `want_channels` when it is 3.
LabeledImage read_image(const std::filesystem::path& path, int want_channels = 3);

// Writes an image with 1 or 3 channels as 8-bit PNG.
void write_png(const std::filesystem::path& path, const LabeledImage& img);

// Standard CIFAR-10 binary archive directory (data_batch_{1..5}.bin,
// test_batch.bin). `limit` caps the number of records read.
ImageDataset load_cifar10(const std::filesystem::path& root, Split split,
                          std::optional<std::size_t> limit = std::nullopt);

// Directory layout <root>/<split>/<class>/<id>.png. Class directories are
// mapped to labels in lexicographic order; files in a class are ordered by name.
ImageDataset load_png_directory(const std::filesystem::path& root, Split split);

// Writes a dataset in the directory layout accepted by load_png_directory.
void save_png_directory(const ImageDataset& d, const std::filesystem::path& root);

}  // namespace extmark
