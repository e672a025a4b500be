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

#include "extmark/image_io.hpp"

#include <jpeglib.h>
#include <png.h>

#include <algorithm>
#include <array>
#include <cmath>
#include <csetjmp>
#include <cstdio>
#include <fstream>
#include <memory>
#include <vector>

#include "extmark/error.hpp"

namespace fs = std::filesystem;

namespace extmark {
namespace {

LabeledImage from_interleaved(const std::vector<unsigned char>& buf, int w, int h, int src_c, int want_c) {
  Shape s{want_c, h, w};
  std::vector<double> px(s.size());
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      for (int c = 0; c < want_c; ++c) {
        int sc = src_c == 1 ? 0 : std::min(c, src_c - 1);
        double v = buf[(static_cast<std::size_t>(y) * w + x) * src_c + sc] / 255.0;
        px[(static_cast<std::size_t>(c) * h + y) * w + x] = v;
      }
    }
  }
  return LabeledImage(s, std::move(px), 0);
}

LabeledImage read_png(const fs::path& path, int want_c) {
  png_image image{};
  image.version = PNG_IMAGE_VERSION;
  if (!png_image_begin_read_from_file(&image, path.c_str())) {
    throw IoError("cannot read PNG " + path.string() + ": " + image.message);
  }
  image.format = want_c == 1 ? PNG_FORMAT_GRAY : PNG_FORMAT_RGB;
  std::vector<unsigned char> buf(PNG_IMAGE_SIZE(image));
  if (!png_image_finish_read(&image, nullptr, buf.data(), 0, nullptr)) {
    png_image_free(&image);
    throw IoError("cannot decode PNG " + path.string() + ": " + image.message);
  }
  return from_interleaved(buf, static_cast<int>(image.width), static_cast<int>(image.height), want_c, want_c);
}

struct JpegErr {
  jpeg_error_mgr mgr;
  std::jmp_buf jump;
};

void jpeg_fail(j_common_ptr cinfo) {
  auto* err = reinterpret_cast<JpegErr*>(cinfo->err);
  std::longjmp(err->jump, 1);
}

LabeledImage read_jpeg(const fs::path& path, int want_c) {
  std::unique_ptr<FILE, int (*)(FILE*)> file(std::fopen(path.c_str(), "rb"), &std::fclose);
  if (!file) throw IoError("cannot open " + path.string());
  jpeg_decompress_struct cinfo{};
  JpegErr err{};
  cinfo.err = jpeg_std_error(&err.mgr);
  err.mgr.error_exit = jpeg_fail;
  std::vector<unsigned char> buf;
  int w = 0, h = 0, c = 0;
  if (setjmp(err.jump)) {
    jpeg_destroy_decompress(&cinfo);
    throw IoError("cannot decode JPEG " + path.string());
  }
  jpeg_create_decompress(&cinfo);
  jpeg_stdio_src(&cinfo, file.get());
  jpeg_read_header(&cinfo, TRUE);
  cinfo.out_color_space = want_c == 1 ? JCS_GRAYSCALE : JCS_RGB;
  jpeg_start_decompress(&cinfo);
  w = static_cast<int>(cinfo.output_width);
  h = static_cast<int>(cinfo.output_height);
  c = cinfo.output_components;
  buf.resize(static_cast<std::size_t>(w) * h * c);
  while (cinfo.output_scanline < cinfo.output_height) {
    unsigned char* row = buf.data() + static_cast<std::size_t>(cinfo.output_scanline) * w * c;
    jpeg_read_scanlines(&cinfo, &row, 1);
  }
  jpeg_finish_decompress(&cinfo);
  jpeg_destroy_decompress(&cinfo);
  return from_interleaved(buf, w, h, c, want_c);
}

std::uint8_t to_byte(double v) { return static_cast<std::uint8_t>(std::lround(std::clamp(v, 0.0, 1.0) * 255.0)); }

}  // namespace

LabeledImage read_image(const fs::path& path, int want_channels) {
  if (want_channels != 1 && want_channels != 3) throw ShapeError("only 1- or 3-channel images are supported");
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  std::array<unsigned char, 4> sig{};
  in.read(reinterpret_cast<char*>(sig.data()), sig.size());
  in.close();
  if (sig[0] == 0x89 && sig[1] == 'P' && sig[2] == 'N' && sig[3] == 'G') return read_png(path, want_channels);
  if (sig[0] == 0xFF && sig[1] == 0xD8) return read_jpeg(path, want_channels);
  throw IoError("unrecognized image format: " + path.string());
}

void write_png(const fs::path& path, const LabeledImage& img) {
  const Shape& s = img.shape;
  if (s.c != 1 && s.c != 3) throw ShapeError("write_png supports 1 or 3 channels");
  std::vector<unsigned char> buf(s.size());
  for (int y = 0; y < s.h; ++y)
    for (int x = 0; x < s.w; ++x)
      for (int c = 0; c < s.c; ++c) buf[(static_cast<std::size_t>(y) * s.w + x) * s.c + c] = to_byte(img.at(c, y, x));
  png_image image{};
  image.version = PNG_IMAGE_VERSION;
  image.width = static_cast<png_uint_32>(s.w);
  image.height = static_cast<png_uint_32>(s.h);
  image.format = s.c == 1 ? PNG_FORMAT_GRAY : PNG_FORMAT_RGB;
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  if (!png_image_write_to_file(&image, path.c_str(), 0, buf.data(), 0, nullptr)) {
    throw IoError("cannot write PNG " + path.string() + ": " + image.message);
  }
}

ImageDataset load_cifar10(const fs::path& root, Split split, std::optional<std::size_t> limit) {
  constexpr int kSide = 32;
  constexpr std::size_t kPlane = kSide * kSide;
  constexpr std::size_t kRecord = 1 + 3 * kPlane;
  std::vector<fs::path> files;
  if (split == Split::train) {
    for (int i = 1; i <= 5; ++i) files.push_back(root / ("data_batch_" + std::to_string(i) + ".bin"));
  } else {
    files.push_back(root / "test_batch.bin");
  }
  std::vector<LabeledImage> items;
  std::vector<unsigned char> rec(kRecord);
  for (const auto& f : files) {
    std::ifstream in(f, std::ios::binary);
    if (!in) throw IoError("missing CIFAR-10 file " + f.string());
    while (in.read(reinterpret_cast<char*>(rec.data()), kRecord)) {
      if (limit && items.size() >= *limit) break;
      std::vector<double> px(3 * kPlane);
      for (std::size_t i = 0; i < 3 * kPlane; ++i) px[i] = rec[1 + i] / 255.0;
      int label = rec[0];
      if (label > 9) throw IoError("corrupt CIFAR-10 record in " + f.string());
      items.emplace_back(Shape{3, kSide, kSide}, std::move(px), label);
    }
    if (limit && items.size() >= *limit) break;
  }
  return ImageDataset("cifar10-" + to_string(split), split, 10, std::move(items));
}

ImageDataset load_png_directory(const fs::path& root, Split split) {
  fs::path dir = root / to_string(split);
  if (!fs::is_directory(dir)) throw IoError("no such directory " + dir.string());
  std::vector<fs::path> classes;
  for (const auto& e : fs::directory_iterator(dir))
    if (e.is_directory()) classes.push_back(e.path());
  std::sort(classes.begin(), classes.end());
  if (classes.empty()) throw IoError("no class directories under " + dir.string());
  std::vector<LabeledImage> items;
  for (std::size_t k = 0; k < classes.size(); ++k) {
    std::vector<fs::path> files;
    for (const auto& e : fs::directory_iterator(classes[k]))
      if (e.is_regular_file() && e.path().extension() == ".png") files.push_back(e.path());
    std::sort(files.begin(), files.end());
    for (const auto& f : files) {
      LabeledImage img = read_image(f, 3);
      img.label = static_cast<int>(k);
      items.push_back(std::move(img));
    }
  }
  return ImageDataset(root.filename().string() + "-" + to_string(split), split, static_cast<int>(classes.size()),
                      std::move(items));
}

void save_png_directory(const ImageDataset& d, const fs::path& root) {
  // zero-padded class names keep lexicographic order equal to label order
  int width = static_cast<int>(std::to_string(d.class_count() - 1).size());
  for (std::size_t i = 0; i < d.size(); ++i) {
    std::string cls = std::to_string(d[i].label);
    cls.insert(0, static_cast<std::size_t>(std::max(0, width - static_cast<int>(cls.size()))), '0');
    char id[32];
    std::snprintf(id, sizeof(id), "%06zu.png", i);
    write_png(root / to_string(d.split()) / cls / id, d[i]);
  }
}

}  // namespace extmark
