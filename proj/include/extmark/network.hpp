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
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "extmark/kernels.hpp"
#include "extmark/rng.hpp"
#include "extmark/tensor.hpp"

namespace extmark {

// A contiguous run of the flat parameter vector owned by one layer tensor.
struct ParamBlock {
  std::string name;       // e.g. "conv1.weight"
  std::size_t offset = 0;
  std::size_t size = 0;
  int layer = 0;          // ordinal of the owning parameterized layer
};

// Per-layer record of what backward needs, filled during forward.
struct Tape {
  Tensor input;
  Tensor aux;
  std::vector<Tape> children;
};

// Layers are stateless descriptors; parameters live in an external flat vector
// addressed through the offsets assigned by bind().
class Layer {
 public:
  virtual ~Layer() = default;

  // Fixes the input shape, assigns parameter offsets, returns the output shape.
  virtual Shape bind(const Shape& in, std::size_t& offset, std::vector<ParamBlock>& layout, const std::string& name,
                     int& layer_ordinal) = 0;
  virtual void init(std::span<double> /*params*/, Rng& /*rng*/) const {}
  virtual Tensor forward(const Tensor& in, std::span<const double> params, Tape* tape) const = 0;
  // Accumulates parameter gradients into `grad`; returns d(loss)/d(input)
  // when need_din is set (otherwise an empty tensor).
  virtual Tensor backward(const Tensor& dout, std::span<const double> params, const Tape& tape,
                          std::span<double> grad, bool need_din) const = 0;
};

using LayerPtr = std::unique_ptr<Layer>;

class Conv2d final : public Layer {
 public:
  Conv2d(int out_c, int k = 3, int stride = 1, int pad = 1, bool bias = true, double init_gain = 1.0)
      : out_c_(out_c), k_(k), stride_(stride), pad_(pad), bias_(bias), gain_(init_gain) {}
  Shape bind(const Shape& in, std::size_t& offset, std::vector<ParamBlock>& layout, const std::string& name,
             int& layer_ordinal) override;
  void init(std::span<double> params, Rng& rng) const override;
  Tensor forward(const Tensor& in, std::span<const double> params, Tape* tape) const override;
  Tensor backward(const Tensor& dout, std::span<const double> params, const Tape& tape, std::span<double> grad,
                  bool need_din) const override;

 private:
  int out_c_, k_, stride_, pad_;
  bool bias_;
  double gain_;
  kernels::ConvGeom geom_{};
  std::size_t w_off_ = 0, b_off_ = 0;
};

class ConvTranspose2d final : public Layer {
 public:
  ConvTranspose2d(int out_c, int k = 2, int stride = 2, int pad = 0) : out_c_(out_c), k_(k), stride_(stride), pad_(pad) {}
  Shape bind(const Shape& in, std::size_t& offset, std::vector<ParamBlock>& layout, const std::string& name,
             int& layer_ordinal) override;
  void init(std::span<double> params, Rng& rng) const override;
  Tensor forward(const Tensor& in, std::span<const double> params, Tape* tape) const override;
  Tensor backward(const Tensor& dout, std::span<const double> params, const Tape& tape, std::span<double> grad,
                  bool need_din) const override;

 private:
  int out_c_, k_, stride_, pad_;
  kernels::ConvTransposeGeom geom_{};
  std::size_t w_off_ = 0, b_off_ = 0;
};

class Linear final : public Layer {
 public:
  explicit Linear(int out, bool bias = true) : out_(out), bias_(bias) {}
  Shape bind(const Shape& in, std::size_t& offset, std::vector<ParamBlock>& layout, const std::string& name,
             int& layer_ordinal) override;
  void init(std::span<double> params, Rng& rng) const override;
  Tensor forward(const Tensor& in, std::span<const double> params, Tape* tape) const override;
  Tensor backward(const Tensor& dout, std::span<const double> params, const Tape& tape, std::span<double> grad,
                  bool need_din) const override;

 private:
  int out_;
  bool bias_;
  int in_ = 0;
  std::size_t w_off_ = 0, b_off_ = 0;
};

class ReLU final : public Layer {
 public:
  Shape bind(const Shape& in, std::size_t&, std::vector<ParamBlock>&, const std::string&, int&) override { return in; }
  Tensor forward(const Tensor& in, std::span<const double> params, Tape* tape) const override;
  Tensor backward(const Tensor& dout, std::span<const double> params, const Tape& tape, std::span<double> grad,
                  bool need_din) const override;
};

class Sigmoid final : public Layer {
 public:
  Shape bind(const Shape& in, std::size_t&, std::vector<ParamBlock>&, const std::string&, int&) override { return in; }
  Tensor forward(const Tensor& in, std::span<const double> params, Tape* tape) const override;
  Tensor backward(const Tensor& dout, std::span<const double> params, const Tape& tape, std::span<double> grad,
                  bool need_din) const override;
};

// 2x2 max pooling with stride 2 (odd trailing rows/columns are dropped).
class MaxPool2 final : public Layer {
 public:
  Shape bind(const Shape& in, std::size_t&, std::vector<ParamBlock>&, const std::string&, int&) override;
  Tensor forward(const Tensor& in, std::span<const double> params, Tape* tape) const override;
  Tensor backward(const Tensor& dout, std::span<const double> params, const Tape& tape, std::span<double> grad,
                  bool need_din) const override;

 private:
  Shape in_{}, out_{};
};

class GlobalAvgPool final : public Layer {
 public:
  Shape bind(const Shape& in, std::size_t&, std::vector<ParamBlock>&, const std::string&, int&) override;
  Tensor forward(const Tensor& in, std::span<const double> params, Tape* tape) const override;
  Tensor backward(const Tensor& dout, std::span<const double> params, const Tape& tape, std::span<double> grad,
                  bool need_din) const override;

 private:
  Shape in_{};
};

// Reinterprets each sample as the target shape (sizes must agree). The
// default target flattens to (size, 1, 1).
class Reshape final : public Layer {
 public:
  Reshape() = default;
  explicit Reshape(Shape target) : target_(target), explicit_(true) {}
  Shape bind(const Shape& in, std::size_t&, std::vector<ParamBlock>&, const std::string&, int&) override;
  Tensor forward(const Tensor& in, std::span<const double> params, Tape* tape) const override;
  Tensor backward(const Tensor& dout, std::span<const double> params, const Tape& tape, std::span<double> grad,
                  bool need_din) const override;

 private:
  Shape in_{}, target_{};
  bool explicit_ = false;
};

class Sequential final : public Layer {
 public:
  Sequential& add(std::string name, LayerPtr layer) {
    names_.push_back(std::move(name));
    layers_.push_back(std::move(layer));
    return *this;
  }
  Shape bind(const Shape& in, std::size_t& offset, std::vector<ParamBlock>& layout, const std::string& name,
             int& layer_ordinal) override;
  void init(std::span<double> params, Rng& rng) const override;
  Tensor forward(const Tensor& in, std::span<const double> params, Tape* tape) const override;
  Tensor backward(const Tensor& dout, std::span<const double> params, const Tape& tape, std::span<double> grad,
                  bool need_din) const override;

 private:
  std::vector<std::string> names_;
  std::vector<LayerPtr> layers_;
};

// y = body(x) + shortcut(x); an empty shortcut is the identity.
class Residual final : public Layer {
 public:
  Residual(std::unique_ptr<Sequential> body, std::unique_ptr<Sequential> shortcut)
      : body_(std::move(body)), shortcut_(std::move(shortcut)) {}
  Shape bind(const Shape& in, std::size_t& offset, std::vector<ParamBlock>& layout, const std::string& name,
             int& layer_ordinal) override;
  void init(std::span<double> params, Rng& rng) const override;
  Tensor forward(const Tensor& in, std::span<const double> params, Tape* tape) const override;
  Tensor backward(const Tensor& dout, std::span<const double> params, const Tape& tape, std::span<double> grad,
                  bool need_din) const override;

 private:
  std::unique_ptr<Sequential> body_, shortcut_;
};

// A bound layer graph with a fixed input shape and a flat parameter layout.
class Network {
 public:
  Network(Shape input, std::unique_ptr<Sequential> root);

  const Shape& input_shape() const { return input_; }
  const Shape& output_shape() const { return output_; }
  std::size_t param_count() const { return param_count_; }
  const std::vector<ParamBlock>& layout() const { return layout_; }
  int parameterized_layers() const { return layers_; }

  void init(std::span<double> params, Rng& rng) const;
  Tensor forward(std::span<const double> params, const Tensor& x, Tape* tape) const;
  Tensor backward(std::span<const double> params, const Tape& tape, const Tensor& dout, std::span<double> grad,
                  bool need_din) const;

 private:
  Shape input_, output_;
  std::unique_ptr<Sequential> root_;
  std::size_t param_count_ = 0;
  std::vector<ParamBlock> layout_;
  int layers_ = 0;
};

}  // namespace extmark
