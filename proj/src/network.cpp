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

#include "extmark/network.hpp"

#include <algorithm>
#include <cmath>

#include "extmark/error.hpp"

namespace extmark {
namespace {

void check_input(const Tensor& in, const Shape& expect, const char* who) {
  if (!(in.shape == expect)) throw ShapeError(std::string(who) + ": unexpected input shape");
}

std::string join(const std::string& prefix, const std::string& name) {
  return prefix.empty() ? name : prefix + "." + name;
}

}  // namespace

// ---- Conv2d ----------------------------------------------------------------

Shape Conv2d::bind(const Shape& in, std::size_t& offset, std::vector<ParamBlock>& layout, const std::string& name,
                   int& layer_ordinal) {
  geom_ = {in.c, in.h, in.w, out_c_, k_, stride_, pad_};
  if (geom_.out_h() < 1 || geom_.out_w() < 1) throw ShapeError("conv output collapses to nothing at " + name);
  const int ord = layer_ordinal++;
  w_off_ = offset;
  layout.push_back({name + ".weight", offset, static_cast<std::size_t>(geom_.weight_size()), ord});
  offset += geom_.weight_size();
  if (bias_) {
    b_off_ = offset;
    layout.push_back({name + ".bias", offset, static_cast<std::size_t>(out_c_), ord});
    offset += out_c_;
  }
  return {out_c_, geom_.out_h(), geom_.out_w()};
}

void Conv2d::init(std::span<double> params, Rng& rng) const {
  const double fan_in = static_cast<double>(geom_.in_c) * k_ * k_;
  const double sd = gain_ * std::sqrt(2.0 / fan_in);
  for (int i = 0; i < geom_.weight_size(); ++i) params[w_off_ + i] = rng.normal(0.0, sd);
  if (bias_) std::fill_n(params.begin() + static_cast<std::ptrdiff_t>(b_off_), out_c_, 0.0);
}

Tensor Conv2d::forward(const Tensor& in, std::span<const double> params, Tape* tape) const {
  check_input(in, Shape{geom_.in_c, geom_.in_h, geom_.in_w}, "conv2d");
  Tensor out(in.n, {out_c_, geom_.out_h(), geom_.out_w()});
  kernels::conv2d_forward(geom_, in.n, in.data, params.subspan(w_off_, geom_.weight_size()),
                          bias_ ? params.subspan(b_off_, out_c_) : std::span<const double>{}, out.data);
  if (tape) tape->input = in;
  return out;
}

Tensor Conv2d::backward(const Tensor& dout, std::span<const double> params, const Tape& tape, std::span<double> grad,
                        bool need_din) const {
  Tensor din;
  if (need_din) din = Tensor(dout.n, {geom_.in_c, geom_.in_h, geom_.in_w});
  kernels::conv2d_backward(geom_, dout.n, tape.input.data, params.subspan(w_off_, geom_.weight_size()), dout.data,
                           grad.subspan(w_off_, geom_.weight_size()),
                           bias_ ? grad.subspan(b_off_, out_c_) : std::span<double>{},
                           need_din ? std::span<double>(din.data) : std::span<double>{});
  return din;
}

// ---- ConvTranspose2d -------------------------------------------------------

Shape ConvTranspose2d::bind(const Shape& in, std::size_t& offset, std::vector<ParamBlock>& layout,
                            const std::string& name, int& layer_ordinal) {
  geom_ = {in.c, in.h, in.w, out_c_, k_, stride_, pad_};
  const int ord = layer_ordinal++;
  w_off_ = offset;
  layout.push_back({name + ".weight", offset, static_cast<std::size_t>(geom_.weight_size()), ord});
  offset += geom_.weight_size();
  b_off_ = offset;
  layout.push_back({name + ".bias", offset, static_cast<std::size_t>(out_c_), ord});
  offset += out_c_;
  return {out_c_, geom_.out_h(), geom_.out_w()};
}

void ConvTranspose2d::init(std::span<double> params, Rng& rng) const {
  const double sd = std::sqrt(2.0 / (static_cast<double>(geom_.in_c) * k_ * k_ / (stride_ * stride_)));
  for (int i = 0; i < geom_.weight_size(); ++i) params[w_off_ + i] = rng.normal(0.0, sd);
  std::fill_n(params.begin() + static_cast<std::ptrdiff_t>(b_off_), out_c_, 0.0);
}

Tensor ConvTranspose2d::forward(const Tensor& in, std::span<const double> params, Tape* tape) const {
  check_input(in, Shape{geom_.in_c, geom_.in_h, geom_.in_w}, "conv_transpose2d");
  Tensor out(in.n, {out_c_, geom_.out_h(), geom_.out_w()});
  kernels::conv_transpose2d_forward(geom_, in.n, in.data, params.subspan(w_off_, geom_.weight_size()),
                                    params.subspan(b_off_, out_c_), out.data);
  if (tape) tape->input = in;
  return out;
}

Tensor ConvTranspose2d::backward(const Tensor& dout, std::span<const double> params, const Tape& tape,
                                 std::span<double> grad, bool need_din) const {
  Tensor din;
  if (need_din) din = Tensor(dout.n, {geom_.in_c, geom_.in_h, geom_.in_w});
  kernels::conv_transpose2d_backward(geom_, dout.n, tape.input.data, params.subspan(w_off_, geom_.weight_size()),
                                     dout.data, grad.subspan(w_off_, geom_.weight_size()),
                                     grad.subspan(b_off_, out_c_),
                                     need_din ? std::span<double>(din.data) : std::span<double>{});
  return din;
}

// ---- Linear ----------------------------------------------------------------

Shape Linear::bind(const Shape& in, std::size_t& offset, std::vector<ParamBlock>& layout, const std::string& name,
                   int& layer_ordinal) {
  in_ = static_cast<int>(in.size());
  const int ord = layer_ordinal++;
  w_off_ = offset;
  layout.push_back({name + ".weight", offset, static_cast<std::size_t>(in_) * out_, ord});
  offset += static_cast<std::size_t>(in_) * out_;
  if (bias_) {
    b_off_ = offset;
    layout.push_back({name + ".bias", offset, static_cast<std::size_t>(out_), ord});
    offset += out_;
  }
  return {out_, 1, 1};
}

void Linear::init(std::span<double> params, Rng& rng) const {
  const double sd = std::sqrt(2.0 / in_);
  for (std::size_t i = 0; i < static_cast<std::size_t>(in_) * out_; ++i) params[w_off_ + i] = rng.normal(0.0, sd);
  if (bias_) std::fill_n(params.begin() + static_cast<std::ptrdiff_t>(b_off_), out_, 0.0);
}

Tensor Linear::forward(const Tensor& in, std::span<const double> params, Tape* tape) const {
  if (static_cast<int>(in.sample_size()) != in_) throw ShapeError("linear: unexpected input size");
  Tensor out(in.n, {out_, 1, 1});
  kernels::linear_forward(in_, out_, in.n, in.data, params.subspan(w_off_, static_cast<std::size_t>(in_) * out_),
                          bias_ ? params.subspan(b_off_, out_) : std::span<const double>{}, out.data);
  if (tape) tape->input = in;
  return out;
}

Tensor Linear::backward(const Tensor& dout, std::span<const double> params, const Tape& tape, std::span<double> grad,
                        bool need_din) const {
  Tensor din;
  if (need_din) din = Tensor(dout.n, tape.input.shape);
  kernels::linear_backward(in_, out_, dout.n, tape.input.data,
                           params.subspan(w_off_, static_cast<std::size_t>(in_) * out_), dout.data,
                           grad.subspan(w_off_, static_cast<std::size_t>(in_) * out_),
                           bias_ ? grad.subspan(b_off_, out_) : std::span<double>{},
                           need_din ? std::span<double>(din.data) : std::span<double>{});
  return din;
}

// ---- elementwise -----------------------------------------------------------

Tensor ReLU::forward(const Tensor& in, std::span<const double>, Tape* tape) const {
  Tensor out = in;
  for (double& v : out.data) v = v > 0.0 ? v : 0.0;
  if (tape) tape->input = in;
  return out;
}

Tensor ReLU::backward(const Tensor& dout, std::span<const double>, const Tape& tape, std::span<double>,
                      bool need_din) const {
  if (!need_din) return {};
  Tensor din = dout;
  for (std::size_t i = 0; i < din.data.size(); ++i)
    if (!(tape.input.data[i] > 0.0)) din.data[i] = 0.0;
  return din;
}

Tensor Sigmoid::forward(const Tensor& in, std::span<const double>, Tape* tape) const {
  Tensor out = in;
  for (double& v : out.data) v = 1.0 / (1.0 + std::exp(-v));
  if (tape) tape->aux = out;
  return out;
}

Tensor Sigmoid::backward(const Tensor& dout, std::span<const double>, const Tape& tape, std::span<double>,
                         bool need_din) const {
  if (!need_din) return {};
  Tensor din = dout;
  for (std::size_t i = 0; i < din.data.size(); ++i) {
    const double s = tape.aux.data[i];
    din.data[i] *= s * (1.0 - s);
  }
  return din;
}

// ---- pooling / reshape -----------------------------------------------------

Shape MaxPool2::bind(const Shape& in, std::size_t&, std::vector<ParamBlock>&, const std::string& name, int&) {
  if (in.h < 2 || in.w < 2) throw ShapeError("max pool input too small at " + name);
  in_ = in;
  out_ = {in.c, in.h / 2, in.w / 2};
  return out_;
}

Tensor MaxPool2::forward(const Tensor& in, std::span<const double>, Tape* tape) const {
  check_input(in, in_, "maxpool");
  Tensor out(in.n, out_);
  Tensor arg;
  if (tape) arg = Tensor(in.n, out_);
  for (int b = 0; b < in.n; ++b)
    for (int c = 0; c < out_.c; ++c)
      for (int y = 0; y < out_.h; ++y)
        for (int x = 0; x < out_.w; ++x) {
          int best = 0;
          double bv = in.at(b, c, 2 * y, 2 * x);
          for (int k = 1; k < 4; ++k) {
            double v = in.at(b, c, 2 * y + k / 2, 2 * x + k % 2);
            if (v > bv) {
              bv = v;
              best = k;
            }
          }
          out.at(b, c, y, x) = bv;
          if (tape) arg.at(b, c, y, x) = best;
        }
  if (tape) tape->aux = std::move(arg);
  return out;
}

Tensor MaxPool2::backward(const Tensor& dout, std::span<const double>, const Tape& tape, std::span<double>,
                          bool need_din) const {
  if (!need_din) return {};
  Tensor din(dout.n, in_);
  for (int b = 0; b < dout.n; ++b)
    for (int c = 0; c < out_.c; ++c)
      for (int y = 0; y < out_.h; ++y)
        for (int x = 0; x < out_.w; ++x) {
          int k = static_cast<int>(tape.aux.at(b, c, y, x));
          din.at(b, c, 2 * y + k / 2, 2 * x + k % 2) += dout.at(b, c, y, x);
        }
  return din;
}

Shape GlobalAvgPool::bind(const Shape& in, std::size_t&, std::vector<ParamBlock>&, const std::string&, int&) {
  in_ = in;
  return {in.c, 1, 1};
}

Tensor GlobalAvgPool::forward(const Tensor& in, std::span<const double>, Tape*) const {
  check_input(in, in_, "global_avg_pool");
  Tensor out(in.n, {in_.c, 1, 1});
  const int plane = in_.h * in_.w;
  for (int b = 0; b < in.n; ++b)
    for (int c = 0; c < in_.c; ++c) {
      const double* p = in.data.data() + (static_cast<std::size_t>(b) * in_.c + c) * plane;
      double s = 0.0;
      for (int i = 0; i < plane; ++i) s += p[i];
      out.data[static_cast<std::size_t>(b) * in_.c + c] = s / plane;
    }
  return out;
}

Tensor GlobalAvgPool::backward(const Tensor& dout, std::span<const double>, const Tape&, std::span<double>,
                               bool need_din) const {
  if (!need_din) return {};
  Tensor din(dout.n, in_);
  const int plane = in_.h * in_.w;
  for (int b = 0; b < dout.n; ++b)
    for (int c = 0; c < in_.c; ++c) {
      const double g = dout.data[static_cast<std::size_t>(b) * in_.c + c] / plane;
      double* p = din.data.data() + (static_cast<std::size_t>(b) * in_.c + c) * plane;
      std::fill(p, p + plane, g);
    }
  return din;
}

Shape Reshape::bind(const Shape& in, std::size_t&, std::vector<ParamBlock>&, const std::string& name, int&) {
  in_ = in;
  if (!explicit_) target_ = {static_cast<int>(in.size()), 1, 1};
  if (target_.size() != in.size()) throw ShapeError("reshape size mismatch at " + name);
  return target_;
}

Tensor Reshape::forward(const Tensor& in, std::span<const double>, Tape*) const {
  check_input(in, in_, "reshape");
  Tensor out = in;
  out.shape = target_;
  return out;
}

Tensor Reshape::backward(const Tensor& dout, std::span<const double>, const Tape&, std::span<double>,
                         bool need_din) const {
  if (!need_din) return {};
  Tensor din = dout;
  din.shape = in_;
  return din;
}

// ---- containers ------------------------------------------------------------

Shape Sequential::bind(const Shape& in, std::size_t& offset, std::vector<ParamBlock>& layout, const std::string& name,
                       int& layer_ordinal) {
  Shape s = in;
  for (std::size_t i = 0; i < layers_.size(); ++i) s = layers_[i]->bind(s, offset, layout, join(name, names_[i]), layer_ordinal);
  return s;
}

void Sequential::init(std::span<double> params, Rng& rng) const {
  for (const auto& l : layers_) l->init(params, rng);
}

Tensor Sequential::forward(const Tensor& in, std::span<const double> params, Tape* tape) const {
  if (tape) tape->children.resize(layers_.size());
  if (layers_.empty()) return in;
  Tensor x = layers_[0]->forward(in, params, tape ? &tape->children[0] : nullptr);
  for (std::size_t i = 1; i < layers_.size(); ++i) x = layers_[i]->forward(x, params, tape ? &tape->children[i] : nullptr);
  return x;
}

Tensor Sequential::backward(const Tensor& dout, std::span<const double> params, const Tape& tape,
                            std::span<double> grad, bool need_din) const {
  if (layers_.empty()) return need_din ? dout : Tensor{};
  Tensor d = dout;
  for (std::size_t i = layers_.size(); i-- > 0;) {
    const bool want = i > 0 || need_din;
    d = layers_[i]->backward(d, params, tape.children[i], grad, want);
  }
  return d;
}

Shape Residual::bind(const Shape& in, std::size_t& offset, std::vector<ParamBlock>& layout, const std::string& name,
                     int& layer_ordinal) {
  Shape a = body_->bind(in, offset, layout, join(name, "body"), layer_ordinal);
  Shape b = shortcut_ ? shortcut_->bind(in, offset, layout, join(name, "shortcut"), layer_ordinal) : in;
  if (!(a == b)) throw ShapeError("residual branches disagree in shape at " + name);
  return a;
}

void Residual::init(std::span<double> params, Rng& rng) const {
  body_->init(params, rng);
  if (shortcut_) shortcut_->init(params, rng);
}

Tensor Residual::forward(const Tensor& in, std::span<const double> params, Tape* tape) const {
  if (tape) tape->children.resize(2);
  Tensor y = body_->forward(in, params, tape ? &tape->children[0] : nullptr);
  if (shortcut_) {
    Tensor s = shortcut_->forward(in, params, tape ? &tape->children[1] : nullptr);
    for (std::size_t i = 0; i < y.data.size(); ++i) y.data[i] += s.data[i];
  } else {
    for (std::size_t i = 0; i < y.data.size(); ++i) y.data[i] += in.data[i];
  }
  return y;
}

Tensor Residual::backward(const Tensor& dout, std::span<const double> params, const Tape& tape,
                          std::span<double> grad, bool need_din) const {
  Tensor d_body = body_->backward(dout, params, tape.children[0], grad, need_din);
  if (shortcut_) {
    Tensor d_short = shortcut_->backward(dout, params, tape.children[1], grad, need_din);
    if (!need_din) return {};
    for (std::size_t i = 0; i < d_body.data.size(); ++i) d_body.data[i] += d_short.data[i];
    return d_body;
  }
  if (!need_din) return {};
  for (std::size_t i = 0; i < d_body.data.size(); ++i) d_body.data[i] += dout.data[i];
  return d_body;
}

// ---- Network ---------------------------------------------------------------

Network::Network(Shape input, std::unique_ptr<Sequential> root) : input_(input), root_(std::move(root)) {
  std::size_t offset = 0;
  output_ = root_->bind(input_, offset, layout_, "", layers_);
  param_count_ = offset;
}

void Network::init(std::span<double> params, Rng& rng) const {
  if (params.size() != param_count_) throw ShapeError("parameter vector length does not match network");
  root_->init(params, rng);
}

Tensor Network::forward(std::span<const double> params, const Tensor& x, Tape* tape) const {
  if (params.size() != param_count_) throw ShapeError("parameter vector length does not match network");
  if (!(x.shape == input_)) throw ShapeError("input shape does not match network");
  return root_->forward(x, params, tape);
}

Tensor Network::backward(std::span<const double> params, const Tape& tape, const Tensor& dout, std::span<double> grad,
                         bool need_din) const {
  if (grad.size() != param_count_) throw ShapeError("gradient buffer length does not match network");
  return root_->backward(dout, params, tape, grad, need_din);
}

}  // namespace extmark
