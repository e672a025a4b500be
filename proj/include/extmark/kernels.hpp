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

#include <span>

// Dense kernels behind the network layers. The functions in `extmark::kernels`
// are OpenMP-parallel; `extmark::kernels::reference` holds straightforward
// serial loops kept as the correctness baseline for tests and benchmarks.
//
// Parallel kernels split work only across independent outputs (batch items or
// output channels) and reduce in a fixed order, so results do not depend on
// the thread count.

namespace extmark::kernels {

struct ConvGeom {
  int in_c = 0, in_h = 0, in_w = 0;
  int out_c = 0;
  int k = 3, stride = 1, pad = 1;

  int out_h() const { return (in_h + 2 * pad - k) / stride + 1; }
  int out_w() const { return (in_w + 2 * pad - k) / stride + 1; }
  int in_size() const { return in_c * in_h * in_w; }
  int out_size() const { return out_c * out_h() * out_w(); }
  int weight_size() const { return out_c * in_c * k * k; }
};

// in: n x in_size, weight: out_c x in_c x k x k, bias: out_c or empty.
void conv2d_forward(const ConvGeom& g, int n, std::span<const double> in, std::span<const double> weight,
                    std::span<const double> bias, std::span<double> out);

// Accumulates into dweight/dbias; overwrites din when non-empty.
void conv2d_backward(const ConvGeom& g, int n, std::span<const double> in, std::span<const double> weight,
                     std::span<const double> dout, std::span<double> dweight, std::span<double> dbias,
                     std::span<double> din);

// out[n, o] = b[o] + sum_i W[o, i] in[n, i]
void linear_forward(int in_dim, int out_dim, int n, std::span<const double> in, std::span<const double> weight,
                    std::span<const double> bias, std::span<double> out);

void linear_backward(int in_dim, int out_dim, int n, std::span<const double> in, std::span<const double> weight,
                     std::span<const double> dout, std::span<double> dweight, std::span<double> dbias,
                     std::span<double> din);

// Transposed convolution, weight: in_c x out_c x k x k; geometry describes
// the *output* side as produced by the matching forward convolution.
struct ConvTransposeGeom {
  int in_c = 0, in_h = 0, in_w = 0;
  int out_c = 0;
  int k = 2, stride = 2, pad = 0;

  int out_h() const { return (in_h - 1) * stride - 2 * pad + k; }
  int out_w() const { return (in_w - 1) * stride - 2 * pad + k; }
  int in_size() const { return in_c * in_h * in_w; }
  int out_size() const { return out_c * out_h() * out_w(); }
  int weight_size() const { return in_c * out_c * k * k; }
};

void conv_transpose2d_forward(const ConvTransposeGeom& g, int n, std::span<const double> in,
                              std::span<const double> weight, std::span<const double> bias, std::span<double> out);

void conv_transpose2d_backward(const ConvTransposeGeom& g, int n, std::span<const double> in,
                               std::span<const double> weight, std::span<const double> dout,
                               std::span<double> dweight, std::span<double> dbias, std::span<double> din);

namespace reference {

void conv2d_forward(const ConvGeom& g, int n, std::span<const double> in, std::span<const double> weight,
                    std::span<const double> bias, std::span<double> out);

void conv2d_backward(const ConvGeom& g, int n, std::span<const double> in, std::span<const double> weight,
                     std::span<const double> dout, std::span<double> dweight, std::span<double> dbias,
                     std::span<double> din);

void linear_forward(int in_dim, int out_dim, int n, std::span<const double> in, std::span<const double> weight,
                    std::span<const double> bias, std::span<double> out);

void linear_backward(int in_dim, int out_dim, int n, std::span<const double> in, std::span<const double> weight,
                     std::span<const double> dout, std::span<double> dweight, std::span<double> dbias,
                     std::span<double> din);

}  // namespace reference
}  // namespace extmark::kernels
