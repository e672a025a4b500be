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
#include <cmath>
#include <vector>

#include "doctest.h"
#include "extmark/kernels.hpp"
#include "extmark/rng.hpp"

using namespace extmark;
namespace k = extmark::kernels;

namespace {

std::vector<double> randn(std::size_t n, std::uint64_t seed) {
  Rng rng(seed);
  std::vector<double> v(n);
  for (auto& x : v) x = rng.normal();
  return v;
}

double max_abs_diff(const std::vector<double>& a, const std::vector<double>& b) {
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
  return m;
}

}  // namespace

TEST_CASE("conv2d: parallel kernel equals the serial reference") {
  for (auto [k_, stride, pad] : {std::tuple{3, 1, 1}, {3, 2, 1}, {1, 1, 0}, {5, 1, 2}}) {
    k::ConvGeom g{3, 9, 7, 4, k_, stride, pad};
    const int n = 3;
    auto in = randn(n * g.in_size(), 1), w = randn(g.weight_size(), 2), b = randn(g.out_c, 3);
    std::vector<double> o1(n * g.out_size()), o2(o1.size());
    k::conv2d_forward(g, n, in, w, b, o1);
    k::reference::conv2d_forward(g, n, in, w, b, o2);
    CHECK(max_abs_diff(o1, o2) < 1e-12);

    auto dout = randn(o1.size(), 4);
    std::vector<double> dw1(w.size()), db1(b.size()), di1(in.size());
    std::vector<double> dw2(w.size()), db2(b.size()), di2(in.size());
    k::conv2d_backward(g, n, in, w, dout, dw1, db1, di1);
    k::reference::conv2d_backward(g, n, in, w, dout, dw2, db2, di2);
    CHECK(max_abs_diff(dw1, dw2) < 1e-10);
    CHECK(max_abs_diff(db1, db2) < 1e-10);
    CHECK(max_abs_diff(di1, di2) < 1e-10);
  }
}

TEST_CASE("conv2d: single-pixel hand computation") {
  // 1x3x3 input, one 3x3 kernel of ones, pad 1: centre output = sum of input.
  k::ConvGeom g{1, 3, 3, 1, 3, 1, 1};
  std::vector<double> in{1, 2, 3, 4, 5, 6, 7, 8, 9}, w(9, 1.0), b{0.5}, out(9);
  k::conv2d_forward(g, 1, in, w, b, out);
  CHECK(out[4] == doctest::Approx(45.5));
  CHECK(out[0] == doctest::Approx(1 + 2 + 4 + 5 + 0.5));
}

TEST_CASE("linear: parallel kernel equals the serial reference and a hand value") {
  const int in_dim = 13, out_dim = 6, n = 5;
  auto in = randn(n * in_dim, 5), w = randn(in_dim * out_dim, 6), b = randn(out_dim, 7);
  std::vector<double> o1(n * out_dim), o2(o1.size());
  k::linear_forward(in_dim, out_dim, n, in, w, b, o1);
  k::reference::linear_forward(in_dim, out_dim, n, in, w, b, o2);
  CHECK(max_abs_diff(o1, o2) < 1e-12);
  auto dout = randn(o1.size(), 8);
  std::vector<double> dw1(w.size()), db1(b.size()), di1(in.size()), dw2(w.size()), db2(b.size()), di2(in.size());
  k::linear_backward(in_dim, out_dim, n, in, w, dout, dw1, db1, di1);
  k::reference::linear_backward(in_dim, out_dim, n, in, w, dout, dw2, db2, di2);
  CHECK(max_abs_diff(dw1, dw2) < 1e-10);
  CHECK(max_abs_diff(db1, db2) < 1e-10);
  CHECK(max_abs_diff(di1, di2) < 1e-10);

  std::vector<double> x{1, 2}, W{1, 0, 0, 1, 2, 3}, B{0, 1, -1}, y(3);  // rows are outputs
  k::linear_forward(2, 3, 1, x, W, B, y);
  CHECK(y[0] == doctest::Approx(1));
  CHECK(y[1] == doctest::Approx(3));
  CHECK(y[2] == doctest::Approx(7));
}

TEST_CASE("conv_transpose2d is the adjoint of the matching strided conv") {
  // <convT(x), y> == <x, conv(y)> with shared weights and zero bias.
  k::ConvTransposeGeom gt{4, 3, 3, 2, 2, 2, 0};
  k::ConvGeom gc{2, gt.out_h(), gt.out_w(), 4, 2, 2, 0};
  auto x = randn(gt.in_size(), 9), y = randn(gt.out_size(), 10), w = randn(gt.weight_size(), 11);
  std::vector<double> zb_t(gt.out_c, 0.0), zb_c(gc.out_c, 0.0), tx(gt.out_size()), cy(gc.out_size());
  k::conv_transpose2d_forward(gt, 1, x, w, zb_t, tx);
  // conv weight layout is [out=4][in=2][k][k]; convT weight is [in=4][out=2][k][k]: the same buffer.
  k::conv2d_forward(gc, 1, y, w, zb_c, cy);
  double lhs = 0.0, rhs = 0.0;
  for (std::size_t i = 0; i < tx.size(); ++i) lhs += tx[i] * y[i];
  for (std::size_t i = 0; i < cy.size(); ++i) rhs += x[i] * cy[i];
  CHECK(lhs == doctest::Approx(rhs).epsilon(1e-10));
}
