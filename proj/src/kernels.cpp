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

#include "extmark/kernels.hpp"

#include <algorithm>
#include <vector>

namespace extmark::kernels {
namespace {

// col[(c*k + ky)*k + kx][oy*ow + ox]
void im2col(const ConvGeom& g, const double* in, double* col) {
  const int oh = g.out_h(), ow = g.out_w(), P = oh * ow;
  for (int c = 0; c < g.in_c; ++c) {
    for (int ky = 0; ky < g.k; ++ky) {
      for (int kx = 0; kx < g.k; ++kx) {
        double* row = col + static_cast<std::size_t>((c * g.k + ky) * g.k + kx) * P;
        for (int oy = 0; oy < oh; ++oy) {
          const int iy = oy * g.stride + ky - g.pad;
          double* dst = row + oy * ow;
          if (iy < 0 || iy >= g.in_h) {
            std::fill(dst, dst + ow, 0.0);
            continue;
          }
          const double* src = in + (static_cast<std::size_t>(c) * g.in_h + iy) * g.in_w;
          for (int ox = 0; ox < ow; ++ox) {
            const int ix = ox * g.stride + kx - g.pad;
            dst[ox] = (ix >= 0 && ix < g.in_w) ? src[ix] : 0.0;
          }
        }
      }
    }
  }
}

void col2im(const ConvGeom& g, const double* col, double* in) {
  const int oh = g.out_h(), ow = g.out_w(), P = oh * ow;
  std::fill(in, in + g.in_size(), 0.0);
  for (int c = 0; c < g.in_c; ++c) {
    for (int ky = 0; ky < g.k; ++ky) {
      for (int kx = 0; kx < g.k; ++kx) {
        const double* row = col + static_cast<std::size_t>((c * g.k + ky) * g.k + kx) * P;
        for (int oy = 0; oy < oh; ++oy) {
          const int iy = oy * g.stride + ky - g.pad;
          if (iy < 0 || iy >= g.in_h) continue;
          double* dst = in + (static_cast<std::size_t>(c) * g.in_h + iy) * g.in_w;
          for (int ox = 0; ox < ow; ++ox) {
            const int ix = ox * g.stride + kx - g.pad;
            if (ix >= 0 && ix < g.in_w) dst[ix] += row[oy * ow + ox];
          }
        }
      }
    }
  }
}

}  // namespace

void conv2d_forward(const ConvGeom& g, int n, std::span<const double> in, std::span<const double> weight,
                    std::span<const double> bias, std::span<double> out) {
  const int P = g.out_h() * g.out_w();
  const int CKK = g.in_c * g.k * g.k;
#pragma omp parallel
  {
    std::vector<double> col(static_cast<std::size_t>(CKK) * P);
#pragma omp for schedule(static)
    for (int b = 0; b < n; ++b) {
      im2col(g, in.data() + static_cast<std::size_t>(b) * g.in_size(), col.data());
      double* o_b = out.data() + static_cast<std::size_t>(b) * g.out_size();
      for (int o = 0; o < g.out_c; ++o) {
        double* dst = o_b + static_cast<std::size_t>(o) * P;
        const double b0 = bias.empty() ? 0.0 : bias[o];
        std::fill(dst, dst + P, b0);
        const double* w = weight.data() + static_cast<std::size_t>(o) * CKK;
        for (int ck = 0; ck < CKK; ++ck) {
          const double wv = w[ck];
          const double* src = col.data() + static_cast<std::size_t>(ck) * P;
#pragma omp simd
          for (int p = 0; p < P; ++p) dst[p] += wv * src[p];
        }
      }
    }
  }
}

void conv2d_backward(const ConvGeom& g, int n, std::span<const double> in, std::span<const double> weight,
                     std::span<const double> dout, std::span<double> dweight, std::span<double> dbias,
                     std::span<double> din) {
  const int P = g.out_h() * g.out_w();
  const int CKK = g.in_c * g.k * g.k;
  const std::size_t col_size = static_cast<std::size_t>(CKK) * P;
  std::vector<double> cols(col_size * n);

#pragma omp parallel
  {
#pragma omp for schedule(static)
    for (int b = 0; b < n; ++b) im2col(g, in.data() + static_cast<std::size_t>(b) * g.in_size(), cols.data() + b * col_size);

    if (!dweight.empty()) {
#pragma omp for schedule(static)
      for (int o = 0; o < g.out_c; ++o) {
        double* dw = dweight.data() + static_cast<std::size_t>(o) * CKK;
        for (int b = 0; b < n; ++b) {
          const double* d = dout.data() + static_cast<std::size_t>(b) * g.out_size() + static_cast<std::size_t>(o) * P;
          const double* col = cols.data() + b * col_size;
          for (int ck = 0; ck < CKK; ++ck) {
            const double* src = col + static_cast<std::size_t>(ck) * P;
            double acc = 0.0;
#pragma omp simd reduction(+ : acc)
            for (int p = 0; p < P; ++p) acc += d[p] * src[p];
            dw[ck] += acc;
          }
        }
      }
    }

    if (!dbias.empty()) {
#pragma omp for schedule(static)
      for (int o = 0; o < g.out_c; ++o) {
        double acc = 0.0;
        for (int b = 0; b < n; ++b) {
          const double* d = dout.data() + static_cast<std::size_t>(b) * g.out_size() + static_cast<std::size_t>(o) * P;
          for (int p = 0; p < P; ++p) acc += d[p];
        }
        dbias[o] += acc;
      }
    }

    if (!din.empty()) {
      std::vector<double> dcol(col_size);
#pragma omp for schedule(static)
      for (int b = 0; b < n; ++b) {
        std::fill(dcol.begin(), dcol.end(), 0.0);
        const double* d_b = dout.data() + static_cast<std::size_t>(b) * g.out_size();
        for (int o = 0; o < g.out_c; ++o) {
          const double* d = d_b + static_cast<std::size_t>(o) * P;
          const double* w = weight.data() + static_cast<std::size_t>(o) * CKK;
          for (int ck = 0; ck < CKK; ++ck) {
            const double wv = w[ck];
            double* dst = dcol.data() + static_cast<std::size_t>(ck) * P;
#pragma omp simd
            for (int p = 0; p < P; ++p) dst[p] += wv * d[p];
          }
        }
        col2im(g, dcol.data(), din.data() + static_cast<std::size_t>(b) * g.in_size());
      }
    }
  }
}

void linear_forward(int in_dim, int out_dim, int n, std::span<const double> in, std::span<const double> weight,
                    std::span<const double> bias, std::span<double> out) {
#pragma omp parallel for schedule(static)
  for (int b = 0; b < n; ++b) {
    const double* x = in.data() + static_cast<std::size_t>(b) * in_dim;
    for (int o = 0; o < out_dim; ++o) {
      const double* w = weight.data() + static_cast<std::size_t>(o) * in_dim;
      double acc = 0.0;
#pragma omp simd reduction(+ : acc)
      for (int i = 0; i < in_dim; ++i) acc += w[i] * x[i];
      out[static_cast<std::size_t>(b) * out_dim + o] = acc + (bias.empty() ? 0.0 : bias[o]);
    }
  }
}

void linear_backward(int in_dim, int out_dim, int n, std::span<const double> in, std::span<const double> weight,
                     std::span<const double> dout, std::span<double> dweight, std::span<double> dbias,
                     std::span<double> din) {
#pragma omp parallel
  {
    if (!dweight.empty()) {
#pragma omp for schedule(static)
      for (int o = 0; o < out_dim; ++o) {
        double* dw = dweight.data() + static_cast<std::size_t>(o) * in_dim;
        for (int b = 0; b < n; ++b) {
          const double d = dout[static_cast<std::size_t>(b) * out_dim + o];
          const double* x = in.data() + static_cast<std::size_t>(b) * in_dim;
#pragma omp simd
          for (int i = 0; i < in_dim; ++i) dw[i] += d * x[i];
        }
      }
    }
    if (!dbias.empty()) {
#pragma omp for schedule(static)
      for (int o = 0; o < out_dim; ++o) {
        double acc = 0.0;
        for (int b = 0; b < n; ++b) acc += dout[static_cast<std::size_t>(b) * out_dim + o];
        dbias[o] += acc;
      }
    }
    if (!din.empty()) {
#pragma omp for schedule(static)
      for (int b = 0; b < n; ++b) {
        double* dx = din.data() + static_cast<std::size_t>(b) * in_dim;
        std::fill(dx, dx + in_dim, 0.0);
        for (int o = 0; o < out_dim; ++o) {
          const double d = dout[static_cast<std::size_t>(b) * out_dim + o];
          const double* w = weight.data() + static_cast<std::size_t>(o) * in_dim;
#pragma omp simd
          for (int i = 0; i < in_dim; ++i) dx[i] += d * w[i];
        }
      }
    }
  }
}

void conv_transpose2d_forward(const ConvTransposeGeom& g, int n, std::span<const double> in,
                              std::span<const double> weight, std::span<const double> bias, std::span<double> out) {
  const int oh = g.out_h(), ow = g.out_w();
#pragma omp parallel for schedule(static)
  for (int b = 0; b < n; ++b) {
    const double* x = in.data() + static_cast<std::size_t>(b) * g.in_size();
    double* y = out.data() + static_cast<std::size_t>(b) * g.out_size();
    for (int o = 0; o < g.out_c; ++o)
      std::fill(y + static_cast<std::size_t>(o) * oh * ow, y + static_cast<std::size_t>(o + 1) * oh * ow,
                bias.empty() ? 0.0 : bias[o]);
    for (int c = 0; c < g.in_c; ++c)
      for (int iy = 0; iy < g.in_h; ++iy)
        for (int ix = 0; ix < g.in_w; ++ix) {
          const double v = x[(static_cast<std::size_t>(c) * g.in_h + iy) * g.in_w + ix];
          for (int o = 0; o < g.out_c; ++o)
            for (int ky = 0; ky < g.k; ++ky) {
              const int yy = iy * g.stride + ky - g.pad;
              if (yy < 0 || yy >= oh) continue;
              for (int kx = 0; kx < g.k; ++kx) {
                const int xx = ix * g.stride + kx - g.pad;
                if (xx < 0 || xx >= ow) continue;
                y[(static_cast<std::size_t>(o) * oh + yy) * ow + xx] +=
                    v * weight[((static_cast<std::size_t>(c) * g.out_c + o) * g.k + ky) * g.k + kx];
              }
            }
        }
  }
}

void conv_transpose2d_backward(const ConvTransposeGeom& g, int n, std::span<const double> in,
                               std::span<const double> weight, std::span<const double> dout,
                               std::span<double> dweight, std::span<double> dbias, std::span<double> din) {
  const int oh = g.out_h(), ow = g.out_w();
  auto dy_at = [&](int b, int o, int yy, int xx) {
    return dout[((static_cast<std::size_t>(b) * g.out_c + o) * oh + yy) * ow + xx];
  };
#pragma omp parallel
  {
    if (!dweight.empty()) {
#pragma omp for schedule(static)
      for (int c = 0; c < g.in_c; ++c)
        for (int b = 0; b < n; ++b)
          for (int iy = 0; iy < g.in_h; ++iy)
            for (int ix = 0; ix < g.in_w; ++ix) {
              const double v = in[((static_cast<std::size_t>(b) * g.in_c + c) * g.in_h + iy) * g.in_w + ix];
              for (int o = 0; o < g.out_c; ++o)
                for (int ky = 0; ky < g.k; ++ky) {
                  const int yy = iy * g.stride + ky - g.pad;
                  if (yy < 0 || yy >= oh) continue;
                  for (int kx = 0; kx < g.k; ++kx) {
                    const int xx = ix * g.stride + kx - g.pad;
                    if (xx < 0 || xx >= ow) continue;
                    dweight[((static_cast<std::size_t>(c) * g.out_c + o) * g.k + ky) * g.k + kx] += v * dy_at(b, o, yy, xx);
                  }
                }
            }
    }
    if (!dbias.empty()) {
#pragma omp for schedule(static)
      for (int o = 0; o < g.out_c; ++o) {
        double acc = 0.0;
        for (int b = 0; b < n; ++b)
          for (int yy = 0; yy < oh; ++yy)
            for (int xx = 0; xx < ow; ++xx) acc += dy_at(b, o, yy, xx);
        dbias[o] += acc;
      }
    }
    if (!din.empty()) {
#pragma omp for schedule(static)
      for (int b = 0; b < n; ++b)
        for (int c = 0; c < g.in_c; ++c)
          for (int iy = 0; iy < g.in_h; ++iy)
            for (int ix = 0; ix < g.in_w; ++ix) {
              double acc = 0.0;
              for (int o = 0; o < g.out_c; ++o)
                for (int ky = 0; ky < g.k; ++ky) {
                  const int yy = iy * g.stride + ky - g.pad;
                  if (yy < 0 || yy >= oh) continue;
                  for (int kx = 0; kx < g.k; ++kx) {
                    const int xx = ix * g.stride + kx - g.pad;
                    if (xx < 0 || xx >= ow) continue;
                    acc += weight[((static_cast<std::size_t>(c) * g.out_c + o) * g.k + ky) * g.k + kx] * dy_at(b, o, yy, xx);
                  }
                }
              din[((static_cast<std::size_t>(b) * g.in_c + c) * g.in_h + iy) * g.in_w + ix] = acc;
            }
    }
  }
}

namespace reference {

void conv2d_forward(const ConvGeom& g, int n, std::span<const double> in, std::span<const double> weight,
                    std::span<const double> bias, std::span<double> out) {
  const int oh = g.out_h(), ow = g.out_w();
  for (int b = 0; b < n; ++b)
    for (int o = 0; o < g.out_c; ++o)
      for (int oy = 0; oy < oh; ++oy)
        for (int ox = 0; ox < ow; ++ox) {
          double acc = bias.empty() ? 0.0 : bias[o];
          for (int c = 0; c < g.in_c; ++c)
            for (int ky = 0; ky < g.k; ++ky)
              for (int kx = 0; kx < g.k; ++kx) {
                const int iy = oy * g.stride + ky - g.pad, ix = ox * g.stride + kx - g.pad;
                if (iy < 0 || iy >= g.in_h || ix < 0 || ix >= g.in_w) continue;
                acc += weight[((static_cast<std::size_t>(o) * g.in_c + c) * g.k + ky) * g.k + kx] *
                       in[((static_cast<std::size_t>(b) * g.in_c + c) * g.in_h + iy) * g.in_w + ix];
              }
          out[((static_cast<std::size_t>(b) * g.out_c + o) * oh + oy) * ow + ox] = acc;
        }
}

void conv2d_backward(const ConvGeom& g, int n, std::span<const double> in, std::span<const double> weight,
                     std::span<const double> dout, std::span<double> dweight, std::span<double> dbias,
                     std::span<double> din) {
  const int oh = g.out_h(), ow = g.out_w();
  if (!din.empty()) std::fill(din.begin(), din.end(), 0.0);
  for (int b = 0; b < n; ++b)
    for (int o = 0; o < g.out_c; ++o)
      for (int oy = 0; oy < oh; ++oy)
        for (int ox = 0; ox < ow; ++ox) {
          const double d = dout[((static_cast<std::size_t>(b) * g.out_c + o) * oh + oy) * ow + ox];
          if (!dbias.empty()) dbias[o] += d;
          for (int c = 0; c < g.in_c; ++c)
            for (int ky = 0; ky < g.k; ++ky)
              for (int kx = 0; kx < g.k; ++kx) {
                const int iy = oy * g.stride + ky - g.pad, ix = ox * g.stride + kx - g.pad;
                if (iy < 0 || iy >= g.in_h || ix < 0 || ix >= g.in_w) continue;
                const std::size_t wi = ((static_cast<std::size_t>(o) * g.in_c + c) * g.k + ky) * g.k + kx;
                const std::size_t ii = ((static_cast<std::size_t>(b) * g.in_c + c) * g.in_h + iy) * g.in_w + ix;
                if (!dweight.empty()) dweight[wi] += d * in[ii];
                if (!din.empty()) din[ii] += d * weight[wi];
              }
        }
}

void linear_forward(int in_dim, int out_dim, int n, std::span<const double> in, std::span<const double> weight,
                    std::span<const double> bias, std::span<double> out) {
  for (int b = 0; b < n; ++b)
    for (int o = 0; o < out_dim; ++o) {
      double acc = bias.empty() ? 0.0 : bias[o];
      for (int i = 0; i < in_dim; ++i)
        acc += weight[static_cast<std::size_t>(o) * in_dim + i] * in[static_cast<std::size_t>(b) * in_dim + i];
      out[static_cast<std::size_t>(b) * out_dim + o] = acc;
    }
}

void linear_backward(int in_dim, int out_dim, int n, std::span<const double> in, std::span<const double> weight,
                     std::span<const double> dout, std::span<double> dweight, std::span<double> dbias,
                     std::span<double> din) {
  if (!din.empty()) std::fill(din.begin(), din.end(), 0.0);
  for (int b = 0; b < n; ++b)
    for (int o = 0; o < out_dim; ++o) {
      const double d = dout[static_cast<std::size_t>(b) * out_dim + o];
      if (!dbias.empty()) dbias[o] += d;
      for (int i = 0; i < in_dim; ++i) {
        if (!dweight.empty()) dweight[static_cast<std::size_t>(o) * in_dim + i] += d * in[static_cast<std::size_t>(b) * in_dim + i];
        if (!din.empty()) din[static_cast<std::size_t>(b) * in_dim + i] += d * weight[static_cast<std::size_t>(o) * in_dim + i];
      }
    }
}

}  // namespace reference
}  // namespace extmark::kernels
