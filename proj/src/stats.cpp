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

#include "extmark/stats.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <vector>

#include "extmark/error.hpp"

namespace extmark::stats {

namespace {

// Continued fraction for I_x(a, b), modified Lentz.
double beta_cf(double a, double b, double x) {
  constexpr int kMaxIter = 500;
  constexpr double kEps = 1e-16;
  constexpr double kTiny = 1e-300;
  const double qab = a + b, qap = a + 1.0, qam = a - 1.0;
  double c = 1.0;
  double d = 1.0 - qab * x / qap;
  if (std::fabs(d) < kTiny) d = kTiny;
  d = 1.0 / d;
  double h = d;
  for (int m = 1; m <= kMaxIter; ++m) {
    const double m2 = 2.0 * m;
    double aa = m * (b - m) * x / ((qam + m2) * (a + m2));
    d = 1.0 + aa * d;
    if (std::fabs(d) < kTiny) d = kTiny;
    c = 1.0 + aa / c;
    if (std::fabs(c) < kTiny) c = kTiny;
    d = 1.0 / d;
    h *= d * c;
    aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2));
    d = 1.0 + aa * d;
    if (std::fabs(d) < kTiny) d = kTiny;
    c = 1.0 + aa / c;
    if (std::fabs(c) < kTiny) c = kTiny;
    d = 1.0 / d;
    const double del = d * c;
    h *= del;
    if (std::fabs(del - 1.0) < kEps) return h;
  }
  return h;
}

}  // namespace

double incomplete_beta(double a, double b, double x) {
  if (!(a > 0) || !(b > 0)) throw DomainError("incomplete beta needs a, b > 0");
  if (!(x >= 0.0 && x <= 1.0)) throw DomainError("incomplete beta needs x in [0, 1]");
  if (x == 0.0) return 0.0;
  if (x == 1.0) return 1.0;
  const double log_front =
      std::lgamma(a + b) - std::lgamma(a) - std::lgamma(b) + a * std::log(x) + b * std::log1p(-x);
  const double front = std::exp(log_front);
  if (x < (a + 1.0) / (a + b + 2.0)) return front * beta_cf(a, b, x) / a;
  return 1.0 - front * beta_cf(b, a, 1.0 - x) / b;
}

double student_t_upper_tail(double t, double df) {
  if (!(df > 0)) throw DomainError("degrees of freedom must be positive");
  if (std::isnan(t)) throw DomainError("t statistic is NaN");
  if (std::isinf(t)) return t > 0 ? 0.0 : 1.0;
  const double x = df / (df + t * t);
  const double tail = 0.5 * incomplete_beta(0.5 * df, 0.5, x);
  return t >= 0 ? tail : 1.0 - tail;
}

double mean(std::span<const double> v) {
  if (v.empty()) throw DomainError("mean of an empty vector");
  double s = 0.0;
  for (double x : v) s += x;
  return s / static_cast<double>(v.size());
}

double median(std::span<const double> v) {
  if (v.empty()) throw DomainError("median of an empty vector");
  std::vector<double> s(v.begin(), v.end());
  std::sort(s.begin(), s.end());
  const std::size_t n = s.size();
  return n % 2 ? s[n / 2] : 0.5 * (s[n / 2 - 1] + s[n / 2]);
}

TTest paired_t_test(std::span<const double> s, std::span<const double> b) {
  if (s.size() != b.size()) throw DomainError("paired t-test needs equal-length samples");
  if (s.size() < 2) throw DomainError("paired t-test needs at least two pairs");
  const std::size_t n = s.size();
  std::vector<double> d(n);
  for (std::size_t i = 0; i < n; ++i) d[i] = s[i] - b[i];
  TTest r;
  r.mean_diff = mean(d);
  double ss = 0.0;
  for (double x : d) ss += (x - r.mean_diff) * (x - r.mean_diff);
  r.sd_diff = std::sqrt(ss / static_cast<double>(n - 1));
  if (r.sd_diff == 0.0) {
    if (r.mean_diff > 0) {
      r.t = std::numeric_limits<double>::infinity();
      r.p = 0.0;
    } else {
      r.t = r.mean_diff < 0 ? -std::numeric_limits<double>::infinity() : 0.0;
      r.p = 1.0;
    }
    return r;
  }
  r.t = r.mean_diff / (r.sd_diff / std::sqrt(static_cast<double>(n)));
  r.p = std::clamp(student_t_upper_tail(r.t, static_cast<double>(n - 1)), 0.0, 1.0);
  return r;
}

}  // namespace extmark::stats
