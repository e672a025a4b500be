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

namespace extmark::stats {

// Regularized incomplete beta I_x(a, b).
double incomplete_beta(double a, double b, double x);

// P(T > t) for Student's t with `df` degrees of freedom.
double student_t_upper_tail(double t, double df);

struct TTest {
  double t = 0.0;
  double p = 1.0;
  double mean_diff = 0.0;
  double sd_diff = 0.0;
};

// One-sided paired test of mean(s - b) > 0. Requires equal lengths >= 2.
// Zero spread: p = 1 when the mean difference is <= 0, else p = 0 (t = +-inf
// or 0).
TTest paired_t_test(std::span<const double> s, std::span<const double> b);

double mean(std::span<const double> v);
double median(std::span<const double> v);

}  // namespace extmark::stats
